//! Linear maps `B : ℝⁿ → ℝᵏ` with an adjoint, dense or matrix-free.
//!
//! A [`LinearMap`] pairs an operator with cached upper bounds on `‖B‖` and
//! `‖BᵀB‖` (spectral norms), computed once at construction. Dense maps up to
//! 500×500 get exact norms from an SVD; everything else uses power iteration
//! on `BᵀB` with a 1.01 safety factor.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayViewMut1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{PlirlsError, Result};
use crate::scalar::{norm2, Real};

const EXACT_NORM_MAX_DIM: usize = 500;
const POWER_ITERS: usize = 200;
const POWER_TOL: f64 = 1e-10;
const POWER_SAFETY: f64 = 1.01;
const POWER_SEED: u64 = 0x0005_eed0_fb0b;

/// Matrix or matrix-free operator with its adjoint.
pub trait LinearOperator<T: Real>: Send + Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn apply(&self, x: ArrayView1<'_, T>) -> Array1<T>;
    fn adjoint_apply(&self, u: ArrayView1<'_, T>) -> Array1<T>;

    /// `out += alpha · Bᵀu`. Structured operators override this to avoid
    /// allocating a full-length temporary.
    fn adjoint_add(&self, u: ArrayView1<'_, T>, alpha: T, mut out: ArrayViewMut1<'_, T>) {
        out.scaled_add(alpha, &self.adjoint_apply(u));
    }

    /// Exact spectral norm when cheaply known.
    fn exact_norm(&self) -> Option<T> {
        None
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone)]
pub struct DenseOperator<T> {
    matrix: Array2<T>,
}

impl<T: Real> LinearOperator<T> for DenseOperator<T> {
    fn rows(&self) -> usize {
        self.matrix.nrows()
    }
    fn cols(&self) -> usize {
        self.matrix.ncols()
    }
    fn apply(&self, x: ArrayView1<'_, T>) -> Array1<T> {
        self.matrix.dot(&x)
    }
    fn adjoint_apply(&self, u: ArrayView1<'_, T>) -> Array1<T> {
        self.matrix.t().dot(&u)
    }
    fn exact_norm(&self) -> Option<T> {
        let (r, c) = self.matrix.dim();
        if r == 0 || c == 0 {
            return Some(T::zero());
        }
        if r.max(c) > EXACT_NORM_MAX_DIM {
            return None;
        }
        T::svd(self.matrix.view())
            .ok()
            .map(|svd| svd.singular_values[0])
    }
}

/// A single row `aᵢᵀ` of a shared matrix, mapping ℝⁿ → ℝ.
#[derive(Debug, Clone)]
pub struct RowOperator<T> {
    matrix: Arc<Array2<T>>,
    row: usize,
}

impl<T: Real> LinearOperator<T> for RowOperator<T> {
    fn rows(&self) -> usize {
        1
    }
    fn cols(&self) -> usize {
        self.matrix.ncols()
    }
    fn apply(&self, x: ArrayView1<'_, T>) -> Array1<T> {
        Array1::from_elem(1, self.matrix.row(self.row).dot(&x))
    }
    fn adjoint_apply(&self, u: ArrayView1<'_, T>) -> Array1<T> {
        self.matrix.row(self.row).mapv(|a| a * u[0])
    }
    fn adjoint_add(&self, u: ArrayView1<'_, T>, alpha: T, mut out: ArrayViewMut1<'_, T>) {
        out.scaled_add(alpha * u[0], &self.matrix.row(self.row));
    }
    fn exact_norm(&self) -> Option<T> {
        Some(norm2(self.matrix.row(self.row)))
    }
}

/// `x ↦ scale · x[index]`, a scaled coordinate functional ℝⁿ → ℝ.
#[derive(Debug, Clone, Copy)]
pub struct CoordinateOperator<T> {
    dim: usize,
    index: usize,
    scale: T,
}

impl<T: Real> LinearOperator<T> for CoordinateOperator<T> {
    fn rows(&self) -> usize {
        1
    }
    fn cols(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: ArrayView1<'_, T>) -> Array1<T> {
        Array1::from_elem(1, self.scale * x[self.index])
    }
    fn adjoint_apply(&self, u: ArrayView1<'_, T>) -> Array1<T> {
        let mut out = Array1::zeros(self.dim);
        out[self.index] = self.scale * u[0];
        out
    }
    fn adjoint_add(&self, u: ArrayView1<'_, T>, alpha: T, mut out: ArrayViewMut1<'_, T>) {
        out[self.index] += alpha * self.scale * u[0];
    }
    fn exact_norm(&self) -> Option<T> {
        Some(self.scale.abs())
    }
}

type ApplyFn<T> = dyn Fn(ArrayView1<'_, T>) -> Array1<T> + Send + Sync;

/// Matrix-free operator given by a pair of callbacks.
pub struct FnOperator<T> {
    rows: usize,
    cols: usize,
    apply: Box<ApplyFn<T>>,
    adjoint: Box<ApplyFn<T>>,
}

impl<T: Real> LinearOperator<T> for FnOperator<T> {
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }
    fn apply(&self, x: ArrayView1<'_, T>) -> Array1<T> {
        (self.apply)(x)
    }
    fn adjoint_apply(&self, u: ArrayView1<'_, T>) -> Array1<T> {
        (self.adjoint)(u)
    }
}

/// Identity on ℝⁿ.
#[derive(Debug, Clone, Copy)]
pub struct IdentityOperator {
    dim: usize,
}

impl<T: Real> LinearOperator<T> for IdentityOperator {
    fn rows(&self) -> usize {
        self.dim
    }
    fn cols(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: ArrayView1<'_, T>) -> Array1<T> {
        x.to_owned()
    }
    fn adjoint_apply(&self, u: ArrayView1<'_, T>) -> Array1<T> {
        u.to_owned()
    }
    fn adjoint_add(&self, u: ArrayView1<'_, T>, alpha: T, mut out: ArrayViewMut1<'_, T>) {
        out.scaled_add(alpha, &u);
    }
    fn exact_norm(&self) -> Option<T> {
        Some(if self.dim == 0 { T::zero() } else { T::one() })
    }
}

/// An operator together with cached norm bounds.
#[derive(Clone)]
pub struct LinearMap<T: Real> {
    op: Arc<dyn LinearOperator<T>>,
    operator_norm: T,
    gram_norm: T,
}

impl<T: Real> fmt::Debug for LinearMap<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearMap")
            .field("rows", &self.rows())
            .field("cols", &self.cols())
            .field("operator_norm", &self.operator_norm)
            .field("gram_norm", &self.gram_norm)
            .finish()
    }
}

impl<T: Real> LinearMap<T> {
    pub fn new(op: Arc<dyn LinearOperator<T>>) -> Self {
        let (operator_norm, gram_norm) = match op.exact_norm() {
            Some(n) => (n, n * n),
            None => {
                let lambda = power_iteration_gram(op.as_ref());
                let safety = T::lit(POWER_SAFETY);
                (safety * lambda.sqrt(), safety * lambda)
            }
        };
        LinearMap {
            op,
            operator_norm,
            gram_norm,
        }
    }

    pub fn dense(matrix: Array2<T>) -> Self {
        Self::new(Arc::new(DenseOperator { matrix }))
    }

    /// Row `row` of `matrix` as a map ℝⁿ → ℝ.
    pub fn row_of(matrix: Arc<Array2<T>>, row: usize) -> Result<Self> {
        if row >= matrix.nrows() {
            return Err(PlirlsError::IndexOutOfRange {
                index: row,
                len: matrix.nrows(),
            });
        }
        Ok(Self::new(Arc::new(RowOperator { matrix, row })))
    }

    /// `x ↦ scale · x[index]` on ℝ^dim.
    pub fn coordinate(dim: usize, index: usize, scale: T) -> Result<Self> {
        if index >= dim {
            return Err(PlirlsError::IndexOutOfRange { index, len: dim });
        }
        Ok(Self::new(Arc::new(CoordinateOperator { dim, index, scale })))
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(Arc::new(IdentityOperator { dim }))
    }

    pub fn from_fns<F, G>(rows: usize, cols: usize, apply: F, adjoint: G) -> Self
    where
        F: Fn(ArrayView1<'_, T>) -> Array1<T> + Send + Sync + 'static,
        G: Fn(ArrayView1<'_, T>) -> Array1<T> + Send + Sync + 'static,
    {
        Self::new(Arc::new(FnOperator {
            rows,
            cols,
            apply: Box::new(apply),
            adjoint: Box::new(adjoint),
        }))
    }

    pub fn rows(&self) -> usize {
        self.op.rows()
    }

    pub fn cols(&self) -> usize {
        self.op.cols()
    }

    pub fn apply(&self, x: ArrayView1<'_, T>) -> Array1<T> {
        self.op.apply(x)
    }

    pub fn adjoint_apply(&self, u: ArrayView1<'_, T>) -> Array1<T> {
        self.op.adjoint_apply(u)
    }

    pub fn adjoint_add(&self, u: ArrayView1<'_, T>, alpha: T, out: ArrayViewMut1<'_, T>) {
        self.op.adjoint_add(u, alpha, out)
    }

    /// Upper bound on the spectral norm `‖B‖`.
    pub fn operator_norm(&self) -> T {
        self.operator_norm
    }

    /// Upper bound on `‖BᵀB‖`.
    pub fn gram_norm(&self) -> T {
        self.gram_norm
    }
}

/// Largest eigenvalue of `BᵀB` by power iteration from a fixed seed.
fn power_iteration_gram<T: Real>(op: &dyn LinearOperator<T>) -> T {
    let n = op.cols();
    if n == 0 || op.rows() == 0 {
        return T::zero();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut v: Array1<T> = Array1::from_shape_fn(n, |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        T::lit(z)
    });
    let nv = norm2(v.view());
    v /= nv;
    let tol = T::lit(POWER_TOL);
    let mut estimate = T::zero();
    for _ in 0..POWER_ITERS {
        let w = op.adjoint_apply(op.apply(v.view()).view());
        let next = norm2(w.view());
        if next == T::zero() {
            return T::zero();
        }
        v = w / next;
        let converged = (next - estimate).abs() <= tol * next;
        estimate = next;
        if converged {
            break;
        }
    }
    estimate
}

/// Row-major flattening of a matrix.
pub(crate) fn flatten<T: Real>(m: &Array2<T>) -> Array1<T> {
    Array1::from_iter(m.iter().copied())
}

pub(crate) fn unflatten<T: Real>(v: ArrayView1<'_, T>, rows: usize, cols: usize) -> Array2<T> {
    Array2::from_shape_fn((rows, cols), |(i, j)| v[i * cols + j])
}

/// Frobenius norm.
pub fn frobenius<T: Real>(m: &Array2<T>) -> T {
    m.iter().map(|&v| v * v).sum::<T>().sqrt()
}
