//! The two non-residual pieces of the objective: a prox-friendly term `f`
//! (possibly nonconvex, possibly an indicator) and a smooth term `s` with a
//! globally Lipschitz gradient.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{PlirlsError, Result};
use crate::extended::ExtReal;
use crate::linalg::{flatten, unflatten, LinearMap};
use crate::prox::{self, ProxResult};
use crate::scalar::Real;

/// `f` together with one selection of its proximal map.
pub trait ProxTerm<T: Real>: Send + Sync {
    /// `f(x)`, `+∞` outside the domain.
    fn value(&self, x: ArrayView1<'_, T>) -> ExtReal<T>;

    /// One element of `argmin_z f(z) + (c/2)‖z − y‖²`.
    fn prox(&self, y: ArrayView1<'_, T>, c: T) -> Result<ProxResult<Array1<T>>>;

    fn name(&self) -> &'static str {
        "custom"
    }
}

/// `s` with its gradient and a global gradient-Lipschitz modulus `L_s`.
pub trait SmoothTerm<T: Real>: Send + Sync {
    fn value(&self, x: ArrayView1<'_, T>) -> T;
    fn gradient(&self, x: ArrayView1<'_, T>) -> Array1<T>;
    fn lipschitz(&self) -> T;
}

fn nnz<T: Real>(x: ArrayView1<'_, T>) -> usize {
    x.iter().filter(|v| **v != T::zero()).count()
}

/// `f ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroTerm;

impl<T: Real> ProxTerm<T> for ZeroTerm {
    fn value(&self, _x: ArrayView1<'_, T>) -> ExtReal<T> {
        ExtReal::zero()
    }
    fn prox(&self, y: ArrayView1<'_, T>, _c: T) -> Result<ProxResult<Array1<T>>> {
        Ok(ProxResult::unique(y.to_owned()))
    }
    fn name(&self) -> &'static str {
        "zero"
    }
}

/// `λ‖x‖₁`.
#[derive(Debug, Clone, Copy)]
pub struct L1Norm<T> {
    pub lambda: T,
}

impl<T: Real> ProxTerm<T> for L1Norm<T> {
    fn value(&self, x: ArrayView1<'_, T>) -> ExtReal<T> {
        ExtReal::Finite(self.lambda * x.iter().map(|v| v.abs()).sum::<T>())
    }
    fn prox(&self, y: ArrayView1<'_, T>, c: T) -> Result<ProxResult<Array1<T>>> {
        prox::soft_threshold(y, self.lambda / c).map(ProxResult::unique)
    }
    fn name(&self) -> &'static str {
        "l1"
    }
}

/// `λ‖x‖₀`.
#[derive(Debug, Clone, Copy)]
pub struct L0Penalty<T> {
    pub lambda: T,
}

impl<T: Real> ProxTerm<T> for L0Penalty<T> {
    fn value(&self, x: ArrayView1<'_, T>) -> ExtReal<T> {
        ExtReal::Finite(self.lambda * T::from_usize(nnz(x)).unwrap())
    }
    fn prox(&self, y: ArrayView1<'_, T>, c: T) -> Result<ProxResult<Array1<T>>> {
        prox::hard_threshold_l0(y, self.lambda, c)
    }
    fn name(&self) -> &'static str {
        "l0"
    }
}

/// Indicator of `{x : ‖x‖₀ ≤ k}`.
#[derive(Debug, Clone, Copy)]
pub struct SparsityConstraint {
    pub k: usize,
}

impl<T: Real> ProxTerm<T> for SparsityConstraint {
    fn value(&self, x: ArrayView1<'_, T>) -> ExtReal<T> {
        if nnz(x) <= self.k {
            ExtReal::zero()
        } else {
            ExtReal::PosInfinity
        }
    }
    fn prox(&self, y: ArrayView1<'_, T>, _c: T) -> Result<ProxResult<Array1<T>>> {
        prox::project_sparsity(y, self.k)
    }
    fn name(&self) -> &'static str {
        "sparsity"
    }
}

/// Indicator of `{x : ‖x‖₁ ≤ r}`; membership is tested with a relative
/// slack of `1e-12` so projected points count as feasible.
#[derive(Debug, Clone, Copy)]
pub struct L1BallConstraint<T> {
    pub radius: T,
}

impl<T: Real> ProxTerm<T> for L1BallConstraint<T> {
    fn value(&self, x: ArrayView1<'_, T>) -> ExtReal<T> {
        let l1: T = x.iter().map(|v| v.abs()).sum();
        if l1 <= self.radius * (T::one() + T::lit(1e-12)) {
            ExtReal::zero()
        } else {
            ExtReal::PosInfinity
        }
    }
    fn prox(&self, y: ArrayView1<'_, T>, _c: T) -> Result<ProxResult<Array1<T>>> {
        prox::project_l1_ball(y, self.radius).map(ProxResult::unique)
    }
    fn name(&self) -> &'static str {
        "l1-ball"
    }
}

/// Indicator of the box `[lower, upper]`.
#[derive(Debug, Clone)]
pub struct BoxConstraint<T> {
    lower: Array1<T>,
    upper: Array1<T>,
}

impl<T: Real> BoxConstraint<T> {
    pub fn new(lower: Array1<T>, upper: Array1<T>) -> Result<Self> {
        // Validates shapes and ordering once.
        prox::project_box(lower.view(), lower.view(), upper.view())?;
        Ok(BoxConstraint { lower, upper })
    }
}

impl<T: Real> ProxTerm<T> for BoxConstraint<T> {
    fn value(&self, x: ArrayView1<'_, T>) -> ExtReal<T> {
        let inside = x.len() == self.lower.len()
            && x.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(v, (lo, hi))| lo <= v && v <= hi);
        if inside {
            ExtReal::zero()
        } else {
            ExtReal::PosInfinity
        }
    }
    fn prox(&self, y: ArrayView1<'_, T>, _c: T) -> Result<ProxResult<Array1<T>>> {
        prox::project_box(y, self.lower.view(), self.upper.view()).map(ProxResult::unique)
    }
    fn name(&self) -> &'static str {
        "box"
    }
}

/// Numerical rank: singular values above `max(rows, cols)·eps·σ₁`.
pub fn numerical_rank<T: Real>(m: &Array2<T>) -> Result<usize> {
    let svd = T::svd(m.view())?;
    let s1 = svd.singular_values.iter().copied().fold(T::zero(), T::max);
    let tol = T::from_usize(m.nrows().max(m.ncols())).unwrap() * T::epsilon() * s1;
    Ok(svd.singular_values.iter().filter(|&&s| s > tol).count())
}

/// `λ·rank(X)` on a row-major flattened `rows × cols` matrix.
#[derive(Debug, Clone, Copy)]
pub struct RankPenalty<T> {
    pub rows: usize,
    pub cols: usize,
    pub lambda: T,
}

impl<T: Real> ProxTerm<T> for RankPenalty<T> {
    fn value(&self, x: ArrayView1<'_, T>) -> ExtReal<T> {
        match numerical_rank(&unflatten(x, self.rows, self.cols)) {
            Ok(r) => ExtReal::Finite(self.lambda * T::from_usize(r).unwrap()),
            Err(_) => ExtReal::Finite(T::nan()),
        }
    }
    fn prox(&self, y: ArrayView1<'_, T>, c: T) -> Result<ProxResult<Array1<T>>> {
        check_len(y.len(), self.rows * self.cols)?;
        let m = unflatten(y, self.rows, self.cols);
        Ok(prox::rank_prox(m.view(), self.lambda, c)?.map(|p| flatten(&p)))
    }
    fn name(&self) -> &'static str {
        "rank"
    }
}

/// `λ‖X‖_*` on a row-major flattened `rows × cols` matrix.
#[derive(Debug, Clone, Copy)]
pub struct NuclearNorm<T> {
    pub rows: usize,
    pub cols: usize,
    pub lambda: T,
}

impl<T: Real> ProxTerm<T> for NuclearNorm<T> {
    fn value(&self, x: ArrayView1<'_, T>) -> ExtReal<T> {
        match T::svd(unflatten(x, self.rows, self.cols).view()) {
            Ok(svd) => ExtReal::Finite(self.lambda * svd.singular_values.sum()),
            Err(_) => ExtReal::Finite(T::nan()),
        }
    }
    fn prox(&self, y: ArrayView1<'_, T>, c: T) -> Result<ProxResult<Array1<T>>> {
        check_len(y.len(), self.rows * self.cols)?;
        let m = unflatten(y, self.rows, self.cols);
        Ok(ProxResult::unique(flatten(&prox::svt_nuclear(m.view(), self.lambda / c)?)))
    }
    fn name(&self) -> &'static str {
        "nuclear"
    }
}

fn check_len(found: usize, expected: usize) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(PlirlsError::DimensionMismatch {
            what: "matrix-shaped term",
            expected,
            found,
        })
    }
}

type ValueFn<T> = dyn Fn(ArrayView1<'_, T>) -> ExtReal<T> + Send + Sync;
type ProxFn<T> = dyn Fn(ArrayView1<'_, T>, T) -> Result<ProxResult<Array1<T>>> + Send + Sync;

/// User-supplied `f` given as closures.
pub struct FnProx<T> {
    value: Box<ValueFn<T>>,
    prox: Box<ProxFn<T>>,
}

impl<T: Real> FnProx<T> {
    pub fn new<V, P>(value: V, prox: P) -> Self
    where
        V: Fn(ArrayView1<'_, T>) -> ExtReal<T> + Send + Sync + 'static,
        P: Fn(ArrayView1<'_, T>, T) -> Result<ProxResult<Array1<T>>> + Send + Sync + 'static,
    {
        FnProx {
            value: Box::new(value),
            prox: Box::new(prox),
        }
    }
}

impl<T: Real> ProxTerm<T> for FnProx<T> {
    fn value(&self, x: ArrayView1<'_, T>) -> ExtReal<T> {
        (self.value)(x)
    }
    fn prox(&self, y: ArrayView1<'_, T>, c: T) -> Result<ProxResult<Array1<T>>> {
        (self.prox)(y, c)
    }
}

/// `s ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoSmooth {
    dim: usize,
}

impl NoSmooth {
    pub fn new(dim: usize) -> Self {
        NoSmooth { dim }
    }
}

impl<T: Real> SmoothTerm<T> for NoSmooth {
    fn value(&self, _x: ArrayView1<'_, T>) -> T {
        T::zero()
    }
    fn gradient(&self, _x: ArrayView1<'_, T>) -> Array1<T> {
        Array1::zeros(self.dim)
    }
    fn lipschitz(&self) -> T {
        T::zero()
    }
}

/// `(scale/2)‖x‖²`.
#[derive(Debug, Clone, Copy)]
pub struct HalfSquaredNorm<T> {
    pub scale: T,
}

impl<T: Real> SmoothTerm<T> for HalfSquaredNorm<T> {
    fn value(&self, x: ArrayView1<'_, T>) -> T {
        T::lit(0.5) * self.scale * x.dot(&x)
    }
    fn gradient(&self, x: ArrayView1<'_, T>) -> Array1<T> {
        x.mapv(|v| self.scale * v)
    }
    fn lipschitz(&self) -> T {
        self.scale.abs()
    }
}

/// `(scale/2)‖Ax − b‖²` with `L_s = scale·‖AᵀA‖`.
#[derive(Debug, Clone)]
pub struct LeastSquares<T> {
    matrix: Arc<Array2<T>>,
    rhs: Array1<T>,
    scale: T,
    lipschitz: T,
}

impl<T: Real> LeastSquares<T> {
    pub fn new(matrix: Arc<Array2<T>>, rhs: Array1<T>, scale: T) -> Result<Self> {
        if rhs.len() != matrix.nrows() {
            return Err(PlirlsError::DimensionMismatch {
                what: "least-squares right-hand side",
                expected: matrix.nrows(),
                found: rhs.len(),
            });
        }
        if !(scale >= T::zero()) {
            return Err(PlirlsError::invalid("scale", "must be nonnegative"));
        }
        let gram = LinearMap::dense(matrix.as_ref().clone()).gram_norm();
        Ok(LeastSquares {
            matrix,
            rhs,
            scale,
            lipschitz: scale * gram,
        })
    }

    pub fn matrix(&self) -> &Array2<T> {
        &self.matrix
    }

    pub fn rhs(&self) -> &Array1<T> {
        &self.rhs
    }

    pub fn scale(&self) -> T {
        self.scale
    }
}

impl<T: Real> SmoothTerm<T> for LeastSquares<T> {
    fn value(&self, x: ArrayView1<'_, T>) -> T {
        let r = self.matrix.dot(&x) - &self.rhs;
        T::lit(0.5) * self.scale * r.dot(&r)
    }
    fn gradient(&self, x: ArrayView1<'_, T>) -> Array1<T> {
        let r = self.matrix.dot(&x) - &self.rhs;
        self.matrix.t().dot(&r) * self.scale
    }
    fn lipschitz(&self) -> T {
        self.lipschitz
    }
}

type SmoothValueFn<T> = dyn Fn(ArrayView1<'_, T>) -> T + Send + Sync;
type GradFn<T> = dyn Fn(ArrayView1<'_, T>) -> Array1<T> + Send + Sync;

/// User-supplied `s`; the caller vouches for the Lipschitz modulus.
pub struct FnSmooth<T> {
    value: Box<SmoothValueFn<T>>,
    gradient: Box<GradFn<T>>,
    lipschitz: T,
}

impl<T: Real> FnSmooth<T> {
    pub fn new<V, G>(value: V, gradient: G, lipschitz: T) -> Self
    where
        V: Fn(ArrayView1<'_, T>) -> T + Send + Sync + 'static,
        G: Fn(ArrayView1<'_, T>) -> Array1<T> + Send + Sync + 'static,
    {
        FnSmooth {
            value: Box::new(value),
            gradient: Box::new(gradient),
            lipschitz,
        }
    }
}

impl<T: Real> SmoothTerm<T> for FnSmooth<T> {
    fn value(&self, x: ArrayView1<'_, T>) -> T {
        (self.value)(x)
    }
    fn gradient(&self, x: ArrayView1<'_, T>) -> Array1<T> {
        (self.gradient)(x)
    }
    fn lipschitz(&self) -> T {
        self.lipschitz
    }
}
