//! The scalar abstraction every routine in the crate is generic over.
//!
//! Arithmetic goes through [`num_traits::Float`]. The two dense
//! factorizations the algorithms need (a singular value decomposition and a
//! square solve) are routed through [`Real`] so that each concrete float can
//! pick its backend; `f32` and `f64` both go to LAPACK via `ndarray-linalg`.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use ndarray_linalg::{JobSvd, Solve, SVDDC};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

use crate::error::{PlirlsError, Result};

/// Thin singular value decomposition `M = U diag(s) Vᵀ`, singular values
/// sorted in nonincreasing order.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub u: Array2<T>,
    pub singular_values: Array1<T>,
    pub vt: Array2<T>,
}

impl<T: Real> Svd<T> {
    /// Rebuilds `U diag(values) Vᵀ` for replacement singular values.
    pub fn recompose(&self, values: &Array1<T>) -> Array2<T> {
        let mut scaled = self.u.clone();
        for (mut col, &v) in scaled.columns_mut().into_iter().zip(values.iter()) {
            col.mapv_inplace(|e| e * v);
        }
        scaled.dot(&self.vt)
    }
}

/// Floating-point scalar usable throughout the crate.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + ScalarOperand
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Singular value decomposition of a dense matrix.
    fn svd(m: ArrayView2<'_, Self>) -> Result<Svd<Self>>;

    /// Solves the square system `a x = b`.
    fn solve(a: ArrayView2<'_, Self>, b: ArrayView1<'_, Self>) -> Result<Array1<Self>>;

    /// Converts an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    /// Lossy conversion used for reporting.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

macro_rules! impl_real_via_lapack {
    ($t:ty) => {
        impl Real for $t {
            fn svd(m: ArrayView2<'_, Self>) -> Result<Svd<Self>> {
                let (rows, cols) = m.dim();
                if rows == 0 || cols == 0 {
                    let q = rows.min(cols);
                    return Ok(Svd {
                        u: Array2::zeros((rows, q)),
                        singular_values: Array1::zeros(q),
                        vt: Array2::zeros((q, cols)),
                    });
                }
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(PlirlsError::Numerical("SVD of a non-finite matrix".into()));
                }
                let (u, s, vt) = m
                    .svddc(JobSvd::Some)
                    .map_err(|e| PlirlsError::Numerical(format!("SVD failed: {e}")))?;
                let (u, vt) = match (u, vt) {
                    (Some(u), Some(vt)) => (u, vt),
                    _ => return Err(PlirlsError::Numerical("SVD factors missing".into())),
                };
                Ok(Svd { u, singular_values: s, vt })
            }

            fn solve(a: ArrayView2<'_, Self>, b: ArrayView1<'_, Self>) -> Result<Array1<Self>> {
                let (rows, cols) = a.dim();
                if rows != cols || b.len() != rows {
                    return Err(PlirlsError::DimensionMismatch {
                        what: "linear system",
                        expected: rows,
                        found: b.len().max(cols),
                    });
                }
                a.solve(&b)
                    .map_err(|_| PlirlsError::Numerical("singular linear system".into()))
            }
        }
    };
}

impl_real_via_lapack!(f32);
impl_real_via_lapack!(f64);

/// Euclidean norm.
pub fn norm2<T: Real>(x: ArrayView1<'_, T>) -> T {
    x.iter().map(|&v| v * v).sum::<T>().sqrt()
}

/// Euclidean distance between two vectors of equal length.
pub fn dist2<T: Real>(a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> T {
    a.iter()
        .zip(b.iter())
        .map(|(&p, &q)| (p - q) * (p - q))
        .sum::<T>()
        .sqrt()
}

/// Largest absolute entry, zero for an empty vector.
pub fn max_abs<T: Real>(x: ArrayView1<'_, T>) -> T {
    x.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
}
