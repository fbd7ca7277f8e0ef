//! The auxiliary weight vector `y` and its closed-form update.

use ndarray::{Array1, ArrayView1};

use crate::error::{PlirlsError, Result};
use crate::problem::ProblemSpec;
use crate::scalar::Real;

/// Strictly positive weights, one per residual term.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector<T>(Array1<T>);

impl<T: Real> WeightVector<T> {
    pub fn new(values: Array1<T>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v > T::zero() && v.is_finite())) {
            return Err(PlirlsError::invalid(
                "weights",
                format!("entry {i} = {v} is not strictly positive and finite"),
            ));
        }
        Ok(WeightVector(values))
    }

    pub fn view(&self) -> ArrayView1<'_, T> {
        self.0.view()
    }

    pub fn as_array(&self) -> &Array1<T> {
        &self.0
    }

    pub fn into_inner(self) -> Array1<T> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `‖y‖_∞` (zero when there are no terms).
    pub fn max(&self) -> T {
        self.0.iter().fold(T::zero(), |m, &v| m.max(v))
    }

    /// Whether every entry lies in `(0, cap]`, with a relative slack of
    /// `1e-12` on the upper end.
    pub fn within_cap(&self, cap: T) -> bool {
        let limit = cap * (T::one() + T::lit(1e-12));
        self.0.iter().all(|&v| v > T::zero() && v <= limit)
    }
}

/// `1/(2√a)`: the ν = 1 weight for `a = r² + ε²`.
#[inline]
pub(crate) fn base_weight<T: Real>(a: T) -> T {
    T::one() / (T::lit(2.0) * a.sqrt())
}

/// `(ν/2)·a^{(ν−2)/2}`; reduces to [`base_weight`] at ν = 1.
#[inline]
pub(crate) fn general_weight<T: Real>(a: T, nu: T) -> T {
    if nu == T::one() {
        base_weight(a)
    } else {
        nu / T::lit(2.0) * a.powf((nu - T::lit(2.0)) / T::lit(2.0))
    }
}

/// Minimizer of the auxiliary objective over `y` at fixed `x`:
/// `yᵢ = (ν/2)(rᵢ² + ε²)^{(ν−2)/2}`.
pub fn weight_update<T: Real>(spec: &ProblemSpec<T>, x: ArrayView1<'_, T>) -> Result<WeightVector<T>> {
    let eps2 = spec.epsilon() * spec.epsilon();
    let nu = spec.nu();
    let r = spec.residual_norms(x)?;
    WeightVector::new(r.mapv(|ri| general_weight(ri * ri + eps2, nu)))
}

/// The ν = 1 update `yᵢ = 1/(2√(rᵢ² + ε²))`; rejects specs with ν ≠ 1.
pub fn base_weight_update<T: Real>(spec: &ProblemSpec<T>, x: ArrayView1<'_, T>) -> Result<WeightVector<T>> {
    if spec.nu() != T::one() {
        return Err(PlirlsError::invalid("nu", "the base scheme requires nu = 1"));
    }
    let eps2 = spec.epsilon() * spec.epsilon();
    let r = spec.residual_norms(x)?;
    WeightVector::new(r.mapv(|ri| base_weight(ri * ri + eps2)))
}
