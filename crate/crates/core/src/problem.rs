//! Problem instances `F_ε(x) = f(x) + s(x) + Σᵢ (‖Bᵢx − cᵢ‖² + ε²)^{ν/2}`
//! and the auxiliary objective `Ψ(x, y)` used by the reweighting scheme.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, ArrayView1};

use crate::error::{PlirlsError, Result};
use crate::extended::ExtReal;
use crate::linalg::LinearMap;
use crate::scalar::{norm2, Real};
use crate::terms::{NoSmooth, ProxTerm, SmoothTerm, ZeroTerm};
use crate::weights::WeightVector;

/// One residual term `x ↦ Bx − c`.
#[derive(Debug, Clone)]
pub struct AffineTerm<T: Real> {
    map: LinearMap<T>,
    offset: Array1<T>,
    offset_norm: T,
}

impl<T: Real> AffineTerm<T> {
    pub fn new(map: LinearMap<T>, offset: Array1<T>) -> Result<Self> {
        if offset.len() != map.rows() {
            return Err(PlirlsError::DimensionMismatch {
                what: "affine term offset",
                expected: map.rows(),
                found: offset.len(),
            });
        }
        let offset_norm = norm2(offset.view());
        Ok(AffineTerm {
            map,
            offset,
            offset_norm,
        })
    }

    pub fn map(&self) -> &LinearMap<T> {
        &self.map
    }

    pub fn offset(&self) -> &Array1<T> {
        &self.offset
    }

    pub fn offset_norm(&self) -> T {
        self.offset_norm
    }

    pub fn residual(&self, x: ArrayView1<'_, T>) -> Array1<T> {
        self.map.apply(x) - &self.offset
    }
}

/// How the step modulus `L(τ, y)` of the x-update is formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModulusRule<T> {
    /// `L_s + ‖L_p^τ‖₁‖y‖_∞` from the per-term local Lipschitz bounds.
    LocalLipschitz,
    /// `L_s + 2·gram_sum_norm·‖y‖_∞`, where `gram_sum_norm ≥ ‖Σᵢ BᵢᵀBᵢ‖`.
    /// A global gradient modulus of the coupling for fixed `y`, since its
    /// Hessian is `2Σᵢ yᵢBᵢᵀBᵢ`. Tight when the `Bᵢ` act on disjoint
    /// coordinates, which is the entrywise low-rank setting.
    Coupling { gram_sum_norm: T },
}

/// A complete problem instance. Immutable and cheap to clone.
#[derive(Clone)]
pub struct ProblemSpec<T: Real> {
    dim: usize,
    f: Arc<dyn ProxTerm<T>>,
    s: Arc<dyn SmoothTerm<T>>,
    terms: Arc<[AffineTerm<T>]>,
    epsilon: T,
    nu: T,
    modulus: ModulusRule<T>,
}

impl<T: Real> fmt::Debug for ProblemSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("dim", &self.dim)
            .field("f", &self.f.name())
            .field("terms", &self.terms.len())
            .field("epsilon", &self.epsilon)
            .field("nu", &self.nu)
            .field("modulus", &self.modulus)
            .finish()
    }
}

pub struct ProblemBuilder<T: Real> {
    dim: usize,
    f: Option<Arc<dyn ProxTerm<T>>>,
    s: Option<Arc<dyn SmoothTerm<T>>>,
    terms: Vec<AffineTerm<T>>,
    epsilon: Option<T>,
    nu: T,
    modulus: ModulusRule<T>,
}

impl<T: Real> ProblemBuilder<T> {
    pub fn prox_term(mut self, f: impl ProxTerm<T> + 'static) -> Self {
        self.f = Some(Arc::new(f));
        self
    }

    pub fn prox_term_arc(mut self, f: Arc<dyn ProxTerm<T>>) -> Self {
        self.f = Some(f);
        self
    }

    pub fn smooth_term(mut self, s: impl SmoothTerm<T> + 'static) -> Self {
        self.s = Some(Arc::new(s));
        self
    }

    pub fn term(mut self, term: AffineTerm<T>) -> Self {
        self.terms.push(term);
        self
    }

    pub fn terms(mut self, terms: impl IntoIterator<Item = AffineTerm<T>>) -> Self {
        self.terms.extend(terms);
        self
    }

    pub fn epsilon(mut self, epsilon: T) -> Self {
        self.epsilon = Some(epsilon);
        self
    }

    pub fn nu(mut self, nu: T) -> Self {
        self.nu = nu;
        self
    }

    pub fn modulus_rule(mut self, rule: ModulusRule<T>) -> Self {
        self.modulus = rule;
        self
    }

    pub fn build(self) -> Result<ProblemSpec<T>> {
        let epsilon = self
            .epsilon
            .ok_or_else(|| PlirlsError::invalid("epsilon", "smoothing parameter is required"))?;
        if !(epsilon > T::zero() && epsilon.is_finite()) {
            return Err(PlirlsError::invalid("epsilon", format!("must be positive, got {epsilon}")));
        }
        if !(self.nu > T::zero() && self.nu <= T::one()) {
            return Err(PlirlsError::invalid("nu", format!("must lie in (0, 1], got {}", self.nu)));
        }
        if let Some(t) = self.terms.iter().find(|t| t.map.cols() != self.dim) {
            return Err(PlirlsError::DimensionMismatch {
                what: "affine term columns",
                expected: self.dim,
                found: t.map.cols(),
            });
        }
        if let ModulusRule::Coupling { gram_sum_norm } = self.modulus {
            if !(gram_sum_norm >= T::zero() && gram_sum_norm.is_finite()) {
                return Err(PlirlsError::invalid("gram_sum_norm", "must be nonnegative"));
            }
        }
        Ok(ProblemSpec {
            dim: self.dim,
            f: self.f.unwrap_or_else(|| Arc::new(ZeroTerm)),
            s: self.s.unwrap_or_else(|| Arc::new(NoSmooth::new(self.dim))),
            terms: self.terms.into(),
            epsilon,
            nu: self.nu,
            modulus: self.modulus,
        })
    }
}

impl<T: Real> ProblemSpec<T> {
    /// Starts a builder for an instance on ℝ^dim; `f ≡ 0`, `s ≡ 0`, ν = 1
    /// unless set.
    pub fn builder(dim: usize) -> ProblemBuilder<T> {
        ProblemBuilder {
            dim,
            f: None,
            s: None,
            terms: Vec::new(),
            epsilon: None,
            nu: T::one(),
            modulus: ModulusRule::LocalLipschitz,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[AffineTerm<T>] {
        &self.terms
    }

    pub fn prox_term(&self) -> &dyn ProxTerm<T> {
        self.f.as_ref()
    }

    pub fn smooth_term(&self) -> &dyn SmoothTerm<T> {
        self.s.as_ref()
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn nu(&self) -> T {
        self.nu
    }

    pub fn modulus_rule(&self) -> ModulusRule<T> {
        self.modulus
    }

    /// Same instance with a different smoothing parameter.
    pub fn with_epsilon(&self, epsilon: T) -> Result<Self> {
        if !(epsilon > T::zero() && epsilon.is_finite()) {
            return Err(PlirlsError::invalid("epsilon", format!("must be positive, got {epsilon}")));
        }
        let mut out = self.clone();
        out.epsilon = epsilon;
        Ok(out)
    }

    pub fn with_nu(&self, nu: T) -> Result<Self> {
        if !(nu > T::zero() && nu <= T::one()) {
            return Err(PlirlsError::invalid("nu", format!("must lie in (0, 1], got {nu}")));
        }
        let mut out = self.clone();
        out.nu = nu;
        Ok(out)
    }

    /// Upper end of the admissible weight box, `ν / (2ε^{2−ν})`.
    pub fn weight_cap(&self) -> T {
        self.nu / (T::lit(2.0) * self.epsilon.powf(T::lit(2.0) - self.nu))
    }

    /// Exponent `θ = ν/(2−ν)` of the weight penalty `κ/yᵢ^θ`.
    pub fn theta(&self) -> T {
        self.nu / (T::lit(2.0) - self.nu)
    }

    /// Coefficient `κ` of the weight penalty, chosen so that minimizing
    /// `a·y + κ/y^θ` over `y > 0` gives `y = (ν/2)a^{(ν−2)/2}` and value
    /// `a^{ν/2}`. Equals `1/4` at ν = 1.
    pub fn kappa(&self) -> T {
        let nu = self.nu;
        let two = T::lit(2.0);
        (two - nu) / nu * (nu / two).powf(two / (two - nu))
    }

    fn check_dim(&self, x: ArrayView1<'_, T>) -> Result<()> {
        if x.len() != self.dim {
            return Err(PlirlsError::DimensionMismatch {
                what: "iterate",
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    fn check_weights(&self, y: ArrayView1<'_, T>) -> Result<()> {
        if y.len() != self.terms.len() {
            return Err(PlirlsError::DimensionMismatch {
                what: "weights",
                expected: self.terms.len(),
                found: y.len(),
            });
        }
        Ok(())
    }

    /// `‖Bᵢx − cᵢ‖₂` for every term.
    pub fn residual_norms(&self, x: ArrayView1<'_, T>) -> Result<Array1<T>> {
        self.check_dim(x)?;
        Ok(self
            .terms
            .iter()
            .map(|t| norm2(t.residual(x).view()))
            .collect())
    }

    /// `pᵢ(x) = √(‖Bᵢx − cᵢ‖² + ε²)` (0-based index).
    pub fn eval_p(&self, x: ArrayView1<'_, T>, i: usize) -> Result<T> {
        self.check_dim(x)?;
        let term = self.terms.get(i).ok_or(PlirlsError::IndexOutOfRange {
            index: i,
            len: self.terms.len(),
        })?;
        let r = norm2(term.residual(x).view());
        Ok((r * r + self.epsilon * self.epsilon).sqrt())
    }

    #[inline]
    fn smoothed_power(&self, a: T) -> T {
        if self.nu == T::one() {
            a.sqrt()
        } else {
            a.powf(self.nu / T::lit(2.0))
        }
    }

    /// `h(x) = s(x) + Σᵢ (rᵢ² + ε²)^{ν/2}`, the smooth part of `F_ε`.
    pub fn smooth_part(&self, x: ArrayView1<'_, T>) -> Result<T> {
        let r = self.residual_norms(x)?;
        let eps2 = self.epsilon * self.epsilon;
        let sum: T = r.iter().map(|&ri| self.smoothed_power(ri * ri + eps2)).sum();
        Ok(self.s.value(x) + sum)
    }

    /// `F_ε(x) = f(x) + h(x)`.
    pub fn smoothed_objective(&self, x: ArrayView1<'_, T>) -> Result<ExtReal<T>> {
        let h = self.smooth_part(x)?;
        Ok(self.f.value(x) + h)
    }

    /// `∇h(x) = ∇s(x) + Σᵢ ν(rᵢ² + ε²)^{(ν−2)/2} Bᵢᵀ(Bᵢx − cᵢ)`.
    pub fn grad_h(&self, x: ArrayView1<'_, T>) -> Result<Array1<T>> {
        self.check_dim(x)?;
        let mut g = self.s.gradient(x);
        let eps2 = self.epsilon * self.epsilon;
        for t in self.terms.iter() {
            let r = t.residual(x);
            let a = r.dot(&r) + eps2;
            let coef = if self.nu == T::one() {
                T::one() / a.sqrt()
            } else {
                self.nu * a.powf((self.nu - T::lit(2.0)) / T::lit(2.0))
            };
            t.map.adjoint_add(r.view(), coef, g.view_mut());
        }
        Ok(g)
    }

    /// `H(x, y) = s(x) + Σᵢ (rᵢ² + ε²) yᵢ`.
    pub fn coupling_value(&self, x: ArrayView1<'_, T>, y: ArrayView1<'_, T>) -> Result<T> {
        self.check_weights(y)?;
        let r = self.residual_norms(x)?;
        let eps2 = self.epsilon * self.epsilon;
        let sum: T = r.iter().zip(y.iter()).map(|(&ri, &yi)| (ri * ri + eps2) * yi).sum();
        Ok(self.s.value(x) + sum)
    }

    /// `∇ₓH(x, y) = ∇s(x) + Σᵢ 2yᵢ Bᵢᵀ(Bᵢx − cᵢ)`. Accepts any weights,
    /// including zeros.
    pub fn grad_coupling(&self, x: ArrayView1<'_, T>, y: ArrayView1<'_, T>) -> Result<Array1<T>> {
        self.check_dim(x)?;
        self.check_weights(y)?;
        let mut g = self.s.gradient(x);
        let two = T::lit(2.0);
        for (t, &yi) in self.terms.iter().zip(y.iter()) {
            let r = t.residual(x);
            t.map.adjoint_add(r.view(), two * yi, g.view_mut());
        }
        Ok(g)
    }

    /// `Ψ(x, y) = f(x) + H(x, y) + Σᵢ κ/yᵢ^θ + δ(y ∈ (0, cap]^m)`.
    pub fn auxiliary(&self, x: ArrayView1<'_, T>, y: ArrayView1<'_, T>) -> Result<ExtReal<T>> {
        self.check_weights(y)?;
        if let Some((i, v)) = y.iter().enumerate().find(|(_, v)| !(**v > T::zero())) {
            return Err(PlirlsError::invalid("weights", format!("entry {i} = {v} must be positive")));
        }
        let cap = self.weight_cap() * (T::one() + T::lit(1e-12));
        if y.iter().any(|&v| v > cap) {
            return Ok(ExtReal::PosInfinity);
        }
        let h = self.coupling_value(x, y)?;
        let penalty: T = if self.nu == T::one() {
            y.iter().map(|&v| T::one() / (T::lit(4.0) * v)).sum()
        } else {
            let (kappa, theta) = (self.kappa(), self.theta());
            y.iter().map(|&v| kappa / v.powf(theta)).sum()
        };
        Ok(self.f.value(x) + (h + penalty))
    }

    /// [`Self::auxiliary`] for a validated weight vector.
    pub fn eval_auxiliary(&self, x: ArrayView1<'_, T>, y: &WeightVector<T>) -> Result<ExtReal<T>> {
        self.auxiliary(x, y.view())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::oracles::fd_gradient;
    use crate::scalar::dist2;
    use crate::terms::{HalfSquaredNorm, L0Penalty, SparsityConstraint};
    use crate::weights::weight_update;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn scalar_spec(eps: f64, nu: f64) -> ProblemSpec<f64> {
        ProblemSpec::builder(1)
            .term(AffineTerm::new(LinearMap::identity(1), array![0.0]).unwrap())
            .epsilon(eps)
            .nu(nu)
            .build()
            .unwrap()
    }

    pub(crate) fn random_spec(seed: u64, n: usize, m: usize, k: usize, nu: f64) -> ProblemSpec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eps: f64 = rng.random_range(0.05..1.5);
        let terms: Vec<_> = (0..m).map(|_| {
            let b = Array2::from_shape_fn((k, n), |_| StandardNormal.sample(&mut rng));
            let c = Array1::from_shape_fn(k, |_| StandardNormal.sample(&mut rng));
            AffineTerm::new(LinearMap::dense(b), c).unwrap()
        }).collect();
        ProblemSpec::builder(n)
            .smooth_term(HalfSquaredNorm { scale: 0.3 })
            .terms(terms)
            .epsilon(eps)
            .nu(nu)
            .build()
            .unwrap()
    }

    #[test]
    fn residual_norm_examples() {
        let spec = ProblemSpec::builder(2)
            .term(AffineTerm::new(LinearMap::identity(2), array![0.0, 0.0]).unwrap())
            .epsilon(1.0)
            .build()
            .unwrap();
        assert_eq!(spec.residual_norms(array![3.0, 4.0].view()).unwrap(), array![5.0]);
        assert_eq!(spec.residual_norms(array![0.0, 0.0].view()).unwrap(), array![0.0]);
        assert!(spec.residual_norms(array![1.0].view()).is_err());

        let spec = ProblemSpec::builder(2)
            .term(AffineTerm::new(LinearMap::dense(array![[1.0, 0.0], [0.0, 2.0]]), array![1.0, 1.0]).unwrap())
            .epsilon(1.0)
            .build()
            .unwrap();
        assert_eq!(spec.residual_norms(array![1.0, 1.0].view()).unwrap(), array![1.0]);
    }

    #[test]
    fn eval_p_examples() {
        assert_eq!(scalar_spec(1.0, 1.0).eval_p(array![0.0].view(), 0).unwrap(), 1.0);
        assert_eq!(scalar_spec(4.0, 1.0).eval_p(array![3.0].view(), 0).unwrap(), 5.0);
        let p = scalar_spec(1.0, 1.0).eval_p(array![1.0].view(), 0).unwrap();
        assert!((p - std::f64::consts::SQRT_2).abs() < 1e-15);
        assert!(scalar_spec(1.0, 1.0).eval_p(array![1.0].view(), 1).is_err());
    }

    #[test]
    fn objective_examples() {
        assert_eq!(scalar_spec(1.0, 1.0).smoothed_objective(array![0.0].view()).unwrap(), ExtReal::Finite(1.0));
        assert_eq!(scalar_spec(1.0, 0.5).smoothed_objective(array![0.0].view()).unwrap(), ExtReal::Finite(1.0));
        let spec = ProblemSpec::builder(3)
            .prox_term(SparsityConstraint { k: 1 })
            .epsilon(1.0)
            .build()
            .unwrap();
        assert_eq!(spec.smoothed_objective(array![1.0, 0.0, 2.0].view()).unwrap(), ExtReal::PosInfinity);
    }

    #[test]
    fn grad_h_examples() {
        let spec = scalar_spec(1.0, 1.0);
        assert_eq!(spec.grad_h(array![0.0].view()).unwrap(), array![0.0]);
        let g = spec.grad_h(array![1.0].view()).unwrap()[0];
        let fd = fd_gradient(|z| spec.smooth_part(z).unwrap(), array![1.0].view(), 1e-5).unwrap()[0];
        assert!((g - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((g - fd).abs() < 1e-9);

        let term = AffineTerm::new(LinearMap::identity(1), array![0.3]).unwrap();
        let one = ProblemSpec::builder(1).term(term.clone()).epsilon(0.5).build().unwrap();
        let two = ProblemSpec::builder(1).term(term.clone()).term(term).epsilon(0.5).build().unwrap();
        let x = array![1.7];
        assert_eq!(two.grad_h(x.view()).unwrap()[0], 2.0 * one.grad_h(x.view()).unwrap()[0]);
    }

    #[test]
    fn auxiliary_examples() {
        let spec = scalar_spec(1.0, 1.0);
        assert_eq!(spec.auxiliary(array![0.0].view(), array![0.5].view()).unwrap(), ExtReal::Finite(1.0));
        assert_eq!(spec.auxiliary(array![0.0].view(), array![0.6].view()).unwrap(), ExtReal::PosInfinity);
        assert!(spec.auxiliary(array![0.0].view(), array![0.0].view()).is_err());
        let x = array![2.5];
        let y = weight_update(&spec, x.view()).unwrap();
        let psi = spec.eval_auxiliary(x.view(), &y).unwrap().to_float();
        let f = spec.smoothed_objective(x.view()).unwrap().to_float();
        assert!((psi - f).abs() < 1e-14);
    }

    #[test]
    fn kappa_theta_at_nu_one() {
        let spec = scalar_spec(0.3, 1.0);
        assert!((spec.kappa() - 0.25).abs() < 1e-15);
        assert_eq!(spec.theta(), 1.0);
        assert!((spec.weight_cap() - 1.0 / 0.6).abs() < 1e-15);
    }

    #[test]
    fn builder_validation() {
        assert!(ProblemSpec::<f64>::builder(2).build().is_err());
        assert!(ProblemSpec::<f64>::builder(2).epsilon(0.0).build().is_err());
        assert!(ProblemSpec::<f64>::builder(2).epsilon(1.0).nu(1.5).build().is_err());
        assert!(ProblemSpec::<f64>::builder(2).epsilon(1.0).nu(0.0).build().is_err());
        let bad = AffineTerm::new(LinearMap::identity(3), Array1::zeros(3)).unwrap();
        assert!(ProblemSpec::builder(2).term(bad).epsilon(1.0).build().is_err());
        assert!(AffineTerm::new(LinearMap::<f64>::identity(3), Array1::zeros(2)).is_err());
    }

    #[test]
    fn f32_instance() {
        let spec = ProblemSpec::<f32>::builder(1)
            .prox_term(L0Penalty { lambda: 1.0f32 })
            .term(AffineTerm::new(LinearMap::identity(1), array![2.0f32]).unwrap())
            .epsilon(0.5)
            .build()
            .unwrap();
        let f = spec.smoothed_objective(array![2.0f32].view()).unwrap().to_float();
        assert!((f - 1.5).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn auxiliary_dominates_objective(seed in 0u64..300, nu_idx in 0usize..3) {
            let nu = [1.0, 0.5, 0.25][nu_idx];
            let spec = random_spec(seed, 3, 4, 2, nu);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 7);
            let x = Array1::from_shape_fn(3, |_| StandardNormal.sample(&mut rng));
            let f = spec.smoothed_objective(x.view()).unwrap().to_float();
            let cap = spec.weight_cap();
            for _ in 0..20 {
                let y = Array1::from_shape_fn(4, |_| cap * rng.random_range(1e-3..1.0));
                let psi = spec.auxiliary(x.view(), y.view()).unwrap().to_float();
                prop_assert!(psi >= f - 1e-10 * (1.0 + f.abs()));
            }
            let y = weight_update(&spec, x.view()).unwrap();
            prop_assert!(y.within_cap(cap));
            let psi = spec.eval_auxiliary(x.view(), &y).unwrap().to_float();
            prop_assert!((psi - f).abs() <= 1e-12 * (1.0 + f.abs()));
        }

        #[test]
        fn grad_h_matches_finite_differences(seed in 0u64..300, nu_idx in 0usize..3) {
            let nu = [1.0, 0.5, 0.25][nu_idx];
            let spec = random_spec(seed, 4, 3, 2, nu);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
            let x = Array1::from_shape_fn(4, |_| StandardNormal.sample(&mut rng));
            let g = spec.grad_h(x.view()).unwrap();
            let fd = fd_gradient(|z| spec.smooth_part(z).unwrap(), x.view(), 1e-5).unwrap();
            prop_assert!(dist2(g.view(), fd.view()) <= 1e-6 * norm2(g.view()).max(1.0));
        }

        #[test]
        fn p_is_bounded_below_and_lipschitz(seed in 0u64..300) {
            let spec = random_spec(seed, 3, 2, 2, 1.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 3);
            let u = Array1::from_shape_fn(3, |_| 3.0 * rng.sample::<f64, _>(StandardNormal));
            let v = Array1::from_shape_fn(3, |_| 3.0 * rng.sample::<f64, _>(StandardNormal));
            for i in 0..2 {
                let pu = spec.eval_p(u.view(), i).unwrap();
                let pv = spec.eval_p(v.view(), i).unwrap();
                prop_assert!(pu >= spec.epsilon());
                let bound = spec.terms()[i].map().operator_norm() * dist2(u.view(), v.view());
                prop_assert!((pu - pv).abs() <= bound * (1.0 + 1e-12) + 1e-12);
            }
        }
    }
}
