//! The PL-IRLS iteration: a prox-linearized step on `x` followed by the
//! closed-form weight update, with per-iteration diagnostics.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{PlirlsError, Result};
use crate::extended::ExtReal;
use crate::problem::{AffineTerm, ModulusRule, ProblemSpec};
use crate::scalar::{dist2, norm2, Real};
use crate::weights::{base_weight_update, weight_update, WeightVector};

/// Cap on the number of trust-radius enlargements in one run.
pub const MAX_TAU_ENLARGEMENTS: usize = 60;

/// `Lᵢ^τ = (‖Bᵢ‖‖cᵢ‖ + ‖BᵢᵀBᵢ‖(2τ‖Bᵢ‖ + ‖cᵢ‖ + ε))/ε²`, a gradient-Lipschitz
/// bound for `pᵢ` on the ball of radius `τ`.
pub fn local_lipschitz_bound<T: Real>(term: &AffineTerm<T>, epsilon: T, tau: T) -> T {
    let b = term.map().operator_norm();
    let g = term.map().gram_norm();
    let c = term.offset_norm();
    (b * c + g * (T::lit(2.0) * tau * b + c + epsilon)) / (epsilon * epsilon)
}

/// `L(τ, y) = L_s + ‖L_p^τ‖₁‖y‖_∞`.
pub fn step_modulus<T: Real>(l_s: T, lipschitz_profile: ArrayView1<'_, T>, y: &WeightVector<T>) -> T {
    l_s + lipschitz_profile.sum() * y.max()
}

/// `∇ₓH(x, y) = ∇s(x) + Σᵢ 2yᵢ Bᵢᵀ(Bᵢx − cᵢ)`.
pub fn grad_h_x<T: Real>(spec: &ProblemSpec<T>, x: ArrayView1<'_, T>, y: &WeightVector<T>) -> Result<Array1<T>> {
    spec.grad_coupling(x, y.view())
}

/// Smallest radius for which every `Lᵢ^τ ≥ 2‖BᵢᵀBᵢ‖`, so that
/// `L(τ, y)` really bounds the gradient modulus of `H(·, y)`.
fn tau_floor<T: Real>(spec: &ProblemSpec<T>) -> T {
    let eps = spec.epsilon();
    spec.terms()
        .iter()
        .filter(|t| t.map().operator_norm() > T::zero())
        .map(|t| (T::lit(2.0) * eps * eps - t.offset_norm() - eps) / (T::lit(2.0) * t.map().operator_norm()))
        .fold(T::zero(), T::max)
}

/// Step-size rule `c_k = γ·L(τ, y^k)` with its trust radius.
#[derive(Debug, Clone)]
pub struct StepRule<T> {
    gamma: T,
    tau: T,
    lipschitz_profile: Array1<T>,
    enlargements: usize,
}

impl<T: Real> StepRule<T> {
    pub fn new(spec: &ProblemSpec<T>, gamma: T, tau: T) -> Result<Self> {
        if !(gamma > T::one() && gamma.is_finite()) {
            return Err(PlirlsError::invalid("gamma", format!("must exceed 1, got {gamma}")));
        }
        Self::new_unchecked(spec, gamma, tau)
    }

    pub(crate) fn new_unchecked(spec: &ProblemSpec<T>, gamma: T, tau: T) -> Result<Self> {
        if !(tau > T::zero() && tau.is_finite()) {
            return Err(PlirlsError::invalid("tau", format!("must be positive, got {tau}")));
        }
        let mut rule = StepRule {
            gamma,
            tau,
            lipschitz_profile: Array1::zeros(0),
            enlargements: 0,
        };
        rule.refresh(spec);
        Ok(rule)
    }

    fn refresh(&mut self, spec: &ProblemSpec<T>) {
        self.lipschitz_profile = spec
            .terms()
            .iter()
            .map(|t| local_lipschitz_bound(t, spec.epsilon(), self.tau))
            .collect();
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    pub fn lipschitz_profile(&self) -> &Array1<T> {
        &self.lipschitz_profile
    }

    pub fn enlargements(&self) -> usize {
        self.enlargements
    }

    /// Grows `τ` to `new_tau` and rebuilds the profile. Returns `false` once
    /// the enlargement budget is spent.
    pub fn enlarge(&mut self, spec: &ProblemSpec<T>, new_tau: T) -> bool {
        if self.enlargements >= MAX_TAU_ENLARGEMENTS || !new_tau.is_finite() {
            return false;
        }
        self.enlargements += 1;
        self.tau = self.tau.max(new_tau);
        self.refresh(spec);
        true
    }

    /// `L(τ, y)` under the spec's modulus rule.
    pub fn modulus(&self, spec: &ProblemSpec<T>, y: &WeightVector<T>) -> T {
        let l_s = spec.smooth_term().lipschitz();
        match spec.modulus_rule() {
            ModulusRule::LocalLipschitz => step_modulus(l_s, self.lipschitz_profile.view(), y),
            ModulusRule::Coupling { gram_sum_norm } => l_s + T::lit(2.0) * gram_sum_norm * y.max(),
        }
    }

    /// `ρ₂` of the subgradient bound `‖w^{k+1}‖ ≤ ρ₂‖x^{k+1} − x^k‖` (ν = 1).
    pub fn rho2(&self, spec: &ProblemSpec<T>) -> T {
        let l_s = spec.smooth_term().lipschitz();
        let (g, eps, one) = (self.gamma, spec.epsilon(), T::one());
        match spec.modulus_rule() {
            ModulusRule::LocalLipschitz => {
                (g + one) * l_s + (g / (T::lit(2.0) * eps) + one) * self.lipschitz_profile.sum()
            }
            ModulusRule::Coupling { gram_sum_norm } => (g + one) * (l_s + gram_sum_norm / eps),
        }
    }
}

/// Which weight formula drives the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// `yᵢ = 1/(2√(rᵢ² + ε²))`; requires ν = 1.
    Base,
    /// `yᵢ = (ν/2)(rᵢ² + ε²)^{(ν−2)/2}`.
    #[default]
    Generalized,
}

/// Iterate, weights and the cached coupling gradient `∇ₓH(x, y)`.
#[derive(Debug, Clone)]
pub struct SolverState<T: Real> {
    pub x: Array1<T>,
    pub y: WeightVector<T>,
    pub grad: Array1<T>,
    pub objective: ExtReal<T>,
    pub c_prev: Option<T>,
    pub k: usize,
}

impl<T: Real> SolverState<T> {
    pub fn new(spec: &ProblemSpec<T>, x0: Array1<T>, scheme: Scheme) -> Result<Self> {
        let y = update_weights(spec, x0.view(), scheme)?;
        let grad = spec.grad_coupling(x0.view(), y.view())?;
        let objective = spec.smoothed_objective(x0.view())?;
        Ok(SolverState {
            x: x0,
            y,
            grad,
            objective,
            c_prev: None,
            k: 0,
        })
    }
}

fn update_weights<T: Real>(spec: &ProblemSpec<T>, x: ArrayView1<'_, T>, scheme: Scheme) -> Result<WeightVector<T>> {
    match scheme {
        Scheme::Base => base_weight_update(spec, x),
        Scheme::Generalized => weight_update(spec, x),
    }
}

/// Diagnostics of the step from `x^{k−1}` to `x^k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord<T> {
    pub k: usize,
    /// `F_ε(x^k)`.
    pub objective: T,
    /// `‖x^k − x^{k−1}‖`.
    pub step_norm: T,
    /// `‖w^k‖`, with `w^k = ∇ₓH(x^k, y^k) − ∇ₓH(x^{k−1}, y^{k−1}) + c_{k−1}(x^{k−1} − x^k)`.
    pub w_norm: T,
    /// Modulus `c_{k−1}` used to produce `x^k`.
    pub c_k: T,
    /// `F_ε(x^{k−1}) − F_ε(x^k) − ((γ−1)/2)·L(τ, y^{k−1})·step_norm²`.
    pub rho1_witness: T,
    /// `ρ₂·step_norm − w_norm`; only defined for ν = 1.
    pub rho2_witness: Option<T>,
    pub tau: T,
    /// Norm of the variant with `∇ₓH(x^{k−1}, y^k)`; recorded when verbose.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_norm_statement: Option<T>,
}

/// Result of one attempted step.
#[derive(Debug, Clone)]
pub enum StepOutcome<T: Real> {
    Accepted(SolverState<T>, IterationRecord<T>),
    /// The iterate kept leaving the trust ball after the enlargement budget.
    Diverged { tau: T },
}

/// One PL-IRLS iteration from `state`.
pub fn plirls_step<T: Real>(
    spec: &ProblemSpec<T>,
    state: &SolverState<T>,
    rule: &mut StepRule<T>,
    scheme: Scheme,
    verbose: bool,
) -> Result<StepOutcome<T>> {
    let iteration = state.k + 1;
    let (x_new, modulus, c) = loop {
        let modulus = rule.modulus(spec, &state.y);
        let c = rule.gamma * modulus;
        if !(c > T::zero() && c.is_finite()) {
            return Err(PlirlsError::Numerical(format!(
                "step modulus {c} at iteration {iteration} is not positive and finite"
            )));
        }
        let forward = &state.x - &(&state.grad / c);
        let x_new = spec.prox_term().prox(forward.view(), c)?.point;
        if x_new.iter().any(|v| !v.is_finite()) {
            return Err(PlirlsError::NonFinite { what: "iterate", iteration });
        }
        let radius = norm2(x_new.view());
        if radius > rule.tau {
            if !rule.enlarge(spec, T::lit(2.0) * radius) {
                return Ok(StepOutcome::Diverged { tau: rule.tau });
            }
            continue;
        }
        break (x_new, modulus, c);
    };

    let y_new = update_weights(spec, x_new.view(), scheme)?;
    let grad_new = spec.grad_coupling(x_new.view(), y_new.view())?;
    if grad_new.iter().any(|v| !v.is_finite()) {
        return Err(PlirlsError::NonFinite { what: "gradient", iteration });
    }
    let objective = match spec.smoothed_objective(x_new.view())? {
        ExtReal::Finite(v) if v.is_finite() => v,
        _ => return Err(PlirlsError::NonFinite { what: "objective", iteration }),
    };

    let step_norm = dist2(x_new.view(), state.x.view());
    let back = (&state.x - &x_new) * c;
    let w = &grad_new - &state.grad + &back;
    let w_norm = norm2(w.view());
    let decrease = match state.objective {
        ExtReal::Finite(prev) => prev - objective,
        ExtReal::PosInfinity => T::infinity(),
    };
    let half = T::lit(0.5);
    let rho1_witness = decrease - (rule.gamma - T::one()) * half * modulus * step_norm * step_norm;
    let rho2_witness = (spec.nu() == T::one()).then(|| rule.rho2(spec) * step_norm - w_norm);
    let w_norm_statement = if verbose {
        let mixed = spec.grad_coupling(state.x.view(), y_new.view())?;
        Some(norm2((&grad_new - &mixed + &back).view()))
    } else {
        None
    };

    let record = IterationRecord {
        k: iteration,
        objective,
        step_norm,
        w_norm,
        c_k: c,
        rho1_witness,
        rho2_witness,
        tau: rule.tau,
        w_norm_statement,
    };
    let next = SolverState {
        x: x_new,
        y: y_new,
        grad: grad_new,
        objective: ExtReal::Finite(objective),
        c_prev: Some(c),
        k: iteration,
    };
    Ok(StepOutcome::Accepted(next, record))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Converged,
    MaxIters,
    Diverged,
}

impl Status {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Converged => 0,
            Status::MaxIters => 2,
            Status::Diverged => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverOptions<T> {
    pub gamma: T,
    /// Initial trust radius; defaults to `10·max(1, ‖x⁰‖)`.
    pub tau0: Option<T>,
    pub max_iters: usize,
    /// Defaults to `1e-8·(1 + ‖x⁰‖)`.
    pub step_tol: Option<T>,
    /// Defaults to `1e-8·(1 + ‖x⁰‖)`.
    pub w_tol: Option<T>,
    pub scheme: Scheme,
    pub verbose: bool,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        SolverOptions {
            gamma: T::lit(1.1),
            tau0: None,
            max_iters: 100_000,
            step_tol: None,
            w_tol: None,
            scheme: Scheme::Generalized,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult<T: Real> {
    pub x: Array1<T>,
    pub y: WeightVector<T>,
    pub trace: Vec<IterationRecord<T>>,
    pub status: Status,
    pub final_objective: ExtReal<T>,
    pub tau: T,
}

impl<T: Real> RunResult<T> {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn final_w_norm(&self) -> Option<T> {
        self.trace.last().map(|r| r.w_norm)
    }
}

/// Runs PL-IRLS from `x0` until both the step and `w` fall below their
/// tolerances, the iteration budget is spent, or the trust radius blows up.
pub fn run_plirls<T: Real>(spec: &ProblemSpec<T>, x0: Array1<T>, options: &SolverOptions<T>) -> Result<RunResult<T>> {
    run_plirls_observed(spec, x0, options, &mut |_, _| {})
}

/// [`run_plirls`] that also hands every accepted state and its record to
/// `observe`.
pub fn run_plirls_observed<T: Real>(
    spec: &ProblemSpec<T>,
    x0: Array1<T>,
    options: &SolverOptions<T>,
    observe: &mut dyn FnMut(&SolverState<T>, &IterationRecord<T>),
) -> Result<RunResult<T>> {
    if !(options.gamma > T::one() && options.gamma.is_finite()) {
        return Err(PlirlsError::invalid("gamma", format!("must exceed 1, got {}", options.gamma)));
    }
    run_observed(spec, x0, options, observe)
}

/// [`run_plirls_observed`] without the `γ > 1` check; fault injection
/// relies on that.
pub(crate) fn run_observed<T: Real>(
    spec: &ProblemSpec<T>,
    x0: Array1<T>,
    options: &SolverOptions<T>,
    observe: &mut dyn FnMut(&SolverState<T>, &IterationRecord<T>),
) -> Result<RunResult<T>> {
    if x0.len() != spec.dim() {
        return Err(PlirlsError::DimensionMismatch {
            what: "initial point",
            expected: spec.dim(),
            found: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(PlirlsError::NonFinite { what: "initial point", iteration: 0 });
    }
    if options.scheme == Scheme::Base && spec.nu() != T::one() {
        return Err(PlirlsError::invalid("scheme", "the base scheme requires nu = 1"));
    }
    let x0_norm = norm2(x0.view());
    let default_tol = T::lit(1e-8) * (T::one() + x0_norm);
    let step_tol = options.step_tol.unwrap_or(default_tol);
    let w_tol = options.w_tol.unwrap_or(default_tol);
    if !(step_tol > T::zero() && w_tol > T::zero()) {
        return Err(PlirlsError::invalid("tolerance", "step_tol and w_tol must be positive"));
    }
    let tau0 = options
        .tau0
        .unwrap_or_else(|| T::lit(10.0) * T::one().max(x0_norm))
        .max(x0_norm)
        .max(tau_floor(spec));
    let mut rule = StepRule::new_unchecked(spec, options.gamma, tau0)?;
    let mut state = SolverState::new(spec, x0, options.scheme)?;
    let mut trace = Vec::new();
    let mut status = Status::MaxIters;

    for _ in 0..options.max_iters {
        match plirls_step(spec, &state, &mut rule, options.scheme, options.verbose)? {
            StepOutcome::Diverged { .. } => {
                status = Status::Diverged;
                break;
            }
            StepOutcome::Accepted(next, record) => {
                let done = record.step_norm <= step_tol && record.w_norm <= w_tol;
                observe(&next, &record);
                trace.push(record);
                state = next;
                if done {
                    status = Status::Converged;
                    break;
                }
            }
        }
    }

    Ok(RunResult {
        x: state.x,
        y: state.y,
        trace,
        status,
        final_objective: state.objective,
        tau: rule.tau,
    })
}
