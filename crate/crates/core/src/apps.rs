//! Ready-made instances: sparse least squares (with the classical IR
//! baseline), ℓ0-regularized robust regression, and low-rank matrix
//! recovery under an entrywise robust loss.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{PlirlsError, Result};
use crate::linalg::{flatten, unflatten, LinearMap};
use crate::problem::{AffineTerm, ModulusRule, ProblemSpec};
use crate::scalar::{dist2, norm2, Real};
use crate::solver::{run_plirls, RunResult, SolverOptions};
use crate::terms::{L0Penalty, LeastSquares, RankPenalty, ZeroTerm};
use crate::weights::{general_weight, WeightVector};

fn check_positive<T: Real>(name: &'static str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(PlirlsError::invalid(name, format!("must be positive, got {v}")))
    }
}

fn check_rhs<T: Real>(a: &Array2<T>, b: &Array1<T>) -> Result<()> {
    if a.nrows() != b.len() {
        return Err(PlirlsError::DimensionMismatch {
            what: "right-hand side",
            expected: a.nrows(),
            found: b.len(),
        });
    }
    Ok(())
}

/// `(λ/2)‖Ax − b‖² + Σᵢ (xᵢ² + ε²)^{ν/2}`: `f ≡ 0`, one coordinate term per
/// entry of `x`.
pub fn build_sparse_lsq<T: Real>(a: Array2<T>, b: Array1<T>, lambda: T, nu: T, epsilon: T) -> Result<ProblemSpec<T>> {
    check_rhs(&a, &b)?;
    check_positive("lambda", lambda)?;
    let n = a.ncols();
    let terms = (0..n)
        .map(|i| AffineTerm::new(LinearMap::coordinate(n, i, T::one())?, Array1::zeros(1)))
        .collect::<Result<Vec<_>>>()?;
    ProblemSpec::builder(n)
        .smooth_term(LeastSquares::new(Arc::new(a), b, lambda)?)
        .terms(terms)
        .epsilon(epsilon)
        .nu(nu)
        .build()
}

/// Objective of the sparse least-squares model, evaluated directly.
pub fn sparse_lsq_objective<T: Real>(
    a: &Array2<T>,
    b: &Array1<T>,
    lambda: T,
    nu: T,
    epsilon: T,
    x: ArrayView1<'_, T>,
) -> T {
    let r = a.dot(&x) - b;
    let eps2 = epsilon * epsilon;
    let penalty: T = x.iter().map(|&v| (v * v + eps2).powf(nu / T::lit(2.0))).sum();
    T::lit(0.5) * lambda * r.dot(&r) + penalty
}

/// Solves `(λAᵀA + 2·diag(y))x = λAᵀb` directly.
pub fn ir_baseline_solve<T: Real>(a: &Array2<T>, b: &Array1<T>, lambda: T, y: ArrayView1<'_, T>) -> Result<Array1<T>> {
    check_rhs(a, b)?;
    if y.len() != a.ncols() {
        return Err(PlirlsError::DimensionMismatch {
            what: "weights",
            expected: a.ncols(),
            found: y.len(),
        });
    }
    let mut system = a.t().dot(a) * lambda;
    for (i, &yi) in y.iter().enumerate() {
        system[[i, i]] += T::lit(2.0) * yi;
    }
    let rhs = a.t().dot(b) * lambda;
    T::solve(system.view(), rhs.view())
}

/// One iteration of the classical IR method: weights from `x_k`, then an
/// exact solve of the weighted least-squares system.
pub fn ir_baseline_step<T: Real>(
    a: &Array2<T>,
    b: &Array1<T>,
    lambda: T,
    nu: T,
    epsilon: T,
    x_k: ArrayView1<'_, T>,
) -> Result<Array1<T>> {
    check_positive("epsilon", epsilon)?;
    let eps2 = epsilon * epsilon;
    let y: Array1<T> = x_k.mapv(|v| general_weight(v * v + eps2, nu));
    ir_baseline_solve(a, b, lambda, y.view())
}

#[derive(Debug, Clone)]
pub struct IrResult<T> {
    pub x: Array1<T>,
    /// Objective before the first and after every iteration.
    pub objectives: Vec<T>,
    pub converged: bool,
}

/// Iterates [`ir_baseline_step`] until `‖x^{k+1} − x^k‖ ≤ tol·(1 + ‖x^k‖)`.
#[allow(clippy::too_many_arguments)]
pub fn run_ir_baseline<T: Real>(
    a: &Array2<T>,
    b: &Array1<T>,
    lambda: T,
    nu: T,
    epsilon: T,
    x0: Array1<T>,
    max_iters: usize,
    tol: T,
) -> Result<IrResult<T>> {
    let mut x = x0;
    let mut objectives = vec![sparse_lsq_objective(a, b, lambda, nu, epsilon, x.view())];
    for _ in 0..max_iters {
        let next = ir_baseline_step(a, b, lambda, nu, epsilon, x.view())?;
        let step = dist2(next.view(), x.view());
        let scale = T::one() + norm2(x.view());
        x = next;
        objectives.push(sparse_lsq_objective(a, b, lambda, nu, epsilon, x.view()));
        if step <= tol * scale {
            return Ok(IrResult { x, objectives, converged: true });
        }
    }
    Ok(IrResult {
        x,
        objectives,
        converged: false,
    })
}

/// `λ‖x‖₀ + Σᵢ √((Ax − b)ᵢ² + ε²)`: one residual term per row of `A`.
/// `λ = 0` drops the penalty and leaves a smooth problem.
pub fn build_l0_regression<T: Real>(a: Array2<T>, b: Array1<T>, lambda: T, epsilon: T) -> Result<ProblemSpec<T>> {
    check_rhs(&a, &b)?;
    if !(lambda >= T::zero() && lambda.is_finite()) {
        return Err(PlirlsError::invalid("lambda", format!("must be nonnegative, got {lambda}")));
    }
    let n = a.ncols();
    let a = Arc::new(a);
    let terms = (0..a.nrows())
        .map(|i| AffineTerm::new(LinearMap::row_of(a.clone(), i)?, Array1::from_elem(1, b[i])))
        .collect::<Result<Vec<_>>>()?;
    let builder = ProblemSpec::builder(n).terms(terms).epsilon(epsilon);
    if lambda > T::zero() {
        builder.prox_term(L0Penalty { lambda }).build()
    } else {
        builder.prox_term(ZeroTerm).build()
    }
}

/// `rank(X) + (1/λ)Σᵢⱼ √((Dᵢⱼ − Xᵢⱼ)² + ε²)` on a flattened matrix.
///
/// Encoded with `Bᵢⱼ = eᵢⱼᵀ/λ`, `cᵢⱼ = Dᵢⱼ/λ` and smoothing `ε/λ`, which
/// reproduces the objective exactly. The solver's weights are then
/// `λ·Yᵢⱼ` with `Yᵢⱼ = 1/(2√((Dᵢⱼ − Xᵢⱼ)² + ε²))`, the coupling gradient is
/// `(2/λ)Y ⊙ (X − D)` and the step modulus is `(2/λ)‖Y‖_max`.
#[derive(Debug, Clone)]
pub struct LowRankProblem<T: Real> {
    spec: ProblemSpec<T>,
    data: Array2<T>,
    lambda: T,
    epsilon: T,
}

pub fn build_lowrank<T: Real>(d: Array2<T>, lambda: T, epsilon: T) -> Result<LowRankProblem<T>> {
    check_positive("lambda", lambda)?;
    check_positive("epsilon", epsilon)?;
    let (rows, cols) = d.dim();
    let n = rows * cols;
    let inv = T::one() / lambda;
    let terms = d
        .iter()
        .enumerate()
        .map(|(idx, &dij)| AffineTerm::new(LinearMap::coordinate(n, idx, inv)?, Array1::from_elem(1, dij * inv)))
        .collect::<Result<Vec<_>>>()?;
    let spec = ProblemSpec::builder(n)
        .prox_term(RankPenalty { rows, cols, lambda: T::one() })
        .terms(terms)
        .epsilon(epsilon * inv)
        .modulus_rule(ModulusRule::Coupling { gram_sum_norm: inv * inv })
        .build()?;
    Ok(LowRankProblem {
        spec,
        data: d,
        lambda,
        epsilon,
    })
}

impl<T: Real> LowRankProblem<T> {
    pub fn spec(&self) -> &ProblemSpec<T> {
        &self.spec
    }

    pub fn data(&self) -> &Array2<T> {
        &self.data
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn flatten(&self, x: &Array2<T>) -> Array1<T> {
        flatten(x)
    }

    pub fn to_matrix(&self, x: ArrayView1<'_, T>) -> Array2<T> {
        unflatten(x, self.data.nrows(), self.data.ncols())
    }

    /// `Y = y/λ`, the entrywise weight matrix in the original scaling.
    pub fn weight_matrix(&self, y: &WeightVector<T>) -> Array2<T> {
        self.to_matrix(y.view()).mapv(|v| v / self.lambda)
    }

    /// `(2/λ)Y ⊙ (X − D)` with `Y` from the current weights.
    pub fn coupling_gradient(&self, x: &Array2<T>, y: &WeightVector<T>) -> Array2<T> {
        let w = self.weight_matrix(y);
        (x - &self.data) * &w * (T::lit(2.0) / self.lambda)
    }

    /// Best rank-`r` approximation of the data, a common warm start.
    pub fn truncated_data(&self, r: usize) -> Result<Array2<T>> {
        let svd = T::svd(self.data.view())?;
        let kept: Array1<T> = svd
            .singular_values
            .iter()
            .enumerate()
            .map(|(i, &s)| if i < r { s } else { T::zero() })
            .collect();
        Ok(svd.recompose(&kept))
    }

    pub fn solve(&self, x0: &Array2<T>, options: &SolverOptions<T>) -> Result<RunResult<T>> {
        run_plirls(&self.spec, flatten(x0), options)
    }
}
