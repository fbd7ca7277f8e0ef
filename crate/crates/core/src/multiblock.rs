//! Two-block PL-IRLS for sparse + low-rank decomposition under an ℓ1 data
//! term:
//!
//! ```text
//! min_{X,Y}  α‖X‖_* + β‖Y‖₁ + Σᵢ √((𝒜(X+Y) − b)ᵢ² + ε²)
//! ```
//!
//! One sweep updates `X` (singular value thresholding), then `Y` (soft
//! thresholding, using the new `X`), then the weights `z` in closed form.

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::error::{PlirlsError, Result};
use crate::linalg::{flatten, frobenius, unflatten, LinearMap};
use crate::prox::{soft_threshold, svt_nuclear};
use crate::scalar::Real;
use crate::solver::Status;
use crate::weights::{base_weight, WeightVector};

/// Instance data: `𝒜` acts on row-major flattened `rows × cols` matrices.
#[derive(Debug, Clone)]
pub struct DecompositionSpec<T: Real> {
    op: LinearMap<T>,
    shape: (usize, usize),
    b: Array1<T>,
    epsilon: T,
    gamma: T,
    nuclear_weight: T,
    l1_weight: T,
}

impl<T: Real> DecompositionSpec<T> {
    pub fn new(op: LinearMap<T>, shape: (usize, usize), b: Array1<T>, epsilon: T, gamma: T) -> Result<Self> {
        if op.cols() != shape.0 * shape.1 {
            return Err(PlirlsError::DimensionMismatch {
                what: "operator columns",
                expected: shape.0 * shape.1,
                found: op.cols(),
            });
        }
        if b.len() != op.rows() {
            return Err(PlirlsError::DimensionMismatch {
                what: "observation vector",
                expected: op.rows(),
                found: b.len(),
            });
        }
        if !(epsilon > T::zero() && epsilon.is_finite()) {
            return Err(PlirlsError::invalid("epsilon", format!("must be positive, got {epsilon}")));
        }
        if !(gamma > T::one() && gamma.is_finite()) {
            return Err(PlirlsError::invalid("gamma", format!("must exceed 1, got {gamma}")));
        }
        Ok(DecompositionSpec {
            op,
            shape,
            b,
            epsilon,
            gamma,
            nuclear_weight: T::one(),
            l1_weight: T::one(),
        })
    }

    /// `𝒜` = vectorization, `b = vec(D)`.
    pub fn observe_all(d: &Array2<T>, epsilon: T, gamma: T) -> Result<Self> {
        let shape = d.dim();
        Self::new(LinearMap::identity(shape.0 * shape.1), shape, flatten(d), epsilon, gamma)
    }

    /// Scales `α` of `‖X‖_*` and `β` of `‖Y‖₁` (both 1 by default).
    pub fn with_weights(mut self, nuclear: T, l1: T) -> Result<Self> {
        if !(nuclear >= T::zero() && l1 >= T::zero()) {
            return Err(PlirlsError::invalid("weights", "regularization scales must be nonnegative"));
        }
        self.nuclear_weight = nuclear;
        self.l1_weight = l1;
        Ok(self)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn op(&self) -> &LinearMap<T> {
        &self.op
    }

    pub fn observations(&self) -> &Array1<T> {
        &self.b
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    fn check_shape(&self, m: &Array2<T>) -> Result<()> {
        if m.dim() != self.shape {
            return Err(PlirlsError::DimensionMismatch {
                what: "matrix block",
                expected: self.shape.0 * self.shape.1,
                found: m.len(),
            });
        }
        Ok(())
    }

    /// `𝒜(X + Y) − b`.
    pub fn residual(&self, x: &Array2<T>, y: &Array2<T>) -> Result<Array1<T>> {
        self.check_shape(x)?;
        self.check_shape(y)?;
        let sum = flatten(&(x + y));
        Ok(self.op.apply(sum.view()) - &self.b)
    }

    /// `zᵢ = 1/(2√(rᵢ² + ε²))`.
    pub fn weight_update(&self, x: &Array2<T>, y: &Array2<T>) -> Result<WeightVector<T>> {
        let eps2 = self.epsilon * self.epsilon;
        let r = self.residual(x, y)?;
        WeightVector::new(r.mapv(|ri| base_weight(ri * ri + eps2)))
    }

    pub fn weight_cap(&self) -> T {
        T::one() / (T::lit(2.0) * self.epsilon)
    }

    fn regularizers(&self, x: &Array2<T>, y: &Array2<T>) -> Result<T> {
        let nuclear = T::svd(x.view())?.singular_values.sum();
        let l1: T = y.iter().map(|v| v.abs()).sum();
        Ok(self.nuclear_weight * nuclear + self.l1_weight * l1)
    }

    /// `α‖X‖_* + β‖Y‖₁ + Σᵢ √(rᵢ² + ε²)`.
    pub fn objective(&self, x: &Array2<T>, y: &Array2<T>) -> Result<T> {
        let eps2 = self.epsilon * self.epsilon;
        let r = self.residual(x, y)?;
        let data: T = r.iter().map(|&ri| (ri * ri + eps2).sqrt()).sum();
        Ok(self.regularizers(x, y)? + data)
    }

    /// `Ψ(X, Y, z) = α‖X‖_* + β‖Y‖₁ + Σᵢ (rᵢ² + ε²)zᵢ + Σᵢ 1/(4zᵢ)`.
    pub fn auxiliary(&self, x: &Array2<T>, y: &Array2<T>, z: &WeightVector<T>) -> Result<T> {
        let eps2 = self.epsilon * self.epsilon;
        let r = self.residual(x, y)?;
        let four = T::lit(4.0);
        let coupling: T = r
            .iter()
            .zip(z.view().iter())
            .map(|(&ri, &zi)| (ri * ri + eps2) * zi + T::one() / (four * zi))
            .sum();
        Ok(self.regularizers(x, y)? + coupling)
    }

    /// `∇_X H = 𝒜ᵀ(2z ⊙ (𝒜(X+Y) − b))`, reshaped.
    pub fn grad_h_x(&self, x: &Array2<T>, y: &Array2<T>, z: &WeightVector<T>) -> Result<Array2<T>> {
        if z.len() != self.b.len() {
            return Err(PlirlsError::DimensionMismatch {
                what: "weights",
                expected: self.b.len(),
                found: z.len(),
            });
        }
        let r = self.residual(x, y)?;
        let weighted = &r * &z.view() * T::lit(2.0);
        let g = self.op.adjoint_apply(weighted.view());
        Ok(unflatten(g.view(), self.shape.0, self.shape.1))
    }

    /// Same as [`Self::grad_h_x`]: the coupling only sees `X + Y`.
    pub fn grad_h_y(&self, x: &Array2<T>, y: &Array2<T>, z: &WeightVector<T>) -> Result<Array2<T>> {
        self.grad_h_x(x, y, z)
    }

    /// Common step modulus `c_k = d_k = γ·2‖𝒜‖²‖z‖_∞`.
    pub fn step_modulus(&self, z: &WeightVector<T>) -> T {
        self.gamma * self.coupling_modulus(z)
    }

    fn coupling_modulus(&self, z: &WeightVector<T>) -> T {
        T::lit(2.0) * self.op.gram_norm() * z.max()
    }
}

#[derive(Debug, Clone)]
pub struct BlockState<T: Real> {
    pub x: Array2<T>,
    pub y: Array2<T>,
    pub z: WeightVector<T>,
    pub c_k: Option<T>,
    pub d_k: Option<T>,
    pub objective: T,
    pub k: usize,
}

impl<T: Real> BlockState<T> {
    pub fn new(spec: &DecompositionSpec<T>, x0: Array2<T>, y0: Array2<T>) -> Result<Self> {
        let z = spec.weight_update(&x0, &y0)?;
        let objective = spec.objective(&x0, &y0)?;
        Ok(BlockState {
            x: x0,
            y: y0,
            z,
            c_k: None,
            d_k: None,
            objective,
            k: 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiblockRecord<T> {
    pub k: usize,
    pub objective: T,
    /// `√(‖ΔX‖_F² + ‖ΔY‖_F²)`.
    pub step_norm: T,
    /// Norm of the blockwise subgradient witness `(w_X, w_Y)`.
    pub w_norm: T,
    pub c_k: T,
    pub d_k: T,
    /// `F(Xᵏ⁻¹, Yᵏ⁻¹) − F(Xᵏ, Yᵏ) − ((γ−1)/2)·2‖𝒜‖²‖zᵏ⁻¹‖_∞·step_norm²`.
    pub rho1_witness: T,
    /// No subgradient constant is available for the two-block scheme.
    pub rho2_witness: Option<T>,
    #[serde(rename = "step_norm_X")]
    pub step_norm_x: T,
    #[serde(rename = "step_norm_Y")]
    pub step_norm_y: T,
}

fn map2<T: Real>(m: &Array2<T>, f: impl Fn(Array1<T>) -> Result<Array1<T>>) -> Result<Array2<T>> {
    let (r, c) = m.dim();
    Ok(unflatten(f(flatten(m))?.view(), r, c))
}

/// One Gauss–Seidel sweep `X → Y → z`.
pub fn multiblock_step<T: Real>(
    spec: &DecompositionSpec<T>,
    state: &BlockState<T>,
) -> Result<(BlockState<T>, MultiblockRecord<T>)> {
    let iteration = state.k + 1;
    let modulus = spec.coupling_modulus(&state.z);
    let c = spec.gamma * modulus;
    if !(c > T::zero() && c.is_finite()) {
        return Err(PlirlsError::Numerical(format!(
            "block step modulus {c} at iteration {iteration} is not positive and finite"
        )));
    }
    let d = c;

    let gx = spec.grad_h_x(&state.x, &state.y, &state.z)?;
    let x_new = svt_nuclear((&state.x - &(&gx / c)).view(), spec.nuclear_weight / c)?;
    let gy = spec.grad_h_y(&x_new, &state.y, &state.z)?;
    let y_new = map2(&(&state.y - &(&gy / d)), |v| soft_threshold(v.view(), spec.l1_weight / d))?;
    let z_new = spec.weight_update(&x_new, &y_new)?;
    let objective = spec.objective(&x_new, &y_new)?;
    if !objective.is_finite() || x_new.iter().chain(y_new.iter()).any(|v| !v.is_finite()) {
        return Err(PlirlsError::NonFinite { what: "block iterate", iteration });
    }

    let g_new = spec.grad_h_x(&x_new, &y_new, &z_new)?;
    let dx = frobenius(&(&x_new - &state.x));
    let dy = frobenius(&(&y_new - &state.y));
    let w_x = &g_new - &gx + &((&state.x - &x_new) * c);
    let w_y = &g_new - &gy + &((&state.y - &y_new) * d);
    let w_norm = (frobenius(&w_x).powi(2) + frobenius(&w_y).powi(2)).sqrt();
    let step_sq = dx * dx + dy * dy;
    let rho1_witness =
        state.objective - objective - (spec.gamma - T::one()) * T::lit(0.5) * modulus * step_sq;

    let record = MultiblockRecord {
        k: iteration,
        objective,
        step_norm: step_sq.sqrt(),
        w_norm,
        c_k: c,
        d_k: d,
        rho1_witness,
        rho2_witness: None,
        step_norm_x: dx,
        step_norm_y: dy,
    };
    let next = BlockState {
        x: x_new,
        y: y_new,
        z: z_new,
        c_k: Some(c),
        d_k: Some(d),
        objective,
        k: iteration,
    };
    Ok((next, record))
}

#[derive(Debug, Clone)]
pub struct MultiblockOptions<T> {
    pub max_iters: usize,
    /// Defaults to `1e-8·(1 + ‖(X⁰, Y⁰)‖_F)`.
    pub step_tol: Option<T>,
    pub w_tol: Option<T>,
}

impl<T> Default for MultiblockOptions<T> {
    fn default() -> Self {
        MultiblockOptions {
            max_iters: 100_000,
            step_tol: None,
            w_tol: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MultiblockResult<T: Real> {
    pub x: Array2<T>,
    pub y: Array2<T>,
    pub z: WeightVector<T>,
    pub trace: Vec<MultiblockRecord<T>>,
    pub status: Status,
    pub final_objective: T,
}

pub fn run_multiblock<T: Real>(
    spec: &DecompositionSpec<T>,
    x0: Array2<T>,
    y0: Array2<T>,
    options: &MultiblockOptions<T>,
) -> Result<MultiblockResult<T>> {
    let scale = (frobenius(&x0).powi(2) + frobenius(&y0).powi(2)).sqrt();
    let default_tol = T::lit(1e-8) * (T::one() + scale);
    let step_tol = options.step_tol.unwrap_or(default_tol);
    let w_tol = options.w_tol.unwrap_or(default_tol);
    if !(step_tol > T::zero() && w_tol > T::zero()) {
        return Err(PlirlsError::invalid("tolerance", "step_tol and w_tol must be positive"));
    }
    let mut state = BlockState::new(spec, x0, y0)?;
    let mut trace = Vec::new();
    let mut status = Status::MaxIters;
    for _ in 0..options.max_iters {
        let (next, record) = multiblock_step(spec, &state)?;
        let done = record.step_norm <= step_tol && record.w_norm <= w_tol;
        trace.push(record);
        state = next;
        if done {
            status = Status::Converged;
            break;
        }
    }
    Ok(MultiblockResult {
        x: state.x,
        y: state.y,
        z: state.z,
        trace,
        status,
        final_objective: state.objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::fd_gradient;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_instance(seed: u64, n: usize) -> (DecompositionSpec<f64>, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
        let v = Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
        let mut d = Array2::from_shape_fn((n, n), |(i, j)| u[i] * v[j]);
        for _ in 0..n {
            let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
            d[[i, j]] += 5.0 * rng.sample::<f64, _>(StandardNormal);
        }
        (DecompositionSpec::observe_all(&d, 0.1, 1.1).unwrap(), d)
    }

    #[test]
    fn gradient_examples() {
        let d = array![[1.0, 2.0], [3.0, 4.0]];
        let spec = DecompositionSpec::observe_all(&d, 0.5, 1.1).unwrap();
        let z = spec.weight_update(&d, &Array2::zeros((2, 2))).unwrap();
        assert_eq!(spec.grad_h_x(&d, &Array2::zeros((2, 2)), &z).unwrap(), Array2::<f64>::zeros((2, 2)));

        let one = DecompositionSpec::observe_all(&array![[0.5]], 1.0, 1.1).unwrap();
        let z = WeightVector::new(array![0.3]).unwrap();
        let g: Array2<f64> = one.grad_h_x(&array![[2.0]], &array![[1.0]], &z).unwrap();
        assert!((g[[0, 0]] - 2.0 * 0.3 * (2.0 + 1.0 - 0.5)).abs() < 1e-15);
        assert_eq!(g, one.grad_h_y(&array![[2.0]], &array![[1.0]], &z).unwrap());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (spec, _) = random_instance(3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Array2::from_shape_fn((3, 3), |_| rng.sample::<f64, _>(StandardNormal));
        let y = Array2::from_shape_fn((3, 3), |_| rng.sample::<f64, _>(StandardNormal));
        let z = spec.weight_update(&x, &y).unwrap();
        let g = spec.grad_h_x(&x, &y, &z).unwrap();
        // With z = z(X, Y), ∇_X H equals the gradient of the smooth data term.
        let data = |v: ndarray::ArrayView1<'_, f64>| {
            let xv = unflatten(v, 3, 3);
            let r = spec.residual(&xv, &y).unwrap();
            r.iter().map(|ri| (ri * ri + 0.01f64).sqrt()).sum::<f64>()
        };
        let fd = fd_gradient(data, flatten(&x).view(), 1e-5).unwrap();
        let diff = crate::scalar::dist2(fd.view(), flatten(&g).view());
        assert!(diff < 1e-6 * (1.0 + frobenius(&g)), "{diff}");
    }

    #[test]
    fn zero_data_is_stationary() {
        let spec = DecompositionSpec::observe_all(&Array2::zeros((3, 3)), 0.2, 1.1).unwrap();
        let run = run_multiblock(&spec, Array2::zeros((3, 3)), Array2::zeros((3, 3)), &MultiblockOptions::default())
            .unwrap();
        assert_eq!(run.status, Status::Converged);
        assert_eq!(run.trace.len(), 1);
        assert_eq!(run.x, Array2::<f64>::zeros((3, 3)));
    }

    #[test]
    fn monotone_and_weights_exact() {
        for seed in 0..5 {
            let (spec, _) = random_instance(seed, 6);
            let opts = MultiblockOptions { max_iters: 300, ..Default::default() };
            let run = run_multiblock(&spec, Array2::zeros((6, 6)), Array2::zeros((6, 6)), &opts).unwrap();
            for r in &run.trace {
                assert!(r.rho1_witness >= -1e-9, "seed {seed}: {r:?}");
            }
            let z = spec.weight_update(&run.x, &run.y).unwrap();
            assert_eq!(z, run.z);
            assert!(run.z.within_cap(spec.weight_cap()));
        }
    }

    #[test]
    fn toy_strictly_decreases_early() {
        let d = array![[1.0, 1.0], [1.0, 6.0]];
        let spec = DecompositionSpec::observe_all(&d, 0.1, 1.1).unwrap();
        let opts = MultiblockOptions { max_iters: 10, ..Default::default() };
        let run = run_multiblock(&spec, Array2::zeros((2, 2)), Array2::zeros((2, 2)), &opts).unwrap();
        let mut prev = spec.objective(&Array2::zeros((2, 2)), &Array2::zeros((2, 2))).unwrap();
        assert_eq!(run.trace.len(), 10);
        for r in &run.trace {
            assert!(r.objective < prev);
            prev = r.objective;
        }
    }

    #[test]
    fn auxiliary_equals_objective_at_weight_update() {
        let (spec, d) = random_instance(8, 4);
        let y = Array2::zeros((4, 4));
        let z = spec.weight_update(&d, &y).unwrap();
        let a = spec.auxiliary(&d, &y, &z).unwrap();
        let f = spec.objective(&d, &y).unwrap();
        assert!((a - f).abs() < 1e-12 * (1.0 + f.abs()));
    }
}
