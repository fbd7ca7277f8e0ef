//! Config-driven runs: synthetic instance generation, solving, and the
//! files each run leaves behind (`trace.csv`, `trace.json`, `summary.json`,
//! `solution.txt`).

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::apps::{build_l0_regression, build_lowrank, build_sparse_lsq};
use crate::error::{PlirlsError, Result};
use crate::io;
use crate::linalg::{flatten, frobenius, LinearMap};
use crate::multiblock::{run_multiblock, DecompositionSpec, MultiblockOptions};
use crate::problem::{AffineTerm, ProblemSpec};
use crate::scalar::{dist2, norm2};
use crate::solver::{run_plirls, IterationRecord, Scheme, SolverOptions, Status};
use crate::terms::{HalfSquaredNorm, L0Penalty, L1BallConstraint, L1Norm, SparsityConstraint, ZeroTerm};
use crate::trace;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    SparseLsq,
    L0Regression,
    Lowrank,
    Multiblock,
    Custom,
}

impl ProblemKind {
    fn is_matrix(self) -> bool {
        matches!(self, ProblemKind::Lowrank | ProblemKind::Multiblock)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateParams {
    pub seed: u64,
    /// `m` (measurements) or matrix rows.
    pub rows: usize,
    /// `n` (unknowns) or matrix columns.
    pub cols: usize,
    /// Nonzeros of the ground truth (regression kinds).
    #[serde(default = "default_sparsity")]
    pub sparsity: usize,
    /// Fraction of corrupted measurements or matrix entries.
    #[serde(default)]
    pub noise_fraction: f64,
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
    /// Rank of the clean matrix (matrix kinds).
    #[serde(default = "default_rank")]
    pub rank: usize,
}

fn default_sparsity() -> usize {
    1
}
fn default_noise_scale() -> f64 {
    5.0
}
fn default_rank() -> usize {
    1
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSources {
    #[serde(default)]
    pub a: Option<PathBuf>,
    #[serde(default)]
    pub b: Option<PathBuf>,
    #[serde(default)]
    pub d: Option<PathBuf>,
    /// Ground truth for the recovery metric (vector or matrix).
    #[serde(default)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum InstanceSource {
    Generate(GenerateParams),
    Files(FileSources),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    Zeros,
    /// `Aᵀb` for the regression kinds.
    Adjoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgorithmConfig {
    pub gamma: f64,
    pub epsilon: f64,
    pub nu: f64,
    pub lambda: f64,
    pub max_iters: usize,
    pub step_tol: Option<f64>,
    pub w_tol: Option<f64>,
    pub tau0: Option<f64>,
    pub scheme: Scheme,
    pub verbose: bool,
    pub init: Option<Init>,
    /// Number of ε-halving stages; outside the single-ε theory.
    pub continuation: Option<u32>,
    pub nuclear_weight: f64,
    pub l1_weight: f64,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        AlgorithmConfig {
            gamma: 1.1,
            epsilon: 0.1,
            nu: 1.0,
            lambda: 1.0,
            max_iters: 100_000,
            step_tol: None,
            w_tol: None,
            tau0: None,
            scheme: Scheme::Generalized,
            verbose: false,
            init: None,
            continuation: None,
            nuclear_weight: 1.0,
            l1_weight: 1.0,
        }
    }
}

/// Prox-friendly term for `custom` problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CustomProx {
    Zero,
    L1 { lambda: f64 },
    L0 { lambda: f64 },
    Sparsity { k: usize },
    L1Ball { radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomConfig {
    pub prox: CustomProx,
    /// Scale of an optional `(scale/2)‖x‖²` smooth term.
    #[serde(default)]
    pub ridge: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub problem: ProblemKind,
    pub instance: InstanceSource,
    #[serde(default)]
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub custom: Option<CustomConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    /// Directory that relative file paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn config_err(msg: impl Into<String>) -> PlirlsError {
    PlirlsError::Config(msg.into())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(config_err(format!(
                "unsupported schema {} (expected {SCHEMA_VERSION})",
                self.schema
            )));
        }
        let a = &self.algorithm;
        if !(a.gamma > 1.0 && a.gamma.is_finite()) {
            return Err(config_err("algorithm.gamma must be a finite number > 1"));
        }
        if !(a.epsilon > 0.0 && a.epsilon.is_finite()) {
            return Err(config_err("algorithm.epsilon must be > 0"));
        }
        if !(a.nu > 0.0 && a.nu <= 1.0) {
            return Err(config_err("algorithm.nu must lie in (0, 1]"));
        }
        if !(a.lambda >= 0.0 && a.lambda.is_finite()) {
            return Err(config_err("algorithm.lambda must be >= 0"));
        }
        if a.lambda == 0.0 && matches!(self.problem, ProblemKind::SparseLsq | ProblemKind::Lowrank) {
            return Err(config_err("algorithm.lambda must be > 0 for this problem kind"));
        }
        if a.max_iters == 0 {
            return Err(config_err("algorithm.max_iters must be >= 1"));
        }
        for (name, v) in [("step_tol", a.step_tol), ("w_tol", a.w_tol), ("tau0", a.tau0)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(config_err(format!("algorithm.{name} must be > 0")));
                }
            }
        }
        if a.scheme == Scheme::Base && a.nu != 1.0 {
            return Err(config_err("the base scheme requires nu = 1"));
        }
        if let Some(stages) = a.continuation {
            if !(1..=30).contains(&stages) {
                return Err(config_err("algorithm.continuation must be between 1 and 30 stages"));
            }
        }
        if !(a.nuclear_weight >= 0.0 && a.l1_weight >= 0.0) {
            return Err(config_err("block weights must be >= 0"));
        }
        match (&self.instance, self.problem) {
            (InstanceSource::Generate(g), kind) => validate_generate(g, kind)?,
            (InstanceSource::Files(f), kind) if kind.is_matrix() => {
                if f.d.is_none() || f.a.is_some() || f.b.is_some() {
                    return Err(config_err("matrix problems read exactly one data matrix `d`"));
                }
            }
            (InstanceSource::Files(f), _) => {
                if f.a.is_none() || f.b.is_none() || f.d.is_some() {
                    return Err(config_err("regression problems read `a` and `b`"));
                }
            }
        }
        match (self.problem, &self.custom) {
            (ProblemKind::Custom, None) => Err(config_err("custom problems need a `custom` section")),
            (ProblemKind::Custom, Some(c)) if !(c.ridge >= 0.0 && c.ridge.is_finite()) => {
                Err(config_err("custom.ridge must be >= 0"))
            }
            (ProblemKind::Custom, Some(_)) => Ok(()),
            (_, Some(_)) => Err(config_err("`custom` is only valid for custom problems")),
            (_, None) => Ok(()),
        }
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

fn validate_generate(g: &GenerateParams, kind: ProblemKind) -> Result<()> {
    if g.rows == 0 || g.cols == 0 {
        return Err(config_err("generate.rows and generate.cols must be >= 1"));
    }
    if !(0.0..=1.0).contains(&g.noise_fraction) {
        return Err(config_err("generate.noise_fraction must lie in [0, 1]"));
    }
    if !(g.noise_scale > 0.0 && g.noise_scale.is_finite()) {
        return Err(config_err("generate.noise_scale must be > 0"));
    }
    if kind.is_matrix() {
        if g.rank == 0 || g.rank > g.rows.min(g.cols) {
            return Err(config_err("generate.rank must lie in [1, min(rows, cols)]"));
        }
    } else if g.sparsity > g.cols {
        return Err(config_err("generate.sparsity cannot exceed cols"));
    }
    Ok(())
}

/// A generated or loaded problem instance with optional ground truth.
#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    Regression {
        a: Array2<f64>,
        b: Array1<f64>,
        truth: Option<Array1<f64>>,
    },
    Matrix {
        d: Array2<f64>,
        low_rank: Option<Array2<f64>>,
        sparse: Option<Array2<f64>>,
    },
}

fn nonzero_impulse(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    loop {
        let g: f64 = rng.sample(StandardNormal);
        if g != 0.0 {
            return scale * g;
        }
    }
}

/// Deterministic synthetic instance. Regression kinds: `A` with i.i.d.
/// `N(0, 1/m)` entries, a k-sparse truth and `b = A x_true` plus
/// `round(noise_fraction·m)` impulses. Matrix kinds: a rank-r product of
/// Gaussian factors plus `round(noise_fraction·rows·cols)` impulses.
pub fn generate_instance(kind: ProblemKind, params: &GenerateParams) -> Result<Instance> {
    validate_generate(params, kind)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (m, n) = (params.rows, params.cols);
    if kind.is_matrix() {
        let r = params.rank;
        let left = Array2::from_shape_fn((m, r), |_| rng.sample::<f64, _>(StandardNormal));
        let right = Array2::from_shape_fn((r, n), |_| rng.sample::<f64, _>(StandardNormal));
        let low_rank = left.dot(&right);
        let count = (params.noise_fraction * (m * n) as f64).round() as usize;
        let mut sparse = Array2::zeros((m, n));
        for idx in sample(&mut rng, m * n, count) {
            sparse[[idx / n, idx % n]] = nonzero_impulse(&mut rng, params.noise_scale);
        }
        let d = &low_rank + &sparse;
        return Ok(Instance::Matrix {
            d,
            low_rank: Some(low_rank),
            sparse: Some(sparse),
        });
    }
    let scale = 1.0 / (m as f64).sqrt();
    let a = Array2::from_shape_fn((m, n), |_| scale * rng.sample::<f64, _>(StandardNormal));
    let mut truth = Array1::zeros(n);
    for j in sample(&mut rng, n, params.sparsity) {
        let g: f64 = rng.sample(StandardNormal);
        truth[j] = g + g.signum();
    }
    let mut b = a.dot(&truth);
    let count = (params.noise_fraction * m as f64).round() as usize;
    for i in sample(&mut rng, m, count) {
        b[i] += nonzero_impulse(&mut rng, params.noise_scale);
    }
    Ok(Instance::Regression {
        a,
        b,
        truth: Some(truth),
    })
}

/// Writes the instance as text matrices into `dir` and returns the paths.
pub fn write_instance(instance: &Instance, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, text)?;
        written.push(path);
        Ok(())
    };
    match instance {
        Instance::Regression { a, b, truth } => {
            put("A.txt", io::format_matrix(a))?;
            put("b.txt", io::format_vector(b))?;
            if let Some(t) = truth {
                put("x_true.txt", io::format_vector(t))?;
            }
        }
        Instance::Matrix { d, low_rank, sparse } => {
            put("D.txt", io::format_matrix(d))?;
            if let Some(l) = low_rank {
                put("L_true.txt", io::format_matrix(l))?;
            }
            if let Some(s) = sparse {
                put("S_true.txt", io::format_matrix(s))?;
            }
        }
    }
    Ok(written)
}

/// Materializes the configured instance; `seed` overrides a generated seed.
pub fn load_instance(cfg: &RunConfig, seed: Option<u64>) -> Result<Instance> {
    match &cfg.instance {
        InstanceSource::Generate(g) => {
            let mut g = g.clone();
            if let Some(s) = seed {
                g.seed = s;
            }
            generate_instance(cfg.problem, &g)
        }
        InstanceSource::Files(f) => {
            if cfg.problem.is_matrix() {
                let d = io::load_matrix(cfg.resolve(f.d.as_ref().expect("validated")))?;
                let low_rank = f.truth.as_ref().map(|p| io::load_matrix(cfg.resolve(p))).transpose()?;
                Ok(Instance::Matrix { d, low_rank, sparse: None })
            } else {
                let a = io::load_matrix(cfg.resolve(f.a.as_ref().expect("validated")))?;
                let b = io::load_vector(cfg.resolve(f.b.as_ref().expect("validated")))?;
                let truth = f.truth.as_ref().map(|p| io::load_vector(cfg.resolve(p))).transpose()?;
                Ok(Instance::Regression { a, b, truth })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuationSummary {
    pub note: &'static str,
    pub epsilons: Vec<f64>,
    pub stage_iterations: Vec<usize>,
    pub stage_status: Vec<Status>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveSummary {
    pub problem: ProblemKind,
    pub status: Status,
    pub iterations: usize,
    pub final_objective: f64,
    pub final_w_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recovery_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub continuation: Option<ContinuationSummary>,
}

/// Everything a solve produced, before it is written to disk.
#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub summary: SolveSummary,
    pub trace_csv: String,
    pub trace_json: String,
    pub solution: String,
}

fn relative_error(x: ndarray::ArrayView1<'_, f64>, truth: ndarray::ArrayView1<'_, f64>) -> f64 {
    dist2(x, truth) / norm2(truth).max(f64::MIN_POSITIVE)
}

fn solver_options(a: &AlgorithmConfig) -> SolverOptions<f64> {
    SolverOptions {
        gamma: a.gamma,
        tau0: a.tau0,
        max_iters: a.max_iters,
        step_tol: a.step_tol,
        w_tol: a.w_tol,
        scheme: a.scheme,
        verbose: a.verbose,
    }
}

fn regression_spec(cfg: &RunConfig, a: &Array2<f64>, b: &Array1<f64>, epsilon: f64) -> Result<ProblemSpec<f64>> {
    let alg = &cfg.algorithm;
    match cfg.problem {
        ProblemKind::SparseLsq => build_sparse_lsq(a.clone(), b.clone(), alg.lambda, alg.nu, epsilon),
        ProblemKind::L0Regression => {
            build_l0_regression(a.clone(), b.clone(), alg.lambda, epsilon)?.with_nu(alg.nu)
        }
        ProblemKind::Custom => {
            let custom = cfg.custom.as_ref().expect("validated");
            let rows = std::sync::Arc::new(a.clone());
            let terms = (0..a.nrows())
                .map(|i| AffineTerm::new(LinearMap::row_of(rows.clone(), i)?, Array1::from_elem(1, b[i])))
                .collect::<Result<Vec<_>>>()?;
            let mut builder = ProblemSpec::builder(a.ncols()).terms(terms).epsilon(epsilon).nu(alg.nu);
            builder = match custom.prox {
                CustomProx::Zero => builder.prox_term(ZeroTerm),
                CustomProx::L1 { lambda } => builder.prox_term(L1Norm { lambda }),
                CustomProx::L0 { lambda } => builder.prox_term(L0Penalty { lambda }),
                CustomProx::Sparsity { k } => builder.prox_term(SparsityConstraint { k }),
                CustomProx::L1Ball { radius } => builder.prox_term(L1BallConstraint { radius }),
            };
            if custom.ridge > 0.0 {
                builder = builder.smooth_term(HalfSquaredNorm { scale: custom.ridge });
            }
            builder.build()
        }
        ProblemKind::Lowrank | ProblemKind::Multiblock => unreachable!("matrix kinds handled separately"),
    }
}

fn epsilon_schedule(a: &AlgorithmConfig) -> Vec<f64> {
    let stages = a.continuation.unwrap_or(1) as i32;
    (0..stages).map(|j| a.epsilon * 2f64.powi(-j)).collect()
}

const CONTINUATION_NOTE: &str =
    "epsilon continuation is a heuristic outside the single-epsilon convergence theory; only the last stage is traced";

fn continuation_summary(
    a: &AlgorithmConfig,
    epsilons: Vec<f64>,
    iterations: Vec<usize>,
    status: Vec<Status>,
) -> Option<ContinuationSummary> {
    a.continuation.map(|_| ContinuationSummary {
        note: CONTINUATION_NOTE,
        epsilons,
        stage_iterations: iterations,
        stage_status: status,
    })
}

fn single_block_output(
    cfg: &RunConfig,
    seed: Option<u64>,
    mut run_stage: impl FnMut(f64, Option<Array1<f64>>) -> Result<crate::solver::RunResult<f64>>,
    truth: Option<Array1<f64>>,
    solution_text: impl Fn(&Array1<f64>) -> String,
) -> Result<SolveOutput> {
    let epsilons = epsilon_schedule(&cfg.algorithm);
    let mut start = None;
    let mut iterations = Vec::new();
    let mut statuses = Vec::new();
    let mut last = None;
    for &eps in &epsilons {
        let run = run_stage(eps, start.take())?;
        iterations.push(run.iterations());
        statuses.push(run.status);
        start = Some(run.x.clone());
        last = Some(run);
    }
    let run = last.expect("at least one stage");
    let summary = SolveSummary {
        problem: cfg.problem,
        status: run.status,
        iterations: run.iterations(),
        final_objective: run.final_objective.to_float(),
        final_w_norm: run.final_w_norm(),
        recovery_error: truth.as_ref().map(|t| relative_error(run.x.view(), t.view())),
        seed,
        continuation: continuation_summary(&cfg.algorithm, epsilons, iterations, statuses),
    };
    Ok(SolveOutput {
        summary,
        trace_csv: trace::csv_string(&run.trace)?,
        trace_json: trace_json(&run.trace)?,
        solution: solution_text(&run.x),
    })
}

fn trace_json<R: Serialize>(records: &[R]) -> Result<String> {
    let mut buf = Vec::new();
    trace::write_json(records, &mut buf)?;
    Ok(String::from_utf8(buf).expect("json output is utf-8"))
}

/// Runs the configured solver in memory.
pub fn solve(cfg: &RunConfig, seed: Option<u64>) -> Result<SolveOutput> {
    cfg.validate()?;
    let instance = load_instance(cfg, seed)?;
    let used_seed = match &cfg.instance {
        InstanceSource::Generate(g) => Some(seed.unwrap_or(g.seed)),
        InstanceSource::Files(_) => None,
    };
    let alg = cfg.algorithm.clone();
    match instance {
        Instance::Regression { a, b, truth } => {
            let init = alg.init.unwrap_or(match cfg.problem {
                ProblemKind::L0Regression => Init::Adjoint,
                _ => Init::Zeros,
            });
            let x0 = match init {
                Init::Zeros => Array1::zeros(a.ncols()),
                Init::Adjoint => a.t().dot(&b),
            };
            let opts = solver_options(&alg);
            single_block_output(
                cfg,
                used_seed,
                |eps, start| {
                    let spec = regression_spec(cfg, &a, &b, eps)?;
                    run_plirls(&spec, start.unwrap_or_else(|| x0.clone()), &opts)
                },
                truth,
                io::format_vector,
            )
        }
        Instance::Matrix { d, low_rank, .. } => {
            let (rows, cols) = d.dim();
            if cfg.problem == ProblemKind::Multiblock {
                return solve_multiblock(cfg, used_seed, d, low_rank);
            }
            if cfg.problem != ProblemKind::Lowrank {
                return Err(config_err("matrix instances need the lowrank or multiblock problem"));
            }
            let opts = solver_options(&alg);
            single_block_output(
                cfg,
                used_seed,
                |eps, start| {
                    let lr = build_lowrank(d.clone(), alg.lambda, eps)?;
                    let x0 = start.unwrap_or_else(|| Array1::zeros(rows * cols));
                    run_plirls(lr.spec(), x0, &opts)
                },
                low_rank.map(|l| flatten(&l)),
                |x| io::format_matrix(&crate::linalg::unflatten(x.view(), rows, cols)),
            )
        }
    }
}

fn solve_multiblock(
    cfg: &RunConfig,
    seed: Option<u64>,
    d: Array2<f64>,
    truth: Option<Array2<f64>>,
) -> Result<SolveOutput> {
    let alg = &cfg.algorithm;
    let opts = MultiblockOptions {
        max_iters: alg.max_iters,
        step_tol: alg.step_tol,
        w_tol: alg.w_tol,
    };
    let epsilons = epsilon_schedule(alg);
    let (mut x, mut y) = (Array2::zeros(d.dim()), Array2::zeros(d.dim()));
    let mut iterations = Vec::new();
    let mut statuses = Vec::new();
    let mut last = None;
    for &eps in &epsilons {
        let spec = DecompositionSpec::observe_all(&d, eps, alg.gamma)?.with_weights(alg.nuclear_weight, alg.l1_weight)?;
        let run = run_multiblock(&spec, x.clone(), y.clone(), &opts)?;
        iterations.push(run.trace.len());
        statuses.push(run.status);
        x = run.x.clone();
        y = run.y.clone();
        last = Some(run);
    }
    let run = last.expect("at least one stage");
    let mut csv = Vec::new();
    trace::write_multiblock_csv(&run.trace, &mut csv)?;
    let summary = SolveSummary {
        problem: cfg.problem,
        status: run.status,
        iterations: run.trace.len(),
        final_objective: run.final_objective,
        final_w_norm: run.trace.last().map(|r| r.w_norm),
        recovery_error: truth.map(|t| frobenius(&(&run.x - &t)) / frobenius(&t).max(f64::MIN_POSITIVE)),
        seed,
        continuation: continuation_summary(alg, epsilons, iterations, statuses),
    };
    let mut solution = io::format_matrix(&run.x);
    solution.push_str(&io::format_matrix(&run.y));
    Ok(SolveOutput {
        summary,
        trace_csv: String::from_utf8(csv).expect("csv output is utf-8"),
        trace_json: trace_json(&run.trace)?,
        solution,
    })
}

/// Writes `trace.csv`, `trace.json`, `summary.json` and `solution.txt`.
pub fn write_output(out: &SolveOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("trace.csv"), &out.trace_csv)?;
    std::fs::write(dir.join("trace.json"), &out.trace_json)?;
    let mut summary = serde_json::to_string_pretty(&out.summary)?;
    summary.push('\n');
    std::fs::write(dir.join("summary.json"), summary)?;
    std::fs::write(dir.join("solution.txt"), &out.solution)?;
    Ok(())
}

/// Process exit code for a finished solve.
pub fn exit_code(summary: &SolveSummary) -> i32 {
    summary.status.exit_code()
}

/// Reads a trace CSV and writes `k objective w_norm` columns.
pub fn trace_plot(trace_csv: &Path, out: &Path) -> Result<()> {
    let mut reader = csv::Reader::from_path(trace_csv)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PlirlsError::Parse(format!("trace has no `{name}` column")))
    };
    let (ki, fi, wi) = (col("k")?, col("objective")?, col("w_norm")?);
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| PlirlsError::Parse(format!("bad number `{}` in trace", &rec[i])))
        };
        let k = rec[ki]
            .parse()
            .map_err(|_| PlirlsError::Parse(format!("bad iteration `{}` in trace", &rec[ki])))?;
        rows.push((k, parse(fi)?, parse(wi)?));
    }
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    trace::plot_data(rows, std::io::BufWriter::new(std::fs::File::create(out)?))
}

/// Worker count for batch solves: `PLIRLS_THREADS` if set, otherwise the
/// available parallelism, never more than the number of jobs.
pub fn batch_threads(jobs: usize) -> usize {
    let cap = std::env::var("PLIRLS_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    cap.min(jobs).max(1)
}

/// Runs independent jobs on up to `threads` workers; results keep the
/// input order. Each job is itself single-threaded.
pub fn run_batch<J, R, F>(jobs: Vec<J>, threads: usize, work: F) -> Vec<R>
where
    J: Send,
    R: Send,
    F: Fn(J) -> R + Sync,
{
    let n = jobs.len();
    let queue = std::sync::Mutex::new(jobs.into_iter().enumerate());
    let results = std::sync::Mutex::new((0..n).map(|_| None).collect::<Vec<Option<R>>>());
    std::thread::scope(|scope| {
        for _ in 0..threads.max(1) {
            scope.spawn(|| loop {
                let next = queue.lock().expect("queue lock").next();
                let Some((i, job)) = next else { break };
                let r = work(job);
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

/// The trace of a plain run, for callers that want records rather than
/// text.
pub fn records_of(out: &SolveOutput) -> Result<Vec<IterationRecord<f64>>> {
    let mut reader = csv::Reader::from_reader(out.trace_csv.as_bytes());
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| PlirlsError::Parse(format!("bad number `{}` in trace", &rec[i])))
        };
        records.push(IterationRecord {
            k: rec[0].parse().map_err(|_| PlirlsError::Parse("bad iteration".into()))?,
            objective: num(1)?,
            step_norm: num(2)?,
            w_norm: num(3)?,
            c_k: num(4)?,
            rho1_witness: num(5)?,
            rho2_witness: if rec[6].is_empty() { None } else { Some(num(6)?) },
            tau: f64::NAN,
            w_norm_statement: None,
        });
    }
    Ok(records)
}
