//! Oracle and invariant suite behind `plirls check`.
//!
//! Every check draws seeded instances, so a reported violation can be
//! replayed from its seed alone.

use std::fmt;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::apps::{build_l0_regression, build_lowrank, build_sparse_lsq};
use crate::error::Result;
use crate::linalg::frobenius;
use crate::multiblock::{multiblock_step, BlockState, DecompositionSpec};
use crate::oracles::{bruteforce_l0, bruteforce_rank, bruteforce_sparsity, fd_gradient};
use crate::problem::ProblemSpec;
use crate::prox::{hard_threshold_l0, project_sparsity, rank_prox};
use crate::scalar::max_abs;
use crate::solver::{run_observed, Scheme, SolverOptions};
use crate::terms::{L0Penalty, SmoothTerm};
use crate::weights::weight_update;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Quick,
    Full,
}

/// Deliberate defects for testing that the suite can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Run the solver with `γ = 0.9`, below the admissible range.
    SubunitGamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppKind {
    SparseLsq,
    L0Regression,
    Lowrank,
}

impl AppKind {
    pub const ALL: [AppKind; 3] = [AppKind::SparseLsq, AppKind::L0Regression, AppKind::Lowrank];

    pub fn name(self) -> &'static str {
        match self {
            AppKind::SparseLsq => "sparse-lsq",
            AppKind::L0Regression => "l0-regression",
            AppKind::Lowrank => "lowrank",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub inequality: &'static str,
    pub instance: String,
    pub seed: u64,
    pub iteration: Option<usize>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "violated `{}` on {} (seed {})", self.inequality, self.instance, self.seed)?;
        if let Some(k) = self.iteration {
            write!(f, " at iteration {k}")?;
        }
        write!(f, ": {}", self.detail)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub cases: usize,
    pub violations: Vec<Violation>,
}

impl CheckResult {
    fn new(name: &'static str) -> Self {
        CheckResult {
            name,
            cases: 0,
            violations: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub checks: Vec<CheckResult>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }

    pub fn violations(&self) -> impl Iterator<Item = &Violation> {
        self.checks.iter().flat_map(|c| c.violations.iter())
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let verdict = if c.passed() { "ok" } else { "FAILED" };
            writeln!(f, "{:<28} {:>6} cases  {verdict}", c.name, c.cases)?;
            // A broken invariant tends to break on every iteration; the
            // first few reports are enough to replay it.
            for v in c.violations.iter().take(5) {
                writeln!(f, "    {v}")?;
            }
            if c.violations.len() > 5 {
                writeln!(f, "    ... {} more", c.violations.len() - 5)?;
            }
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn draw_shape(rng: &mut ChaCha8Rng, kind: AppKind) -> (usize, usize) {
    match kind {
        AppKind::SparseLsq | AppKind::L0Regression => (rng.random_range(4..=30), rng.random_range(2..=12)),
        AppKind::Lowrank => (rng.random_range(2..=5), rng.random_range(2..=5)),
    }
}

/// Shape `random_instance(kind, seed, _)` will have: `(m, n)` of the data
/// matrix for the regression kinds, `(rows, cols)` of `D` for low-rank.
pub fn instance_shape(kind: AppKind, seed: u64) -> (usize, usize) {
    draw_shape(&mut ChaCha8Rng::seed_from_u64(seed), kind)
}

/// Seeded random instance of an application kind with `n, m ≤ 50`, and a
/// Gaussian starting point.
pub fn random_instance(kind: AppKind, seed: u64, nu: f64) -> Result<(ProblemSpec<f64>, Array1<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (p, q) = draw_shape(&mut rng, kind);
    match kind {
        AppKind::SparseLsq | AppKind::L0Regression => {
            let (m, n) = (p, q);
            let scale = 1.0 / (m as f64).sqrt();
            let a = Array2::from_shape_fn((m, n), |_| scale * gaussian(&mut rng));
            let b = Array1::from_shape_fn(m, |_| gaussian(&mut rng));
            let eps = rng.random_range(0.3..1.5);
            let spec = if kind == AppKind::SparseLsq {
                build_sparse_lsq(a, b, rng.random_range(0.05..0.5), nu, eps)?
            } else {
                build_l0_regression(a, b, rng.random_range(0.01..0.3), eps)?.with_nu(nu)?
            };
            let x0 = Array1::from_shape_fn(n, |_| gaussian(&mut rng));
            Ok((spec, x0))
        }
        AppKind::Lowrank => {
            let (rows, cols) = (p, q);
            let d = Array2::from_shape_fn((rows, cols), |_| gaussian(&mut rng));
            let lambda = rng.random_range(0.5..4.0);
            let eps = rng.random_range(0.1..1.0);
            let spec = build_lowrank(d, lambda, eps)?.spec().with_nu(nu)?;
            let x0 = Array1::from_shape_fn(rows * cols, |_| gaussian(&mut rng));
            Ok((spec, x0))
        }
    }
}

/// Seeded random observe-all decomposition instance.
pub fn random_decomposition(seed: u64, rows: usize, cols: usize) -> Result<(DecompositionSpec<f64>, Array2<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Array2::from_shape_fn((rows, cols), |_| gaussian(&mut rng));
    let eps = rng.random_range(0.1..1.0);
    let alpha = rng.random_range(0.1..2.0);
    let beta = rng.random_range(0.05..0.5);
    let spec = DecompositionSpec::observe_all(&d, eps, 1.1)?.with_weights(alpha, beta)?;
    Ok((spec, d))
}

/// Per-iteration invariants of one PL-IRLS run.
#[derive(Debug, Default)]
pub struct TrajectoryAudit {
    pub violations: Vec<Violation>,
    pub iterations: usize,
}

pub const DECREASE: &str = "F(x^{k-1}) - F(x^k) >= ((gamma-1)/2) L(tau, y^{k-1}) ||x^k - x^{k-1}||^2";
pub const MONOTONE: &str = "F(x^k) <= F(x^{k-1})";
pub const SUBGRADIENT: &str = "||w^k|| <= rho2 ||x^k - x^{k-1}||";
pub const AUXILIARY: &str = "Psi(x^k, y^k) = F(x^k)";
pub const WEIGHT_BOX: &str = "0 < y^k_i <= nu / (2 eps^(2-nu))";
pub const WEIGHT_RULE: &str = "y^k = (nu/2)(r_i^2 + eps^2)^((nu-2)/2)";

/// Runs `iters` steps and audits every accepted iterate.
pub fn audit_run(
    spec: &ProblemSpec<f64>,
    x0: Array1<f64>,
    gamma: f64,
    scheme: Scheme,
    iters: usize,
    instance: &str,
    seed: u64,
) -> Result<TrajectoryAudit> {
    let opts = SolverOptions {
        gamma,
        max_iters: iters,
        scheme,
        ..SolverOptions::default()
    };
    let mut audit = TrajectoryAudit::default();
    let mut previous = spec.smoothed_objective(x0.view())?.to_float();
    let mut inner: Result<()> = Ok(());
    let report = |audit: &mut TrajectoryAudit, inequality, k, detail: String| {
        audit.violations.push(Violation {
            inequality,
            instance: instance.to_string(),
            seed,
            iteration: Some(k),
            detail,
        })
    };
    run_observed(spec, x0, &opts, &mut |state, rec| {
        audit.iterations += 1;
        let f = rec.objective;
        if rec.rho1_witness < -1e-9 {
            report(&mut audit, DECREASE, rec.k, format!("slack {:e}", rec.rho1_witness));
        }
        if f > previous + 1e-9 {
            report(&mut audit, MONOTONE, rec.k, format!("{previous} -> {f}"));
        }
        previous = f;
        if let Some(r2) = rec.rho2_witness {
            if r2 < -1e-9 {
                report(&mut audit, SUBGRADIENT, rec.k, format!("slack {r2:e}"));
            }
        }
        match spec.eval_auxiliary(state.x.view(), &state.y) {
            Ok(psi) => {
                let gap = (psi.to_float() - f).abs();
                if !(gap <= 1e-12 * (1.0 + f.abs())) {
                    report(&mut audit, AUXILIARY, rec.k, format!("gap {gap:e}"));
                }
            }
            Err(e) => inner = Err(e),
        }
        if !state.y.within_cap(spec.weight_cap()) {
            report(&mut audit, WEIGHT_BOX, rec.k, format!("max weight {}", state.y.max()));
        }
        match weight_update(spec, state.x.view()) {
            Ok(expected) => {
                let diff = max_abs((expected.as_array() - state.y.as_array()).view());
                if !(diff <= 1e-12 * (1.0 + max_abs(expected.view()))) {
                    report(&mut audit, WEIGHT_RULE, rec.k, format!("max deviation {diff:e}"));
                }
            }
            Err(e) => inner = Err(e),
        }
    })?;
    inner?;
    Ok(audit)
}

fn trials(level: Level, quick: usize, full: usize) -> usize {
    match level {
        Level::Quick => quick,
        Level::Full => full,
    }
}

fn nus(level: Level) -> &'static [f64] {
    match level {
        Level::Quick => &[1.0, 0.5],
        Level::Full => &[1.0, 0.5, 0.25],
    }
}

fn check_prox(level: Level) -> CheckResult {
    let mut out = CheckResult::new("prox vs exhaustive oracles");
    let n = trials(level, 200, 1000);
    for seed in 0..n as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = rng.random_range(1..=6);
        let u = Array1::from_shape_fn(dim, |_| 3.0 * gaussian(&mut rng));
        let lambda = rng.random_range(0.05..3.0);
        let c = rng.random_range(0.2..5.0);
        let k = rng.random_range(0..=dim);
        let mut found = Vec::new();
        let mut flag = |what: &'static str, got: &Array1<f64>, want: &Array1<f64>| {
            let diff = max_abs((got - want).view());
            if !(diff <= 1e-12) {
                found.push(Violation {
                    inequality: what,
                    instance: format!("u = {u}"),
                    seed,
                    iteration: None,
                    detail: format!("max deviation {diff:e}"),
                });
            }
        };
        match hard_threshold_l0(u.view(), lambda, c) {
            Ok(p) if !p.tie_broken => flag("prox_l0 = exhaustive support search", &p.point, &bruteforce_l0(u.view(), lambda, c)),
            Ok(_) => {}
            Err(e) => flag_error(&mut out, "prox_l0 = exhaustive support search", seed, e),
        }
        match project_sparsity(u.view(), k) {
            Ok(p) if !p.tie_broken => {
                flag("P_k = exhaustive support search", &p.point, &bruteforce_sparsity(u.view(), k))
            }
            Ok(_) => {}
            Err(e) => flag_error(&mut out, "P_k = exhaustive support search", seed, e),
        }
        out.violations.extend(found);
        let (r, cc) = (rng.random_range(1..=3), rng.random_range(1..=2));
        let m = Array2::from_shape_fn((r, cc), |_| 2.0 * gaussian(&mut rng));
        match rank_prox(m.view(), lambda, c) {
            Ok(p) if !p.tie_broken => {
                let want = bruteforce_rank(m.view(), lambda, c);
                let diff = frobenius(&(&p.point - &want));
                if !(diff <= 1e-10 * (1.0 + frobenius(&m))) {
                    out.violations.push(Violation {
                        inequality: "prox_rank = Eckart-Young enumeration",
                        instance: format!("{r}x{cc} matrix"),
                        seed,
                        iteration: None,
                        detail: format!("deviation {diff:e}"),
                    });
                }
            }
            Ok(_) => {}
            Err(e) => flag_error(&mut out, "prox_rank = Eckart-Young enumeration", seed, e),
        }
        out.cases += 3;
    }
    out
}

fn flag_error(out: &mut CheckResult, inequality: &'static str, seed: u64, e: crate::PlirlsError) {
    out.violations.push(Violation {
        inequality,
        instance: "evaluation".into(),
        seed,
        iteration: None,
        detail: e.to_string(),
    });
}

fn relative_gap(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    max_abs((a - b).view()) / (1.0 + max_abs(b.view()))
}

fn check_gradients(level: Level) -> CheckResult {
    let mut out = CheckResult::new("gradients vs finite differences");
    let per_nu = trials(level, 10, 40);
    for &nu in nus(level) {
        for i in 0..per_nu as u64 {
            let seed = 10_000 + i;
            let kind = AppKind::ALL[(i % 3) as usize];
            let instance = format!("{} nu={nu}", kind.name());
            let outcome = (|| -> Result<Option<(&'static str, f64)>> {
                let (spec, x) = random_instance(kind, seed, nu)?;
                let fd = fd_gradient(|p| spec.smooth_part(p).unwrap_or(f64::NAN), x.view(), 1e-5)?;
                let gap = relative_gap(&fd, &spec.grad_h(x.view())?);
                if gap > 1e-6 {
                    return Ok(Some(("grad h = central differences of h", gap)));
                }
                let y = weight_update(&spec, x.view())?;
                let fd = fd_gradient(|p| spec.coupling_value(p, y.view()).unwrap_or(f64::NAN), x.view(), 1e-5)?;
                let gap = relative_gap(&fd, &spec.grad_coupling(x.view(), y.view())?);
                if gap > 1e-6 {
                    return Ok(Some(("grad_x H = central differences of H", gap)));
                }
                Ok(None)
            })();
            out.cases += 1;
            match outcome {
                Ok(None) => {}
                Ok(Some((inequality, gap))) => out.violations.push(Violation {
                    inequality,
                    instance,
                    seed,
                    iteration: None,
                    detail: format!("relative error {gap:e}"),
                }),
                Err(e) => flag_error(&mut out, "gradient evaluation", seed, e),
            }
        }
    }
    out
}

fn check_trajectories(level: Level, fault: Option<Fault>) -> CheckResult {
    let mut out = CheckResult::new("descent invariants");
    let gamma = match fault {
        Some(Fault::SubunitGamma) => 0.9,
        None => 1.1,
    };
    let per = trials(level, 4, 40);
    let iters = trials(level, 150, 3000);
    for &nu in nus(level) {
        for kind in AppKind::ALL {
            for i in 0..per as u64 {
                let seed = 20_000 + 100 * i + (nu * 8.0) as u64;
                let instance = format!("{} nu={nu}", kind.name());
                let audit = random_instance(kind, seed, nu)
                    .and_then(|(spec, x0)| audit_run(&spec, x0, gamma, Scheme::Generalized, iters, &instance, seed));
                out.cases += 1;
                match audit {
                    Ok(a) => out.violations.extend(a.violations),
                    Err(e) => flag_error(&mut out, "solver run", seed, e),
                }
            }
        }
    }
    if fault.is_some() {
        // Random instances rarely sit on the edge of the admissible step, so
        // add one that does: s = (L/2)(x - a)², f = λ|x|₀ with λ = (L/2)a².
        // From x = 0 a step with γ > 1 stays put, with γ < 1 it jumps to
        // a/γ and the objective rises.
        let (l, a) = (2.0, 1.5);
        let spec = tight_l0_instance(l, a);
        out.cases += 1;
        match spec.and_then(|s| audit_run(&s, Array1::zeros(1), gamma, Scheme::Generalized, 5, "tight l0 toy", 0)) {
            Ok(audit) => out.violations.extend(audit.violations),
            Err(e) => flag_error(&mut out, "solver run", 0, e),
        }
    }
    out
}

/// `(L/2)(x − a)² + ((L/2)a²)|x|₀` on the real line, with no coupling terms.
pub fn tight_l0_instance(l: f64, a: f64) -> Result<ProblemSpec<f64>> {
    struct Shifted {
        l: f64,
        a: f64,
    }
    impl SmoothTerm<f64> for Shifted {
        fn value(&self, x: ndarray::ArrayView1<'_, f64>) -> f64 {
            0.5 * self.l * (x[0] - self.a).powi(2)
        }
        fn gradient(&self, x: ndarray::ArrayView1<'_, f64>) -> Array1<f64> {
            Array1::from_elem(1, self.l * (x[0] - self.a))
        }
        fn lipschitz(&self) -> f64 {
            self.l
        }
    }
    ProblemSpec::builder(1)
        .prox_term(L0Penalty { lambda: 0.5 * l * a * a })
        .smooth_term(Shifted { l, a })
        .epsilon(1.0)
        .build()
}

fn check_schemes(level: Level) -> CheckResult {
    let mut out = CheckResult::new("base = generalized at nu=1");
    for i in 0..trials(level, 3, 15) as u64 {
        let seed = 30_000 + i;
        let kind = AppKind::ALL[(i % 3) as usize];
        out.cases += 1;
        let same = random_instance(kind, seed, 1.0).and_then(|(spec, x0)| {
            let run = |scheme| {
                let opts = SolverOptions {
                    max_iters: 200,
                    scheme,
                    ..SolverOptions::default()
                };
                crate::solver::run_plirls(&spec, x0.clone(), &opts)
            };
            Ok(run(Scheme::Base)?.trace == run(Scheme::Generalized)?.trace)
        });
        match same {
            Ok(true) => {}
            Ok(false) => out.violations.push(Violation {
                inequality: "trace(base) = trace(generalized, nu=1)",
                instance: kind.name().into(),
                seed,
                iteration: None,
                detail: "traces differ".into(),
            }),
            Err(e) => flag_error(&mut out, "solver run", seed, e),
        }
    }
    out
}

pub const BLOCK_MONOTONE: &str = "F(X^k, Y^k) <= F(X^{k-1}, Y^{k-1})";
pub const BLOCK_WEIGHTS: &str = "z^k = 1 / (2 sqrt(r_i^2 + eps^2))";

/// Audits `iters` multiblock sweeps from zero.
pub fn audit_multiblock(spec: &DecompositionSpec<f64>, iters: usize, seed: u64) -> Result<Vec<Violation>> {
    let (rows, cols) = spec.shape();
    let mut state = BlockState::new(spec, Array2::zeros((rows, cols)), Array2::zeros((rows, cols)))?;
    let mut found = Vec::new();
    let instance = format!("{rows}x{cols} decomposition");
    for _ in 0..iters {
        let (next, rec) = multiblock_step(spec, &state)?;
        if rec.objective > state.objective + 1e-9 {
            found.push(Violation {
                inequality: BLOCK_MONOTONE,
                instance: instance.clone(),
                seed,
                iteration: Some(rec.k),
                detail: format!("{} -> {}", state.objective, rec.objective),
            });
        }
        let r = spec.residual(&next.x, &next.y)?;
        let eps2 = spec.epsilon() * spec.epsilon();
        let expected = r.mapv(|ri| 0.5 / (ri * ri + eps2).sqrt());
        let diff = max_abs((&expected - next.z.as_array()).view());
        if !(diff <= 1e-12) {
            found.push(Violation {
                inequality: BLOCK_WEIGHTS,
                instance: instance.clone(),
                seed,
                iteration: Some(rec.k),
                detail: format!("max deviation {diff:e}"),
            });
        }
        state = next;
    }
    Ok(found)
}

fn check_multiblock(level: Level) -> CheckResult {
    let mut out = CheckResult::new("multiblock invariants");
    let iters = trials(level, 50, 400);
    let side = trials(level, 6, 10);
    for i in 0..trials(level, 3, 50) as u64 {
        let seed = 40_000 + i;
        out.cases += 1;
        match random_decomposition(seed, side, side - 1).and_then(|(spec, _)| audit_multiblock(&spec, iters, seed)) {
            Ok(v) => out.violations.extend(v),
            Err(e) => flag_error(&mut out, "multiblock run", seed, e),
        }
    }
    out
}

/// Runs the whole suite.
pub fn run(level: Level, fault: Option<Fault>) -> Report {
    Report {
        checks: vec![
            check_prox(level),
            check_gradients(level),
            check_trajectories(level, fault),
            check_schemes(level),
            check_multiblock(level),
        ],
    }
}
