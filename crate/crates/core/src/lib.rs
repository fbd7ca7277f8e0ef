//! Proximal-linearized iteratively reweighted least squares (PL-IRLS) for
//!
//! ```text
//! min_x  f(x) + s(x) + Σᵢ ‖Bᵢx − cᵢ‖₂^ν,   0 < ν ≤ 1,
//! ```
//!
//! solved through the smoothing `(‖Bᵢx − cᵢ‖² + ε²)^{ν/2}`. `f` only needs a
//! computable proximal map (ℓ0, sparsity, rank, ...), `s` a Lipschitz
//! gradient.
//!
//! Everything is generic over `f32`/`f64` through [`Real`]; the `*F64` and
//! `*F32` aliases below fix the scalar.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apps;
pub mod error;
pub mod extended;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod multiblock;
#[cfg(any(test, feature = "oracles"))]
pub mod oracles;
pub mod problem;
pub mod prox;
pub mod scalar;
#[cfg(any(test, feature = "oracles"))]
pub mod selfcheck;
pub mod solver;
pub mod terms;
pub mod trace;
pub mod weights;

pub use error::{PlirlsError, Result};
pub use extended::ExtReal;
pub use linalg::{LinearMap, LinearOperator};
pub use multiblock::{run_multiblock, BlockState, DecompositionSpec, MultiblockOptions, MultiblockRecord, MultiblockResult};
pub use problem::{AffineTerm, ModulusRule, ProblemBuilder, ProblemSpec};
pub use prox::ProxResult;
pub use scalar::Real;
pub use solver::{
    plirls_step, run_plirls, run_plirls_observed, IterationRecord, RunResult, Scheme, SolverOptions, SolverState, Status, StepOutcome,
    StepRule,
};
pub use terms::{ProxTerm, SmoothTerm};
pub use weights::{weight_update, WeightVector};

pub type ProblemSpecF64 = ProblemSpec<f64>;
pub type ProblemSpecF32 = ProblemSpec<f32>;
pub type LinearMapF64 = LinearMap<f64>;
pub type LinearMapF32 = LinearMap<f32>;
pub type AffineTermF64 = AffineTerm<f64>;
pub type AffineTermF32 = AffineTerm<f32>;
pub type WeightVectorF64 = WeightVector<f64>;
pub type WeightVectorF32 = WeightVector<f32>;
pub type SolverOptionsF64 = SolverOptions<f64>;
pub type SolverOptionsF32 = SolverOptions<f32>;
pub type RunResultF64 = RunResult<f64>;
pub type RunResultF32 = RunResult<f32>;
pub type IterationRecordF64 = IterationRecord<f64>;
pub type IterationRecordF32 = IterationRecord<f32>;
pub type DecompositionSpecF64 = DecompositionSpec<f64>;
pub type DecompositionSpecF32 = DecompositionSpec<f32>;
