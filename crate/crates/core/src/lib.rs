//! Proximal implicit ODE solvers for gradient-flow problems, explicit
//! baselines and the tooling to compare them.

// `!(x > 0.0)` is used deliberately so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod explicit;
pub mod grid;
pub mod inner;
pub mod problem;
pub mod prox;
pub mod stability;

pub use error::{Error, Result};
pub use explicit::{adaptive_solve, fixed_step_solve, AdaptiveConfig, ExplicitMethod};
pub use grid::{make_uniform_grid, TimeGrid};
pub use inner::{fixed_point_solve, newton_solve, run_inner, InnerConfig, InnerMethod, InnerResult, ProxWeights};
pub use problem::{validate_gradient_consistency, InstrumentedRhs, OdeProblem, SolveResult, State};
pub use prox::{solve, BdfStartup, FailurePolicy, MultiStageTableau, ProxConfig, ProxScheme, WarmStart};
pub use stability::{in_stability_domain, stiffness_ratio, StabilityMethod, StabilityVerdict};
