//! Aggregation of flexible energy loads through a worst-case dispatch
//! envelope, plus the inner approximations and LP tooling used to compare it.

pub mod approx_bench;
pub mod disagg;
pub mod dispatch;
pub mod envelope;
pub mod fixtures;
pub mod lp;
pub mod model;
pub mod optimize;
pub mod oracle;

pub use dispatch::{worst_case_dispatch, DispatchError, Direction};
pub use envelope::{build_envelope, envelope_contains, linearize, Envelope, EnvelopeError, PiecewiseLinearFn};
pub use lp::{DenseSimplex, LpProblem, LpSolution, LpSolver, LpStatus};
pub use model::{generate_scenario, AggTrajectory, GeneratorConfig, Load, LoadId, ModelError, Scenario, FEAS_TOL};
