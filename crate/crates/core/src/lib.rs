//! Multi-vehicle trajectory planning with collision avoidance.
//!
//! Two planners share one convex core:
//!
//! * [`dca`] solves the nonconvex problem by penalty DC iteration, one
//!   second-order cone program per step.
//! * [`micp`] replaces each separation constraint by a big-M disjunction over
//!   the faces of a cube and solves the mixed-integer program by branch and
//!   bound.
//!
//! [`verify`] audits any trajectory without a solver, and [`cli`] drives
//! batch runs.

pub mod cli;
pub mod dca;
pub mod dynamics;
pub mod error;
pub mod micp;
pub mod program;
pub mod scenario;
pub mod solver;
pub mod verify;

pub use dca::{plan_dca, DcaConfig, PlanResult, PlanStatus};
pub use dynamics::Trajectory;
pub use error::{PlanError, Result};
pub use scenario::{generate_benchmark, load_scenario, BenchmarkBase, BenchmarkPattern, Scenario};
pub use solver::{solve, SolveStatus, SolverSettings};
pub use verify::{check_feasibility, evaluate_objective, FeasibilityReport};
