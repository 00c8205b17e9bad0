//! Distributed constrained consensus optimization with inexact subgradients.
//!
//! Agents on an undirected graph cooperatively minimize `Σ f_i(x)` over
//! `∩ X_i` using only ε-subgradients of their own objective, projections
//! onto their own set, and neighbor exchanges. The crate provides:
//!
//! - [`graph`]: weighted graphs, Laplacians, hop diameter, max-consensus.
//! - [`problem`]: ε-subgradient oracles, interval sets, the LASSO family.
//! - [`dynamics`]: the plain and normalized primal-dual iterations,
//!   schedules and their validity checks, and the experiment driver.
//! - [`reference`]: centralized optimum, saddle point, `Φ`, `Δ`, and the
//!   one-step descent inequality checker.
//! - [`trace`]: per-iteration diagnostics and CSV persistence.
//! - [`config`]: the flat `key = value` experiment file format.

pub mod blocks;
pub mod config;
pub mod dynamics;
pub mod graph;
pub mod problem;
pub mod reference;
pub mod trace;

pub use blocks::Blocks;
pub use dynamics::{
    check_schedule, npd_step, pd_step, pd_step_stacked, run, t_operator, Experiment, Mode,
    NetworkState, NormalizationConfig, Schedule, Variant, Verdict,
};
pub use graph::{max_consensus, CommGraph};
pub use problem::{Interval, Lasso, ProblemInstance};
pub use reference::{lemma1_check, phi, solve_1d, solve_saddle, SaddlePoint};
pub use trace::{Trace, TraceRecord};
