//! Quantitative comparisons between the particle system and its
//! hydrodynamic limit, plus static and dynamic diagnostics.

mod checks;
mod convergence;
pub mod stats;

pub use checks::{
    attractiveness_check, defect_rate_average, mass_budget_check, one_block_bias, one_block_diagnostic,
    static_limit_check, AttractivenessReport, BlockRow, MassBudget, StaticDefect, StaticReport, SOLVER_DRIFT_TOL,
};
pub use convergence::{
    run_convergence, smoothed_density, AtomRow, Check, ConvergenceReport, ConvergenceSetup, L1Row, MassRow,
    ProfileRow, Reference, ReplicaFailure, SuperRow, Thresholds,
};
