//! Outer alternating loop, multiplier updates and baseline methods.

pub mod baselines;
pub mod multipliers;
pub mod para;

pub use baselines::{greedy_association, run_baseline, run_method, simplex_grid, BaselineKind, Method};
pub use multipliers::update_multipliers;
pub use para::{
    average_shares, initial_allocation, p3_value, run_from, run_para, OuterRecord, ParaOptions, RunTrace, ShareMode,
};
