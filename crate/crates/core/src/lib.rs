//! Resource allocation for hierarchical fine-tuning across a four-tier
//! ground/air/space network.
//!
//! The crate evaluates the training-efficiency model, optimizes shares with a
//! fractional-programming surrogate, optimizes association and offload ratios
//! with a semidefinite relaxation plus assignment rounding, and provides
//! baselines, a mobility simulator and an experiment harness.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assignment;
pub mod bench;
pub mod convex;
pub mod driver;
pub mod error;
pub mod fp;
pub mod mobility;
pub mod model;
pub mod sdr;

pub use error::{ParaError, Result};
