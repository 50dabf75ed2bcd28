//! Association and offload optimization through a lifted relaxation.

pub mod coefficients;
pub mod lift;
pub mod qcqp;
pub mod round;
pub mod subproblem2;

pub use coefficients::{
    assemble_coefficients, pricing_allocation, scalar_delays, scalar_objective, Coefficients, LinkCoef, UserCoef,
};
pub use lift::{lift, lift_and_solve, lift_matrix, to_block_sdp, BlockSdp, Family, LiftResult, LiftedRow, SdrForm, SymMatrix};
pub use qcqp::{build_qcqp, CapRow, Layout, QcqpForm, QuadForm, Resource};
pub use round::round_association;
pub use subproblem2::{
    adopt_association, clean_offload, solve_subproblem2, SdrOptions, SdrReport, PHI_ZERO, RELAXATION_SDP,
};
