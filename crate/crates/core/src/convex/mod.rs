//! Small-scale convex machinery: projections, a projected-gradient solver,
//! a primal-dual interior-point SDP solver and finite-difference checks.

pub mod gradcheck;
pub mod projection;
pub mod sdp;
pub mod smooth;

pub use gradcheck::check_gradient;
pub use projection::{project_capped_simplex, CapGroup, FeasibleSet};
pub use sdp::{solve_sdp, ConSense, SdpConstraint, SdpOptions, SdpProblem, SdpSolution, SymEntry};
pub use smooth::{minimize_smooth, SmoothConvexProblem, SmoothResult};
