//! Slow, independent reference computations.
//!
//! Everything here is deliberately naive: trapezoidal quadrature on action
//! grids, lattice search over Gaussian parameters, central differences, loop
//! based network evaluation and policy iteration for the Riccati gain. The
//! code only touches `gac-core` through data types and the public critic
//! value/gradient interface, so agreement with the closed forms in
//! `gac-core` is evidence rather than tautology.
//!
//! Only one- and two-dimensional actions are supported by the quadrature and
//! lattice routines.

mod dense;
pub mod fd;
pub mod forward;
pub mod grid;
pub mod primal;
pub mod quadrature;
pub mod riccati;

pub use fd::{fd_gradient, fd_hessian, fd_jacobian};
pub use forward::{reference_forward, ReferenceForward};
pub use grid::ActionGrid;
pub use primal::{constrained_guide_reference, ConstrainedGuide};
pub use quadrature::{dual_quadrature, entropy_quadrature, guide_grid_search, kl_quadrature};
pub use riccati::{lqr_gain_policy_iteration, scalar_lqr};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("grid too coarse: refinement changed the result by {change:e}")]
    GridTooCoarse { change: f64 },
    #[error("grid does not cover {required} standard deviations of the policy")]
    GridTooNarrow { required: f64 },
    #[error("entropy bound cannot be met inside the KL ball")]
    InfeasibleBounds,
    #[error("only 1-D and 2-D actions are supported, got {0}")]
    UnsupportedDimension(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("did not converge")]
    NoConvergence,
    #[error(transparent)]
    Core(#[from] gac_core::Error),
}

pub type Result<T> = std::result::Result<T, OracleError>;
