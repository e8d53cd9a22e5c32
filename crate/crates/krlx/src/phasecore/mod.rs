//! Grids, fields, the weighted space `B`, the operators `Λ_x`, `Λ_v`, the
//! projection onto `B⊥`, and operator-norm estimation.

mod field;
mod grid;
pub mod io;
mod opnorm;
mod weighted;

pub use field::{DistributionField, SpatialField};
pub use grid::{PhaseGrid, SpatialGrid};
pub use opnorm::{dv, dv_adjoint, opnorm_estimate, BLinearMap, FnMap, LambdaInvDv};
pub use weighted::{
    b_inner, bnorm, project_perp, Axis, WeightedOperatorSet, LANCZOS_VECTORS,
    MAX_SPECTRAL_UNKNOWNS,
};
