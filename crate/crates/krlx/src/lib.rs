//! Numerics for the Vlasov–Poisson–Fokker–Planck system near its equilibrium.
//!
//! The crate is organised along the workflow: [`phasecore`] provides grids,
//! fields and the weighted space `B`; [`equilibrium`] solves the Poisson–Emden
//! problem; [`fieldsolve`] computes densities and fields; [`witten`] gives the
//! spectral gap; [`semigroup`] propagates the linear kinetic Fokker–Planck
//! flow; [`vpfp`] runs the nonlinear system and the Picard construction.

pub mod error;
pub mod exec;
pub mod fit;
pub mod green;
pub mod linalg;
pub mod phasecore;

pub use error::{Error, Result};
pub mod equilibrium;
pub mod fieldsolve;
pub mod semigroup;
pub mod vpfp;
pub mod witten;
