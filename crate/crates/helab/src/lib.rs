//! Numerical laboratory for the perturbed Hermitian-Einstein equation on
//! Higgs bundles over flat complex tori.
//!
//! The crate discretizes a torus C/(Z + tau Z) on an N x N grid, builds
//! rank <= 3 Higgs bundles from uniform-flux backgrounds, solves the family
//! of perturbed equations K_H - lambda Id + eps log(h_0^{-1} H) = 0 by a
//! damped Newton continuity method in eps, and reads off a semistability or
//! destabilizing-subsheaf verdict from the eps -> 0 limit.

pub mod bundle;
pub mod calculus;
pub mod error;
pub mod matrix;
pub mod config;
pub mod report;
pub mod run;
pub mod scenario;
pub mod solver;
pub mod stability;
pub mod torus;

pub use error::{HelabError, Result};
pub use matrix::{C64, SmallMat};
