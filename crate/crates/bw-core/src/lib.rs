//! Bures-Wasserstein geometry of positive-semidefinite matrices: the distance
//! in its three closed forms, optimal Gaussian transport maps, the tangent
//! space, empirical Fréchet barycentres by fixed-point iteration, random
//! covariance models with known ground truth, and seeded Monte Carlo
//! experiment runners for the associated large-sample theory.

pub mod barycenter;
pub mod error;
pub mod experiments;
pub mod io;
pub mod metric;
pub mod models;
pub mod psd;
pub mod random;
pub mod rng;
pub mod selfcheck;

pub use error::{BwError, Result};
pub use psd::{PsdMatrix, SymMatrix};
