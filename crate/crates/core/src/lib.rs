//! Large-deviation toolkit for maximum-likelihood estimation of the shifted
//! Ornstein-Uhlenbeck process `dX = (theta X + gamma) dt + dB`, `X_0 = 0`.
//!
//! The crate covers exact simulation, the estimators and their sufficient
//! statistics, closed-form rate functions, exact finite-horizon cumulant
//! generating functions, sharp tail approximations, a discretized chaos
//! decomposition and Monte Carlo validation.

pub mod cgf;
pub mod error;
pub mod estimators;
pub mod model;
pub mod montecarlo;
pub mod numeric;
pub mod rate;
pub mod sldp;
pub mod spectral;

pub use error::{Error, Result};
pub use model::{ModelParams, SimGrid};
