//! Sequential joint state and parameter estimation for linear state-space
//! models driven by noisily observed control inputs.
//!
//! The crate provides the ensemble-marginalized Kalman filter (EnMKF), a
//! modified EnKF that samples the controls, the exact Kalman filters they are
//! built from, and a one-dimensional wall heat-conduction model used to
//! estimate thermal resistance and heat capacity from surface temperature and
//! heat-flux measurements.

pub mod data;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod kalman;
pub mod linalg;
pub mod marginal_kf;
pub mod statespace;
pub mod wall;

pub use error::{Error, ErrorKind, Result};
