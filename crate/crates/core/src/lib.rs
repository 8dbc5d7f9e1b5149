//! Simulation of dissipative stochastic evolution equations driven by
//! Gaussian and Hermite noise with long-range dependence.

pub mod convolution;
pub mod covariance;
pub mod error;
pub mod linalg;
pub mod netop;
pub mod neuron;
pub mod noise1d;
pub mod qnoise;
pub mod quad;
pub mod rng;
pub mod solver;
pub mod space;
pub mod stats;
pub mod verify;
pub mod wiener;

pub use error::{Error, Result};
