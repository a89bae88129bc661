//! Distributed teacher–student beamforming for cell-free integrated sensing
//! and communication.
//!
//! Each access point (AP) runs its own small network that maps local channel
//! state to local beams. Networks are trained without labels: a sensing-only
//! teacher and a communication-only teacher estimate the achievable SSNR and
//! minimum SINR, and a student is trained against those ceilings with an
//! adaptive balance weight.

mod config;
mod error;

pub mod baselines;
pub mod io;
pub mod metrics;
pub mod model;
pub mod scenario;
pub mod training;

pub use config::{Geometry, PositionScheme, SystemConfig};
pub use error::{Error, Result};
pub use cfisac_nn::Scalar;
