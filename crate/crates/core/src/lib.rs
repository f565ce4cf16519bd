//! Progressive localization of an RF interference source from UAV-borne RSSI
//! measurements.
//!
//! The crate is organized bottom-up:
//!
//! - [`geometry`] and [`rng`]: positions, search regions, error metrics and
//!   the seeded random stream every stochastic routine draws from.
//! - [`channel`]: altitude-dependent log-distance path loss, RSSI synthesis and
//!   the RSSI-difference to distance-ratio transform.
//! - [`solver`]: the distance-ratio least-squares objective and its PSO + LM
//!   hybrid minimizer.
//! - [`fusion`]: per-leg confidence from RSSI differentials and the
//!   confidence-weighted Kalman fusion of per-leg estimates.
//! - [`progressive`]: the solve / fuse / fly loop.
//! - [`baselines`]: single-shot PSO-LM, ratio trilateration and iterative
//!   weighted centroid.

pub mod baselines;
pub mod channel;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod progressive;
pub mod rng;
pub mod scenario;
pub mod solver;

pub use error::{Error, Result};
pub use geometry::{distance, rmse, Position, Roi};
pub use rng::RngStream;
