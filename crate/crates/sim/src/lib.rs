//! Visual-inertial simulation for checking symbolic observability verdicts
//! against an estimator.
//!
//! A run generates an analytic trajectory, synthesizes IMU and camera
//! measurements from it, filters them with an error-state EKF, and labels
//! every estimated variable by how far its 3σ bound shrank.

pub mod convergence;
pub mod ekf;
pub mod lie_check;
pub mod measurements;
pub mod runner;
pub mod scenario;
pub mod symbolic;
pub mod trajectory;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use convergence::{classify_convergence, ConvergenceLabel, ConvergenceVerdict, Series, Thresholds};
pub use ekf::{run_ekf, FilterConfig, FilterRun, Nominal};
pub use measurements::{synthesize_measurements, MeasurementStream};
pub use runner::{run_batch, run_scenario, write_outputs, RunOutput};
pub use scenario::SimScenario;
pub use trajectory::{generate_trajectory, Trajectory, TrajectoryKind};

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub enum SimError {
    #[error("unknown scenario '{0}'")]
    UnknownKind(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("no landmark visible in camera frame {0}")]
    NoVisibleLandmarks(usize),
    #[error("filter diverged at t = {time:.3} s (NEES {nees:.3e})")]
    FilterDiverged { time: f64, nees: f64 },
    #[error("innovation covariance not positive definite at t = {time:.3} s")]
    SingularUpdate { time: f64 },
    #[error("measurement stream is not time-ordered")]
    InvalidStream,
    #[error("i/o: {0}")]
    Io(String),
}
