use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::trajectory::{generate_trajectory, Trajectory, TrajectoryKind};
use crate::SimError;

/// Sensor noise and the spread of the unknown constants drawn per run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Gyro white noise density, rad/s/√Hz.
    pub gyro: f64,
    /// Accelerometer white noise density, m/s²/√Hz.
    pub accel: f64,
    /// Pixel noise standard deviation on the normalized image plane.
    pub pixel: f64,
    pub gyro_bias_std: f64,
    pub accel_bias_std: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            gyro: 1.7e-4,
            accel: 2.0e-3,
            pixel: 1.5 / 460.0,
            gyro_bias_std: 0.002,
            accel_bias_std: 0.02,
        }
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        NoiseConfig {
            gyro: 0.0,
            accel: 0.0,
            pixel: 0.0,
            gyro_bias_std: 0.0,
            accel_bias_std: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TimeOffset {
    Fixed(f64),
    /// Drawn per run from a zero-mean Gaussian with this standard deviation.
    Random(f64),
}

/// Landmarks drawn uniformly from a box given in the trajectory base frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandmarkField {
    pub count: usize,
    pub half_extent: f64,
    /// Range of the base-frame z coordinate.
    pub depth: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub kind: TrajectoryKind,
    pub duration: f64,
    pub imu_rate: u32,
    pub cam_rate: u32,
    pub landmarks: LandmarkField,
    pub noise: NoiseConfig,
    pub time_offset: TimeOffset,
    /// Whether the filter estimates the camera-IMU extrinsics.
    pub estimate_extrinsics: bool,
    /// Camera-to-IMU rotation and camera origin in the IMU frame.
    pub r_bc: Rotation3<f64>,
    pub p_bc: Vector3<f64>,
    /// Half-width of the field of view on the normalized image plane.
    pub fov: f64,
    pub seed: u64,
}

/// Nominal extrinsics: a camera looking down the IMU's negative z axis.
pub fn nominal_extrinsics() -> (Rotation3<f64>, Vector3<f64>) {
    let r = Rotation3::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI)
        * Rotation3::from_euler_angles(0.05, -0.04, 0.1);
    (r, Vector3::new(0.06, -0.04, 0.03))
}

impl SimScenario {
    /// Default configuration for a trajectory kind.
    pub fn preset(kind: TrajectoryKind) -> Self {
        let (r_bc, p_bc) = nominal_extrinsics();
        let time_study = !kind.is_slope();
        let landmarks = match kind {
            TrajectoryKind::CylinderConstAccel => LandmarkField {
                count: 160,
                half_extent: 8.0,
                depth: (-13.0, -10.0),
            },
            _ => LandmarkField {
                count: 140,
                half_extent: 6.0,
                depth: (-6.0, -3.5),
            },
        };
        SimScenario {
            kind,
            duration: 60.0,
            imu_rate: 400,
            cam_rate: 10,
            landmarks,
            noise: NoiseConfig::default(),
            time_offset: TimeOffset::Random(0.05),
            estimate_extrinsics: !time_study,
            r_bc,
            p_bc,
            fov: 0.84,
            seed: 0,
        }
    }

    pub fn named(name: &str) -> Result<Self, SimError> {
        Ok(SimScenario::preset(name.parse()?))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn trajectory(&self) -> Trajectory {
        generate_trajectory(self.kind, self.duration)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidScenario(m.to_string()));
        if !(self.duration > 0.0) {
            return bad("duration must be positive");
        }
        if self.cam_rate == 0 || self.imu_rate == 0 || self.imu_rate % self.cam_rate != 0 {
            return bad("imu_rate must be a positive multiple of cam_rate");
        }
        if self.landmarks.count == 0 {
            return bad("at least one landmark is required");
        }
        Ok(())
    }
}
