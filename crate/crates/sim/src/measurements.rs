use nalgebra::{Rotation3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::scenario::{SimScenario, TimeOffset};
use crate::trajectory::{Trajectory, TrajectoryPoint};
use crate::SimError;

pub const GRAVITY: f64 = 9.81;

pub fn gravity_world() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -GRAVITY)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: f64,
    pub gyro: Vector3<f64>,
    pub accel: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub id: usize,
    /// Normalized image-plane coordinates.
    pub uv: Vector2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraFrame {
    pub index: usize,
    /// Timestamp on the IMU clock. The image was taken at `stamp + t_d`.
    pub stamp: f64,
    pub features: Vec<Feature>,
}

/// Ground truth behind a measurement stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub trajectory: Trajectory,
    pub bg: Vector3<f64>,
    pub ba: Vector3<f64>,
    pub r_bc: Rotation3<f64>,
    pub p_bc: Vector3<f64>,
    pub t_d: f64,
    pub landmarks: Vec<Vector3<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementStream {
    pub imu_rate: u32,
    pub imu: Vec<ImuSample>,
    pub frames: Vec<CameraFrame>,
    pub truth: Truth,
}

/// Noise-free IMU reading at a trajectory point.
pub fn ideal_imu(s: &TrajectoryPoint, bg: &Vector3<f64>, ba: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let specific = s.r_wb.inverse() * (s.a - gravity_world());
    (s.omega + bg, specific + ba)
}

/// Landmark position in the camera frame for a body pose.
pub fn landmark_in_camera(
    s: &TrajectoryPoint,
    r_bc: &Rotation3<f64>,
    p_bc: &Vector3<f64>,
    landmark: &Vector3<f64>,
) -> Vector3<f64> {
    let r_wc = s.r_wb * r_bc;
    let p_wc = s.p + s.r_wb * p_bc;
    r_wc.inverse() * (landmark - p_wc)
}

fn normal3(rng: &mut ChaCha8Rng, std: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| {
        let n: f64 = StandardNormal.sample(rng);
        n * std
    })
}

pub(crate) fn scenario_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn synthesize_measurements(traj: &Trajectory, scenario: &SimScenario) -> Result<MeasurementStream, SimError> {
    scenario.validate()?;
    let mut rng = scenario_rng(scenario.seed, 1);
    let noise = &scenario.noise;

    let field = &scenario.landmarks;
    let landmarks: Vec<Vector3<f64>> = (0..field.count)
        .map(|_| {
            let local = Vector3::new(
                rng.gen_range(-field.half_extent..=field.half_extent),
                rng.gen_range(-field.half_extent..=field.half_extent),
                rng.gen_range(field.depth.0..=field.depth.1),
            );
            traj.base_to_world(&local)
        })
        .collect();
    let bg = normal3(&mut rng, noise.gyro_bias_std);
    let ba = normal3(&mut rng, noise.accel_bias_std);
    let t_d = match scenario.time_offset {
        TimeOffset::Fixed(t) => t,
        TimeOffset::Random(std) => {
            let n: f64 = StandardNormal.sample(&mut rng);
            n * std
        }
    };

    // A little past the end so the filter can interpolate at the last frame.
    let rate = scenario.imu_rate as f64;
    let n_imu = ((scenario.duration + 1.0) * rate).ceil() as usize;
    let gyro_std = noise.gyro * rate.sqrt();
    let accel_std = noise.accel * rate.sqrt();
    let imu = (0..=n_imu)
        .map(|i| {
            let t = i as f64 / rate;
            let (w, a) = ideal_imu(&traj.sample(t), &bg, &ba);
            ImuSample {
                t,
                gyro: w + normal3(&mut rng, gyro_std),
                accel: a + normal3(&mut rng, accel_std),
            }
        })
        .collect();

    let n_frames = (scenario.duration * scenario.cam_rate as f64).floor() as usize;
    let mut frames = Vec::with_capacity(n_frames);
    for index in 1..=n_frames {
        let stamp = index as f64 / scenario.cam_rate as f64;
        let pose = traj.sample(stamp + t_d);
        let mut features = Vec::new();
        for (id, l) in landmarks.iter().enumerate() {
            let pc = landmark_in_camera(&pose, &scenario.r_bc, &scenario.p_bc, l);
            if pc.z <= 0.2 {
                continue;
            }
            let uv = Vector2::new(pc.x / pc.z, pc.y / pc.z);
            if uv.x.abs() > scenario.fov || uv.y.abs() > scenario.fov {
                continue;
            }
            let n = Vector2::from_fn(|_, _| {
                let n: f64 = StandardNormal.sample(&mut rng);
                n * noise.pixel
            });
            features.push(Feature { id, uv: uv + n });
        }
        if features.is_empty() {
            return Err(SimError::NoVisibleLandmarks(index));
        }
        frames.push(CameraFrame { index, stamp, features });
    }

    Ok(MeasurementStream {
        imu_rate: scenario.imu_rate,
        imu,
        frames,
        truth: Truth {
            trajectory: traj.clone(),
            bg,
            ba,
            r_bc: scenario.r_bc,
            p_bc: scenario.p_bc,
            t_d,
            landmarks,
        },
    })
}
