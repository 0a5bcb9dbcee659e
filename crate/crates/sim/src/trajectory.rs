//! Analytic rigid-body trajectories.
//!
//! Every trajectory rotates about a single axis: the z axis of a fixed base
//! frame, which is also the body z axis. Position is a planar path in the
//! base frame plus a height along its normal.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_6};

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sine {
    pub amp: f64,
    pub freq: f64,
    pub phase: f64,
}

/// `c0 + c1 t + c2 t² + Σ amp·sin(freq·t + phase)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Signal {
    pub poly: [f64; 3],
    pub sines: Vec<Sine>,
}

impl Signal {
    pub fn constant(c: f64) -> Self {
        Signal {
            poly: [c, 0.0, 0.0],
            sines: vec![],
        }
    }

    pub fn linear(c0: f64, c1: f64) -> Self {
        Signal {
            poly: [c0, c1, 0.0],
            sines: vec![],
        }
    }

    pub fn plus_sine(mut self, amp: f64, freq: f64, phase: f64) -> Self {
        self.sines.push(Sine { amp, freq, phase });
        self
    }

    /// Value and first two derivatives.
    pub fn eval(&self, t: f64) -> [f64; 3] {
        let [c0, c1, c2] = self.poly;
        let mut out = [c0 + t * (c1 + t * c2), c1 + 2.0 * c2 * t, 2.0 * c2];
        for s in &self.sines {
            let (sn, cs) = (s.freq * t + s.phase).sin_cos();
            out[0] += s.amp * sn;
            out[1] += s.amp * s.freq * cs;
            out[2] -= s.amp * s.freq * s.freq * sn;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PlanarPath {
    Cartesian { x: Signal, y: Signal },
    Polar { radius: f64, angle: Signal },
}

impl PlanarPath {
    /// Position, velocity and acceleration in the base plane.
    fn eval(&self, t: f64) -> [[f64; 2]; 3] {
        match self {
            PlanarPath::Cartesian { x, y } => {
                let (x, y) = (x.eval(t), y.eval(t));
                [[x[0], y[0]], [x[1], y[1]], [x[2], y[2]]]
            }
            PlanarPath::Polar { radius: r, angle } => {
                let [a, da, dda] = angle.eval(t);
                let (s, c) = a.sin_cos();
                [
                    [r * c, r * s],
                    [-r * da * s, r * da * c],
                    [-r * dda * s - r * da * da * c, r * dda * c - r * da * da * s],
                ]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Rotation from the base frame to the world frame.
    pub base: Rotation3<f64>,
    pub origin: Vector3<f64>,
    pub path: PlanarPath,
    pub height: Signal,
    /// Rotation angle of the body about the base z axis.
    pub heading: Signal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub a: Vector3<f64>,
    /// Body-to-world rotation.
    pub r_wb: Rotation3<f64>,
    /// Body angular velocity in the body frame.
    pub omega: Vector3<f64>,
    pub omega_dot: Vector3<f64>,
}

impl Trajectory {
    pub fn sample(&self, t: f64) -> TrajectoryPoint {
        let [pp, pv, pa] = self.path.eval(t);
        let h = self.height.eval(t);
        let lift = |xy: [f64; 2], z: f64| self.base * Vector3::new(xy[0], xy[1], z);
        let [psi, dpsi, ddpsi] = self.heading.eval(t);
        TrajectoryPoint {
            t,
            p: self.origin + lift(pp, h[0]),
            v: lift(pv, h[1]),
            a: lift(pa, h[2]),
            r_wb: self.base * Rotation3::from_axis_angle(&Vector3::z_axis(), psi),
            omega: Vector3::new(0.0, 0.0, dpsi),
            omega_dot: Vector3::new(0.0, 0.0, ddpsi),
        }
    }

    /// Base-frame coordinates to world coordinates.
    pub fn base_to_world(&self, local: &Vector3<f64>) -> Vector3<f64> {
        self.origin + self.base * local
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrajectoryKind {
    SlopeLine,
    SlopeLemniscate,
    SlopeCircle,
    CircleConstVel,
    CylinderConstAccel,
    CircleVaryingRate,
    CylinderVaryingAccel,
}

impl TrajectoryKind {
    pub const ALL: [TrajectoryKind; 7] = [
        TrajectoryKind::SlopeLine,
        TrajectoryKind::SlopeLemniscate,
        TrajectoryKind::SlopeCircle,
        TrajectoryKind::CircleConstVel,
        TrajectoryKind::CylinderConstAccel,
        TrajectoryKind::CircleVaryingRate,
        TrajectoryKind::CylinderVaryingAccel,
    ];

    /// Scenario name used on the command line and in output files.
    pub fn name(self) -> &'static str {
        match self {
            TrajectoryKind::SlopeLine => "slope_line",
            TrajectoryKind::SlopeLemniscate => "slope_lemniscate",
            TrajectoryKind::SlopeCircle => "slope_circle",
            TrajectoryKind::CircleConstVel => "case_a",
            TrajectoryKind::CylinderConstAccel => "case_b",
            TrajectoryKind::CircleVaryingRate => "case_c",
            TrajectoryKind::CylinderVaryingAccel => "case_d",
        }
    }

    pub fn is_slope(self) -> bool {
        matches!(
            self,
            TrajectoryKind::SlopeLine | TrajectoryKind::SlopeLemniscate | TrajectoryKind::SlopeCircle
        )
    }
}

impl std::str::FromStr for TrajectoryKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        TrajectoryKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SimError::UnknownKind(s.to_string()))
    }
}

pub const SLOPE_ANGLE: f64 = FRAC_PI_6;

/// Vertical acceleration of the constant-acceleration cylinder.
pub const CYLINDER_ACCEL: f64 = 0.015;

const CIRCLE_RADIUS: f64 = 1.5;
const CIRCLE_RATE: f64 = 0.5;

fn circle(rate: Signal) -> (PlanarPath, Signal) {
    // Heading follows the tangent, so body velocity stays along body x.
    let mut heading = rate.clone();
    heading.poly[0] += FRAC_PI_2;
    (
        PlanarPath::Polar {
            radius: CIRCLE_RADIUS,
            angle: rate,
        },
        heading,
    )
}

/// Closed-form trajectory for a scenario kind. `duration` sets the vertical
/// profile of the constant-acceleration cylinder, which descends and returns
/// to its start height at the end of the run.
pub fn generate_trajectory(kind: TrajectoryKind, duration: f64) -> Trajectory {
    let tilted = Rotation3::from_axis_angle(&Vector3::x_axis(), SLOPE_ANGLE);
    let level = Rotation3::identity();
    let flat = Signal::constant(0.0);
    let (base, path, height, heading) = match kind {
        TrajectoryKind::SlopeLine => (
            tilted,
            PlanarPath::Cartesian {
                x: Signal::default().plus_sine(1.5, 0.8, 0.0).plus_sine(0.5, 1.9, 0.4),
                y: Signal::default().plus_sine(0.4, 0.8, 0.0).plus_sine(0.1333, 1.9, 0.4),
            },
            flat,
            Signal::constant(0.3),
        ),
        TrajectoryKind::SlopeLemniscate => (
            tilted,
            PlanarPath::Cartesian {
                x: Signal::default().plus_sine(2.0, 0.4, 0.0),
                y: Signal::default().plus_sine(0.6, 0.8, 0.0),
            },
            flat,
            Signal::constant(0.2).plus_sine(0.9, 0.9, 0.0).plus_sine(0.4, 1.7, 0.5),
        ),
        TrajectoryKind::SlopeCircle => {
            let (path, heading) = circle(Signal::linear(0.0, CIRCLE_RATE));
            (tilted, path, flat, heading)
        }
        TrajectoryKind::CircleConstVel => {
            let (path, heading) = circle(Signal::linear(0.0, CIRCLE_RATE));
            (level, path, flat, heading)
        }
        TrajectoryKind::CylinderConstAccel => {
            let (path, heading) = circle(Signal::linear(0.0, CIRCLE_RATE));
            let a = CYLINDER_ACCEL;
            let height = Signal {
                poly: [0.0, -a * duration / 2.0, a / 2.0],
                sines: vec![],
            };
            (level, path, height, heading)
        }
        TrajectoryKind::CircleVaryingRate => {
            let (path, heading) = circle(Signal::linear(0.0, CIRCLE_RATE).plus_sine(0.8, 0.7, 0.0));
            (level, path, flat, heading)
        }
        TrajectoryKind::CylinderVaryingAccel => {
            let (path, heading) = circle(Signal::linear(0.0, CIRCLE_RATE));
            (level, path, Signal::default().plus_sine(0.8, 0.6, 0.0), heading)
        }
    };
    Trajectory {
        base,
        origin: Vector3::zeros(),
        path,
        height,
        heading,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_circle_has_constant_rate_about_plane_normal() {
        let traj = generate_trajectory(TrajectoryKind::SlopeCircle, 60.0);
        let normal = traj.base * Vector3::z();
        for k in 0..20 {
            let s = traj.sample(k as f64 * 1.7);
            assert!((s.omega.norm() - CIRCLE_RATE).abs() < 1e-12);
            assert!(((s.r_wb * Vector3::z()) - normal).norm() < 1e-12);
            // Velocity stays in the slope plane.
            assert!(s.v.dot(&normal).abs() < 1e-12);
        }
    }

    #[test]
    fn case_a_has_constant_body_rate_and_velocity() {
        let traj = generate_trajectory(TrajectoryKind::CircleConstVel, 60.0);
        let first = traj.sample(0.0);
        let vb0 = first.r_wb.inverse() * first.v;
        for k in 1..20 {
            let s = traj.sample(k as f64 * 2.3);
            assert!((s.omega - first.omega).norm() < 1e-12);
            assert!((s.r_wb.inverse() * s.v - vb0).norm() < 1e-12);
        }
    }

    #[test]
    fn case_b_body_acceleration_is_constant() {
        let traj = generate_trajectory(TrajectoryKind::CylinderConstAccel, 60.0);
        let ab = |t: f64| {
            let s = traj.sample(t);
            s.r_wb.inverse() * s.a
        };
        let a0 = ab(0.0);
        for k in 1..20 {
            assert!((ab(k as f64 * 2.9) - a0).norm() < 1e-12);
        }
        assert!((traj.sample(60.0).p.z).abs() < 1e-9);
    }
}
