//! Numerical check of the symbolic model's Lie derivatives against finite
//! differences of the outputs along a simulated trajectory.

use nalgebra::{UnitQuaternion, Vector3};
use noct_core::expr::{Evaluator, Expr, Point};
use noct_core::models::vio_system;
use noct_core::observability::lie_derivative;
use noct_core::system::AffineControlSystem;
use num_rational::BigRational;
use num_traits::ToPrimitive;

use crate::measurements::{gravity_world, ideal_imu, landmark_in_camera, Truth};

/// Floor on the denominator of the relative error, so that outputs with a
/// vanishing rate (the gravity norm) compare on an absolute scale.
pub const REL_FLOOR: f64 = 1e-3;

/// Central-difference step in seconds.
pub const FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct LieSample {
    pub t: f64,
    pub output: String,
    pub finite_difference: f64,
    pub lie: f64,
    pub rel_error: f64,
}

/// Values of the model state and inputs at time `t` for one landmark.
pub fn model_point(truth: &Truth, t: f64, landmark: &Vector3<f64>) -> Vec<(String, f64)> {
    let s = truth.trajectory.sample(t);
    let rt = s.r_wb.inverse();
    let v = rt * s.v;
    let g = rt * gravity_world();
    let r_cb = truth.r_bc.inverse();
    let pcb = -(r_cb * truth.p_bc);
    let q = UnitQuaternion::from_rotation_matrix(&r_cb);
    let qt = q.imag() / q.w;
    let pc = landmark_in_camera(&s, &truth.r_bc, &truth.p_bc, landmark);
    let (w, a) = ideal_imu(&s, &truth.bg, &truth.ba);
    let mut out = vec![];
    let mut put3 = |p: &str, x: Vector3<f64>| {
        for (axis, val) in ["x", "y", "z"].iter().zip(x.iter()) {
            out.push((format!("{p}_{axis}"), *val));
        }
    };
    put3("v", v);
    put3("g", g);
    put3("bg", truth.bg);
    put3("ba", truth.ba);
    put3("pcb", pcb);
    put3("q", qt);
    put3("w", w);
    put3("a", a);
    out.push(("gamma_1".into(), pc.x / pc.z));
    out.push(("gamma_2".into(), pc.y / pc.z));
    out.push(("rho".into(), 1.0 / pc.z));
    out.push(("g".into(), gravity_world().norm()));
    out
}

fn outputs_at(truth: &Truth, t: f64, landmark: &Vector3<f64>) -> [f64; 3] {
    let s = truth.trajectory.sample(t);
    let pc = landmark_in_camera(&s, &truth.r_bc, &truth.p_bc, landmark);
    let g = s.r_wb.inverse() * gravity_world();
    [pc.x / pc.z, pc.y / pc.z, g.norm_squared()]
}

pub struct LieChecker {
    sys: AffineControlSystem,
    /// `derivs[o][j]` is the Lie derivative of output `o` along field `j`.
    derivs: Vec<Vec<Expr>>,
}

impl Default for LieChecker {
    fn default() -> Self {
        Self::new()
    }
}

impl LieChecker {
    pub fn new() -> Self {
        let sys = vio_system();
        let derivs = sys
            .outputs
            .iter()
            .map(|(_, h)| {
                (0..sys.field_count())
                    .map(|j| lie_derivative(&sys, h, &[j]).expect("field index in range"))
                    .collect()
            })
            .collect();
        LieChecker { sys, derivs }
    }

    /// Compare `dh/dt` by central differences with `L_f0 h + Σ uᵢ L_fi h`
    /// evaluated exactly at the sampled state.
    pub fn check(&self, truth: &Truth, t: f64, landmark: &Vector3<f64>) -> Vec<LieSample> {
        let values = model_point(truth, t, landmark);
        let mut point = Point::new();
        for (name, x) in &values {
            point.insert(name, BigRational::from_float(*x).expect("finite state value"));
        }
        let lookup = |n: &str| values.iter().find(|(k, _)| k == n).map(|(_, x)| *x).unwrap();
        let mut ev = Evaluator::new(&point);
        let plus = outputs_at(truth, t + FD_STEP, landmark);
        let minus = outputs_at(truth, t - FD_STEP, landmark);
        self.sys
            .outputs
            .iter()
            .enumerate()
            .map(|(o, (name, _))| {
                let mut lie = ev.eval(&self.derivs[o][0]).expect("no pole on the trajectory").to_f64().unwrap();
                for (i, u) in self.sys.inputs.iter().enumerate() {
                    let l = ev.eval(&self.derivs[o][i + 1]).expect("no pole on the trajectory");
                    lie += lookup(u) * l.to_f64().unwrap();
                }
                let fd = (plus[o] - minus[o]) / (2.0 * FD_STEP);
                LieSample {
                    t,
                    output: name.clone(),
                    finite_difference: fd,
                    lie,
                    rel_error: (fd - lie).abs() / lie.abs().max(REL_FLOOR),
                }
            })
            .collect()
    }
}

/// The landmark closest to the optical axis at time `t`, among those in
/// front of the camera.
pub fn central_landmark(truth: &Truth, t: f64) -> Option<Vector3<f64>> {
    let s = truth.trajectory.sample(t);
    truth
        .landmarks
        .iter()
        .map(|l| (l, landmark_in_camera(&s, &truth.r_bc, &truth.p_bc, l)))
        .filter(|(_, pc)| pc.z > 0.5)
        .min_by(|a, b| {
            let off = |pc: &Vector3<f64>| (pc.x / pc.z).hypot(pc.y / pc.z);
            off(&a.1).total_cmp(&off(&b.1))
        })
        .map(|(l, _)| *l)
}

/// Lie-derivative samples at `instants` evenly spaced times.
pub fn cross_check_trajectory(checker: &LieChecker, truth: &Truth, duration: f64, instants: usize) -> Vec<LieSample> {
    (0..instants)
        .flat_map(|k| {
            let t = 0.5 + k as f64 * (duration - 1.0) / instants as f64;
            let l = central_landmark(truth, t).expect("a landmark in front of the camera");
            checker.check(truth, t, &l)
        })
        .collect()
}
