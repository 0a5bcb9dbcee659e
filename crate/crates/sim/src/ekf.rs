//! Error-state EKF with point landmarks kept in the state.
//!
//! Each camera frame also clones the IMU pose into the state. Features are
//! tracked across the clone window and enter the state once they have
//! enough parallax, with their correlations taken from the whole window.
//!
//! Error conventions: position, velocity, biases, camera offset, time offset
//! and landmarks are additive. Attitude errors are world-frame rotation
//! vectors, `R = Exp(δθ)·R̂`, and the extrinsic rotation error lives in the
//! IMU frame, `R_BC = Exp(δφ)·R̂_BC`.
//!
//! Between camera frames only the 15 IMU error states evolve, so their
//! transition matrix and noise are accumulated on the side and applied to the
//! full covariance once per frame.
//!
//! Jacobians use first estimates: landmarks are linearized at their initial
//! position, and the attitude columns of the transition matrix are rebuilt
//! from the pre-update state at the start of each interval. Without this the
//! filter gains information along yaw and global translation.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, Quaternion, SMatrix, UnitQuaternion, Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::measurements::{gravity_world, CameraFrame, ImuSample, MeasurementStream, Truth};
use crate::scenario::{NoiseConfig, SimScenario, TimeOffset};
use crate::SimError;

type M15 = SMatrix<f64, 15, 15>;

const P: usize = 0;
const TH: usize = 3;
const V: usize = 6;
const BG: usize = 9;
const BA: usize = 12;
const IMU: usize = 15;

/// Initial standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub position: f64,
    pub attitude: f64,
    pub velocity: f64,
    pub gyro_bias: f64,
    pub accel_bias: f64,
    pub extrinsic_position: f64,
    pub extrinsic_attitude: f64,
    pub time_offset: f64,
}

impl Default for Prior {
    fn default() -> Self {
        Prior {
            position: 0.01,
            attitude: 0.005,
            velocity: 0.05,
            gyro_bias: 0.002,
            accel_bias: 0.02,
            extrinsic_position: 0.1,
            extrinsic_attitude: 0.03,
            time_offset: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub gyro_noise: f64,
    pub accel_noise: f64,
    /// Bias random-walk densities assumed by the filter.
    pub gyro_walk: f64,
    pub accel_walk: f64,
    pub pixel: f64,
    pub gravity: f64,
    pub prior: Prior,
    pub estimate_extrinsics: bool,
    pub max_landmarks: usize,
    /// Half-width in seconds of the gyro average used in the time-offset
    /// Jacobians. Instantaneous readings let gyro noise leak information
    /// into the time offset.
    pub rate_window: f64,
    /// Number of past IMU poses kept for delayed landmark initialization.
    pub clone_window: usize,
    /// Minimum angle between the first and latest bearing before a feature
    /// is triangulated.
    pub min_parallax: f64,
    /// Probability level of the chi-squared gate applied to each feature's
    /// innovation. Features outside the gate are skipped.
    pub chi2_quantile: f64,
    /// Hard cap on the IMU-state NEES before the run is declared diverged.
    pub nees_cap: f64,
    /// Compute the covariance spectrum after every update.
    pub check_eigenvalues: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        let n = NoiseConfig::default();
        FilterConfig {
            gyro_noise: n.gyro,
            accel_noise: n.accel,
            gyro_walk: 1e-5,
            accel_walk: 1e-4,
            pixel: n.pixel,
            gravity: crate::measurements::GRAVITY,
            prior: Prior::default(),
            estimate_extrinsics: true,
            max_landmarks: 24,
            clone_window: 12,
            rate_window: 0.1,
            min_parallax: 3f64.to_radians(),
            chi2_quantile: 0.95,
            nees_cap: 1e6,
            check_eigenvalues: false,
        }
    }
}

impl FilterConfig {
    /// Filter tuned to a scenario's noise. Zero noise settings are floored so
    /// the filter stays well posed.
    pub fn for_scenario(sc: &SimScenario) -> Self {
        let d = FilterConfig::default();
        let floor = |x: f64, f: f64| x.max(f);
        let mut prior = d.prior;
        prior.gyro_bias = floor(sc.noise.gyro_bias_std, 1e-4);
        prior.accel_bias = floor(sc.noise.accel_bias_std, 1e-3);
        if let TimeOffset::Random(s) = sc.time_offset {
            prior.time_offset = floor(s, 1e-4);
        }
        FilterConfig {
            gyro_noise: floor(sc.noise.gyro, 1e-6),
            accel_noise: floor(sc.noise.accel, 1e-5),
            pixel: floor(sc.noise.pixel, 1e-5),
            prior,
            estimate_extrinsics: sc.estimate_extrinsics,
            ..d
        }
    }

    fn td_index(&self) -> usize {
        if self.estimate_extrinsics {
            IMU + 6
        } else {
            IMU
        }
    }

    /// Size of the non-landmark part of the error state.
    pub fn core_dim(&self) -> usize {
        self.td_index() + 1
    }

    /// Scalar variable names, in error-state order.
    pub fn variables(&self) -> Vec<String> {
        let mut blocks = vec!["p_WB", "q_WB", "v_W", "b_g", "b_a"];
        if self.estimate_extrinsics {
            blocks.extend(["p_BC", "q_BC"]);
        }
        let mut out: Vec<String> = blocks
            .iter()
            .flat_map(|b| ["x", "y", "z"].map(|a| format!("{b}_{a}")))
            .collect();
        out.push("t_d".into());
        out
    }
}

/// Mean of the non-landmark states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nominal {
    pub time: f64,
    pub p: Vector3<f64>,
    pub q_wb: UnitQuaternion<f64>,
    pub v: Vector3<f64>,
    pub bg: Vector3<f64>,
    pub ba: Vector3<f64>,
    pub p_bc: Vector3<f64>,
    pub q_bc: UnitQuaternion<f64>,
    pub t_d: f64,
}

impl Nominal {
    /// True state at time `t`.
    pub fn from_truth(truth: &Truth, t: f64) -> Self {
        let s = truth.trajectory.sample(t);
        Nominal {
            time: t,
            p: s.p,
            q_wb: UnitQuaternion::from_rotation_matrix(&s.r_wb),
            v: s.v,
            bg: truth.bg,
            ba: truth.ba,
            p_bc: truth.p_bc,
            q_bc: UnitQuaternion::from_rotation_matrix(&truth.r_bc),
            t_d: truth.t_d,
        }
    }

    /// Initial estimate at time zero. The navigation state starts at the
    /// truth, biases and time offset at their prior means (zero), and the
    /// extrinsics at a draw from their prior when they are estimated.
    pub fn initial(truth: &Truth, cfg: &FilterConfig, rng: &mut impl Rng) -> Self {
        let prior = &cfg.prior;
        let mut n = Nominal::from_truth(truth, 0.0);
        let mut draw = |s: f64| -> Vector3<f64> {
            Vector3::from_fn(|_, _| {
                let z: f64 = StandardNormal.sample(rng);
                z * s
            })
        };
        if cfg.estimate_extrinsics {
            n.p_bc += draw(prior.extrinsic_position);
            n.q_bc = UnitQuaternion::from_scaled_axis(draw(prior.extrinsic_attitude)) * n.q_bc;
        }
        n.bg = Vector3::zeros();
        n.ba = Vector3::zeros();
        n.t_d = 0.0;
        n
    }

    /// `truth − estimate` in error-state coordinates, without landmarks.
    pub fn error_from(&self, truth: &Nominal, with_extrinsics: bool) -> Vec<f64> {
        let mut e = Vec::with_capacity(22);
        let rot = |a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>| (a * b.inverse()).scaled_axis();
        for v in [
            truth.p - self.p,
            rot(&truth.q_wb, &self.q_wb),
            truth.v - self.v,
            truth.bg - self.bg,
            truth.ba - self.ba,
        ] {
            e.extend(v.iter());
        }
        if with_extrinsics {
            e.extend((truth.p_bc - self.p_bc).iter());
            e.extend(rot(&truth.q_bc, &self.q_bc).iter());
        }
        e.push(truth.t_d - self.t_d);
        e
    }
}

/// Filter snapshot after a camera frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Epoch {
    /// Camera timestamp on the IMU clock.
    pub stamp: f64,
    pub nominal: Nominal,
    /// One standard deviation per scalar variable.
    pub sigma: Vec<f64>,
    /// Largest absolute innovation component of this frame's updates.
    pub max_innovation: f64,
    pub updates: usize,
    pub landmarks: usize,
    pub nees: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRun {
    pub variables: Vec<String>,
    pub epochs: Vec<Epoch>,
    /// Smallest covariance eigenvalue seen before flooring, when computed.
    pub min_eigenvalue: Option<f64>,
    pub floored: usize,
    pub failure: Option<SimError>,
}

/// Cubic interpolation of the IMU samples.
#[derive(Clone)]
struct ImuSignal<'a> {
    samples: &'a [ImuSample],
    rate: f64,
}

impl ImuSignal<'_> {
    fn at(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        let n = self.samples.len();
        let x = t * self.rate;
        let i = (x.floor() as isize).clamp(1, n as isize - 3) as usize;
        let s = x - (i - 1) as f64;
        let w = [
            -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0,
            s * (s - 2.0) * (s - 3.0) / 2.0,
            -s * (s - 1.0) * (s - 3.0) / 2.0,
            s * (s - 1.0) * (s - 2.0) / 6.0,
        ];
        let mut g = Vector3::zeros();
        let mut a = Vector3::zeros();
        for (k, wk) in w.iter().enumerate() {
            g += self.samples[i - 1 + k].gyro * *wk;
            a += self.samples[i - 1 + k].accel * *wk;
        }
        (g, a)
    }
}

/// Copy of the IMU pose at a camera frame, kept while features observed in
/// that frame are still being tracked.
#[derive(Debug, Clone, Copy)]
struct PoseClone {
    frame: usize,
    p: Vector3<f64>,
    q: UnitQuaternion<f64>,
    p_fej: Vector3<f64>,
    r_fej: Matrix3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    pub id: usize,
    pub pos: Vector3<f64>,
    /// Linearization point, fixed at initialization.
    fej: Vector3<f64>,
}

/// IMU state before the update of the latest frame.
#[derive(Debug, Clone, Copy)]
struct FirstEstimate {
    time: f64,
    p: Vector3<f64>,
    v: Vector3<f64>,
    r: Matrix3<f64>,
}

fn project(pc: &Vector3<f64>) -> (Vector2<f64>, Matrix2x3<f64>) {
    let iz = 1.0 / pc.z;
    (
        Vector2::new(pc.x * iz, pc.y * iz),
        Matrix2x3::new(iz, 0.0, -pc.x * iz * iz, 0.0, iz, -pc.y * iz * iz),
    )
}

#[derive(Clone)]
pub struct Ekf<'a> {
    cfg: &'a FilterConfig,
    imu: ImuSignal<'a>,
    gravity: Vector3<f64>,
    pub nominal: Nominal,
    pub landmarks: Vec<Landmark>,
    clones: Vec<PoseClone>,
    pub cov: DMatrix<f64>,
    fej: FirstEstimate,
    phi: M15,
    q: M15,
    /// Observations of features not in the state, keyed by feature id, as
    /// (frame index, image point) pairs.
    tracks: BTreeMap<usize, Vec<(usize, Vector2<f64>)>>,
    min_eigenvalue: Option<f64>,
    floored: usize,
}

impl<'a> Ekf<'a> {
    pub fn new(cfg: &'a FilterConfig, stream: &'a MeasurementStream, init: Nominal) -> Self {
        let pr = &cfg.prior;
        let mut diag = vec![];
        for s in [pr.position, pr.attitude, pr.velocity, pr.gyro_bias, pr.accel_bias] {
            diag.extend([s * s; 3]);
        }
        if cfg.estimate_extrinsics {
            diag.extend([pr.extrinsic_position.powi(2); 3]);
            diag.extend([pr.extrinsic_attitude.powi(2); 3]);
        }
        diag.push(pr.time_offset.powi(2));
        Ekf {
            cfg,
            imu: ImuSignal {
                samples: &stream.imu,
                rate: stream.imu_rate as f64,
            },
            gravity: gravity_world().normalize() * cfg.gravity,
            nominal: init,
            landmarks: vec![],
            clones: vec![],
            cov: DMatrix::from_diagonal(&DVector::from_vec(diag)),
            fej: FirstEstimate {
                time: init.time,
                p: init.p,
                v: init.v,
                r: init.q_wb.to_rotation_matrix().into_inner(),
            },
            phi: M15::identity(),
            q: M15::zeros(),
            tracks: BTreeMap::new(),
            min_eigenvalue: None,
            floored: 0,
        }
    }

    fn core(&self) -> usize {
        self.cfg.core_dim()
    }

    fn clone_index(&self, j: usize) -> usize {
        self.core() + 6 * j
    }

    fn landmark_index(&self, j: usize) -> usize {
        self.core() + 6 * self.clones.len() + 3 * j
    }

    /// Standard deviations of the non-landmark states.
    pub fn sigma(&self) -> Vec<f64> {
        (0..self.core()).map(|i| self.cov[(i, i)].max(0.0).sqrt()).collect()
    }

    fn rk4_step(&mut self, h: f64) {
        let n = &self.nominal;
        let t = n.time;
        let g = self.gravity;
        let deriv = |q: &Quaternion<f64>, v: &Vector3<f64>, t: f64| {
            let (w, a) = self.imu.at(t);
            let w = w - n.bg;
            let a = a - n.ba;
            let qd = q * Quaternion::from_imag(w) * 0.5;
            let r = UnitQuaternion::new_normalize(*q);
            (qd, r * a + g, *v)
        };
        let q0 = *n.q_wb.quaternion();
        let (v0, p0) = (n.v, n.p);
        let (k1q, k1v, k1p) = deriv(&q0, &v0, t);
        let (k2q, k2v, k2p) = deriv(&(q0 + k1q * (h / 2.0)), &(v0 + k1v * (h / 2.0)), t + h / 2.0);
        let (k3q, k3v, k3p) = deriv(&(q0 + k2q * (h / 2.0)), &(v0 + k2v * (h / 2.0)), t + h / 2.0);
        let (k4q, k4v, k4p) = deriv(&(q0 + k3q * h), &(v0 + k3v * h), t + h);
        let q1 = q0 + (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (h / 6.0);
        let n = &mut self.nominal;
        n.q_wb = UnitQuaternion::new_normalize(q1);
        n.v = v0 + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
        n.p = p0 + (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (h / 6.0);
        n.time = t + h;
    }

    fn covariance_step(&mut self, h: f64) {
        let (_, a) = self.imu.at(self.nominal.time + h / 2.0);
        let r = self.nominal.q_wb.to_rotation_matrix().into_inner();
        let acc = r * (a - self.nominal.ba);
        let mut f = M15::zeros();
        f.fixed_view_mut::<3, 3>(P, V).copy_from(&Matrix3::identity());
        f.fixed_view_mut::<3, 3>(TH, BG).copy_from(&(-r));
        f.fixed_view_mut::<3, 3>(V, TH).copy_from(&(-acc.cross_matrix()));
        f.fixed_view_mut::<3, 3>(V, BA).copy_from(&(-r));
        let fh = f * h;
        let phi = M15::identity() + fh + fh * fh * 0.5;
        let c = self.cfg;
        let mut qd = M15::zeros();
        for k in 0..3 {
            qd[(TH + k, TH + k)] = c.gyro_noise.powi(2) * h;
            qd[(V + k, V + k)] = c.accel_noise.powi(2) * h;
            qd[(BG + k, BG + k)] = c.gyro_walk.powi(2) * h;
            qd[(BA + k, BA + k)] = c.accel_walk.powi(2) * h;
        }
        self.phi = phi * self.phi;
        self.q = phi * self.q * phi.transpose() + qd;
    }

    /// Integrate the nominal state to time `to` on the IMU sample grid.
    pub fn propagate(&mut self, to: f64) {
        let rate = self.imu.rate;
        while self.nominal.time < to - 1e-12 {
            let t = self.nominal.time;
            let next = ((t * rate + 1e-9).floor() + 1.0) / rate;
            let h = next.min(to) - t;
            self.covariance_step(h);
            self.rk4_step(h);
        }
        self.flush_propagation();
    }

    /// Replace the attitude columns of the accumulated transition with their
    /// closed form between the first-estimate start and the propagated end.
    fn close_transition(&mut self) {
        let FirstEstimate { time: t0, p: p0, v: v0, .. } = self.fej;
        let nm = &self.nominal;
        let dt = nm.time - t0;
        let g = self.gravity;
        let dv = nm.v - v0 - g * dt;
        let dp = nm.p - p0 - v0 * dt - g * (0.5 * dt * dt);
        self.phi.fixed_view_mut::<3, 3>(V, TH).copy_from(&(-dv.cross_matrix()));
        self.phi.fixed_view_mut::<3, 3>(P, TH).copy_from(&(-dp.cross_matrix()));
        self.fej = FirstEstimate {
            time: nm.time,
            p: nm.p,
            v: nm.v,
            r: nm.q_wb.to_rotation_matrix().into_inner(),
        };
    }

    fn flush_propagation(&mut self) {
        self.close_transition();
        let n = self.cov.nrows();
        let phi = DMatrix::from_column_slice(IMU, IMU, self.phi.as_slice());
        let q = DMatrix::from_column_slice(IMU, IMU, self.q.as_slice());
        let pii = self.cov.view((0, 0), (IMU, IMU)).clone_owned();
        let new_ii = &phi * pii * phi.transpose() + q;
        self.cov.view_mut((0, 0), (IMU, IMU)).copy_from(&new_ii);
        if n > IMU {
            let pir = self.cov.view((0, IMU), (IMU, n - IMU)).clone_owned();
            let new_ir = &phi * pir;
            self.cov.view_mut((IMU, 0), (n - IMU, IMU)).copy_from(&new_ir.transpose());
            self.cov.view_mut((0, IMU), (IMU, n - IMU)).copy_from(&new_ir);
        }
        self.phi = M15::identity();
        self.q = M15::zeros();
    }

    /// Bias-corrected body rate averaged over the samples around the
    /// current time, for the time-offset Jacobians.
    fn body_rate(&self) -> Vector3<f64> {
        let half = (self.cfg.rate_window * self.imu.rate).round() as usize;
        if half == 0 {
            return self.imu.at(self.nominal.time).0 - self.nominal.bg;
        }
        let n = self.imu.samples.len();
        let c = (self.nominal.time * self.imu.rate).round() as usize;
        let lo = c.saturating_sub(half);
        let hi = (c + half).min(n - 1);
        let sum: Vector3<f64> = self.imu.samples[lo..=hi].iter().map(|s| s.gyro).sum();
        sum / (hi - lo + 1) as f64 - self.nominal.bg
    }

    /// Stacked residual and Jacobian for in-state landmarks seen in the
    /// current frame, against the IMU state at the frame time.
    fn linearize(&self, obs: &[(usize, Vector2<f64>)]) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.cov.nrows();
        let nm = &self.nominal;
        let r_wb = nm.q_wb.to_rotation_matrix().into_inner();
        let r_bc = nm.q_bc.to_rotation_matrix().into_inner();
        let r_wc = r_wb * r_bc;
        let p_wc = nm.p + r_wb * nm.p_bc;
        let w = self.body_rate();
        let w_c = r_bc.transpose() * w;
        let v_b = r_wb.transpose() * nm.v + w.cross(&nm.p_bc);
        let td = self.cfg.td_index();
        let mut res = DVector::zeros(2 * obs.len());
        let mut h = DMatrix::zeros(2 * obs.len(), n);
        for (row, (slot, uv)) in obs.iter().enumerate() {
            let lm = &self.landmarks[*slot];
            let (pred, _) = project(&(r_wc.transpose() * (lm.pos - p_wc)));
            let pc = r_wc.transpose() * (lm.fej - p_wc);
            let (_, jp) = project(&pc);
            let r0 = 2 * row;
            res.rows_mut(r0, 2).copy_from(&(uv - pred));
            let mut put = |col: usize, m: Matrix2x3<f64>| h.view_mut((r0, col), (2, 3)).copy_from(&m);
            put(P, -jp * r_wc.transpose());
            put(TH, jp * r_bc.transpose() * r_wb.transpose() * (lm.fej - nm.p).cross_matrix());
            if self.cfg.estimate_extrinsics {
                let wb = r_wb.transpose() * (lm.fej - nm.p) - nm.p_bc;
                put(IMU, -jp * r_bc.transpose());
                put(IMU + 3, jp * r_bc.transpose() * wb.cross_matrix());
            }
            put(self.landmark_index(*slot), jp * r_wc.transpose());
            let pc_dot = -w_c.cross(&pc) - r_bc.transpose() * v_b;
            let d = jp * pc_dot;
            h[(r0, td)] = d.x;
            h[(r0 + 1, td)] = d.y;
        }
        (res, h)
    }

    /// Camera pose of a clone, from its current estimate.
    fn clone_camera(&self, c: &PoseClone) -> (Matrix3<f64>, Vector3<f64>) {
        let r_wb = c.q.to_rotation_matrix().into_inner();
        (r_wb * self.nominal.q_bc.to_rotation_matrix().into_inner(), c.p + r_wb * self.nominal.p_bc)
    }

    /// Residual, state Jacobian and point Jacobian of one observation made
    /// from clone `slot`, linearized at the clone's first estimate and at
    /// `f_lin`.
    fn clone_observation(
        &self,
        slot: usize,
        f: &Vector3<f64>,
        f_lin: &Vector3<f64>,
        uv: &Vector2<f64>,
    ) -> (Vector2<f64>, DMatrix<f64>, Matrix2x3<f64>) {
        let c = &self.clones[slot];
        let (r_wc, p_wc) = self.clone_camera(c);
        let (pred, _) = project(&(r_wc.transpose() * (f - p_wc)));
        let r_bc = self.nominal.q_bc.to_rotation_matrix().into_inner();
        let p_bc = self.nominal.p_bc;
        let wb = c.r_fej.transpose() * (f_lin - c.p_fej) - p_bc;
        let (_, jp) = project(&(r_bc.transpose() * wb));
        let r_wc_lin = c.r_fej * r_bc;
        let mut h = DMatrix::zeros(2, self.cov.nrows());
        let mut put = |col: usize, m: Matrix2x3<f64>| h.view_mut((0, col), (2, 3)).copy_from(&m);
        let i = self.clone_index(slot);
        put(i, -jp * r_wc_lin.transpose());
        put(i + 3, jp * r_wc_lin.transpose() * (f_lin - c.p_fej).cross_matrix());
        if self.cfg.estimate_extrinsics {
            put(IMU, -jp * r_bc.transpose());
            put(IMU + 3, jp * r_bc.transpose() * wb.cross_matrix());
        }
        (uv - pred, h, jp * r_wc_lin.transpose())
    }

    /// Mahalanobis test of an innovation against its predicted covariance.
    fn passes_gate(&self, res: &DVector<f64>, h: &DMatrix<f64>) -> bool {
        let mut s = h * &self.cov.view((0, 0), (h.ncols(), h.ncols())) * h.transpose();
        for i in 0..s.nrows() {
            s[(i, i)] += self.cfg.pixel.powi(2);
        }
        let Some(chol) = s.cholesky() else {
            return false;
        };
        let limit = ChiSquared::new(res.len() as f64).expect("positive dof").inverse_cdf(self.cfg.chi2_quantile);
        res.dot(&chol.solve(res)) <= limit
    }

    fn update(&mut self, obs: &[(usize, Vector2<f64>)]) -> Result<f64, SimError> {
        let (res, h) = self.linearize(obs);
        let keep: Vec<usize> = (0..obs.len())
            .filter(|k| {
                let r = res.rows(2 * k, 2).clone_owned();
                let hk = h.rows(2 * k, 2).clone_owned();
                self.passes_gate(&r, &hk)
            })
            .collect();
        if keep.is_empty() {
            return Ok(0.0);
        }
        let rows: Vec<usize> = keep.iter().flat_map(|k| [2 * k, 2 * k + 1]).collect();
        let res = res.select_rows(&rows);
        let h = h.select_rows(&rows);
        self.kalman_update(&res, &h)?;
        Ok(res.amax())
    }

    fn kalman_update(&mut self, res: &DVector<f64>, h: &DMatrix<f64>) -> Result<(), SimError> {
        let pht = &self.cov * h.transpose();
        let mut s = h * &pht;
        for i in 0..s.nrows() {
            s[(i, i)] += self.cfg.pixel.powi(2);
        }
        let chol = s.cholesky().ok_or(SimError::SingularUpdate { time: self.nominal.time })?;
        let k = chol.solve(&pht.transpose()).transpose();
        let dx = &k * res;
        self.cov -= &k * pht.transpose();
        self.symmetrize_and_floor();
        self.correct(&dx);
        Ok(())
    }

    /// Symmetrize and, when asked or when a variance went non-positive,
    /// floor the spectrum. Right after a pose is cloned the covariance is
    /// singular by construction, so a failed Cholesky is not a fault here.
    fn symmetrize_and_floor(&mut self) {
        let sym = (&self.cov + self.cov.transpose()) * 0.5;
        self.cov = sym;
        let needs_eigen = self.cfg.check_eigenvalues || (0..self.cov.nrows()).any(|i| self.cov[(i, i)] <= 0.0);
        if !needs_eigen {
            return;
        }
        let eig = self.cov.clone().symmetric_eigen();
        let min = eig.eigenvalues.min();
        self.min_eigenvalue = Some(self.min_eigenvalue.map_or(min, |m: f64| m.min(min)));
        if min < 0.0 {
            self.floored += 1;
            let d = eig.eigenvalues.map(|x| x.max(0.0));
            self.cov = &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose();
        }
    }

    fn correct(&mut self, dx: &DVector<f64>) {
        let v3 = |i: usize| Vector3::new(dx[i], dx[i + 1], dx[i + 2]);
        let n = &mut self.nominal;
        n.p += v3(P);
        n.q_wb = UnitQuaternion::from_scaled_axis(v3(TH)) * n.q_wb;
        n.v += v3(V);
        n.bg += v3(BG);
        n.ba += v3(BA);
        if self.cfg.estimate_extrinsics {
            n.p_bc += v3(IMU);
            n.q_bc = UnitQuaternion::from_scaled_axis(v3(IMU + 3)) * n.q_bc;
        }
        n.t_d += dx[self.cfg.td_index()];
        for j in 0..self.clones.len() {
            let i = self.clone_index(j);
            let c = &mut self.clones[j];
            c.p += v3(i);
            c.q = UnitQuaternion::from_scaled_axis(v3(i + 3)) * c.q;
        }
        for j in 0..self.landmarks.len() {
            let i = self.landmark_index(j);
            self.landmarks[j].pos += v3(i);
        }
    }

    /// Insert states `y = J·x + e`, `e ~ N(0, extra)`, before index `at`.
    fn insert_states(&mut self, at: usize, jac: &DMatrix<f64>, extra: &DMatrix<f64>) {
        let n = self.cov.nrows();
        let k = jac.nrows();
        let pxy = &self.cov * jac.transpose();
        let pyy = jac * &pxy + extra;
        let mut grown = DMatrix::zeros(n + k, n + k);
        grown.view_mut((0, 0), (n, n)).copy_from(&self.cov);
        grown.view_mut((0, n), (n, k)).copy_from(&pxy);
        grown.view_mut((n, 0), (k, n)).copy_from(&pxy.transpose());
        grown.view_mut((n, n), (k, k)).copy_from(&pyy);
        if at == n {
            self.cov = grown;
        } else {
            let idx: Vec<usize> = (0..at).chain(n..n + k).chain(at..n).collect();
            self.cov = grown.select_rows(&idx).select_columns(&idx);
        }
    }

    fn remove_states(&mut self, drop: &[usize]) {
        let keep: Vec<usize> = (0..self.cov.nrows()).filter(|i| !drop.contains(i)).collect();
        self.cov = self.cov.select_rows(&keep).select_columns(&keep);
    }

    /// Drop landmarks whose ids are not in `seen`.
    fn marginalize_unseen(&mut self, seen: &BTreeMap<usize, Vector2<f64>>) {
        let drop: Vec<usize> = (0..self.landmarks.len())
            .filter(|&j| !seen.contains_key(&self.landmarks[j].id))
            .flat_map(|j| {
                let i = self.landmark_index(j);
                i..i + 3
            })
            .collect();
        if drop.is_empty() {
            return;
        }
        self.remove_states(&drop);
        self.landmarks.retain(|l| seen.contains_key(&l.id));
    }

    /// Clone the IMU pose at the frame's capture time. `kin` holds the
    /// pre-update world velocity and angular rate; the capture time moved by
    /// `shift` in the update.
    fn add_clone(&mut self, frame: usize, kin: (Vector3<f64>, Vector3<f64>), shift: f64) {
        let (v, w) = kin;
        let n = self.cov.nrows();
        let td = self.cfg.td_index();
        let mut jac = DMatrix::zeros(6, n);
        jac.view_mut((0, P), (6, 6)).fill_with_identity();
        jac.view_mut((0, td), (3, 1)).copy_from(&v);
        jac.view_mut((3, td), (3, 1)).copy_from(&w);
        let at = self.clone_index(self.clones.len());
        self.insert_states(at, &jac, &DMatrix::zeros(6, 6));
        let nm = &self.nominal;
        self.clones.push(PoseClone {
            frame,
            p: nm.p + v * shift,
            q: UnitQuaternion::from_scaled_axis(w * shift) * nm.q_wb,
            p_fej: self.fej.p,
            r_fej: self.fej.r,
        });
    }

    fn drop_oldest_clone(&mut self) {
        let i = self.clone_index(0);
        self.remove_states(&(i..i + 6).collect::<Vec<_>>());
        let frame = self.clones.remove(0).frame;
        for obs in self.tracks.values_mut() {
            obs.retain(|(f, _)| *f != frame);
        }
        self.tracks.retain(|_, obs| !obs.is_empty());
    }

    fn clone_slot(&self, frame: usize) -> Option<usize> {
        self.clones.iter().position(|c| c.frame == frame)
    }

    /// Angle between the first and last world bearings of a track.
    fn parallax(&self, obs: &[(usize, Vector2<f64>)]) -> f64 {
        let bearing = |(frame, uv): &(usize, Vector2<f64>)| {
            let c = &self.clones[self.clone_slot(*frame).expect("tracked frames have clones")];
            self.clone_camera(c).0 * Vector3::new(uv.x, uv.y, 1.0)
        };
        bearing(&obs[0]).angle(&bearing(&obs[obs.len() - 1]))
    }

    /// Move tracked features with enough parallax into the state.
    /// Returns the largest innovation component of the initialization
    /// updates.
    fn initialize_landmarks(&mut self) -> Result<f64, SimError> {
        let ready: Vec<usize> = self
            .tracks
            .iter()
            .filter(|(_, obs)| obs.len() >= 2 && self.parallax(obs) >= self.cfg.min_parallax)
            .map(|(id, _)| *id)
            .collect();
        let mut max_innovation = 0.0f64;
        for id in ready {
            if self.landmarks.len() >= self.cfg.max_landmarks {
                break;
            }
            let obs = self.tracks[&id].clone();
            if let Some(r) = self.delayed_init(id, &obs)? {
                max_innovation = max_innovation.max(r);
                self.tracks.remove(&id);
            }
        }
        Ok(max_innovation)
    }

    /// Triangulate a feature from its clone window and add it to the state.
    /// The stacked observations are split by a QR factorization of the
    /// point Jacobian: three rows define the point and the rest update the
    /// state.
    fn delayed_init(&mut self, id: usize, obs: &[(usize, Vector2<f64>)]) -> Result<Option<f64>, SimError> {
        let views: Vec<(usize, Vector2<f64>)> = obs
            .iter()
            .map(|(f, uv)| (self.clone_slot(*f).expect("tracked frames have clones"), *uv))
            .collect();
        let cams: Vec<_> = views
            .iter()
            .map(|(s, uv)| {
                let (r, p) = self.clone_camera(&self.clones[*s]);
                (r, p, *uv)
            })
            .collect();
        let Some(f) = triangulate(&cams) else {
            return Ok(None);
        };
        let m = 2 * views.len();
        let n = self.cov.nrows();
        let mut res = DVector::zeros(m);
        let mut hx = DMatrix::zeros(m, n);
        let mut hf = DMatrix::zeros(m, 3);
        for (k, (slot, uv)) in views.iter().enumerate() {
            let (r, h, jf) = self.clone_observation(*slot, &f, &f, uv);
            res.rows_mut(2 * k, 2).copy_from(&r);
            hx.rows_mut(2 * k, 2).copy_from(&h);
            hf.view_mut((2 * k, 0), (2, 3)).copy_from(&jf);
        }
        let mut aug = DMatrix::zeros(m, 3 + m);
        aug.columns_mut(0, 3).copy_from(&hf);
        aug.columns_mut(3, m).fill_with_identity();
        let q = aug.qr().q();
        let q1 = q.columns(0, 3);
        let r1 = q1.transpose() * &hf;
        let Some(r1_inv) = r1.try_inverse() else {
            return Ok(None);
        };
        let q2 = q.columns(3, m - 3);
        let r2 = q2.transpose() * &res;
        let h2 = q2.transpose() * &hx;
        if m > 3 && !self.passes_gate(&r2, &h2) {
            return Ok(None);
        }
        let sigma2 = self.cfg.pixel.powi(2);
        let jac = -&r1_inv * (q1.transpose() * &hx);
        let extra = &r1_inv * r1_inv.transpose() * sigma2;
        let pos = f + &r1_inv * (q1.transpose() * &res);
        self.insert_states(n, &jac, &extra);
        self.landmarks.push(Landmark { id, pos, fej: f });
        if m > 3 {
            let mut padded = DMatrix::zeros(m - 3, n + 3);
            padded.columns_mut(0, n).copy_from(&h2);
            self.kalman_update(&r2, &padded)?;
        }
        Ok(Some(r2.amax()))
    }

    /// Process one camera frame whose capture time on the filter's clock is
    /// `stamp + t̂_d`. Returns `None` if that time is already behind the
    /// filter.
    pub fn process_frame(&mut self, frame: &CameraFrame) -> Result<Option<(f64, usize)>, SimError> {
        let target = frame.stamp + self.nominal.t_d;
        if target <= self.nominal.time {
            return Ok(None);
        }
        self.propagate(target);
        let td_prior = self.nominal.t_d;
        let kin = (self.nominal.v, self.nominal.q_wb * self.body_rate());
        let seen: BTreeMap<usize, Vector2<f64>> = frame.features.iter().map(|f| (f.id, f.uv)).collect();
        let obs: Vec<(usize, Vector2<f64>)> = self
            .landmarks
            .iter()
            .enumerate()
            .filter_map(|(slot, l)| seen.get(&l.id).map(|uv| (slot, *uv)))
            .collect();
        let max_innovation = if obs.is_empty() { 0.0 } else { self.update(&obs)? };
        self.marginalize_unseen(&seen);
        self.add_clone(frame.index, kin, self.nominal.t_d - td_prior);

        let mut tracks = std::mem::take(&mut self.tracks);
        tracks.retain(|id, _| seen.contains_key(id));
        for (id, uv) in &seen {
            if !self.landmarks.iter().any(|l| l.id == *id) {
                tracks.entry(*id).or_default().push((frame.index, *uv));
            }
        }
        self.tracks = tracks;
        let max_innovation = max_innovation.max(self.initialize_landmarks()?);
        if self.clones.len() > self.cfg.clone_window {
            self.drop_oldest_clone();
        }
        Ok(Some((max_innovation, obs.len())))
    }

    /// NEES of the IMU states against a reference.
    pub fn nees(&self, truth: &Nominal) -> f64 {
        let e = self.nominal.error_from(truth, false);
        let e = DVector::from_column_slice(&e[..IMU]);
        let p = self.cov.view((0, 0), (IMU, IMU)).clone_owned();
        match p.cholesky() {
            Some(c) => e.dot(&c.solve(&e)),
            None => f64::INFINITY,
        }
    }

    fn snapshot(&self, stamp: f64, max_innovation: f64, updates: usize, nees: f64) -> Epoch {
        Epoch {
            stamp,
            nominal: self.nominal,
            sigma: self.sigma(),
            max_innovation,
            updates,
            landmarks: self.landmarks.len(),
            nees,
        }
    }
}

/// Least-squares point from camera poses and normalized image points:
/// closest point to the rays, refined by Gauss-Newton on the reprojection
/// error. Fails if the point ends up near or behind a camera.
fn triangulate(views: &[(Matrix3<f64>, Vector3<f64>, Vector2<f64>)]) -> Option<Vector3<f64>> {
    let mut a = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for (r, c, uv) in views {
        let b = (r * Vector3::new(uv.x, uv.y, 1.0)).normalize();
        let m = Matrix3::identity() - b * b.transpose();
        a += m;
        rhs += m * c;
    }
    let mut x = a.cholesky()?.solve(&rhs);
    for _ in 0..5 {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (r, c, uv) in views {
            let pc = r.transpose() * (x - c);
            if pc.z <= 0.2 {
                return None;
            }
            let (pred, jp) = project(&pc);
            let j = jp * r.transpose();
            jtj += j.transpose() * j;
            jtr += j.transpose() * (uv - pred);
        }
        x += jtj.cholesky()?.solve(&jtr);
    }
    views.iter().all(|(r, c, _)| (r.transpose() * (x - c)).z > 0.2).then_some(x)
}

/// Run the filter over a whole stream. The first epoch holds the prior.
/// On failure the epochs processed so far are kept.
pub fn run_ekf(stream: &MeasurementStream, cfg: &FilterConfig, init: Nominal) -> FilterRun {
    let mut run = FilterRun {
        variables: cfg.variables(),
        epochs: vec![],
        min_eigenvalue: None,
        floored: 0,
        failure: None,
    };
    if stream.frames.windows(2).any(|w| w[1].stamp <= w[0].stamp) || stream.imu.len() < 4 {
        run.failure = Some(SimError::InvalidStream);
        return run;
    }
    let mut ekf = Ekf::new(cfg, stream, init);
    let truth0 = Nominal::from_truth(&stream.truth, ekf.nominal.time);
    run.epochs.push(ekf.snapshot(0.0, 0.0, 0, ekf.nees(&truth0)));
    for frame in &stream.frames {
        let step = ekf.process_frame(frame);
        let (max_innovation, updates) = match step {
            Ok(Some(x)) => x,
            Ok(None) => continue,
            Err(e) => {
                run.failure = Some(e);
                break;
            }
        };
        let truth = Nominal::from_truth(&stream.truth, ekf.nominal.time);
        let nees = ekf.nees(&truth);
        run.epochs.push(ekf.snapshot(frame.stamp, max_innovation, updates, nees));
        if !(nees <= cfg.nees_cap) {
            run.failure = Some(SimError::FilterDiverged {
                time: ekf.nominal.time,
                nees,
            });
            break;
        }
    }
    run.min_eigenvalue = ekf.min_eigenvalue;
    run.floored = ekf.floored;
    run
}
