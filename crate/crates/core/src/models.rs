//! Built-in visual-inertial model with a single landmark, its degenerate
//! motion constraint presets, and the analysis results expected for each.
//!
//! State, in order: body-frame velocity `v`, body-frame gravity `g`, gyro
//! and accelerometer biases, camera-from-IMU translation `pcb`, trimmed
//! quaternion `q` of the camera-from-IMU rotation, landmark normalized
//! coordinates `gamma` and inverse depth `rho`. Inputs are the raw gyro and
//! accelerometer readings.

use thiserror::Error;

use crate::expr::Expr;
use crate::system::{AffineControlSystem, Constraint};

pub const VIO_STATE: [&str; 21] = [
    "v_x", "v_y", "v_z", "g_x", "g_y", "g_z", "bg_x", "bg_y", "bg_z", "ba_x", "ba_y", "ba_z", "pcb_x", "pcb_y", "pcb_z",
    "q_x", "q_y", "q_z", "gamma_1", "gamma_2", "rho",
];

pub const VIO_INPUTS: [&str; 6] = ["w_x", "w_y", "w_z", "a_x", "a_y", "a_z"];

/// Names of the unknown constants introduced by [`VioConstraintKind::ConstLocalAccel`].
pub const ACCEL_PARAMS: [&str; 3] = ["d_x", "d_y", "d_z"];

const AXES: [&str; 3] = ["x", "y", "z"];

type V3 = [Expr; 3];

fn var3(prefix: &str) -> V3 {
    AXES.map(|a| Expr::var(&format!("{prefix}_{a}")))
}

fn cross(a: &V3, b: &V3) -> V3 {
    [
        a[1].mul(&b[2]).sub(&a[2].mul(&b[1])),
        a[2].mul(&b[0]).sub(&a[0].mul(&b[2])),
        a[0].mul(&b[1]).sub(&a[1].mul(&b[0])),
    ]
}

fn unit(i: usize) -> V3 {
    std::array::from_fn(|k| if k == i { Expr::one() } else { Expr::zero() })
}

fn scale(s: &Expr, a: &V3) -> V3 {
    a.clone().map(|x| s.mul(&x))
}

fn neg(a: &V3) -> V3 {
    a.clone().map(|x| x.neg())
}

/// Numerator of the rotation matrix for the quaternion `(1, q_x, q_y, q_z)`.
/// The rotation is this matrix divided by [`rotation_denominator`].
pub fn rotation_numerator(q: &V3) -> [V3; 3] {
    let [x, y, z] = q;
    let two = Expr::int(2);
    let sq = |e: &Expr| e.pow(2);
    let one = Expr::one();
    [
        [
            Expr::sum([one.clone(), sq(x), sq(y).neg(), sq(z).neg()]),
            two.mul(&x.mul(y).sub(z)),
            two.mul(&x.mul(z).add(y)),
        ],
        [
            two.mul(&x.mul(y).add(z)),
            Expr::sum([one.clone(), sq(x).neg(), sq(y), sq(z).neg()]),
            two.mul(&y.mul(z).sub(x)),
        ],
        [
            two.mul(&x.mul(z).sub(y)),
            two.mul(&y.mul(z).add(x)),
            Expr::sum([one, sq(x).neg(), sq(y).neg(), sq(z)]),
        ],
    ]
}

pub fn rotation_denominator(q: &V3) -> Expr {
    Expr::sum([Expr::one(), q[0].pow(2), q[1].pow(2), q[2].pow(2)])
}

/// Rational rotation matrix of the trimmed quaternion.
pub fn rotation(q: &V3) -> [V3; 3] {
    let den = rotation_denominator(q);
    rotation_numerator(q).map(|row| row.map(|e| e.div(&den)))
}

fn mat_vec(m: &[V3; 3], v: &V3) -> V3 {
    std::array::from_fn(|i| Expr::dot(&m[i], v))
}

pub fn vio_system() -> AffineControlSystem {
    let v = var3("v");
    let g = var3("g");
    let bg = var3("bg");
    let ba = var3("ba");
    let p = var3("pcb");
    let q = var3("q");
    let gamma = [Expr::var("gamma_1"), Expr::var("gamma_2")];
    let rho = Expr::var("rho");
    let r = rotation(&q);

    // ρ p − γ̄
    let lever: V3 = [
        rho.mul(&p[0]).sub(&gamma[0]),
        rho.mul(&p[1]).sub(&gamma[1]),
        rho.mul(&p[2]).sub(&Expr::one()),
    ];
    // C_γρ applied to a 3-vector: [w₁ − γ₁w₃, w₂ − γ₂w₃, −ρw₃]
    let c_gr = |w: V3| -> [Expr; 3] {
        [
            w[0].sub(&gamma[0].mul(&w[2])),
            w[1].sub(&gamma[1].mul(&w[2])),
            rho.mul(&w[2]).neg(),
        ]
    };
    // Landmark rate for a body angular rate `w` (linear in `w`).
    let landmark = |w: &V3| c_gr(cross(&mat_vec(&r, w), &lever));

    let zero3 = || [Expr::zero(), Expr::zero(), Expr::zero()];
    let stack = |parts: [&[Expr]; 7]| -> Vec<Expr> { parts.concat() };

    let nbg = neg(&bg);
    let v_dot0: V3 = std::array::from_fn(|k| Expr::sum([cross(&v, &nbg)[k].clone(), ba[k].neg(), g[k].clone()]));
    let g_dot0 = cross(&g, &nbg);
    let lm_v = c_gr(scale(&rho, &mat_vec(&r, &v)));
    let lm_bg = landmark(&nbg);
    let lm0: Vec<Expr> = (0..3).map(|k| lm_bg[k].sub(&lm_v[k])).collect();
    let z6 = vec![Expr::zero(); 6];
    let z3 = zero3();
    let drift = stack([&v_dot0, &g_dot0, &z6, &z3, &z3, &lm0, &[]]);

    let mut fields = Vec::new();
    for i in 0..3 {
        let e = unit(i);
        let lm = landmark(&e);
        fields.push(stack([&cross(&v, &e), &cross(&g, &e), &z6, &z3, &z3, &lm, &[]]));
    }
    for i in 0..3 {
        fields.push(stack([&unit(i), &z3, &z6, &z3, &z3, &z3, &[]]));
    }

    AffineControlSystem {
        state: VIO_STATE.iter().map(|s| s.to_string()).collect(),
        inputs: VIO_INPUTS.iter().map(|s| s.to_string()).collect(),
        constants: vec!["g".to_string()],
        drift,
        fields,
        outputs: vec![
            ("gamma_1".to_string(), gamma[0].clone()),
            ("gamma_2".to_string(), gamma[1].clone()),
            ("g_norm2".to_string(), Expr::dot(&g, &g)),
        ],
        constraints: Vec::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VioConstraintKind {
    /// Constant body-frame specific force plus gravity.
    ConstLocalAccel,
    /// Rotation about the IMU z axis only.
    SingleAxisZ,
    /// No rotation.
    PureTranslation,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown constraint preset '{0}' (expected const_local_accel, single_axis_z or pure_translation)")]
pub struct UnknownKind(pub String);

impl VioConstraintKind {
    pub const ALL: [VioConstraintKind; 3] = [
        VioConstraintKind::ConstLocalAccel,
        VioConstraintKind::SingleAxisZ,
        VioConstraintKind::PureTranslation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VioConstraintKind::ConstLocalAccel => "const_local_accel",
            VioConstraintKind::SingleAxisZ => "single_axis_z",
            VioConstraintKind::PureTranslation => "pure_translation",
        }
    }
}

impl std::str::FromStr for VioConstraintKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VioConstraintKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| UnknownKind(s.to_string()))
    }
}

pub fn vio_constraints(kind: VioConstraintKind) -> Vec<Constraint> {
    let gyro = |k: usize| {
        // 0 = w_k − bg_k
        Constraint::zero_affine(Expr::var(&format!("bg_{}", AXES[k])).neg(), vec![(VIO_INPUTS[k], Expr::one())])
            .solving_for(VIO_INPUTS[k])
    };
    match kind {
        VioConstraintKind::ConstLocalAccel => (0..3)
            .map(|k| {
                // d_k = a_k − ba_k + g_k
                let c0 = Expr::var(&format!("g_{}", AXES[k])).sub(&Expr::var(&format!("ba_{}", AXES[k])));
                Constraint::const_affine(c0, vec![(VIO_INPUTS[3 + k], Expr::one())], ACCEL_PARAMS[k])
                    .solving_for(VIO_INPUTS[3 + k])
            })
            .collect(),
        VioConstraintKind::SingleAxisZ => (0..2).map(gyro).collect(),
        VioConstraintKind::PureTranslation => (0..3).map(gyro).collect(),
    }
}

/// The VIO system with the preset's constraints attached (not yet converted).
pub fn vio_constrained(kind: VioConstraintKind) -> AffineControlSystem {
    AffineControlSystem {
        constraints: vio_constraints(kind),
        ..vio_system()
    }
}

/// What an analysis of a preset should produce.
#[derive(Debug, Clone)]
pub struct ExpectedResultFixture {
    pub scenario: &'static str,
    pub state_dim: usize,
    pub final_rank: usize,
    pub kernel_dim: usize,
    /// Exact set of indeterminable variables, in state order.
    pub indeterminable: Vec<String>,
    /// Symbolic vectors that must annihilate the codistribution.
    pub null_vectors: Vec<Vec<Expr>>,
}

fn names(groups: &[&str]) -> Vec<String> {
    let mut out = Vec::new();
    for g in groups {
        match *g {
            "rho" => out.push("rho".to_string()),
            "d" => out.extend(ACCEL_PARAMS.iter().map(|s| s.to_string())),
            prefix => out.extend(AXES.iter().map(|a| format!("{prefix}_{a}"))),
        }
    }
    out
}

fn z(n: usize) -> Vec<Expr> {
    vec![Expr::zero(); n]
}

fn block(prefix: &str) -> Vec<Expr> {
    var3(prefix).to_vec()
}

/// Kernel of the constant-local-acceleration system (24 coordinates):
/// velocity, landmark depth and the constant acceleration scale together,
/// with the accelerometer bias absorbing the change in acceleration.
pub fn const_accel_null_vector() -> Vec<Expr> {
    let d: Vec<Expr> = ACCEL_PARAMS.iter().map(|s| Expr::var(s)).collect();
    [
        block("v"),
        z(3),
        z(3),
        d.iter().map(Expr::neg).collect(),
        block("pcb"),
        z(5),
        vec![Expr::var("rho").neg()],
        d,
    ]
    .concat()
}

/// A scale direction for the constant-acceleration case that also moves
/// gravity along itself, on the original 21 coordinates, with the true
/// acceleration written through `d`. It violates the gravity-norm output,
/// so it is not in the kernel; kept for comparison against the true kernel.
pub fn const_accel_scale_with_gravity() -> Vec<Expr> {
    let d: Vec<Expr> = ACCEL_PARAMS.iter().map(|s| Expr::var(s)).collect();
    [
        block("v"),
        block("g"),
        z(3),
        d.iter().map(Expr::neg).collect(),
        block("pcb"),
        z(5),
        vec![Expr::var("rho").neg()],
    ]
    .concat()
}

/// Kernel of the single-axis rotation system: a shift of `pcb` along the
/// rotation axis, expressed in the camera frame and scaled by the
/// rotation denominator.
pub fn single_axis_null_vector() -> Vec<Expr> {
    let q = var3("q");
    let num = rotation_numerator(&q);
    [z(12), vec![num[0][2].clone(), num[1][2].clone(), num[2][2].clone()], z(6)].concat()
}

/// The five kernel directions of the pure-translation system: the three
/// `pcb` axes and two tilts acting jointly on gravity and the accelerometer
/// bias.
pub fn pure_translation_null_vectors() -> Vec<Vec<Expr>> {
    let g = var3("g");
    let mut out = Vec::new();
    for i in 0..3 {
        let mut n = z(21);
        n[12 + i] = Expr::one();
        out.push(n);
    }
    for (k, other) in [(1, 0), (2, 0)] {
        // (−g_k) on axis x and g_x on axis k, in both the g and ba blocks.
        let mut n = z(21);
        for base in [3, 9] {
            n[base] = g[k].neg();
            n[base + k] = g[other].clone();
        }
        out.push(n);
    }
    out
}

pub fn expected_results() -> Vec<ExpectedResultFixture> {
    vec![
        ExpectedResultFixture {
            scenario: "unconstrained",
            state_dim: 21,
            final_rank: 21,
            kernel_dim: 0,
            indeterminable: vec![],
            null_vectors: vec![],
        },
        ExpectedResultFixture {
            scenario: VioConstraintKind::ConstLocalAccel.name(),
            state_dim: 24,
            final_rank: 23,
            kernel_dim: 1,
            indeterminable: names(&["v", "ba", "pcb", "rho", "d"]),
            null_vectors: vec![const_accel_null_vector()],
        },
        ExpectedResultFixture {
            scenario: VioConstraintKind::SingleAxisZ.name(),
            state_dim: 21,
            final_rank: 20,
            kernel_dim: 1,
            indeterminable: names(&["pcb"]),
            null_vectors: vec![single_axis_null_vector()],
        },
        ExpectedResultFixture {
            scenario: VioConstraintKind::PureTranslation.name(),
            state_dim: 21,
            final_rank: 16,
            kernel_dim: 5,
            indeterminable: names(&["g", "ba", "pcb"]),
            null_vectors: pure_translation_null_vectors(),
        },
    ]
}
