//! Independent reference computations used to cross-check the analysis:
//! the Kalman rank of linear systems, a brute-force verdict for linear
//! systems with an initial-time constraint, random small systems, and
//! point-wise soundness checks for constraint conversion.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::expr::{EvalError, Evaluator, Expr, Point};
use crate::linalg::{rank, RationalMatrix};
use crate::observability::{build_codistribution, AnalysisOptions};
use crate::system::{apply_constraints, apply_next_constraint, AffineControlSystem, Constraint, ConstraintKind, GenericCheck};

fn q(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

fn stack(blocks: &[&RationalMatrix]) -> RationalMatrix {
    let cols = blocks[0].cols();
    let rows = blocks
        .iter()
        .flat_map(|b| (0..b.rows()).map(move |i| b.row(i).to_vec()))
        .collect();
    RationalMatrix::from_rows(cols, rows)
}

/// Rank of `[C; CA; …; CA^{n−1}]`.
pub fn kalman_rank(a: &RationalMatrix, c: &RationalMatrix) -> usize {
    rank(&observability_matrix(a, c))
}

fn observability_matrix(a: &RationalMatrix, c: &RationalMatrix) -> RationalMatrix {
    let mut blocks = vec![c.clone()];
    for _ in 1..a.rows() {
        let next = blocks.last().unwrap().mul(a);
        blocks.push(next);
    }
    stack(&blocks.iter().collect::<Vec<_>>())
}

fn linear_forms(m: &RationalMatrix, vars: &[Expr]) -> Vec<Expr> {
    (0..m.rows())
        .map(|i| Expr::sum(m.row(i).iter().zip(vars).filter(|(a, _)| !a.is_zero()).map(|(a, v)| Expr::constant(a.clone()).mul(v))))
        .collect()
}

/// `ẋ = Ax`, `y = Cx` with states `x0, x1, …`.
pub fn linear_system(a: &RationalMatrix, c: &RationalMatrix) -> AffineControlSystem {
    let n = a.rows();
    let state: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    let vars: Vec<Expr> = state.iter().map(|s| Expr::var(s)).collect();
    AffineControlSystem {
        state,
        inputs: vec![],
        constants: vec![],
        drift: linear_forms(a, &vars),
        fields: vec![],
        outputs: linear_forms(c, &vars).into_iter().enumerate().map(|(j, h)| (format!("y{j}"), h)).collect(),
        constraints: vec![],
    }
}

fn sparse_int(rng: &mut ChaCha8Rng, zero_prob: f64) -> i64 {
    if rng.gen_bool(zero_prob) {
        0
    } else {
        let v = rng.gen_range(1..=4);
        if rng.gen_bool(0.5) {
            -v
        } else {
            v
        }
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, zero_prob: f64) -> RationalMatrix {
    RationalMatrix::from_rows(
        cols,
        (0..rows).map(|_| (0..cols).map(|_| q(sparse_int(rng, zero_prob))).collect()).collect(),
    )
}

/// Random sparse `(A, C)` with `n ≤ 5`; sparsity makes rank deficiency common.
pub fn random_linear(seed: u64) -> (RationalMatrix, RationalMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=5);
    let p = rng.gen_range(1..=2);
    let a = random_matrix(&mut rng, n, n, 0.6);
    let c = random_matrix(&mut rng, p, n, 0.6);
    (a, c)
}

/// Random `(A, C, c)` where the hyperplane `c·x = 0` is invariant under
/// `ẋ = Ax`: `A = λI + v wᵀ` with `c·v = 0`.
pub fn random_invariant_constrained_linear(seed: u64, n: usize) -> (RationalMatrix, RationalMatrix, Vec<BigRational>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c: Vec<i64> = (0..n).map(|_| sparse_int(&mut rng, 0.3)).collect();
    if c.iter().all(|&x| x == 0) {
        c[0] = 1;
    }
    // v ⟂ c: pair up a nonzero entry of c with another coordinate.
    let k = c.iter().position(|&x| x != 0).unwrap();
    let mut v = vec![0i64; n];
    let other = (k + 1 + rng.gen_range(0..n.max(2) - 1)) % n;
    if other != k {
        v[k] = -c[other];
        v[other] = c[k];
    }
    let w: Vec<i64> = (0..n).map(|_| sparse_int(&mut rng, 0.3)).collect();
    let lambda = sparse_int(&mut rng, 0.3);
    let a = RationalMatrix::from_rows(
        n,
        (0..n)
            .map(|i| (0..n).map(|j| q(v[i] * w[j] + if i == j { lambda } else { 0 })).collect())
            .collect(),
    );
    let out = random_matrix(&mut rng, 1, n, 0.4);
    (a, out, c.into_iter().map(q).collect())
}

/// Brute-force per-variable verdicts for `ẋ = Ax, y = Cx` when `c·x = 0`
/// holds at the initial time: the constraint is one more measurement row
/// next to the observability matrix of the discretized system
/// `x⁺ = (I + A/10)x`. Variable `i` is observable iff `eᵢ` lies in the row space.
pub fn constrained_linear_verdicts(a: &RationalMatrix, c: &RationalMatrix, constraint: &[BigRational]) -> Vec<bool> {
    let n = a.rows();
    let mut phi = RationalMatrix::identity(n);
    for i in 0..n {
        for j in 0..n {
            let step = &a[(i, j)] / q(10);
            phi[(i, j)] += step;
        }
    }
    let o = observability_matrix(&phi, c);
    let con = RationalMatrix::from_rows(n, vec![constraint.to_vec()]);
    let base = stack(&[&o, &con]);
    let r = rank(&base);
    (0..n)
        .map(|i| {
            let e = RationalMatrix::from_rows(n, vec![(0..n).map(|j| if i == j { q(1) } else { q(0) }).collect()]);
            rank(&stack(&[&base, &e])) == r
        })
        .collect()
}

/// Random polynomial of total degree ≤ `degree` in `vars`, a few terms.
fn random_poly(rng: &mut ChaCha8Rng, vars: &[Expr], degree: u32, terms: usize) -> Expr {
    Expr::sum((0..terms).map(|_| {
        let mut factors = vec![Expr::int(sparse_int(rng, 0.0))];
        for _ in 0..rng.gen_range(0..=degree) {
            if !vars.is_empty() {
                factors.push(vars[rng.gen_range(0..vars.len())].clone());
            }
        }
        Expr::product(factors)
    }))
}

/// `k + a·x` with nonzero `k`, never identically zero.
fn random_coefficient(rng: &mut ChaCha8Rng, vars: &[Expr]) -> Expr {
    let k = Expr::int(sparse_int(rng, 0.0));
    if vars.is_empty() || rng.gen_bool(0.4) {
        return k;
    }
    let x = vars[rng.gen_range(0..vars.len())].clone();
    k.add(&Expr::int(sparse_int(rng, 0.0)).mul(&x))
}

/// Random small system with one constraint of a random kind, affine in the
/// variable or input it names in `solve_for`.
pub fn random_small_system(seed: u64) -> AffineControlSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=4);
    let m = rng.gen_range(1..=2);
    let state: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    let inputs: Vec<String> = (0..m).map(|i| format!("u{i}")).collect();
    let xs: Vec<Expr> = state.iter().map(|s| Expr::var(s)).collect();

    let drift = (0..n)
        .map(|_| {
            let terms = rng.gen_range(1..=3);
            random_poly(&mut rng, &xs, 2, terms)
        })
        .collect();
    let fields = (0..m)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let terms = rng.gen_range(0..=2);
                    random_poly(&mut rng, &xs, 1, terms)
                })
                .collect()
        })
        .collect();
    let outputs = (0..rng.gen_range(1..=2))
        .map(|j| (format!("y{j}"), random_poly(&mut rng, &xs, 2, 2)))
        .collect();

    let kind = [
        ConstraintKind::ZeroState,
        ConstraintKind::ConstState,
        ConstraintKind::ZeroAffine,
        ConstraintKind::ConstAffine,
    ][rng.gen_range(0..4)];
    let constraint = if kind.involves_inputs() {
        let c0 = random_poly(&mut rng, &xs, 2, 2);
        let mut terms = Vec::new();
        for u in &inputs {
            if terms.is_empty() || rng.gen_bool(0.5) {
                let coeff = random_coefficient(&mut rng, &xs);
                terms.push((u.clone(), coeff));
            }
        }
        let first = terms[0].0.clone();
        Constraint {
            kind,
            c0,
            input_terms: terms,
            solve_for: Some(first),
            param: kind.introduces_parameter().then(|| "d".to_string()),
        }
    } else {
        let p = rng.gen_range(0..n);
        let others: Vec<Expr> = xs.iter().enumerate().filter(|(i, _)| *i != p).map(|(_, x)| x.clone()).collect();
        let coeff = random_coefficient(&mut rng, &others);
        let c = coeff.mul(&xs[p]).add(&random_poly(&mut rng, &others, 2, 2));
        Constraint {
            kind,
            c0: c,
            input_terms: vec![],
            solve_for: Some(state[p].clone()),
            param: kind.introduces_parameter().then(|| "d".to_string()),
        }
    };

    AffineControlSystem {
        state,
        inputs,
        constants: vec![],
        drift,
        fields,
        outputs,
        constraints: vec![constraint],
    }
}

/// Full right-hand side `f₀ + Σ fᵢuᵢ` evaluated at `p` (inputs read from `p`).
fn full_field(sys: &AffineControlSystem, p: &Point) -> Result<Vec<BigRational>, EvalError> {
    let mut ev = Evaluator::new(p);
    let mut out = ev.eval_all(&sys.drift)?;
    for (u, f) in sys.inputs.iter().zip(&sys.fields) {
        let uv = p.get(u).cloned().ok_or_else(|| EvalError::MissingVariable(u.clone()))?;
        for (k, e) in f.iter().enumerate() {
            out[k] += ev.eval(e)? * &uv;
        }
    }
    Ok(out)
}

fn outputs_at(sys: &AffineControlSystem, p: &Point) -> Result<Vec<BigRational>, EvalError> {
    Evaluator::new(p).eval_all(&sys.output_exprs())
}

/// Converts the first pending constraint of `sys` and checks the result:
/// structural validity, dimension bookkeeping, and agreement of dynamics
/// and outputs with the original system at random points of the
/// constraint manifold. Returns the converted system.
pub fn check_conversion(sys: &AffineControlSystem, check: &GenericCheck, seed: u64) -> Result<AffineControlSystem, String> {
    let con = sys.constraints.first().ok_or("no constraint to convert")?;
    let out = apply_next_constraint(sys, check).map_err(|e| format!("conversion failed: {e}"))?;

    let problems = out.validate();
    if !problems.is_empty() {
        return Err(format!("converted system invalid: {problems:?}"));
    }
    if out.constraints.len() + 1 != sys.constraints.len() {
        return Err("pending constraints were not carried over".into());
    }

    let k = con.input_terms.len() as isize;
    let (ds, di, dy) = match con.kind {
        ConstraintKind::ZeroState => (-1, 0, 0),
        ConstraintKind::ConstState => (0, 0, 0),
        ConstraintKind::ZeroAffine => (k - 1, -1, k),
        ConstraintKind::ConstAffine => (k, -1, k),
    };
    let delta = |a: usize, b: usize| b as isize - a as isize;
    let got = (
        delta(sys.state.len(), out.state.len()),
        delta(sys.inputs.len(), out.inputs.len()),
        delta(sys.outputs.len(), out.outputs.len()),
    );
    if got != (ds, di, dy) {
        return Err(format!("bookkeeping for {}: expected {:?}, got {got:?}", con.kind.name(), (ds, di, dy)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    let mut attempts = 0;
    while checked < 3 {
        attempts += 1;
        if attempts > 200 {
            return Err("could not find pole-free points on the constraint manifold".into());
        }
        match compare_on_manifold(sys, con, &out, &mut rng) {
            Ok(()) => checked += 1,
            Err(Compare::Pole) => continue,
            Err(Compare::Mismatch(m)) => return Err(m),
        }
    }
    Ok(out)
}

enum Compare {
    Pole,
    Mismatch(String),
}

impl From<EvalError> for Compare {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::DivisionByZero => Compare::Pole,
            other => Compare::Mismatch(other.to_string()),
        }
    }
}

fn compare_on_manifold(orig: &AffineControlSystem, con: &Constraint, conv: &AffineControlSystem, rng: &mut ChaCha8Rng) -> Result<(), Compare> {
    let draw = |rng: &mut ChaCha8Rng| q(rng.gen_range(-50..=50));
    // Random values for everything the converted system knows about.
    let mut p = Point::new();
    for v in conv.state.iter().chain(&conv.inputs).chain(&conv.constants) {
        p.insert(v, draw(rng));
    }
    let d = con.param.as_ref().map(|d| p.get(d).cloned().unwrap_or_else(BigRational::zero)).unwrap_or_else(BigRational::zero);

    // Solve the affine constraint for the eliminated name at this point.
    let solve = |p: &Point, name: &str, lhs: &dyn Fn(&Point) -> Result<BigRational, EvalError>| -> Result<BigRational, Compare> {
        let mut p0 = p.clone();
        p0.insert(name, BigRational::zero());
        let mut p1 = p.clone();
        p1.insert(name, BigRational::one());
        let (c0, c1) = (lhs(&p0)?, lhs(&p1)?);
        let slope = &c1 - &c0;
        if slope.is_zero() {
            return Err(Compare::Pole);
        }
        Ok((&d - c0) / slope)
    };

    let mut full = p.clone();
    let eliminated: String;
    if con.kind.involves_inputs() {
        eliminated = conv.outputs.last().unwrap().0.clone();
        let lhs = |pt: &Point| -> Result<BigRational, EvalError> {
            let mut ev = Evaluator::new(pt);
            let mut acc = ev.eval(&con.c0)?;
            for (u, c) in &con.input_terms {
                acc += ev.eval(c)? * pt.get(u).cloned().unwrap_or_else(BigRational::zero);
            }
            Ok(acc)
        };
        let v = solve(&full, &eliminated, &lhs)?;
        full.insert(&eliminated, v);
    } else {
        eliminated = orig
            .state
            .iter()
            .find(|s| !conv.state.contains(s))
            .cloned()
            .ok_or_else(|| Compare::Mismatch("no state variable was eliminated".into()))?;
        let lhs = |pt: &Point| Evaluator::new(pt).eval(&con.c0);
        let v = solve(&full, &eliminated, &lhs)?;
        full.insert(&eliminated, v);
    }

    let f_orig = full_field(orig, &full)?;
    let f_conv = full_field(conv, &p)?;
    for (k, s) in orig.state.iter().enumerate() {
        if *s == eliminated {
            continue;
        }
        let j = conv.state_index(s).ok_or_else(|| Compare::Mismatch(format!("state '{s}' vanished")))?;
        if f_orig[k] != f_conv[j] {
            return Err(Compare::Mismatch(format!("dynamics of '{s}' differ on the manifold: {} vs {}", f_orig[k], f_conv[j])));
        }
    }
    if let Some(dn) = &con.param {
        let j = conv.state_index(dn).ok_or_else(|| Compare::Mismatch(format!("'{dn}' not in state")))?;
        if !f_conv[j].is_zero() {
            return Err(Compare::Mismatch(format!("'{dn}' is not constant")));
        }
    }

    let y_orig = outputs_at(orig, &full)?;
    let y_conv = outputs_at(conv, &p)?;
    if y_conv[..y_orig.len()] != y_orig[..] {
        return Err(Compare::Mismatch("original outputs differ on the manifold".into()));
    }
    for ((name, _), value) in conv.outputs[y_orig.len()..].iter().zip(&y_conv[y_orig.len()..]) {
        let want = full.get(name).ok_or_else(|| Compare::Mismatch(format!("output '{name}' names no input")))?;
        if want != value {
            return Err(Compare::Mismatch(format!("output '{name}' differs from the input it observes")));
        }
    }
    Ok(())
}

/// Runs [`check_conversion`] on every constraint in turn and returns the
/// standard-form result.
pub fn check_conversion_chain(sys: &AffineControlSystem, check: &GenericCheck, seed: u64) -> Result<AffineControlSystem, String> {
    let mut cur = sys.clone();
    let mut k = 0;
    while !cur.constraints.is_empty() {
        cur = check_conversion(&cur, check, seed.wrapping_add(k)).map_err(|e| format!("constraint {k}: {e}"))?;
        k += 1;
    }
    Ok(cur)
}

/// Generic rank after applying the constraints in the given order.
pub fn rank_after(sys: &AffineControlSystem, order: &[usize], opts: &AnalysisOptions) -> Result<usize, String> {
    let reordered = AffineControlSystem {
        constraints: order.iter().map(|&i| sys.constraints[i].clone()).collect(),
        ..sys.clone()
    };
    let conv = apply_constraints(&reordered, &GenericCheck::default()).map_err(|e| e.to_string())?;
    let cod = build_codistribution(&conv, opts).map_err(|e| e.to_string())?;
    Ok(cod.rank())
}

/// Random small system carrying two state constraints, each affine with a
/// constant coefficient in its own variable. The first does not mention the
/// second's variable, so both elimination orders are possible.
pub fn random_two_constraint_system(seed: u64) -> AffineControlSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sys = random_small_system(seed ^ 0x5eed);
    sys.constraints.clear();
    let n = sys.state.len();
    let xs: Vec<Expr> = sys.state.iter().map(|s| Expr::var(s)).collect();
    let p1 = rng.gen_range(0..n);
    let p2 = (p1 + 1 + rng.gen_range(0..n - 1)) % n;
    for (p, other, kind) in [(p1, p2, ConstraintKind::ZeroState), (p2, p1, ConstraintKind::ConstState)] {
        let skip_other = kind == ConstraintKind::ZeroState;
        let rest: Vec<Expr> = xs
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != p && !(skip_other && *i == other))
            .map(|(_, x)| x.clone())
            .collect();
        let c = Expr::int(sparse_int(&mut rng, 0.0)).mul(&xs[p]).add(&random_poly(&mut rng, &rest, 2, 2));
        sys.constraints.push(Constraint {
            kind,
            c0: c,
            input_terms: vec![],
            solve_for: Some(sys.state[p].clone()),
            param: (kind == ConstraintKind::ConstState).then(|| "d".to_string()),
        });
    }
    sys
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kalman_rank_of_chain() {
        let a = RationalMatrix::from_i64(&[&[0, 1, 0], &[0, 0, 1], &[0, 0, 0]]);
        assert_eq!(kalman_rank(&a, &RationalMatrix::from_i64(&[&[1, 0, 0]])), 3);
        assert_eq!(kalman_rank(&a, &RationalMatrix::from_i64(&[&[0, 0, 1]])), 1);
    }

    #[test]
    fn invariant_constraint_is_left_eigenvector() {
        for seed in 0..20 {
            let (a, _, c) = random_invariant_constrained_linear(seed, 3);
            let row = RationalMatrix::from_rows(3, vec![c.clone()]);
            let ca = row.mul(&a);
            // cA must be a multiple of c.
            let both = RationalMatrix::from_rows(3, vec![c.clone(), ca.row(0).to_vec()]);
            assert!(rank(&both) <= 1, "seed {seed}");
        }
    }

    #[test]
    fn random_small_systems_are_valid() {
        for seed in 0..20 {
            let sys = random_small_system(seed);
            assert!(sys.validate().is_empty(), "seed {seed}: {:?}", sys.validate());
        }
    }
}
