//! Reduction of constrained systems to the unconstrained standard form.
//!
//! * zero state constraint `0 = c(x)`: solve for one state variable and
//!   substitute it away;
//! * constant state constraint `d = c(x)`: append `d` (with `ḋ = 0`) to the
//!   state, then treat `0 = c(x) − d` as above;
//! * zero affine constraint `0 = c₀(x) + Σ cᵢ(x)uᵢ`: solve for one input
//!   `u_o`, substitute it into the dynamics, promote the other constrained
//!   inputs to state (their derivatives become inputs) and observe both the
//!   promoted inputs and `u_o`;
//! * constant affine constraint: append `d`, then as the zero affine case
//!   with `c₀ − d`.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{AffineControlSystem, Constraint, ConstraintKind};
use crate::expr::{differentiate, is_zero_random, substitute, Expr, IdentityError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConversionError {
    #[error("constraint is not affine in '{0}'")]
    NotAffineInVariable(String),
    #[error("coefficient of '{0}' in the constraint is generically zero")]
    CoefficientGenericallyZero(String),
    #[error("no variable can be solved for in the constraint")]
    NoSolvableVariable,
    #[error("the unknown constant '{0}' cannot be the eliminated variable")]
    SolveForIsD(String),
    #[error("constraint is not affine in input '{0}'")]
    NotAffineInInput(String),
    #[error("substitution left input '{0}' inside the dynamics or outputs")]
    AffinityBrokenAfterSubstitution(String),
    #[error("'{0}' is not a variable of the system")]
    UnknownVariable(String),
    #[error("expected a {expected} constraint, got {got}")]
    WrongKind {
        expected: &'static str,
        got: &'static str,
    },
    #[error("name '{0}' for the unknown constant is already in use")]
    NameClash(String),
    #[error(transparent)]
    Identity(#[from] IdentityError),
}

/// Settings for the "generically nonzero" tests made during conversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenericCheck {
    pub trials: usize,
    pub seed: u64,
}

impl Default for GenericCheck {
    fn default() -> Self {
        GenericCheck {
            trials: 5,
            seed: 0x6e6f_6374,
        }
    }
}

impl GenericCheck {
    fn is_zero(&self, e: &Expr) -> Result<bool, ConversionError> {
        Ok(is_zero_random(e, self.trials, self.seed)?)
    }
}

fn expect_kind(con: &Constraint, kind: ConstraintKind) -> Result<(), ConversionError> {
    if con.kind == kind {
        Ok(())
    } else {
        Err(ConversionError::WrongKind {
            expected: kind.name(),
            got: con.kind.name(),
        })
    }
}

fn bind(name: &str, value: Expr) -> BTreeMap<String, Expr> {
    BTreeMap::from([(name.to_string(), value)])
}

/// Substitutes `bindings` everywhere, including pending constraints.
fn substitute_system(sys: &AffineControlSystem, bindings: &BTreeMap<String, Expr>) -> AffineControlSystem {
    let sub = |e: &Expr| substitute(e, bindings);
    AffineControlSystem {
        drift: sys.drift.iter().map(sub).collect(),
        fields: sys.fields.iter().map(|f| f.iter().map(sub).collect()).collect(),
        outputs: sys.outputs.iter().map(|(n, h)| (n.clone(), sub(h))).collect(),
        constraints: sys.constraints.iter().map(|c| c.substituted(bindings)).collect(),
        ..sys.clone()
    }
}

/// Appends an unknown constant to the state with zero dynamics.
fn augment_parameter(sys: &AffineControlSystem, con: &Constraint, index_hint: usize) -> Result<(AffineControlSystem, String), ConversionError> {
    let name = con.param.clone().unwrap_or_else(|| {
        let mut k = index_hint;
        loop {
            let candidate = format!("d_{k}");
            if !sys.state.contains(&candidate) && !sys.inputs.contains(&candidate) && !sys.constants.contains(&candidate) {
                break candidate;
            }
            k += 1;
        }
    });
    if sys.state.contains(&name) || sys.inputs.contains(&name) || sys.constants.contains(&name) {
        return Err(ConversionError::NameClash(name));
    }
    let mut out = sys.clone();
    out.state.push(name.clone());
    out.drift.push(Expr::zero());
    for f in &mut out.fields {
        f.push(Expr::zero());
    }
    Ok((out, name))
}

/// Solves `0 = c` for `var`, returning `c'` with `var = c'`.
fn solve_affine(c: &Expr, var: &str, check: &GenericCheck) -> Result<Expr, ConversionError> {
    let coeff = differentiate(c, var);
    if !check.is_zero(&differentiate(&coeff, var))? {
        return Err(ConversionError::NotAffineInVariable(var.to_string()));
    }
    let at_zero = bind(var, Expr::zero());
    let coeff = substitute(&coeff, &at_zero);
    if check.is_zero(&coeff)? {
        return Err(ConversionError::CoefficientGenericallyZero(var.to_string()));
    }
    let rest = substitute(c, &at_zero);
    Ok(rest.neg().div(&coeff))
}

fn eliminate_state(
    sys: &AffineControlSystem,
    c: &Expr,
    solve_for: Option<&str>,
    excluded: Option<&str>,
    check: &GenericCheck,
) -> Result<AffineControlSystem, ConversionError> {
    let (var, solved) = match solve_for {
        Some(v) => {
            if Some(v) == excluded {
                return Err(ConversionError::SolveForIsD(v.to_string()));
            }
            if sys.state_index(v).is_none() {
                return Err(ConversionError::UnknownVariable(v.to_string()));
            }
            (v.to_string(), solve_affine(c, v, check)?)
        }
        None => {
            let present = c.free_vars();
            let mut found = None;
            for v in &sys.state {
                if Some(v.as_str()) == excluded || !present.contains(v) {
                    continue;
                }
                match solve_affine(c, v, check) {
                    Ok(s) => {
                        found = Some((v.clone(), s));
                        break;
                    }
                    Err(ConversionError::NotAffineInVariable(_))
                    | Err(ConversionError::CoefficientGenericallyZero(_)) => continue,
                    Err(e) => return Err(e),
                }
            }
            found.ok_or(ConversionError::NoSolvableVariable)?
        }
    };
    let p = sys.state_index(&var).expect("checked above");
    let mut out = substitute_system(sys, &bind(&var, solved));
    out.state.remove(p);
    out.drift.remove(p);
    for f in &mut out.fields {
        f.remove(p);
    }
    Ok(out)
}

/// `0 = c(x)`: eliminate one state variable by substitution.
pub fn convert_zero_state(sys: &AffineControlSystem, con: &Constraint, check: &GenericCheck) -> Result<AffineControlSystem, ConversionError> {
    expect_kind(con, ConstraintKind::ZeroState)?;
    eliminate_state(sys, &con.c0, con.solve_for.as_deref(), None, check)
}

/// `d = c(x)`: augment with `d`, then eliminate a variable other than `d`.
pub fn convert_const_state(sys: &AffineControlSystem, con: &Constraint, check: &GenericCheck) -> Result<AffineControlSystem, ConversionError> {
    expect_kind(con, ConstraintKind::ConstState)?;
    if let (Some(s), Some(p)) = (&con.solve_for, &con.param) {
        if s == p {
            return Err(ConversionError::SolveForIsD(s.clone()));
        }
    }
    let (aug, d) = augment_parameter(sys, con, sys.state.len())?;
    let c = con.c0.sub(&Expr::var(&d));
    eliminate_state(&aug, &c, con.solve_for.as_deref(), Some(&d), check)
}

/// `0 = c₀(x) + Σ cᵢ(x)uᵢ`: eliminate one input, promote the others.
pub fn convert_zero_affine(sys: &AffineControlSystem, con: &Constraint, check: &GenericCheck) -> Result<AffineControlSystem, ConversionError> {
    expect_kind(con, ConstraintKind::ZeroAffine)?;

    for e in con.exprs() {
        if let Some(u) = e.free_vars().into_iter().find(|v| sys.inputs.contains(v)) {
            return Err(ConversionError::NotAffineInInput(u));
        }
    }

    // Terms on inputs promoted by an earlier conversion are state terms now.
    let mut c0 = con.c0.clone();
    let mut active: Vec<(String, Expr)> = Vec::new();
    for (u, coeff) in &con.input_terms {
        if sys.input_index(u).is_some() {
            match active.iter_mut().find(|(v, _)| v == u) {
                Some((_, c)) => *c = c.add(coeff),
                None => active.push((u.clone(), coeff.clone())),
            }
        } else if sys.state_index(u).is_some() {
            c0 = c0.add(&coeff.mul(&Expr::var(u)));
        } else {
            return Err(ConversionError::UnknownVariable(u.clone()));
        }
    }
    if active.is_empty() {
        return eliminate_state(sys, &c0, None, None, check);
    }

    let o = match &con.solve_for {
        Some(u) => {
            let k = active
                .iter()
                .position(|(v, _)| v == u)
                .ok_or_else(|| ConversionError::UnknownVariable(u.clone()))?;
            if check.is_zero(&active[k].1)? {
                return Err(ConversionError::CoefficientGenericallyZero(u.clone()));
            }
            k
        }
        None => {
            let mut order: Vec<usize> = (0..active.len()).collect();
            order.sort_by_key(|&k| sys.input_index(&active[k].0));
            let mut pick = None;
            for k in order {
                if !check.is_zero(&active[k].1)? {
                    pick = Some(k);
                    break;
                }
            }
            pick.ok_or(ConversionError::NoSolvableVariable)?
        }
    };

    let (u_o, c_o) = active[o].clone();
    let remaining: Vec<(String, Expr)> = active.iter().enumerate().filter(|(k, _)| *k != o).map(|(_, t)| t.clone()).collect();
    // u_o = c'0 + Σ c'_r u_r
    let solved0 = c0.neg().div(&c_o);
    let solved_r: Vec<(String, Expr)> = remaining.iter().map(|(u, c)| (u.clone(), c.neg().div(&c_o))).collect();
    let f_o = sys.fields[sys.input_index(&u_o).unwrap()].clone();

    let n = sys.state.len();
    let mut state = sys.state.clone();
    let mut drift: Vec<Expr> = (0..n).map(|k| sys.drift[k].add(&f_o[k].mul(&solved0))).collect();
    for (u, cr) in &solved_r {
        let f_r = &sys.fields[sys.input_index(u).unwrap()];
        let uvar = Expr::var(u);
        for k in 0..n {
            let merged = f_r[k].add(&f_o[k].mul(cr));
            drift[k] = drift[k].add(&merged.mul(&uvar));
        }
    }
    let promoted: Vec<String> = solved_r.iter().map(|(u, _)| u.clone()).collect();
    state.extend(promoted.iter().cloned());
    drift.extend(promoted.iter().map(|_| Expr::zero()));

    let constrained: Vec<&String> = active.iter().map(|(u, _)| u).collect();
    let mut inputs = Vec::new();
    let mut fields = Vec::new();
    for (i, u) in sys.inputs.iter().enumerate() {
        if constrained.contains(&u) {
            continue;
        }
        let mut f = sys.fields[i].clone();
        f.extend(promoted.iter().map(|_| Expr::zero()));
        inputs.push(u.clone());
        fields.push(f);
    }
    for (j, u) in promoted.iter().enumerate() {
        let mut name = format!("{u}_dot");
        while sys.inputs.contains(&name) || state.contains(&name) || sys.constants.contains(&name) {
            name.push('_');
        }
        let mut f = vec![Expr::zero(); state.len()];
        f[n + j] = Expr::one();
        inputs.push(name);
        fields.push(f);
    }

    let mut outputs = sys.outputs.clone();
    for u in &promoted {
        outputs.push((u.clone(), Expr::var(u)));
    }
    let u_o_expr = Expr::sum(std::iter::once(solved0.clone()).chain(solved_r.iter().map(|(u, c)| c.mul(&Expr::var(u)))));
    outputs.push((u_o.clone(), u_o_expr));

    // Pending constraints: u_o becomes its solved expression, promoted
    // inputs become state, so both fold into c₀.
    let constraints = sys
        .constraints
        .iter()
        .map(|c| {
            let mut c = c.clone();
            let mut terms = Vec::new();
            for (u, k) in c.input_terms.drain(..) {
                if u == u_o {
                    let mut add = k.mul(&solved0);
                    for (r, cr) in &solved_r {
                        add = add.add(&k.mul(cr).mul(&Expr::var(r)));
                    }
                    c.c0 = c.c0.add(&add);
                } else if promoted.contains(&u) {
                    c.c0 = c.c0.add(&k.mul(&Expr::var(&u)));
                } else {
                    terms.push((u, k));
                }
            }
            c.input_terms = terms;
            c
        })
        .collect();

    let out = AffineControlSystem {
        state,
        inputs,
        constants: sys.constants.clone(),
        drift,
        fields,
        outputs,
        constraints,
    };

    let inputs_now: Vec<&String> = out.inputs.iter().collect();
    let exprs = out.drift.iter().chain(out.fields.iter().flatten()).chain(out.outputs.iter().map(|(_, h)| h));
    for e in exprs {
        if let Some(u) = e.free_vars().into_iter().find(|v| inputs_now.contains(&v) || constrained.contains(&v) && !promoted.contains(v)) {
            return Err(ConversionError::AffinityBrokenAfterSubstitution(u));
        }
    }
    Ok(out)
}

/// `d = c₀(x) + Σ cᵢ(x)uᵢ`: augment with `d`, then as [`convert_zero_affine`].
pub fn convert_const_affine(sys: &AffineControlSystem, con: &Constraint, check: &GenericCheck) -> Result<AffineControlSystem, ConversionError> {
    expect_kind(con, ConstraintKind::ConstAffine)?;
    let (aug, d) = augment_parameter(sys, con, sys.state.len())?;
    let zero = Constraint {
        kind: ConstraintKind::ZeroAffine,
        c0: con.c0.sub(&Expr::var(&d)),
        param: None,
        ..con.clone()
    };
    convert_zero_affine(&aug, &zero, check)
}

/// Converts the first pending constraint; the rest stay pending, rewritten
/// in terms of the new system.
pub fn apply_next_constraint(sys: &AffineControlSystem, check: &GenericCheck) -> Result<AffineControlSystem, ConversionError> {
    let mut cur = sys.clone();
    if cur.constraints.is_empty() {
        return Ok(cur);
    }
    let con = cur.constraints.remove(0);
    match con.kind {
        ConstraintKind::ZeroState => convert_zero_state(&cur, &con, check),
        ConstraintKind::ConstState => convert_const_state(&cur, &con, check),
        ConstraintKind::ZeroAffine => convert_zero_affine(&cur, &con, check),
        ConstraintKind::ConstAffine => convert_const_affine(&cur, &con, check),
    }
}

/// Folds all constraints, in declaration order, into a standard-form system.
pub fn apply_constraints(sys: &AffineControlSystem, check: &GenericCheck) -> Result<AffineControlSystem, ConversionError> {
    let mut cur = sys.clone();
    while !cur.constraints.is_empty() {
        cur = apply_next_constraint(&cur, check)?;
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{equals_random, parse};

    fn e(s: &str) -> Expr {
        parse(s).unwrap()
    }

    fn same(a: &Expr, b: &str) -> bool {
        equals_random(a, &e(b), 5, 3).unwrap()
    }

    fn two_state() -> AffineControlSystem {
        AffineControlSystem {
            state: vec!["a".into(), "b".into()],
            inputs: vec!["u".into()],
            constants: vec![],
            drift: vec![e("b"), e("a*b")],
            fields: vec![vec![e("1"), e("a")]],
            outputs: vec![("y".into(), e("a + b"))],
            constraints: vec![],
        }
    }

    #[test]
    fn zero_state_substitutes_solved_variable() {
        let sys = two_state();
        let con = Constraint::zero_state(e("a - 2*b")).solving_for("a");
        let out = convert_zero_state(&sys, &con, &GenericCheck::default()).unwrap();
        assert_eq!(out.state, vec!["b"]);
        assert!(same(&out.drift[0], "2*b*b"));
        assert!(same(&out.fields[0][0], "2*b"));
        assert!(same(&out.outputs[0].1, "3*b"));
        assert!(out.validate().is_empty());
    }

    #[test]
    fn zero_state_rejects_nonaffine() {
        let con = Constraint::zero_state(e("a^2 + b")).solving_for("a");
        assert_eq!(
            convert_zero_state(&two_state(), &con, &GenericCheck::default()).unwrap_err(),
            ConversionError::NotAffineInVariable("a".into())
        );
    }

    #[test]
    fn zero_state_rejects_vanishing_coefficient() {
        let con = Constraint::zero_state(e("(a - a)*b + 1")).solving_for("b");
        assert_eq!(
            convert_zero_state(&two_state(), &con, &GenericCheck::default()).unwrap_err(),
            ConversionError::CoefficientGenericallyZero("b".into())
        );
        let con = Constraint::zero_state(e("3"));
        assert_eq!(
            convert_zero_state(&two_state(), &con, &GenericCheck::default()).unwrap_err(),
            ConversionError::NoSolvableVariable
        );
    }

    #[test]
    fn zero_state_auto_selects_first_solvable() {
        let con = Constraint::zero_state(e("a^2 + 3*b"));
        let out = convert_zero_state(&two_state(), &con, &GenericCheck::default()).unwrap();
        assert_eq!(out.state, vec!["a"]);
    }

    #[test]
    fn const_state_augments_then_eliminates() {
        let con = Constraint::const_state(e("a - 2*b"), "d").solving_for("a");
        let out = convert_const_state(&two_state(), &con, &GenericCheck::default()).unwrap();
        assert_eq!(out.state, vec!["b", "d"]);
        assert!(same(&out.outputs[0].1, "3*b + d"));
        assert!(out.drift[1].is_zero());
        assert!(out.validate().is_empty());

        let bad = Constraint::const_state(e("a - 2*b"), "d").solving_for("d");
        assert_eq!(
            convert_const_state(&two_state(), &bad, &GenericCheck::default()).unwrap_err(),
            ConversionError::SolveForIsD("d".into())
        );
    }

    #[test]
    fn zero_affine_promotes_remaining_inputs() {
        let sys = AffineControlSystem {
            state: vec!["x".into()],
            inputs: vec!["u1".into(), "u2".into()],
            constants: vec![],
            drift: vec![e("x")],
            fields: vec![vec![e("1")], vec![e("x^2")]],
            outputs: vec![("y".into(), e("x"))],
            constraints: vec![],
        };
        let con = Constraint::zero_affine(Expr::zero(), vec![("u1", e("1")), ("u2", e("x"))]).solving_for("u1");
        let out = convert_zero_affine(&sys, &con, &GenericCheck::default()).unwrap();
        assert_eq!(out.state, vec!["x", "u2"]);
        assert_eq!(out.inputs, vec!["u2_dot"]);
        // ẋ = x + 1·(−x·u2) + x²·u2
        assert!(same(&out.drift[0], "x - x*u2 + x^2*u2"));
        assert!(out.drift[1].is_zero());
        assert!(out.fields[0][0].is_zero() && out.fields[0][1].is_one());
        let names: Vec<_> = out.outputs.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, vec!["y", "u2", "u1"]);
        assert!(same(&out.outputs[2].1, "-x*u2"));
        assert!(out.validate().is_empty(), "{:?}", out.validate());
    }

    #[test]
    fn const_affine_scalar_toy() {
        let sys = AffineControlSystem {
            state: vec!["x".into()],
            inputs: vec!["u".into()],
            constants: vec![],
            drift: vec![Expr::zero()],
            fields: vec![vec![Expr::one()]],
            outputs: vec![("y".into(), e("x"))],
            constraints: vec![],
        };
        let con = Constraint::const_affine(Expr::zero(), vec![("u", Expr::one())], "d");
        let out = convert_const_affine(&sys, &con, &GenericCheck::default()).unwrap();
        assert_eq!(out.state, vec!["x", "d"]);
        assert!(out.inputs.is_empty());
        assert!(same(&out.drift[0], "d"));
        assert_eq!(out.outputs.last().unwrap().0, "u");
        assert!(same(&out.outputs.last().unwrap().1, "d"));
    }

    #[test]
    fn affine_constraint_with_input_in_coefficient() {
        let sys = AffineControlSystem {
            state: vec!["x".into()],
            inputs: vec!["u".into(), "v".into()],
            constants: vec![],
            drift: vec![Expr::zero()],
            fields: vec![vec![Expr::one()], vec![Expr::one()]],
            outputs: vec![("y".into(), e("x"))],
            constraints: vec![],
        };
        let con = Constraint::zero_affine(Expr::zero(), vec![("u", e("v"))]);
        assert_eq!(
            convert_zero_affine(&sys, &con, &GenericCheck::default()).unwrap_err(),
            ConversionError::NotAffineInInput("v".into())
        );
    }

    #[test]
    fn no_constraints_is_identity() {
        let sys = two_state();
        let out = apply_constraints(&sys, &GenericCheck::default()).unwrap();
        assert_eq!(out.state, sys.state);
        assert!(out.drift.iter().zip(&sys.drift).all(|(a, b)| a.ptr_eq(b)));
    }

    #[test]
    fn later_constraints_see_earlier_substitutions() {
        let mut sys = two_state();
        sys.state.push("c".into());
        sys.drift.push(Expr::zero());
        sys.fields[0].push(Expr::zero());
        sys.constraints = vec![
            Constraint::zero_state(e("a - b")).solving_for("a"),
            Constraint::zero_state(e("a + c - 4")).solving_for("c"),
        ];
        let out = apply_constraints(&sys, &GenericCheck::default()).unwrap();
        assert_eq!(out.state, vec!["b"]);
        assert!(out.constraints.is_empty());
    }
}
