//! Control-affine systems `ẋ = f₀(x) + Σ fᵢ(x)uᵢ`, `y = h(x)`, with optional
//! scalar linear constraints, and the conversions that fold those
//! constraints back into an unconstrained system.

mod convert;
mod model_file;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use crate::expr::{substitute, Expr};

pub use convert::{
    apply_constraints, apply_next_constraint, convert_const_affine, convert_const_state, convert_zero_affine,
    convert_zero_state, ConversionError, GenericCheck,
};
pub use model_file::{ConstraintFile, InputTermFile, ModelError, ModelFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintKind {
    /// `0 = c(x)`
    ZeroState,
    /// `d = c(x)` with unknown constant `d`
    ConstState,
    /// `0 = c₀(x) + Σ cᵢ(x)uᵢ`
    ZeroAffine,
    /// `d = c₀(x) + Σ cᵢ(x)uᵢ` with unknown constant `d`
    ConstAffine,
}

impl ConstraintKind {
    pub fn name(self) -> &'static str {
        match self {
            ConstraintKind::ZeroState => "zero_state",
            ConstraintKind::ConstState => "const_state",
            ConstraintKind::ZeroAffine => "zero_affine",
            ConstraintKind::ConstAffine => "const_affine",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [
            ConstraintKind::ZeroState,
            ConstraintKind::ConstState,
            ConstraintKind::ZeroAffine,
            ConstraintKind::ConstAffine,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }

    pub fn involves_inputs(self) -> bool {
        matches!(self, ConstraintKind::ZeroAffine | ConstraintKind::ConstAffine)
    }

    pub fn introduces_parameter(self) -> bool {
        matches!(self, ConstraintKind::ConstState | ConstraintKind::ConstAffine)
    }
}

/// One scalar constraint. Vector constraints are lists of these.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub kind: ConstraintKind,
    pub c0: Expr,
    pub input_terms: Vec<(String, Expr)>,
    /// State variable (state kinds) or input (affine kinds) to eliminate.
    pub solve_for: Option<String>,
    /// Name of the unknown constant for the `Const*` kinds.
    pub param: Option<String>,
}

impl Constraint {
    pub fn zero_state(c: Expr) -> Self {
        Constraint {
            kind: ConstraintKind::ZeroState,
            c0: c,
            input_terms: Vec::new(),
            solve_for: None,
            param: None,
        }
    }

    pub fn const_state(c: Expr, param: &str) -> Self {
        Constraint {
            kind: ConstraintKind::ConstState,
            param: Some(param.to_string()),
            ..Constraint::zero_state(c)
        }
    }

    pub fn zero_affine(c0: Expr, terms: Vec<(&str, Expr)>) -> Self {
        Constraint {
            kind: ConstraintKind::ZeroAffine,
            c0,
            input_terms: terms.into_iter().map(|(u, c)| (u.to_string(), c)).collect(),
            solve_for: None,
            param: None,
        }
    }

    pub fn const_affine(c0: Expr, terms: Vec<(&str, Expr)>, param: &str) -> Self {
        Constraint {
            kind: ConstraintKind::ConstAffine,
            param: Some(param.to_string()),
            ..Constraint::zero_affine(c0, terms)
        }
    }

    pub fn solving_for(mut self, name: &str) -> Self {
        self.solve_for = Some(name.to_string());
        self
    }

    /// All expressions appearing in the constraint.
    fn exprs(&self) -> impl Iterator<Item = &Expr> {
        std::iter::once(&self.c0).chain(self.input_terms.iter().map(|(_, c)| c))
    }

    fn substituted(&self, bindings: &BTreeMap<String, Expr>) -> Constraint {
        Constraint {
            c0: substitute(&self.c0, bindings),
            input_terms: self
                .input_terms
                .iter()
                .map(|(u, c)| (u.clone(), substitute(c, bindings)))
                .collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct AffineControlSystem {
    pub state: Vec<String>,
    pub inputs: Vec<String>,
    /// Symbolic parameters that are neither state nor input.
    pub constants: Vec<String>,
    pub drift: Vec<Expr>,
    /// One vector field per input, in input order.
    pub fields: Vec<Vec<Expr>>,
    pub outputs: Vec<(String, Expr)>,
    pub constraints: Vec<Constraint>,
}

impl AffineControlSystem {
    pub fn state_dim(&self) -> usize {
        self.state.len()
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.state.iter().position(|s| s == name)
    }

    pub fn input_index(&self, name: &str) -> Option<usize> {
        self.inputs.iter().position(|s| s == name)
    }

    /// Vector field by index: 0 is the drift, `i ≥ 1` belongs to input `i−1`.
    pub fn field(&self, index: usize) -> Option<&[Expr]> {
        if index == 0 {
            Some(&self.drift)
        } else {
            self.fields.get(index - 1).map(Vec::as_slice)
        }
    }

    pub fn field_count(&self) -> usize {
        self.fields.len() + 1
    }

    pub fn output_exprs(&self) -> Vec<Expr> {
        self.outputs.iter().map(|(_, h)| h.clone()).collect()
    }

    /// Every variable that may legally appear in drift, fields, or outputs.
    pub fn admissible_vars(&self) -> BTreeSet<String> {
        self.state.iter().chain(&self.constants).cloned().collect()
    }

    /// Human-readable violations of the structural invariants; empty when valid.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.state.len();

        let mut names = HashSet::new();
        for (kind, list) in [
            ("state", &self.state),
            ("input", &self.inputs),
            ("constant", &self.constants),
        ] {
            for v in list {
                if !names.insert(v.as_str()) {
                    out.push(format!("{kind} name '{v}' is declared more than once"));
                }
            }
        }

        if self.drift.len() != n {
            out.push(format!("f_0 has {} entries, expected {n}", self.drift.len()));
        }
        if self.fields.len() != self.inputs.len() {
            out.push(format!(
                "{} input fields for {} inputs",
                self.fields.len(),
                self.inputs.len()
            ));
        }
        for (i, f) in self.fields.iter().enumerate() {
            if f.len() != n {
                out.push(format!("f_{} has {} entries, expected {n}", i + 1, f.len()));
            }
        }

        let admissible = self.admissible_vars();
        let inputs: BTreeSet<&String> = self.inputs.iter().collect();
        let check = |what: &str, e: &Expr, out: &mut Vec<String>| {
            for v in e.free_vars() {
                if inputs.contains(&v) {
                    out.push(format!("input '{v}' appears in {what}"));
                } else if !admissible.contains(&v) {
                    out.push(format!("undeclared variable '{v}' appears in {what}"));
                }
            }
        };
        let mut seen = BTreeSet::new();
        for e in &self.drift {
            check("drift", e, &mut out);
        }
        for (i, f) in self.fields.iter().enumerate() {
            for e in f {
                check(&format!("f_{}", i + 1), e, &mut out);
            }
        }
        for (name, h) in &self.outputs {
            check(&format!("output '{name}'"), h, &mut out);
        }
        out.retain(|m| seen.insert(m.clone()));

        for (k, c) in self.constraints.iter().enumerate() {
            let tag = format!("constraint {k} ({})", c.kind.name());
            if c.kind.involves_inputs() {
                if c.input_terms.is_empty() {
                    out.push(format!("{tag} is affine in inputs but has no input terms"));
                }
                for (u, _) in &c.input_terms {
                    if !inputs.contains(u) {
                        out.push(format!("{tag} refers to unknown input '{u}'"));
                    }
                }
            } else if !c.input_terms.is_empty() {
                out.push(format!("{tag} is a state constraint but has input terms"));
            }
            for e in c.exprs() {
                check(&tag, e, &mut out);
            }
            if let Some(s) = &c.solve_for {
                let ok = if c.kind.involves_inputs() {
                    c.input_terms.iter().any(|(u, _)| u == s)
                } else {
                    self.state.contains(s)
                };
                if !ok {
                    out.push(format!("{tag} cannot solve for '{s}'"));
                }
            }
            if let Some(p) = &c.param {
                if names.contains(p.as_str()) {
                    out.push(format!("{tag} parameter '{p}' clashes with a declared name"));
                }
            }
        }
        out
    }
}
