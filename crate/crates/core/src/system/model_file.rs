//! JSON model files.
//!
//! ```json
//! {
//!   "state": ["x", "v"],
//!   "inputs": ["a"],
//!   "constants": [],
//!   "drift": ["v", "0"],
//!   "fields": [["0", "1"]],
//!   "outputs": {"y": "x"},
//!   "constraints": [
//!     {"kind": "zero_affine", "c0": "0", "input_terms": [{"input": "a", "coeff": "1"}]}
//!   ]
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Map;
use thiserror::Error;

use super::{AffineControlSystem, Constraint, ConstraintKind};
use crate::expr::{parse, Expr, ParseError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("in {location}: cannot parse '{source_text}': {error}")]
    Expr {
        location: String,
        source_text: String,
        error: ParseError,
    },
    #[error("unknown constraint kind '{0}'")]
    UnknownKind(String),
    #[error("invalid model: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputTermFile {
    pub input: String,
    pub coeff: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintFile {
    pub kind: String,
    pub c0: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub input_terms: Vec<InputTermFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve_for: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub state: Vec<String>,
    #[serde(default)]
    pub inputs: Vec<String>,
    #[serde(default)]
    pub constants: Vec<String>,
    pub drift: Vec<String>,
    #[serde(default)]
    pub fields: Vec<Vec<String>>,
    /// Output name to expression, in declaration order.
    pub outputs: Map<String, serde_json::Value>,
    #[serde(default)]
    pub constraints: Vec<ConstraintFile>,
}

fn parse_at(location: impl Into<String>, text: &str) -> Result<Expr, ModelError> {
    parse(text).map_err(|error| ModelError::Expr {
        location: location.into(),
        source_text: text.to_string(),
        error,
    })
}

impl ModelFile {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model file serializes")
    }

    /// Parses every expression and checks the structural invariants.
    pub fn to_system(&self) -> Result<AffineControlSystem, ModelError> {
        let drift = self
            .drift
            .iter()
            .enumerate()
            .map(|(k, s)| parse_at(format!("drift[{k}]"), s))
            .collect::<Result<Vec<_>, _>>()?;
        let mut fields = Vec::with_capacity(self.fields.len());
        for (i, f) in self.fields.iter().enumerate() {
            fields.push(
                f.iter()
                    .enumerate()
                    .map(|(k, s)| parse_at(format!("fields[{i}][{k}]"), s))
                    .collect::<Result<Vec<_>, _>>()?,
            );
        }
        let mut outputs = Vec::with_capacity(self.outputs.len());
        for (name, value) in &self.outputs {
            let text = match value {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            outputs.push((name.clone(), parse_at(format!("outputs.{name}"), &text)?));
        }
        let mut constraints = Vec::with_capacity(self.constraints.len());
        for (k, c) in self.constraints.iter().enumerate() {
            let kind = ConstraintKind::from_name(&c.kind).ok_or_else(|| ModelError::UnknownKind(c.kind.clone()))?;
            let input_terms = c
                .input_terms
                .iter()
                .map(|t| Ok((t.input.clone(), parse_at(format!("constraints[{k}].{}", t.input), &t.coeff)?)))
                .collect::<Result<Vec<_>, ModelError>>()?;
            constraints.push(Constraint {
                kind,
                c0: parse_at(format!("constraints[{k}].c0"), &c.c0)?,
                input_terms,
                solve_for: c.solve_for.clone(),
                param: c.param.clone(),
            });
        }
        let sys = AffineControlSystem {
            state: self.state.clone(),
            inputs: self.inputs.clone(),
            constants: self.constants.clone(),
            drift,
            fields,
            outputs,
            constraints,
        };
        let problems = sys.validate();
        if problems.is_empty() {
            Ok(sys)
        } else {
            Err(ModelError::Invalid(problems))
        }
    }

    pub fn from_system(sys: &AffineControlSystem) -> Self {
        let s = |e: &Expr| e.to_string();
        ModelFile {
            state: sys.state.clone(),
            inputs: sys.inputs.clone(),
            constants: sys.constants.clone(),
            drift: sys.drift.iter().map(s).collect(),
            fields: sys.fields.iter().map(|f| f.iter().map(s).collect()).collect(),
            outputs: sys
                .outputs
                .iter()
                .map(|(n, h)| (n.clone(), serde_json::Value::String(s(h))))
                .collect(),
            constraints: sys
                .constraints
                .iter()
                .map(|c| ConstraintFile {
                    kind: c.kind.name().to_string(),
                    c0: s(&c.c0),
                    input_terms: c
                        .input_terms
                        .iter()
                        .map(|(u, k)| InputTermFile {
                            input: u.clone(),
                            coeff: s(k),
                        })
                        .collect(),
                    solve_for: c.solve_for.clone(),
                    param: c.param.clone(),
                })
                .collect(),
        }
    }
}

impl AffineControlSystem {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        ModelFile::from_json(text)?.to_system()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        ModelFile::from_system(self).to_json()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::equals_random;

    const TOY: &str = r#"{
        "state": ["x", "v"],
        "inputs": ["a"],
        "drift": ["v", "0"],
        "fields": [["0", "1"]],
        "outputs": {"y": "x", "e": "v^2/2"},
        "constraints": [
            {"kind": "const_affine", "c0": "0", "input_terms": [{"input": "a", "coeff": "1"}], "param": "d"}
        ]
    }"#;

    #[test]
    fn loads_and_round_trips() {
        let sys = AffineControlSystem::from_json(TOY).unwrap();
        assert_eq!(sys.outputs[0].0, "y");
        assert_eq!(sys.outputs[1].0, "e");
        assert_eq!(sys.constraints[0].kind, ConstraintKind::ConstAffine);
        let back = AffineControlSystem::from_json(&sys.to_json()).unwrap();
        assert_eq!(back.state, sys.state);
        assert!(equals_random(&back.outputs[1].1, &sys.outputs[1].1, 3, 0).unwrap());
        assert_eq!(back.constraints[0].param.as_deref(), Some("d"));
    }

    #[test]
    fn parse_errors_carry_location() {
        let bad = TOY.replace("v^2/2", "v^(1/2)");
        match AffineControlSystem::from_json(&bad) {
            Err(ModelError::Expr { location, .. }) => assert_eq!(location, "outputs.e"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn structural_problems_are_reported() {
        let bad = TOY.replace(r#"["v", "0"]"#, r#"["v + a", "0"]"#);
        match AffineControlSystem::from_json(&bad) {
            Err(ModelError::Invalid(msgs)) => assert!(msgs.iter().any(|m| m.contains("input 'a' appears in drift"))),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_kind() {
        let bad = TOY.replace("const_affine", "sideways");
        assert!(matches!(AffineControlSystem::from_json(&bad), Err(ModelError::UnknownKind(_))));
    }
}
