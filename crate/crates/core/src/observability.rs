//! Lie-derivative observability analysis of standard-form systems.
//!
//! The codistribution is grown one Lie order at a time. Each round extends
//! the rows that entered the row basis in the previous round by every
//! vector field, evaluates the new gradients exactly at a fixed set of
//! random rational points, and keeps the rows that are independent there.
//! The generic rank is the largest rank seen over the points.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::ser::{SerializeMap, SerializeSeq};
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::expr::{gradient, random_point, EvalError, Evaluator, Expr, Point, MAX_RESAMPLES};
use crate::linalg::{null_space, rank, rank_without_column, IncrementalBasis, RationalMatrix};
use crate::par::{self, ExecMode};
use crate::system::AffineControlSystem;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ObservabilityError {
    #[error("field index {index} out of range (system has {fields} fields)")]
    IndexOutOfRange { index: usize, fields: usize },
    #[error("every sample point hit a pole after {MAX_RESAMPLES} attempts")]
    PoleAtAllSamples,
    #[error("system still has {0} constraint(s); convert it to standard form first")]
    NotStandardForm(usize),
    #[error("invalid system: {}", .0.join("; "))]
    InvalidSystem(Vec<String>),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalysisOptions {
    pub max_order: usize,
    pub points: usize,
    pub seed: u64,
    pub mode: ExecMode,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            max_order: 6,
            points: 5,
            seed: 0,
            mode: ExecMode::default(),
        }
    }
}

/// Provenance of a row: output index and the fields applied, in order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DerivativeWord {
    pub output: usize,
    pub fields: Vec<usize>,
}

impl std::fmt::Display for DerivativeWord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "L{}", self.fields.len())?;
        if !self.fields.is_empty() {
            let names: Vec<String> = self.fields.iter().map(|j| format!("f{j}")).collect();
            write!(f, "{{{}}}", names.join(","))?;
        }
        write!(f, "h{}", self.output + 1)
    }
}

#[derive(Debug, Clone)]
pub struct CodistributionRow {
    pub word: DerivativeWord,
    pub lie: Expr,
    pub gradient: Vec<Expr>,
}

#[derive(Debug, Clone)]
pub struct Codistribution {
    pub state: Vec<String>,
    /// Every row generated, kept or not.
    pub rows: Vec<CodistributionRow>,
    /// Indices into `rows` of the retained spanning set, in insertion order.
    pub basis_rows: Vec<usize>,
    /// Highest Lie order generated.
    pub order: usize,
    pub rank_history: Vec<(usize, usize)>,
    pub truncated: bool,
    pub points: Vec<Point>,
    pub sample_seeds: Vec<u64>,
    pub warnings: Vec<String>,
    /// `evaluated[p]` holds the basis rows evaluated at `points[p]`.
    evaluated: Vec<RationalMatrix>,
}

impl Codistribution {
    pub fn rank(&self) -> usize {
        self.rank_history.last().map_or(0, |&(_, r)| r)
    }

    pub fn evaluated_at(&self, point: usize) -> &RationalMatrix {
        &self.evaluated[point]
    }

    pub fn basis(&self) -> impl Iterator<Item = &CodistributionRow> {
        self.basis_rows.iter().map(|&i| &self.rows[i])
    }
}

/// Iterated Lie derivative of `h` along the fields named by `word`
/// (0 is the drift, `i ≥ 1` the field of input `i−1`).
pub fn lie_derivative(sys: &AffineControlSystem, h: &Expr, word: &[usize]) -> Result<Expr, ObservabilityError> {
    let mut e = h.clone();
    for &j in word {
        let f = sys.field(j).ok_or(ObservabilityError::IndexOutOfRange {
            index: j,
            fields: sys.field_count(),
        })?;
        e = Expr::dot(&gradient(&e, &sys.state), f);
    }
    Ok(e)
}

fn point_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_add(k as u64)
}

pub fn build_codistribution(sys: &AffineControlSystem, opts: &AnalysisOptions) -> Result<Codistribution, ObservabilityError> {
    if !sys.constraints.is_empty() {
        return Err(ObservabilityError::NotStandardForm(sys.constraints.len()));
    }
    let problems = sys.validate();
    if !problems.is_empty() {
        return Err(ObservabilityError::InvalidSystem(problems));
    }
    assert!(opts.points >= 1, "at least one sample point is required");

    let vars = sys.admissible_vars();
    let mut rngs: Vec<ChaCha8Rng> = (0..opts.points).map(|k| ChaCha8Rng::seed_from_u64(point_seed(opts.seed, k))).collect();
    let mut points: Vec<Point> = rngs.iter_mut().map(|r| random_point(&vars, r)).collect();

    let mut attempts = 0;
    loop {
        match grow(sys, opts, &points) {
            Ok(mut cod) => {
                cod.sample_seeds = (0..opts.points).map(|k| point_seed(opts.seed, k)).collect();
                if attempts > 0 {
                    cod.warnings.push(format!("{attempts} sample point(s) redrawn after hitting a pole"));
                }
                return Ok(cod);
            }
            Err(Grow::Pole(k)) => {
                attempts += 1;
                if attempts >= MAX_RESAMPLES {
                    return Err(ObservabilityError::PoleAtAllSamples);
                }
                points[k] = random_point(&vars, &mut rngs[k]);
            }
            Err(Grow::Other(e)) => return Err(e),
        }
    }
}

enum Grow {
    Pole(usize),
    Other(ObservabilityError),
}

struct PointState<'p> {
    eval: Evaluator<'p>,
    basis: IncrementalBasis,
    kept: Vec<Vec<BigRational>>,
}

fn grow(sys: &AffineControlSystem, opts: &AnalysisOptions, points: &[Point]) -> Result<Codistribution, Grow> {
    let n = sys.state.len();
    let fields = sys.field_count();
    let mut states: Vec<PointState> = points
        .iter()
        .map(|p| PointState {
            eval: Evaluator::new(p),
            basis: IncrementalBasis::new(n),
            kept: Vec::new(),
        })
        .collect();

    let mut rows: Vec<CodistributionRow> = par::map(opts.mode, &sys.outputs, |(_, h)| (h.clone(), gradient(h, &sys.state)))
        .into_iter()
        .enumerate()
        .map(|(j, (lie, grad))| CodistributionRow {
            word: DerivativeWord {
                output: j,
                fields: Vec::new(),
            },
            lie,
            gradient: grad,
        })
        .collect();

    let mut basis_rows = Vec::new();
    let mut warnings = Vec::new();
    let mut frontier = admit(&mut states, &rows, 0, &mut basis_rows, &mut warnings, opts.mode)?;
    let generic_rank = |states: &[PointState]| states.iter().map(|s| s.basis.rank()).max().unwrap_or(0);
    let mut rank_history = vec![(0, generic_rank(&states))];
    let mut order = 0;
    let mut saturated = rank_history[0].1 == n;

    while !saturated && order < opts.max_order && !frontier.is_empty() {
        order += 1;
        let jobs: Vec<(usize, usize)> = frontier.iter().flat_map(|&r| (0..fields).map(move |j| (r, j))).collect();
        let candidates = par::map(opts.mode, &jobs, |&(r, j)| {
            let parent = &rows[r];
            let lie = Expr::dot(&parent.gradient, sys.field(j).expect("index below field_count"));
            let grad = gradient(&lie, &sys.state);
            let mut word = parent.word.clone();
            word.fields.push(j);
            CodistributionRow { word, lie, gradient: grad }
        });
        let start = rows.len();
        rows.extend(candidates);
        frontier = admit(&mut states, &rows, start, &mut basis_rows, &mut warnings, opts.mode)?;
        let r = generic_rank(&states);
        let prev = rank_history.last().unwrap().1;
        rank_history.push((order, r));
        saturated = r == prev || r == n;
    }
    // An empty frontier means the last round could add nothing.
    let truncated = !saturated && !frontier.is_empty();

    let ranks: Vec<usize> = states.iter().map(|s| s.basis.rank()).collect();
    if ranks.iter().any(|&r| r != ranks[0]) {
        warnings.push(format!("rank differs across sample points: {ranks:?}"));
    }
    let evaluated = states
        .into_iter()
        .map(|s| RationalMatrix::from_rows(n, s.kept))
        .collect();
    Ok(Codistribution {
        state: sys.state.clone(),
        rows,
        basis_rows,
        order,
        rank_history,
        truncated,
        points: points.to_vec(),
        sample_seeds: Vec::new(),
        warnings,
        evaluated,
    })
}

/// Evaluates `rows[start..]` at every point and admits, in order, those
/// independent of the current basis at some point. Returns the admitted indices.
fn admit(
    states: &mut [PointState],
    rows: &[CodistributionRow],
    start: usize,
    basis_rows: &mut Vec<usize>,
    warnings: &mut Vec<String>,
    mode: ExecMode,
) -> Result<Vec<usize>, Grow> {
    let fresh = &rows[start..];
    let values = par::map_mut(mode, states, |s| {
        fresh
            .iter()
            .map(|row| s.eval.eval_all(&row.gradient))
            .collect::<Result<Vec<_>, _>>()
    });
    let mut values: Vec<Vec<Vec<BigRational>>> = values
        .into_iter()
        .enumerate()
        .map(|(p, v)| {
            v.map_err(|e| match e {
                EvalError::DivisionByZero => Grow::Pole(p),
                other => Grow::Other(other.into()),
            })
        })
        .collect::<Result<_, _>>()?;

    let mut admitted = Vec::new();
    for (c, row) in fresh.iter().enumerate() {
        let independent: Vec<bool> = states.iter().zip(&values).map(|(s, v)| s.basis.is_independent(&v[c])).collect();
        if !independent.iter().any(|&b| b) {
            continue;
        }
        if !independent.iter().all(|&b| b) {
            warnings.push(format!("{} is independent at only some sample points", row.word));
        }
        for (p, s) in states.iter_mut().enumerate() {
            let v = std::mem::take(&mut values[p][c]);
            s.basis.insert(&v);
            s.kept.push(v);
        }
        basis_rows.push(start + c);
        admitted.push(start + c);
    }
    Ok(admitted)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VariableClass {
    Observable,
    Indeterminable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RankStep {
    pub order: usize,
    pub rank: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ObservabilityReport {
    pub state: Vec<String>,
    pub state_dim: usize,
    pub final_rank: usize,
    pub rank_history: Vec<RankStep>,
    pub truncated_at_max_order: bool,
    #[serde(serialize_with = "ser_classification")]
    pub classification: Vec<(String, VariableClass)>,
    pub basis_words: Vec<String>,
    /// Per sample point, a basis of the numeric kernel (each vector has `state_dim` entries).
    #[serde(serialize_with = "ser_kernels")]
    pub null_basis_numeric: Vec<Vec<Vec<BigRational>>>,
    #[serde(serialize_with = "ser_expr_vectors")]
    pub verified_null_vectors: Vec<Vec<Expr>>,
    pub sample_seeds: Vec<u64>,
    pub warnings: Vec<String>,
}

fn ser_classification<S: Serializer>(v: &[(String, VariableClass)], s: S) -> Result<S::Ok, S::Error> {
    let mut m = s.serialize_map(Some(v.len()))?;
    for (k, c) in v {
        m.serialize_entry(k, c)?;
    }
    m.end()
}

fn ser_kernels<S: Serializer>(v: &[Vec<Vec<BigRational>>], s: S) -> Result<S::Ok, S::Error> {
    let strings: Vec<Vec<Vec<String>>> = v
        .iter()
        .map(|basis| basis.iter().map(|vec| vec.iter().map(|x| x.to_string()).collect()).collect())
        .collect();
    let mut seq = s.serialize_seq(Some(strings.len()))?;
    for b in &strings {
        seq.serialize_element(b)?;
    }
    seq.end()
}

fn ser_expr_vectors<S: Serializer>(v: &[Vec<Expr>], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for vec in v {
        let strings: Vec<String> = vec.iter().map(|e| e.to_string()).collect();
        seq.serialize_element(&strings)?;
    }
    seq.end()
}

impl ObservabilityReport {
    pub fn class_of(&self, var: &str) -> Option<VariableClass> {
        self.classification.iter().find(|(v, _)| v == var).map(|&(_, c)| c)
    }

    pub fn indeterminable(&self) -> Vec<&str> {
        self.classification
            .iter()
            .filter(|(_, c)| *c == VariableClass::Indeterminable)
            .map(|(v, _)| v.as_str())
            .collect()
    }

    /// Kernel dimension at each sample point.
    pub fn kernel_dims(&self) -> Vec<usize> {
        self.null_basis_numeric.iter().map(Vec::len).collect()
    }

    /// Checks `n` against the codistribution and records it when it passes.
    pub fn verify_and_record(&mut self, cod: &Codistribution, n: Vec<Expr>) -> bool {
        let ok = verify_null_vector(cod, &n);
        if ok {
            self.verified_null_vectors.push(n);
        }
        ok
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn classify_variables(cod: &Codistribution) -> ObservabilityReport {
    let n = cod.state.len();
    let per_point: Vec<(usize, Vec<bool>, Vec<Vec<BigRational>>)> = cod
        .evaluated
        .iter()
        .map(|m| {
            let r = rank(m);
            let drops: Vec<bool> = (0..n)
                .map(|i| rank_without_column(m, i).expect("column in range") + 1 == r)
                .collect();
            let k = null_space(m);
            let vectors = (0..k.cols()).map(|c| k.column(c)).collect();
            (r, drops, vectors)
        })
        .collect();

    let mut warnings = cod.warnings.clone();
    let classification = cod
        .state
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let votes = per_point.iter().filter(|(_, d, _)| d[i]).count();
            if votes > 0 && votes < per_point.len() {
                warnings.push(format!("'{v}' passes the column test at only {votes} of {} points", per_point.len()));
            }
            let class = if votes == per_point.len() {
                VariableClass::Observable
            } else {
                VariableClass::Indeterminable
            };
            (v.clone(), class)
        })
        .collect();

    ObservabilityReport {
        state: cod.state.clone(),
        state_dim: n,
        final_rank: cod.rank(),
        rank_history: cod.rank_history.iter().map(|&(order, rank)| RankStep { order, rank }).collect(),
        truncated_at_max_order: cod.truncated,
        classification,
        basis_words: cod.basis().map(|r| r.word.to_string()).collect(),
        null_basis_numeric: per_point.into_iter().map(|(_, _, k)| k).collect(),
        verified_null_vectors: Vec::new(),
        sample_seeds: cod.sample_seeds.clone(),
        warnings,
    }
}

/// Builds and classifies in one step.
pub fn analyze(sys: &AffineControlSystem, opts: &AnalysisOptions) -> Result<(Codistribution, ObservabilityReport), ObservabilityError> {
    let cod = build_codistribution(sys, opts)?;
    let report = classify_variables(&cod);
    Ok((cod, report))
}

/// True iff every basis row annihilates `n` at all of the shared points.
pub fn verify_null_vector(cod: &Codistribution, n: &[Expr]) -> bool {
    if n.len() != cod.state.len() {
        return false;
    }
    cod.points.iter().zip(&cod.evaluated).all(|(p, m)| {
        let Ok(v) = Evaluator::new(p).eval_all(n) else {
            return false;
        };
        (0..m.rows()).all(|i| {
            m.row(i)
                .iter()
                .zip(&v)
                .fold(BigRational::zero(), |acc, (a, b)| acc + a * b)
                .is_zero()
        })
    })
}

/// Whether each input and output stays constant over the interval of interest.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConstancyDescriptor {
    pub inputs: Vec<(String, bool)>,
    pub outputs: Vec<(String, bool)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TimeOffsetVerdict {
    /// The sufficient condition for an unobservable time offset holds.
    UnobservableSufficient,
    /// The condition does not apply; nothing is concluded.
    Unknown,
}

pub fn check_time_offset_condition(desc: &ConstancyDescriptor) -> TimeOffsetVerdict {
    let all_const = |xs: &[(String, bool)]| !xs.is_empty() && xs.iter().all(|(_, c)| *c);
    if all_const(&desc.inputs) || all_const(&desc.outputs) {
        TimeOffsetVerdict::UnobservableSufficient
    } else {
        TimeOffsetVerdict::Unknown
    }
}

/// Exact rational point with small integer coordinates, for tests and fixtures.
pub fn integer_point(values: &[(&str, i64)]) -> Point {
    values
        .iter()
        .map(|(k, v)| (k.to_string(), BigRational::from_integer(BigInt::from(*v))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{equals_random, parse};

    fn e(s: &str) -> Expr {
        parse(s).unwrap()
    }

    fn integrator() -> AffineControlSystem {
        AffineControlSystem {
            state: vec!["x".into()],
            inputs: vec!["u".into()],
            constants: vec![],
            drift: vec![Expr::zero()],
            fields: vec![vec![Expr::one()]],
            outputs: vec![("y".into(), e("x"))],
            constraints: vec![],
        }
    }

    #[test]
    fn lie_derivative_words() {
        let sys = integrator();
        let h = e("x");
        assert!(lie_derivative(&sys, &h, &[]).unwrap().ptr_eq(&h));
        assert!(lie_derivative(&sys, &h, &[1]).unwrap().is_one());
        assert!(lie_derivative(&sys, &h, &[1, 1]).unwrap().is_zero());
        assert_eq!(
            lie_derivative(&sys, &h, &[2]).unwrap_err(),
            ObservabilityError::IndexOutOfRange { index: 2, fields: 2 }
        );
    }

    #[test]
    fn word_rendering() {
        let w = DerivativeWord {
            output: 0,
            fields: vec![0, 3],
        };
        assert_eq!(w.to_string(), "L2{f0,f3}h1");
        let w = DerivativeWord {
            output: 1,
            fields: vec![],
        };
        assert_eq!(w.to_string(), "L0h2");
    }

    #[test]
    fn constant_output_has_rank_zero() {
        let mut sys = integrator();
        sys.outputs[0].1 = e("3");
        let (_, rep) = analyze(&sys, &AnalysisOptions::default()).unwrap();
        assert_eq!(rep.final_rank, 0);
        assert_eq!(rep.indeterminable(), vec!["x"]);
        assert_eq!(rep.kernel_dims(), vec![1; 5]);
    }

    #[test]
    fn double_integrator_is_observable() {
        let sys = AffineControlSystem {
            state: vec!["p".into(), "v".into()],
            inputs: vec!["a".into()],
            constants: vec![],
            drift: vec![e("v"), Expr::zero()],
            fields: vec![vec![Expr::zero(), Expr::one()]],
            outputs: vec![("y".into(), e("p"))],
            constraints: vec![],
        };
        let (cod, rep) = analyze(&sys, &AnalysisOptions::default()).unwrap();
        assert_eq!(rep.final_rank, 2);
        assert!(rep.indeterminable().is_empty());
        assert!(rep.null_basis_numeric.iter().all(Vec::is_empty));
        assert_eq!(rep.basis_words, vec!["L0h1", "L1{f0}h1"]);
        assert!(!rep.truncated_at_max_order);
        assert!(verify_null_vector(&cod, &[Expr::zero(), Expr::zero()]));
        assert!(!verify_null_vector(&cod, &[Expr::one(), Expr::zero()]));
    }

    #[test]
    fn unobservable_direction_is_found() {
        // Only the difference of the two positions is measured.
        let sys = AffineControlSystem {
            state: vec!["a".into(), "b".into(), "c".into()],
            inputs: vec![],
            constants: vec![],
            drift: vec![e("c"), e("c"), Expr::zero()],
            fields: vec![],
            outputs: vec![("y".into(), e("a - b"))],
            constraints: vec![],
        };
        let (cod, mut rep) = analyze(&sys, &AnalysisOptions::default()).unwrap();
        assert_eq!(rep.final_rank, 1);
        assert_eq!(rep.class_of("c"), Some(VariableClass::Indeterminable));
        assert!(rep.verify_and_record(&cod, vec![e("1"), e("1"), e("0")]));
        assert!(!rep.verify_and_record(&cod, vec![e("1"), e("0"), e("0")]));
        assert_eq!(rep.verified_null_vectors.len(), 1);
        assert!(rep.to_json().contains("\"verified_null_vectors\""));
    }

    #[test]
    fn saturation_stops_before_max_order() {
        let sys = AffineControlSystem {
            state: vec!["x".into(), "y".into()],
            inputs: vec![],
            constants: vec![],
            drift: vec![e("y"), Expr::zero()],
            fields: vec![],
            outputs: vec![("h".into(), e("x*y"))],
            constraints: vec![],
        };
        let (cod, rep) = analyze(&sys, &AnalysisOptions::default()).unwrap();
        assert_eq!(rep.final_rank, 2);
        assert!(cod.order < 6);
        let ranks: Vec<usize> = rep.rank_history.iter().map(|s| s.rank).collect();
        assert!(ranks.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn truncation_is_flagged() {
        // Chain of integrators: order n−1 needed for full rank.
        let n = 5;
        let state: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        let mut drift: Vec<Expr> = (1..n).map(|i| Expr::var(&state[i])).collect();
        drift.push(Expr::zero());
        let sys = AffineControlSystem {
            state: state.clone(),
            inputs: vec![],
            constants: vec![],
            drift,
            fields: vec![],
            outputs: vec![("y".into(), Expr::var(&state[0]))],
            constraints: vec![],
        };
        let opts = AnalysisOptions {
            max_order: 2,
            ..Default::default()
        };
        let (_, rep) = analyze(&sys, &opts).unwrap();
        assert_eq!(rep.final_rank, 3);
        assert!(rep.truncated_at_max_order);
        let (_, rep) = analyze(&sys, &AnalysisOptions::default()).unwrap();
        assert_eq!(rep.final_rank, 5);
        assert!(!rep.truncated_at_max_order);
    }

    #[test]
    fn constrained_system_is_rejected() {
        let mut sys = integrator();
        sys.constraints.push(crate::system::Constraint::zero_state(e("x")));
        assert_eq!(
            build_codistribution(&sys, &AnalysisOptions::default()).unwrap_err(),
            ObservabilityError::NotStandardForm(1)
        );
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let sys = AffineControlSystem {
            state: vec!["x".into(), "y".into(), "z".into()],
            inputs: vec!["u".into()],
            constants: vec![],
            drift: vec![e("y*z"), e("x/(1 + z^2)"), Expr::zero()],
            fields: vec![vec![Expr::zero(), Expr::one(), e("x")]],
            outputs: vec![("h".into(), e("x^2 + y"))],
            constraints: vec![],
        };
        let mut opts = AnalysisOptions {
            mode: ExecMode::Sequential,
            ..Default::default()
        };
        let a = analyze(&sys, &opts).unwrap().1.to_json();
        opts.mode = ExecMode::Parallel;
        let b = analyze(&sys, &opts).unwrap().1.to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn time_offset_condition() {
        let d = |ins: &[bool], outs: &[bool]| ConstancyDescriptor {
            inputs: ins.iter().enumerate().map(|(i, &c)| (format!("u{i}"), c)).collect(),
            outputs: outs.iter().enumerate().map(|(i, &c)| (format!("y{i}"), c)).collect(),
        };
        use TimeOffsetVerdict::*;
        assert_eq!(check_time_offset_condition(&d(&[true; 6], &[false; 3])), UnobservableSufficient);
        assert_eq!(check_time_offset_condition(&d(&[false, true, true], &[false; 3])), Unknown);
        assert_eq!(check_time_offset_condition(&d(&[false; 6], &[true; 3])), UnobservableSufficient);
    }

    #[test]
    fn lie_derivative_matches_hand_computation() {
        let sys = AffineControlSystem {
            state: vec!["x".into(), "y".into()],
            inputs: vec!["u".into()],
            constants: vec![],
            drift: vec![e("y"), e("-x")],
            fields: vec![vec![Expr::zero(), e("x")]],
            outputs: vec![("h".into(), e("x*y"))],
            constraints: vec![],
        };
        let h = sys.outputs[0].1.clone();
        let l = lie_derivative(&sys, &h, &[0, 1]).unwrap();
        // L_f0 h = y² − x², then ∇(y² − x²)·(0, x) = 2xy
        assert!(equals_random(&l, &e("2*x*y"), 5, 0).unwrap());
    }
}
