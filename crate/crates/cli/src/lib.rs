//! Command implementations behind the `noct` binary.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success; for `check-null`, every vector annihilates the codistribution |
//! | 1 | `check-null`: some vector is not in the kernel |
//! | 2 | bad input: usage, unreadable or invalid model, failed conversion, dimension mismatch |
//! | 3 | `analyze`: the rank search stopped at `--max-order` before stabilizing |
//! | 4 | `simulate`: a filter run diverged (outputs are still written) |

use std::path::{Path, PathBuf};

use noct_core::expr::{parse, Expr, ParseError};
use noct_core::models::{vio_constraints, VioConstraintKind};
use noct_core::observability::{self, AnalysisOptions, ObservabilityError, ObservabilityReport};
use noct_core::par::ExecMode;
use noct_core::system::{
    apply_constraints, AffineControlSystem, ConstraintFile, ConversionError, GenericCheck, ModelError, ModelFile,
};
use noct_sim::convergence::Thresholds;
use noct_sim::{run_batch, write_outputs, RunOutput, SimError, SimScenario};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_NULL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_TRUNCATED: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;

/// Environment variable that takes precedence over `--seed`.
pub const SEED_ENV: &str = "NOCT_SEED";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("conversion failed: {0}")]
    Conversion(#[from] ConversionError),
    #[error("analysis failed: {0}")]
    Analysis(#[from] ObservabilityError),
    #[error("'{0}' is neither a constraint preset nor a readable file")]
    Constraints(String),
    #[error("{path}: {message}")]
    VectorFile { path: String, message: String },
    #[error("vector {index} has {got} entries, the converted system has {expected} states")]
    DimensionMismatch { index: usize, got: usize, expected: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0}")]
    Usage(String),
    #[error("cannot write '{path}': {source}")]
    Write { path: String, source: std::io::Error },
    #[error("invalid {SEED_ENV}: '{0}'")]
    SeedEnv(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        EXIT_INPUT
    }

    /// Stable machine-readable tag for `--json-errors`.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Model(_) => "model",
            CliError::Conversion(_) => "conversion",
            CliError::Analysis(_) => "analysis",
            CliError::Constraints(_) => "constraints",
            CliError::VectorFile { .. } => "vector_file",
            CliError::DimensionMismatch { .. } => "dimension_mismatch",
            CliError::Sim(_) => "simulation",
            CliError::Usage(_) => "usage",
            CliError::Write { .. } => "io",
            CliError::SeedEnv(_) => "usage",
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}

/// Settings shared by every command.
#[derive(Debug, Clone, Copy)]
pub struct Settings {
    pub points: usize,
    pub max_order: usize,
    pub seed: u64,
    pub mode: ExecMode,
}

impl Default for Settings {
    fn default() -> Self {
        let a = AnalysisOptions::default();
        Settings {
            points: a.points,
            max_order: a.max_order,
            seed: a.seed,
            mode: a.mode,
        }
    }
}

impl Settings {
    pub fn analysis(&self) -> AnalysisOptions {
        AnalysisOptions {
            max_order: self.max_order,
            points: self.points,
            seed: self.seed,
            mode: self.mode,
        }
    }
}

/// `NOCT_SEED` if set, else the flag value.
pub fn effective_seed(flag: u64, env: Option<&str>) -> Result<u64, CliError> {
    match env {
        Some(s) => s.trim().parse().map_err(|_| CliError::SeedEnv(s.to_string())),
        None => Ok(flag),
    }
}

/// Loads a model and appends extra constraints, given either as a preset
/// name or as a JSON file holding a list of constraint objects.
pub fn load_model(path: &Path, constraints: Option<&str>) -> Result<AffineControlSystem, CliError> {
    let text = std::fs::read_to_string(path).map_err(ModelError::Io)?;
    let mut file = ModelFile::from_json(&text)?;
    let mut preset = None;
    if let Some(spec) = constraints {
        if let Ok(kind) = spec.parse::<VioConstraintKind>() {
            preset = Some(kind);
        } else if Path::new(spec).is_file() {
            let text = std::fs::read_to_string(spec).map_err(ModelError::Io)?;
            let extra: Vec<ConstraintFile> = serde_json::from_str(&text).map_err(ModelError::Json)?;
            file.constraints.extend(extra);
        } else {
            return Err(CliError::Constraints(spec.to_string()));
        }
    }
    let mut sys = file.to_system()?;
    if let Some(kind) = preset {
        sys.constraints.extend(vio_constraints(kind));
    }
    Ok(sys)
}

/// The model in standard form.
pub fn convert(path: &Path, constraints: Option<&str>) -> Result<AffineControlSystem, CliError> {
    let sys = load_model(path, constraints)?;
    Ok(apply_constraints(&sys, &GenericCheck::default())?)
}

pub fn analyze(path: &Path, constraints: Option<&str>, settings: &Settings) -> Result<ObservabilityReport, CliError> {
    let sys = convert(path, constraints)?;
    let (_, report) = observability::analyze(&sys, &settings.analysis())?;
    Ok(report)
}

/// One-line description of a report for humans.
pub fn summary_line(report: &ObservabilityReport) -> String {
    let n = report.state_dim;
    let kernel = report.kernel_dims().into_iter().max().unwrap_or(0);
    let mut line = if report.final_rank == n && kernel == 0 {
        format!("rank {}/{n}: fully observable", report.final_rank)
    } else {
        format!(
            "rank {}/{n}: kernel dimension {kernel}; indeterminable: {}",
            report.final_rank,
            report.indeterminable().join(", ")
        )
    };
    if report.truncated_at_max_order {
        line.push_str(" (truncated at max order)");
    }
    line
}

/// Parses a vector file: one expression per line, `#` starts a comment,
/// and a line holding only `---` separates vectors.
pub fn parse_vectors(text: &str) -> Result<Vec<Vec<Expr>>, (usize, ParseError)> {
    let mut out = vec![];
    let mut cur = vec![];
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line == "---" {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        cur.push(parse(line).map_err(|e| (lineno + 1, e))?);
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    Ok(out)
}

pub fn load_vectors(path: &Path) -> Result<Vec<Vec<Expr>>, CliError> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| CliError::VectorFile {
        path: shown.clone(),
        message: e.to_string(),
    })?;
    let vectors = parse_vectors(&text).map_err(|(line, e)| CliError::VectorFile {
        path: shown.clone(),
        message: format!("line {line}: {e}"),
    })?;
    if vectors.is_empty() {
        return Err(CliError::VectorFile {
            path: shown,
            message: "no vectors".into(),
        });
    }
    Ok(vectors)
}

/// Per vector, whether it annihilates the codistribution of the converted model.
pub fn check_null(
    model: &Path,
    vectors: &Path,
    constraints: Option<&str>,
    settings: &Settings,
) -> Result<Vec<bool>, CliError> {
    let sys = convert(model, constraints)?;
    let vectors = load_vectors(vectors)?;
    let n = sys.state_dim();
    if let Some((index, v)) = vectors.iter().enumerate().find(|(_, v)| v.len() != n) {
        return Err(CliError::DimensionMismatch {
            index,
            got: v.len(),
            expected: n,
        });
    }
    let cod = observability::build_codistribution(&sys, &settings.analysis())?;
    Ok(vectors.iter().map(|v| observability::verify_null_vector(&cod, v)).collect())
}

pub struct SimulateOutcome {
    pub runs: Vec<RunOutput>,
    pub summary_path: PathBuf,
    /// Runs whose measurements could not be generated.
    pub errors: Vec<(u64, SimError)>,
}

impl SimulateOutcome {
    pub fn diverged(&self) -> bool {
        self.runs.iter().any(|r| r.failure.is_some())
    }
}

pub fn simulate(scenario: &str, runs: usize, seed: u64, out_dir: &Path, mode: ExecMode) -> Result<SimulateOutcome, CliError> {
    if runs == 0 {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    let sc = SimScenario::named(scenario)?;
    let th = Thresholds::default();
    let mut ok = vec![];
    let mut errors = vec![];
    for (k, r) in run_batch(&sc, seed, runs, &th, mode).into_iter().enumerate() {
        match r {
            Ok(r) => ok.push(r),
            Err(e) => errors.push((seed + k as u64, e)),
        }
    }
    let summary_path = write_outputs(out_dir, sc.name(), &ok, &th)?;
    Ok(SimulateOutcome {
        runs: ok,
        summary_path,
        errors,
    })
}

/// Writes `text` to `path`, or to stdout when `path` is `None`.
pub fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| CliError::Write {
            path: p.display().to_string(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_file_blocks_and_comments() {
        let text = "# first\nx + 1\n0 # zero\n---\n\n2*y\n3\n---\n";
        let v = parse_vectors(text).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].len(), 2);
        assert_eq!(v[1][0].to_string(), parse("2*y").unwrap().to_string());
    }

    #[test]
    fn bad_expression_reports_its_line() {
        let (line, _) = parse_vectors("1\n\n(x +\n").unwrap_err();
        assert_eq!(line, 3);
    }

    #[test]
    fn env_seed_wins() {
        assert_eq!(effective_seed(3, None).unwrap(), 3);
        assert_eq!(effective_seed(3, Some("17")).unwrap(), 17);
        assert!(effective_seed(3, Some("x")).is_err());
    }
}
