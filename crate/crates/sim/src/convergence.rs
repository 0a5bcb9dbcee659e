use serde::{Deserialize, Serialize};

/// Time series of estimation errors and one-sigma bounds per scalar variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub variables: Vec<String>,
    pub times: Vec<f64>,
    /// `errors[k][i]` is the error of variable `i` at epoch `k`.
    pub errors: Vec<Vec<f64>>,
    pub sigmas: Vec<Vec<f64>>,
}

impl Series {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConvergenceLabel {
    Converged,
    NonConverged,
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Ratios below this are Converged.
    pub converged: f64,
    /// Ratios above this are NonConverged.
    pub non_converged: f64,
    /// Fraction of epochs within 3σ for the consistency flag.
    pub consistent_fraction: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            converged: 0.1,
            non_converged: 0.3,
            consistent_fraction: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceVerdict {
    pub variable: String,
    /// Final over initial 3σ.
    pub ratio: f64,
    pub label: ConvergenceLabel,
    pub consistent: bool,
    pub final_error: f64,
    pub final_sigma3: f64,
}

pub fn label_for(ratio: f64, th: &Thresholds) -> ConvergenceLabel {
    if ratio < th.converged {
        ConvergenceLabel::Converged
    } else if ratio > th.non_converged || ratio.is_nan() {
        ConvergenceLabel::NonConverged
    } else {
        ConvergenceLabel::Marginal
    }
}

/// Verdicts for the named variables, or for all of them when `variables`
/// is empty. Needs at least two epochs; returns nothing otherwise.
pub fn classify_convergence(series: &Series, variables: &[&str], th: &Thresholds) -> Vec<ConvergenceVerdict> {
    let n = series.times.len();
    if n < 2 {
        return vec![];
    }
    let picked: Vec<usize> = if variables.is_empty() {
        (0..series.variables.len()).collect()
    } else {
        variables.iter().filter_map(|v| series.index_of(v)).collect()
    };
    picked
        .into_iter()
        .map(|i| {
            let first = 3.0 * series.sigmas[0][i];
            let last = 3.0 * series.sigmas[n - 1][i];
            let ratio = last / first;
            let inside = (0..n)
                .filter(|&k| series.errors[k][i].abs() <= 3.0 * series.sigmas[k][i])
                .count();
            ConvergenceVerdict {
                variable: series.variables[i].clone(),
                ratio,
                label: label_for(ratio, th),
                consistent: inside as f64 >= th.consistent_fraction * n as f64,
                final_error: series.errors[n - 1][i],
                final_sigma3: last,
            }
        })
        .collect()
}
