use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use noct_core::par::{self, ExecMode};
use serde::Serialize;

use crate::convergence::{classify_convergence, ConvergenceLabel, ConvergenceVerdict, Series, Thresholds};
use crate::ekf::{run_ekf, FilterConfig, FilterRun, Nominal};
use crate::measurements::{scenario_rng, synthesize_measurements, MeasurementStream};
use crate::scenario::SimScenario;
use crate::SimError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutput {
    pub scenario: String,
    pub seed: u64,
    pub true_time_offset: f64,
    pub series: Series,
    pub verdicts: Vec<ConvergenceVerdict>,
    pub failure: Option<SimError>,
    pub landmark_updates: usize,
}

impl RunOutput {
    pub fn verdict(&self, variable: &str) -> Option<&ConvergenceVerdict> {
        self.verdicts.iter().find(|v| v.variable == variable)
    }

    pub fn label(&self, variable: &str) -> Option<ConvergenceLabel> {
        self.verdict(variable).map(|v| v.label)
    }

    pub fn csv_name(&self) -> String {
        format!("{}_{}.csv", self.scenario, self.seed)
    }

    /// One row per epoch: time, then error and 3σ for each variable.
    pub fn write_csv(&self, path: &Path) -> Result<(), SimError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| SimError::Io(e.to_string()))?;
        let mut header = vec!["time".to_string()];
        for v in &self.series.variables {
            header.push(format!("{v}_err"));
            header.push(format!("{v}_3sigma"));
        }
        w.write_record(&header).map_err(|e| SimError::Io(e.to_string()))?;
        for (k, t) in self.series.times.iter().enumerate() {
            let mut row = vec![t.to_string()];
            for (e, s) in self.series.errors[k].iter().zip(&self.series.sigmas[k]) {
                row.push(e.to_string());
                row.push((3.0 * s).to_string());
            }
            w.write_record(&row).map_err(|e| SimError::Io(e.to_string()))?;
        }
        w.flush().map_err(|e| SimError::Io(e.to_string()))
    }
}

/// Errors against the truth and sigmas for every epoch of a run.
pub fn error_series(stream: &MeasurementStream, run: &FilterRun, cfg: &FilterConfig) -> Series {
    let mut s = Series {
        variables: run.variables.clone(),
        times: vec![],
        errors: vec![],
        sigmas: vec![],
    };
    for ep in &run.epochs {
        let truth = Nominal::from_truth(&stream.truth, ep.nominal.time);
        s.times.push(ep.stamp);
        s.errors.push(ep.nominal.error_from(&truth, cfg.estimate_extrinsics));
        s.sigmas.push(ep.sigma.clone());
    }
    s
}

/// Simulate, filter and classify one run. Filter failures are reported in
/// the output together with the partial series; only scenario and
/// measurement errors are returned as `Err`.
pub fn run_scenario(scenario: &SimScenario, th: &Thresholds) -> Result<RunOutput, SimError> {
    let traj = scenario.trajectory();
    let stream = synthesize_measurements(&traj, scenario)?;
    let cfg = FilterConfig::for_scenario(scenario);
    let mut rng = scenario_rng(scenario.seed, 2);
    let init = Nominal::initial(&stream.truth, &cfg, &mut rng);
    let run = run_ekf(&stream, &cfg, init);
    let series = error_series(&stream, &run, &cfg);
    let verdicts = classify_convergence(&series, &[], th);
    Ok(RunOutput {
        scenario: scenario.name().to_string(),
        seed: scenario.seed,
        true_time_offset: stream.truth.t_d,
        landmark_updates: run.epochs.iter().map(|e| e.updates).sum(),
        series,
        verdicts,
        failure: run.failure,
    })
}

/// Independent runs with seeds `first_seed..first_seed + runs`.
pub fn run_batch(
    scenario: &SimScenario,
    first_seed: u64,
    runs: usize,
    th: &Thresholds,
    mode: ExecMode,
) -> Vec<Result<RunOutput, SimError>> {
    let seeds: Vec<u64> = (0..runs as u64).map(|k| first_seed + k).collect();
    par::map(mode, &seeds, |&seed| run_scenario(&scenario.clone().with_seed(seed), th))
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub true_time_offset: f64,
    pub csv: String,
    pub failure: Option<String>,
    pub verdicts: BTreeMap<String, VerdictSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerdictSummary {
    pub ratio: f64,
    pub label: ConvergenceLabel,
    pub consistent: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BatchSummary {
    pub scenario: String,
    pub thresholds: Thresholds,
    pub runs: Vec<RunSummary>,
    /// Per variable, how many runs received each label.
    pub label_counts: BTreeMap<String, BTreeMap<String, usize>>,
}

pub fn summarize(scenario: &str, runs: &[RunOutput], th: &Thresholds) -> BatchSummary {
    let mut label_counts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let runs = runs
        .iter()
        .map(|r| {
            let mut verdicts = BTreeMap::new();
            for v in &r.verdicts {
                *label_counts
                    .entry(v.variable.clone())
                    .or_default()
                    .entry(format!("{:?}", v.label))
                    .or_default() += 1;
                verdicts.insert(
                    v.variable.clone(),
                    VerdictSummary {
                        ratio: v.ratio,
                        label: v.label,
                        consistent: v.consistent,
                    },
                );
            }
            RunSummary {
                seed: r.seed,
                true_time_offset: r.true_time_offset,
                csv: r.csv_name(),
                failure: r.failure.as_ref().map(|e| e.to_string()),
                verdicts,
            }
        })
        .collect();
    BatchSummary {
        scenario: scenario.to_string(),
        thresholds: *th,
        runs,
        label_counts,
    }
}

/// Write one CSV per run and `<scenario>_summary.json` into `dir`.
pub fn write_outputs(dir: &Path, scenario: &str, runs: &[RunOutput], th: &Thresholds) -> Result<PathBuf, SimError> {
    std::fs::create_dir_all(dir).map_err(|e| SimError::Io(e.to_string()))?;
    for r in runs {
        r.write_csv(&dir.join(r.csv_name()))?;
    }
    let summary = summarize(scenario, runs, th);
    let path = dir.join(format!("{scenario}_summary.json"));
    let text = serde_json::to_string_pretty(&summary).map_err(|e| SimError::Io(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| SimError::Io(e.to_string()))?;
    Ok(path)
}
