use noct_sim::measurements::synthesize_measurements;
use noct_sim::scenario::{NoiseConfig, TimeOffset};
use noct_sim::{run_ekf, run_scenario, write_outputs, ConvergenceLabel, FilterConfig, Nominal, SimScenario, Thresholds, TrajectoryKind};

fn short(kind: TrajectoryKind, duration: f64) -> SimScenario {
    let mut sc = SimScenario::preset(kind);
    sc.duration = duration;
    sc
}

#[test]
fn noiseless_innovations_vanish_from_the_true_state() {
    for kind in [TrajectoryKind::SlopeLemniscate, TrajectoryKind::CircleVaryingRate] {
        let mut sc = short(kind, 10.5);
        sc.noise = NoiseConfig::noiseless();
        sc.time_offset = TimeOffset::Fixed(0.02);
        let stream = synthesize_measurements(&sc.trajectory(), &sc).unwrap();
        let cfg = FilterConfig::for_scenario(&sc);
        let run = run_ekf(&stream, &cfg, Nominal::from_truth(&stream.truth, 0.0));
        assert!(run.failure.is_none(), "{:?}", run.failure);
        let epochs = &run.epochs[1..];
        assert!(epochs.len() >= 100);
        assert!(epochs.iter().map(|e| e.updates).sum::<usize>() > 0);
        for e in &epochs[..100] {
            assert!(e.max_innovation < 1e-8, "{kind:?} at {}: {:e}", e.stamp, e.max_innovation);
        }
    }
}

#[test]
fn covariance_stays_positive_semidefinite() {
    let sc = short(TrajectoryKind::SlopeLemniscate, 8.0);
    let stream = synthesize_measurements(&sc.trajectory(), &sc).unwrap();
    let mut cfg = FilterConfig::for_scenario(&sc);
    cfg.check_eigenvalues = true;
    let run = run_ekf(&stream, &cfg, Nominal::from_truth(&stream.truth, 0.0));
    assert!(run.failure.is_none());
    let min = run.min_eigenvalue.expect("spectrum computed");
    assert!(min >= -1e-12, "minimum eigenvalue {min:e}");
    for e in &run.epochs {
        assert!(e.sigma.iter().all(|s| s.is_finite() && *s >= 0.0));
    }
}

#[test]
fn same_seed_gives_identical_outputs() {
    let sc = short(TrajectoryKind::CircleVaryingRate, 6.0).with_seed(11);
    let th = Thresholds::default();
    let bytes = |dir: &std::path::Path| {
        let run = run_scenario(&sc, &th).unwrap();
        let summary = write_outputs(dir, sc.name(), std::slice::from_ref(&run), &th).unwrap();
        (std::fs::read(dir.join(run.csv_name())).unwrap(), std::fs::read(summary).unwrap())
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(bytes(a.path()), bytes(b.path()));

    let other = run_scenario(&sc.clone().with_seed(12), &th).unwrap();
    assert_ne!(other.true_time_offset, run_scenario(&sc, &th).unwrap().true_time_offset);
}

#[test]
fn time_offset_verdicts_for_constant_and_varying_rate() {
    let th = Thresholds::default();
    let a = run_scenario(&SimScenario::preset(TrajectoryKind::CircleConstVel), &th).unwrap();
    assert!(a.failure.is_none());
    assert_eq!(a.label("t_d"), Some(ConvergenceLabel::NonConverged));
    let c = run_scenario(&SimScenario::preset(TrajectoryKind::CircleVaryingRate), &th).unwrap();
    assert!(c.failure.is_none());
    assert_eq!(c.label("t_d"), Some(ConvergenceLabel::Converged));
    assert!(c.verdict("t_d").unwrap().final_error.abs() < 5e-3);
}

#[test]
fn csv_has_error_and_bound_per_variable() {
    let sc = short(TrajectoryKind::SlopeLine, 2.0);
    let th = Thresholds::default();
    let run = run_scenario(&sc, &th).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(dir.path(), sc.name(), std::slice::from_ref(&run), &th).unwrap();
    let text = std::fs::read_to_string(dir.path().join(run.csv_name())).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 1 + 2 * run.series.variables.len());
    assert_eq!(header[1], "p_WB_x_err");
    assert_eq!(header[2], "p_WB_x_3sigma");
    assert_eq!(*header.last().unwrap(), "t_d_3sigma");
    assert_eq!(lines.count(), run.series.times.len());
}
