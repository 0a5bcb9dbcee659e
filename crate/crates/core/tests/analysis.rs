use std::collections::BTreeSet;

use noct_core::expr::Evaluator;
use noct_core::linalg::{rank, RationalMatrix};
use noct_core::models::{expected_results, vio_constrained, vio_system, VioConstraintKind};
use noct_core::observability::{analyze, build_codistribution, lie_derivative, verify_null_vector, AnalysisOptions, VariableClass};
use noct_core::oracles::{kalman_rank, linear_system, random_linear, random_small_system};
use noct_core::par::ExecMode;
use noct_core::system::{apply_constraints, AffineControlSystem, GenericCheck};

#[test]
fn kalman_rank_oracle() {
    let mut deficient = 0;
    for seed in 0..20 {
        let (a, c) = random_linear(seed);
        let want = kalman_rank(&a, &c);
        let cod = build_codistribution(&linear_system(&a, &c), &AnalysisOptions::default()).unwrap();
        assert_eq!(cod.rank(), want, "seed {seed}");
        if want < a.rows() {
            deficient += 1;
        }
    }
    assert!(deficient > 0, "oracle never exercised a rank-deficient case");
}

/// Rank of all Lie-derivative gradients with words up to `order`, at the
/// codistribution's own points, without any pruning.
fn unpruned_rank(sys: &AffineControlSystem, order: usize, points: &[noct_core::expr::Point]) -> usize {
    let mut words: Vec<Vec<usize>> = vec![vec![]];
    let mut all = words.clone();
    for _ in 0..order {
        words = words
            .iter()
            .flat_map(|w| (0..sys.field_count()).map(move |j| [w.clone(), vec![j]].concat()))
            .collect();
        all.extend(words.iter().cloned());
    }
    points
        .iter()
        .map(|p| {
            let mut ev = Evaluator::new(p);
            let mut rows = Vec::new();
            for (_, h) in &sys.outputs {
                for w in &all {
                    let l = lie_derivative(sys, h, w).unwrap();
                    let g = noct_core::expr::gradient(&l, &sys.state);
                    rows.push(ev.eval_all(&g).unwrap());
                }
            }
            rank(&RationalMatrix::from_rows(sys.state.len(), rows))
        })
        .max()
        .unwrap()
}

#[test]
fn saturation_holds_two_orders_further() {
    for seed in 0..12 {
        let sys = apply_constraints(&random_small_system(seed), &GenericCheck::default()).unwrap();
        if sys.state_dim() > 4 || sys.field_count() > 3 {
            continue;
        }
        let opts = AnalysisOptions::default();
        let cod = match build_codistribution(&sys, &opts) {
            Ok(c) => c,
            Err(e) => panic!("seed {seed}: {e}"),
        };
        if cod.truncated {
            continue;
        }
        let further = unpruned_rank(&sys, cod.order + 2, &cod.points);
        assert_eq!(further, cod.rank(), "seed {seed}");
    }
}

#[test]
fn report_invariants_on_random_systems() {
    for seed in 0..20 {
        let sys = apply_constraints(&random_small_system(seed), &GenericCheck::default()).unwrap();
        let (_, rep) = analyze(&sys, &AnalysisOptions::default()).unwrap();
        let ranks: Vec<usize> = rep.rank_history.iter().map(|s| s.rank).collect();
        assert!(ranks.windows(2).all(|w| w[0] <= w[1]));
        assert!(rep.final_rank <= rep.state_dim);
        for basis in &rep.null_basis_numeric {
            assert_eq!(basis.len() + rep.final_rank, rep.state_dim, "seed {seed}");
            for v in basis {
                for (i, (_, class)) in rep.classification.iter().enumerate() {
                    if *class == VariableClass::Observable {
                        assert!(num_traits::Zero::is_zero(&v[i]), "seed {seed}");
                    }
                }
            }
        }
        if rep.final_rank == rep.state_dim {
            assert!(rep.indeterminable().is_empty());
        }
    }
}

#[test]
fn reports_are_seed_deterministic() {
    let sys = apply_constraints(&vio_constrained(VioConstraintKind::PureTranslation), &GenericCheck::default()).unwrap();
    let run = |mode| {
        let opts = AnalysisOptions {
            seed: 17,
            mode,
            ..Default::default()
        };
        analyze(&sys, &opts).unwrap().1.to_json()
    };
    let a = run(ExecMode::Parallel);
    assert_eq!(a, run(ExecMode::Parallel));
    assert_eq!(a, run(ExecMode::Sequential));
}

#[test]
fn vio_presets_match_fixtures() {
    for fixture in expected_results() {
        let sys = match fixture.scenario {
            "unconstrained" => vio_system(),
            name => apply_constraints(&vio_constrained(name.parse().unwrap()), &GenericCheck::default()).unwrap(),
        };
        let (cod, rep) = analyze(&sys, &AnalysisOptions::default()).unwrap();
        let tag = fixture.scenario;
        assert_eq!(rep.state_dim, fixture.state_dim, "{tag}");
        assert_eq!(rep.final_rank, fixture.final_rank, "{tag}");
        assert!(rep.kernel_dims().iter().all(|&k| k == fixture.kernel_dim), "{tag}");
        let got: BTreeSet<&str> = rep.indeterminable().into_iter().collect();
        let want: BTreeSet<&str> = fixture.indeterminable.iter().map(String::as_str).collect();
        assert_eq!(got, want, "{tag}");
        assert!(!rep.truncated_at_max_order, "{tag}");
        assert!(rep.warnings.is_empty(), "{tag}: {:?}", rep.warnings);
        for n in &fixture.null_vectors {
            assert!(verify_null_vector(&cod, n), "{tag}");
        }
    }
}
