mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use seller_select::data::CostModel;
use seller_select::eval::*;
use seller_select::*;

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        n_sellers: 60,
        dim: 4,
        n_buyers: 6,
        k_grid: vec![1, 3, 8],
        frank_wolfe: FwSettings {
            steps: 40,
            ..FwSettings::default()
        },
        ..ExperimentConfig::default()
    }
}

#[test]
fn least_squares_solves_the_normal_equations() {
    let mut rng = rng(31);
    let x = random_features(&mut rng, 40, 6);
    let y = normal_vec(&mut rng, 40);
    let theta = fit_least_squares(&x, &y).unwrap();
    let a = x.to_matrix();
    let yv = DVector::from_column_slice(&y);
    let oracle = dense_inverse(&(a.transpose() * &a)) * a.transpose() * &yv;
    for (t, o) in theta.iter().zip(oracle.iter()) {
        assert!((t - o).abs() <= 1e-8 * o.abs().max(1.0));
    }
    let residual = &a * DVector::from_column_slice(&theta) - yv;
    let ortho = a.transpose() * residual;
    assert!(ortho.amax() <= 1e-10);
}

#[test]
fn underdetermined_fit_is_minimum_norm() {
    let mut rng = rng(32);
    let x = random_features(&mut rng, 3, 8);
    let y = normal_vec(&mut rng, 3);
    let theta = fit_least_squares(&x, &y).unwrap();
    let a = x.to_matrix();
    // θ = Aᵀ(AAᵀ)⁻¹y
    let oracle = a.transpose() * dense_inverse(&(&a * a.transpose())) * DVector::from_column_slice(&y);
    for (t, o) in theta.iter().zip(oracle.iter()) {
        assert!((t - o).abs() <= 1e-9);
    }
    let fitted = &a * DVector::from_column_slice(&theta);
    for (f, y) in fitted.iter().zip(&y) {
        assert!((f - y).abs() <= 1e-10);
    }
}

#[test]
fn empty_selection_predicts_zero() {
    let mut rng = rng(33);
    let x = random_features(&mut rng, 5, 3);
    assert_eq!(fit_on_selection(&x, &[1.0; 5], &[]).unwrap(), vec![0.0; 3]);
}

#[test]
fn mse_matches_hand_computation() {
    let q = BuyerQuery::new(FeatureMatrix::from_rows(&[[1.0, 0.0], [0.0, 2.0]]).unwrap());
    let mse = test_mse(&[1.0, 1.0], &q, &[0.0, 0.0]).unwrap();
    assert_eq!(mse, 2.5);
    assert!(test_mse(&[1.0], &q, &[0.0, 0.0]).is_err());
}

#[test]
fn random_selection_is_uniform() {
    let (n, k, trials) = (50, 5, 100_000);
    let mut hits = vec![0usize; n];
    for seed in 0..trials {
        for j in random_baseline_select(n, k, seed).unwrap() {
            hits[j] += 1;
        }
    }
    for h in hits {
        let freq = h as f64 / trials as f64;
        assert!((freq - 0.1).abs() <= 0.01, "{freq}");
    }
    assert!(random_baseline_select(3, 4, 0).is_err());
}

#[test]
fn budget_walk_matches_prefix_sums() {
    let costs = [3.0, 1.0, 4.0, 1.0, 5.0, 2.0];
    let ranked = [2, 0, 5, 1, 4, 3];
    for b in 0..=20 {
        let b = b as f64;
        let prefix: Vec<f64> = ranked
            .iter()
            .scan(0.0, |s, &j| {
                *s += costs[j];
                Some(*s)
            })
            .collect();
        let fits = prefix.iter().take_while(|s| **s <= b).count();
        let exclusive = budget_select(&ranked, &costs, b, false);
        assert_eq!(exclusive, ranked[..fits].to_vec());
        let inclusive = budget_select(&ranked, &costs, b, true);
        assert_eq!(inclusive, ranked[..(fits + 1).min(ranked.len())].to_vec());
    }
}

#[test]
fn experiment_replays_exactly() {
    let cfg = small_config();
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 3 * 3);
    for r in &a {
        assert_eq!(r.per_buyer_mse.len(), 6);
        assert_eq!(r.mean_mse, mean(&r.per_buyer_mse));
        assert!(r.runtime_s.is_none());
    }
    let order: Vec<(Method, Option<usize>)> = a.iter().map(|r| (r.method, r.k)).collect();
    assert_eq!(order[0], (Method::MultiStep, Some(1)));
    assert_eq!(order[8], (Method::Random, Some(8)));
}

#[test]
fn method_set_does_not_shift_other_methods() {
    let all = run_experiment(&small_config()).unwrap();
    let only_random = run_experiment(&ExperimentConfig {
        methods: vec![Method::Random],
        ..small_config()
    })
    .unwrap();
    assert_eq!(&all[6..], &only_random[..]);
}

#[test]
fn budgeted_runs_respect_every_budget() {
    let cfg = ExperimentConfig {
        costs: Some(CostModel::default()),
        budget_grid: Some(vec![1.0, 4.0, 9.0]),
        k_grid: vec![],
        ..small_config()
    };
    let records = run_experiment(&cfg).unwrap();
    assert_eq!(records.len(), 9);
    for b in 0..cfg.n_buyers {
        let task = buyer_task(&cfg, b).unwrap();
        let costs = task.costs.as_deref().unwrap();
        for method in [Method::MultiStep, Method::SingleStep, Method::Random] {
            let ranking = method_ranking(method, &task, &cfg.frank_wolfe, 7).unwrap();
            for &budget in cfg.budget_grid.as_ref().unwrap() {
                let spent: f64 = budget_select(&ranking, costs, budget, false).iter().map(|&j| costs[j]).sum();
                assert!(spent <= budget);
            }
        }
    }
}

#[test]
fn buyer_tasks_share_coefficients() {
    let cfg = ExperimentConfig {
        noise: 0.0,
        buyer_points: 3,
        ..small_config()
    };
    let task = buyer_task(&cfg, 2).unwrap();
    let theta = fit_least_squares(&task.sellers, &task.targets).unwrap();
    assert!(test_mse(&theta, &task.query, &task.query_targets).unwrap() < 1e-20);
}

#[test]
fn invalid_experiments_are_rejected() {
    let bad_k = ExperimentConfig {
        k_grid: vec![61],
        ..small_config()
    };
    assert!(run_experiment(&bad_k).is_err());
    let budget_without_costs = ExperimentConfig {
        budget_grid: Some(vec![3.0]),
        ..small_config()
    };
    assert!(run_experiment(&budget_without_costs).is_err());
}

#[test]
fn records_serialize_as_json_lines() {
    let records = run_experiment(&small_config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.jsonl");
    write_records_jsonl(&path, &records).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let back: Vec<MetricsRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(back, records);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn budget_selection_never_overspends(
        costs in prop::collection::vec(0.5f64..5.0, 1..30),
        budget in 0.0f64..40.0,
        shift in 0usize..30,
    ) {
        let n = costs.len();
        let ranked: Vec<usize> = (0..n).map(|j| (j + shift) % n).collect();
        let chosen = budget_select(&ranked, &costs, budget, false);
        let spent: f64 = chosen.iter().map(|&j| costs[j]).sum();
        prop_assert!(spent <= budget);
        prop_assert_eq!(&chosen[..], &ranked[..chosen.len()]);
    }

    #[test]
    fn overdetermined_fit_matches_dense_normal_equations(seed in any::<u64>(), d in 1usize..6, extra in 0usize..10) {
        let mut rng = rng(seed);
        let n = d + 1 + extra;
        let x = random_features(&mut rng, n, d);
        let y = normal_vec(&mut rng, n);
        let theta = fit_least_squares(&x, &y).unwrap();
        let a: DMatrix<f64> = x.to_matrix();
        let oracle = dense_inverse(&(a.transpose() * &a)) * a.transpose() * DVector::from_column_slice(&y);
        for (t, o) in theta.iter().zip(oracle.iter()) {
            prop_assert!((t - o).abs() <= 1e-6 * o.abs().max(1.0));
        }
    }
}
