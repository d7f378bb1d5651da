use proptest::prelude::*;
use seller_select::data::*;
use seller_select::{Error, FeatureMatrix};

#[test]
fn generation_replays_exactly() {
    let costs = sample_costs(200, &CostModel::default(), 9).unwrap();
    let a = gen_gaussian(200, 7, 0.1, Some(&costs), 4).unwrap();
    let b = gen_gaussian(200, 7, 0.1, Some(&costs), 4).unwrap();
    assert_eq!(a, b);
    let c = gen_gaussian(200, 7, 0.1, Some(&costs), 5).unwrap();
    assert_ne!(a.x, c.x);
}

#[test]
fn unit_costs_match_no_costs() {
    let a = gen_gaussian(40, 3, 0.2, None, 8).unwrap();
    let b = gen_gaussian(40, 3, 0.2, Some(&[1.0; 40]), 8).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.y, b.y);
}

#[test]
fn rows_are_scaled_by_their_cost() {
    let costs: Vec<f64> = (0..30).map(|j| 1.0 + (j % 5) as f64).collect();
    let ds = gen_gaussian(30, 4, 0.0, Some(&costs), 2).unwrap();
    for (row, c) in ds.x.rows().zip(&costs) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - c).abs() <= 1e-9 * c);
    }
}

#[test]
fn coefficient_signs_are_balanced() {
    let ds = gen_gaussian(1, 100_000, 0.0, None, 1).unwrap();
    let negative = ds.coef.iter().filter(|c| **c < 0.0).count() as f64 / 1e5;
    assert!((negative - 0.5).abs() <= 0.01, "{negative}");
    let mean_abs = ds.coef.iter().map(|c| c.abs()).sum::<f64>() / 1e5;
    assert!((mean_abs - 1.0).abs() <= 0.02, "{mean_abs}");
}

#[test]
fn costs_are_uniform_over_the_support() {
    let model = CostModel::default();
    let costs = sample_costs(100_000, &model, 3).unwrap();
    for v in &model.support {
        let freq = costs.iter().filter(|c| *c == v).count() as f64 / 1e5;
        assert!((freq - 0.2).abs() <= 0.01, "{v}: {freq}");
    }
    assert!(costs.iter().all(|c| model.support.contains(c)));
}

#[test]
fn cost_noise_has_the_stated_spread() {
    let n = 100_000;
    let y = vec![2.0; n];
    for (cost_fn, c) in [(CostFn::Square, 2.0), (CostFn::Sqrt, 4.0)] {
        let model = CostModel {
            cost_fn,
            ..CostModel::default()
        };
        let noisy = apply_cost_noise(&y, &vec![c; n], &model, 6).unwrap();
        let diffs: Vec<f64> = noisy.iter().zip(&y).map(|(a, b)| a - b).collect();
        let mu = diffs.iter().sum::<f64>() / n as f64;
        let sd = (diffs.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n as f64).sqrt();
        let expect = 0.3 * 2.0 / cost_fn.apply(c);
        assert!((sd / expect - 1.0).abs() <= 0.02, "{cost_fn:?}: {sd} vs {expect}");
    }
}

#[test]
fn sqrt_and_square_noise_differ_by_a_fixed_factor() {
    let ds = gen_gaussian(500, 5, 0.1, None, 12).unwrap();
    let costs = sample_costs(500, &CostModel::default(), 13).unwrap();
    let sq = CostModel::default();
    let rt = CostModel {
        cost_fn: CostFn::Sqrt,
        ..CostModel::default()
    };
    let a = apply_cost_noise(&ds.y, &costs, &sq, 14).unwrap();
    let b = apply_cost_noise(&ds.y, &costs, &rt, 14).unwrap();
    for j in 0..500 {
        let ratio = (b[j] - ds.y[j]) / (a[j] - ds.y[j]);
        let expect = costs[j].powi(2) / costs[j].sqrt();
        assert!((ratio / expect - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn cost_noise_rejects_bad_costs() {
    let model = CostModel::default();
    assert!(apply_cost_noise(&[1.0, 2.0], &[1.0, 0.0], &model, 0).is_err());
    assert!(apply_cost_noise(&[1.0, 2.0], &[1.0], &model, 0).is_err());
    let empty = CostModel {
        support: vec![],
        ..CostModel::default()
    };
    assert!(sample_costs(3, &empty, 0).is_err());
}

#[test]
fn wide_table_round_trips_with_its_shape() {
    let ds = gen_gaussian(1000, 512, 0.1, None, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wide.csv");
    save_dataset_csv(&path, &ds.to_table()).unwrap();
    let back = load_features_csv(&path).unwrap();
    assert_eq!((back.features.nrows(), back.features.ncols()), (1000, 512));
    assert_eq!(back.features, ds.x);
    assert_eq!(back.targets.as_deref(), Some(&ds.y[..]));
    assert!(back.costs.is_none());
}

#[test]
fn parse_errors_name_the_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "f0,f1,y\n1,2,3\n4,oops,6\n").unwrap();
    match load_features_csv(&path).unwrap_err() {
        Error::Parse { row, column, .. } => {
            assert_eq!(row, 3);
            assert_eq!(column, "f1");
        }
        other => panic!("unexpected {other}"),
    }
    let missing = dir.path().join("missing.csv");
    assert!(matches!(load_features_csv(&missing), Err(Error::Io { .. })));
}

#[test]
fn costs_load_from_any_table_with_a_cost_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("costs.csv");
    std::fs::write(&path, "id,cost\n0,2\n1,4.5\n").unwrap();
    assert_eq!(load_costs_csv(&path).unwrap(), vec![2.0, 4.5]);
    std::fs::write(&path, "id\n0\n").unwrap();
    assert!(load_costs_csv(&path).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tables_round_trip_bit_exactly(
        n in 1usize..12,
        d in 1usize..6,
        seed in any::<u64>(),
        with_y in any::<bool>(),
        with_cost in any::<bool>(),
    ) {
        let ds = gen_gaussian(n, d, 0.5, None, seed).unwrap();
        let costs = sample_costs(n, &CostModel::default(), seed).unwrap();
        let mut x = ds.x.as_slice().to_vec();
        // include awkward magnitudes
        x[0] *= 1e-300;
        let table = LabeledTable {
            features: FeatureMatrix::from_row_major(n, d, x).unwrap(),
            targets: with_y.then(|| ds.y.clone()),
            costs: with_cost.then_some(costs),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        save_dataset_csv(&path, &table).unwrap();
        prop_assert_eq!(load_features_csv(&path).unwrap(), table);
    }
}
