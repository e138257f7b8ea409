use housebench::data::{split, split_sizes, SplitFractions};
use housebench::eval::{mae, paired_t_test, r2, rmse};
use housebench::forest::{ForestConfig, ForestFit};
use housebench::knn::{distance, Distance, KnnConfig, KnnFit};
use housebench::linalg::Matrix;
use housebench::preprocess::quantile_linear;
use proptest::prelude::*;

fn residual_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..60).prop_flat_map(|n| (prop::collection::vec(0.5f64..20.0, n), prop::collection::vec(-5.0f64..5.0, n)))
}

proptest! {
    #[test]
    fn split_is_a_partition_with_documented_sizes(n in 20usize..2000, seed in any::<u64>()) {
        let f = SplitFractions::default();
        let s = split(n, f, seed).unwrap();
        let (a, b, c) = split_sizes(n, f).unwrap();
        prop_assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (a, b, c));
        prop_assert!(b >= c && b - c <= 1);
        let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn rmse_dominates_mae((y, e) in residual_pair()) {
        let yh: Vec<f64> = y.iter().zip(&e).map(|(a, b)| a + b).collect();
        let (r, m) = (rmse(&y, &yh).unwrap(), mae(&y, &yh).unwrap());
        prop_assert!(r >= m * (1.0 - 1e-14));
    }

    #[test]
    fn r2_equals_one_minus_scaled_mse((y, e) in residual_pair()) {
        prop_assume!(y.len() >= 2);
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        prop_assume!(sst > 1e-6);
        let yh: Vec<f64> = y.iter().zip(&e).map(|(a, b)| a + b).collect();
        let r = rmse(&y, &yh).unwrap();
        let identity = 1.0 - r * r * y.len() as f64 / sst;
        prop_assert!((r2(&y, &yh).unwrap() - identity).abs() <= 1e-12 * identity.abs().max(1.0));
    }

    #[test]
    fn paired_t_is_antisymmetric(pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..25)) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let ab = paired_t_test(&a, &b).unwrap();
        let ba = paired_t_test(&b, &a).unwrap();
        prop_assert_eq!(ab.t, -ba.t);
        prop_assert_eq!(ab.p_value, ba.p_value);
        prop_assert!((0.0..=1.0).contains(&ab.p_value));
    }

    #[test]
    fn distances_are_symmetric_and_nonnegative(
        a in prop::collection::vec(-10.0f64..10.0, 4),
        b in prop::collection::vec(-10.0f64..10.0, 4),
        p in 1.0f64..4.0,
    ) {
        for m in [Distance::Euclidean, Distance::Manhattan, Distance::Chebyshev, Distance::Minkowski { p }] {
            let d = distance(&a, &b, m).unwrap();
            prop_assert!(d >= 0.0);
            prop_assert_eq!(d, distance(&b, &a, m).unwrap());
            prop_assert_eq!(distance(&a, &a, m).unwrap(), 0.0);
        }
    }

    #[test]
    fn knn_prediction_is_bounded_by_training_targets(
        rows in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -3.0f64..3.0), 3..40),
        q in (-6.0f64..6.0, -6.0f64..6.0),
        k in 1usize..5,
    ) {
        prop_assume!(k <= rows.len());
        let x = Matrix::from_rows(&rows.iter().map(|r| [r.0, r.1]).collect::<Vec<_>>());
        let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let fit = KnnFit::fit(KnnConfig { k, distance: Distance::Euclidean }, &x, &y).unwrap();
        let p = fit.predict(&Matrix::from_rows(&[[q.0, q.1]])).unwrap()[0];
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(p >= lo - 1e-12 && p <= hi + 1e-12);
    }

    #[test]
    fn knn_with_k1_on_duplicated_rows_picks_lowest_index(v in -5.0f64..5.0, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let x = Matrix::from_rows(&[[v], [v], [v + 10.0]]);
        let fit = KnnFit::fit(KnnConfig { k: 1, distance: Distance::Euclidean }, &x, &[a, b, 0.0]).unwrap();
        prop_assert_eq!(fit.neighbors(&[v]).unwrap(), vec![0]);
        prop_assert_eq!(fit.predict(&Matrix::from_rows(&[[v]])).unwrap()[0], a);
    }

    #[test]
    fn linear_quantile_is_monotone(mut v in prop::collection::vec(-100.0f64..100.0, 1..50), q1 in 0.0f64..1.0, q2 in 0.0f64..1.0) {
        v.sort_by(f64::total_cmp);
        let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
        prop_assert!(quantile_linear(&v, lo) <= quantile_linear(&v, hi));
        prop_assert_eq!(quantile_linear(&v, 0.0), v[0]);
        prop_assert_eq!(quantile_linear(&v, 1.0), v[v.len() - 1]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn forest_predictions_stay_inside_target_hull(
        rows in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -3.0f64..3.0), 12..60),
        seed in any::<u64>(),
    ) {
        let x = Matrix::from_rows(&rows.iter().map(|r| [r.0, r.1]).collect::<Vec<_>>());
        let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let cfg = ForestConfig { n_trees: 15, mtry: Some(1), min_leaf: 2, seed, ..ForestConfig::default() };
        let f = ForestFit::fit(cfg, &x, &y).unwrap();
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let grid = Matrix::from_fn(25, 2, |i, j| -7.0 + (i * 7 + j * 3) as f64 % 14.0);
        for p in f.predict(&grid).unwrap() {
            prop_assert!(p >= lo - 1e-12 && p <= hi + 1e-12);
        }
    }

    #[test]
    fn forest_prediction_ignores_tree_order(
        rows in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -3.0f64..3.0), 12..60),
        seed in any::<u64>(),
    ) {
        let x = Matrix::from_rows(&rows.iter().map(|r| [r.0, r.1]).collect::<Vec<_>>());
        let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let cfg = ForestConfig { n_trees: 10, mtry: Some(2), min_leaf: 2, seed, ..ForestConfig::default() };
        let f = ForestFit::fit(cfg, &x, &y).unwrap();
        let mut reversed = f.clone();
        reversed.trees.reverse();
        let (a, b) = (f.predict(&x).unwrap(), reversed.predict(&x).unwrap());
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u - v).abs() <= 1e-12);
        }
    }
}
