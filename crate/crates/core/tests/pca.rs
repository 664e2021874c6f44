use countycast::pca::{components_for_variance, eigen_sym, fit_pca, standardize, PcaModel, PcaOptions};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let a = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
    (&a + &a.t()) / 2.0
}

fn gaussian(m: usize, n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((m, n), |_| StandardNormal.sample(rng))
}

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("f{i}")).collect()
}

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[test]
fn eigen_examples() {
    let d: Array2<f64> = ndarray::array![[4.0, 0.0], [0.0, 1.0]];
    let (l, v) = eigen_sym(d.view()).unwrap();
    assert_eq!(l, vec![4.0, 1.0]);
    assert_eq!(v, ndarray::array![[1.0, 0.0], [0.0, 1.0]]);

    let s: Array2<f64> = ndarray::array![[2.0, 1.0], [1.0, 2.0]];
    let (l, v) = eigen_sym(s.view()).unwrap();
    assert!((l[0] - 3.0).abs() < 1e-12 && (l[1] - 1.0).abs() < 1e-12);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    assert!((v[[0, 0]].abs() - r).abs() < 1e-12 && (v[[1, 0]] - v[[0, 0]]).abs() < 1e-12);
    assert!((v[[0, 1]].abs() - r).abs() < 1e-12 && (v[[1, 1]] + v[[0, 1]]).abs() < 1e-12);
}

#[test]
fn eigen_rejects_asymmetric() {
    assert!(eigen_sym(ndarray::array![[1.0, 2.0], [0.0, 1.0]].view()).is_err());
}

#[test]
fn eigen_orthonormal_and_reconstructs_up_to_50() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    for n in [1, 2, 3, 6, 10, 25, 50] {
        let s = random_symmetric(n, &mut rng);
        let (l, v) = eigen_sym(s.view()).unwrap();
        assert!(l.windows(2).all(|w| w[0] >= w[1]));
        let gram = v.t().dot(&v) - Array2::<f64>::eye(n);
        assert!(max_abs(&gram) < 1e-9, "n={n}");
        let recon = v.dot(&Array2::from_diag(&Array1::from(l.clone()))).dot(&v.t());
        assert!(max_abs(&(recon - &s)) < 1e-8, "n={n}");
        for j in 0..n {
            let col = v.column(j);
            let resid = s.dot(&col) - &col * l[j];
            assert!(resid.iter().all(|r| r.abs() < 1e-8));
        }
    }
}

#[test]
fn standardize_examples() {
    let x = ndarray::array![[1.0, 0.0], [1.0, 2.0]];
    let s = standardize(x.view()).unwrap();
    assert_eq!(s.dropped, vec![0]);
    assert_eq!(s.kept, vec![1]);
    assert_eq!(s.z.column(0).to_vec(), vec![-1.0, 1.0]);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let z = standardize(gaussian(30, 4, &mut rng).view()).unwrap().z;
    let again = standardize(z.view()).unwrap().z;
    assert!(max_abs(&(again - &z)) < 1e-10);
    assert!(standardize(ndarray::array![[1.0, 2.0]].view()).is_err());
}

#[test]
fn rank_one_data() {
    let x = Array2::from_shape_fn((20, 2), |(i, _)| i as f64 * 0.5 - 3.0);
    let model = PcaModel::fit(x.view(), &names(2), &PcaOptions::default()).unwrap();
    assert!((model.explained_variance_ratio[0] - 1.0).abs() < 1e-9);
    assert!(model.explained_variance_ratio[1].abs() < 1e-9);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    assert!((model.components[[0, 0]].abs() - r).abs() < 1e-9);
    assert!((model.components[[0, 1]] - model.components[[0, 0]]).abs() < 1e-9);
}

#[test]
fn single_feature_scores_one() {
    let x = ndarray::array![[1.0], [4.0], [2.0]];
    let model = PcaModel::fit(x.view(), &names(1), &PcaOptions::default()).unwrap();
    assert_eq!(model.informativeness, vec![1.0]);
}

#[test]
fn informativeness_matches_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = gaussian(50, 6, &mut rng);
    let x = &x + &x.column(0).insert_axis(ndarray::Axis(1)) * 0.8;
    let data = standardize(x.view()).unwrap();
    let model = fit_pca(&data, &names(6), 0.98).unwrap();

    let cov = data.z.t().dot(&data.z) / 49.0;
    let (l, v) = eigen_sym(cov.view()).unwrap();
    let total: f64 = l.iter().sum();
    let mut acc = 0.0;
    let mut k = 0;
    while k < l.len() && acc < 0.98 {
        acc += l[k] / total;
        k += 1;
    }
    assert_eq!(model.retained, k);
    for f in 0..6 {
        let oracle: f64 = (0..k).map(|j| l[j] / total * v[[f, j]].abs()).sum();
        assert!((model.informativeness[f] - oracle).abs() < 1e-12);
    }
}

#[test]
fn diagonal_covariance_recovers_ratios() {
    let mut rng = ChaCha8Rng::seed_from_u64(2000);
    let sd = [3.0, 2.0, 1.0, 0.5];
    let x = Array2::from_shape_fn((2000, 4), |(_, j)| {
        sd[j] * Distribution::<f64>::sample(&StandardNormal, &mut rng)
    });
    let options = PcaOptions {
        standardize: false,
        ..PcaOptions::default()
    };
    let model = PcaModel::fit(x.view(), &names(4), &options).unwrap();
    let total: f64 = sd.iter().map(|s| s * s).sum();
    for (j, s) in sd.iter().enumerate() {
        assert!((model.explained_variance_ratio[j] - s * s / total).abs() < 0.02);
    }
}

#[test]
fn components_for_variance_examples() {
    assert_eq!(components_for_variance(&[0.7, 0.2, 0.1], 0.7).0, 1);
    assert_eq!(components_for_variance(&[0.7, 0.2, 0.1], 0.98).0, 3);
    assert_eq!(components_for_variance(&[1.0], 0.3).0, 1);
    assert_eq!(components_for_variance(&[1.0], 1.0).0, 1);
}

#[test]
fn components_for_variance_matches_cumulative_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..50 {
        let n = rng.random_range(1..40);
        let mut raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(3)).collect();
        raw.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let total: f64 = raw.iter().sum();
        let ratios: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let frac = rng.random_range(0.05..0.99);
        let (k, curve) = components_for_variance(&ratios, frac);
        let mut acc = 0.0;
        let mut oracle = n;
        for (i, r) in ratios.iter().enumerate() {
            acc += r;
            assert!((curve[i] - acc).abs() < 1e-15);
            if acc >= frac {
                oracle = i + 1;
                break;
            }
        }
        assert_eq!(k, oracle);
    }
}

#[test]
fn rank_features_order() {
    // three independent features with decreasing spread, plus one constant
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let sd = [1.0, 10.0, 1.0, 0.0];
    let x = Array2::from_shape_fn((400, 4), |(_, j)| {
        sd[j] * Distribution::<f64>::sample(&StandardNormal, &mut rng) + 5.0
    });
    let options = PcaOptions {
        standardize: false,
        ..PcaOptions::default()
    };
    let model = PcaModel::fit(x.view(), &names(4), &options).unwrap();
    let ranked = model.rank_features(None);
    assert_eq!(ranked[0].0, "f1");
    assert_eq!(ranked[3], ("f3".to_string(), 0.0));
    assert_eq!(model.rank_features(Some(2)).len(), 2);
}

#[test]
fn ranking_is_scale_invariant_when_standardized() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x = gaussian(60, 5, &mut rng);
    let x = &x + &x.column(2).insert_axis(ndarray::Axis(1)) * 0.6;
    let mut scaled = x.clone();
    for (j, s) in [100.0, 0.01, 3.0, 7.0, 1e4].iter().enumerate() {
        scaled.column_mut(j).mapv_inplace(|v| v * s);
    }
    let a = PcaModel::fit(x.view(), &names(5), &PcaOptions::default()).unwrap();
    let b = PcaModel::fit(scaled.view(), &names(5), &PcaOptions::default()).unwrap();
    let order = |m: &PcaModel<f64>| m.rank_features(None).into_iter().map(|(n, _)| n).collect::<Vec<_>>();
    assert_eq!(order(&a), order(&b));
    for (p, q) in a.informativeness.iter().zip(&b.informativeness) {
        assert!((p - q).abs() < 1e-9);
    }
}

#[test]
fn transform_scores_reconstruct_standardized_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = gaussian(30, 5, &mut rng);
    let model = PcaModel::fit(x.view(), &names(5), &PcaOptions::default()).unwrap();
    let scores = model.transform(x.view(), 5).unwrap();
    let back = scores.dot(&model.components);
    let z = standardize(x.view()).unwrap().z;
    assert!(max_abs(&(back - z)) < 1e-9);
}

#[test]
fn f32_fit_agrees_with_f64() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = gaussian(40, 4, &mut rng);
    let x32 = x.mapv(|v| v as f32);
    let a = PcaModel::fit(x.view(), &names(4), &PcaOptions::default()).unwrap();
    let b = PcaModel::fit(x32.view(), &names(4), &PcaOptions::default()).unwrap();
    for (p, q) in a.explained_variance_ratio.iter().zip(&b.explained_variance_ratio) {
        assert!((p - *q as f64).abs() < 1e-4);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn model_invariants(seed in any::<u64>(), m in 3usize..40, n in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(m, n, &mut rng);
        let model = PcaModel::fit(x.view(), &names(n), &PcaOptions::default()).unwrap();
        let u = &model.explained_variance_ratio;
        prop_assert!((u.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(u.iter().all(|&v| v >= 0.0));
        prop_assert!(u.windows(2).all(|w| w[0] >= w[1] - 1e-12));
        let c = &model.components;
        let gram = c.dot(&c.t()) - Array2::<f64>::eye(c.nrows());
        prop_assert!(max_abs(&gram) < 1e-9);
        prop_assert!(model.informativeness.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn cumulative_curve_is_monotone(raw in prop::collection::vec(0.001..1.0f64, 1..30), frac in 0.01..1.0f64) {
        let total: f64 = raw.iter().sum();
        let ratios: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let (k, curve) = components_for_variance(&ratios, frac);
        prop_assert!(curve.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(k >= 1 && k <= ratios.len());
        let (k2, _) = components_for_variance(&ratios, (frac * 0.5).max(0.001));
        prop_assert!(k2 <= k);
    }
}
