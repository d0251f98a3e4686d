use approx::assert_relative_eq;
use lsldg_core::basis::select_centers;
use lsldg_core::data::{generate, generate_labeled, make_folds, standardize, Family, SyntheticSpec};
use lsldg_core::estimator::{
    compute_stats, load_model, mt_objective, save_model, solve_mt_analytic, solve_mt_bcd,
    BcdOptions, Gamma, HyperParams,
};
use lsldg_core::metrics::ari;
use lsldg_core::modelsel::{cv_score, select, Grid, PenaltyUnits, SelectConfig, Solver};
use proptest::prelude::*;

#[test]
fn model_file_round_trip() {
    let data = generate(&SyntheticSpec::new(Family::DoubleGaussian, 3, 80, 4)).unwrap();
    let grid = Grid::new(vec![0.8, 2.0], vec![1e-2], vec![0.0.into(), 1.0.into()]).unwrap();
    let (_, model) = select(&data, &grid, &SelectConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.toml");
    save_model(&model, &path).unwrap();
    let back = load_model(&path).unwrap();
    for x in data.rows().take(10) {
        let (a, b) = (model.evaluate(x).unwrap(), back.evaluate(x).unwrap());
        for (u, v) in a.iter().zip(&b) {
            assert_relative_eq!(u, v, max_relative = 1e-14);
        }
    }
    assert_eq!(model.hyper(), back.hyper());
}

#[test]
fn standardization_inverts() {
    let data = generate(&SyntheticSpec::new(Family::SingleGaussian, 4, 50, 9)).unwrap();
    let (z, t) = standardize(&data).unwrap();
    let back = t.invert(&z).unwrap();
    for (a, b) in data.as_slice().iter().zip(back.as_slice()) {
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }
}

#[test]
fn one_dimensional_gaussian_holdout_score() {
    let train = generate(&SyntheticSpec::new(Family::SingleGaussian, 1, 2000, 1)).unwrap();
    let hold = generate(&SyntheticSpec::new(Family::SingleGaussian, 1, 2000, 2)).unwrap();
    let basis = select_centers(&train, 50, 3).unwrap().with_bandwidth(1.0).unwrap();
    let hp = HyperParams::uniform(1.0, 1e-3, Gamma::Finite(0.0), 1).unwrap();
    let s = cv_score(&train, &hold, &basis, &hp, &Solver::Analytic).unwrap();
    assert!((-1.2..=-0.6).contains(&s), "score {s}");
}

#[test]
fn kernel_units_select_on_gaussian() {
    let data = generate(&SyntheticSpec::new(Family::SingleGaussian, 4, 60, 11)).unwrap();
    let cfg = SelectConfig {
        penalty: PenaltyUnits::KernelScale,
        ..SelectConfig::default()
    };
    let (report, model) = select(&data, &Grid::gradient_experiment(), &cfg).unwrap();
    assert!(report.failures.is_empty());
    let (hp, _) = model.hyper().unwrap();
    let best = report.chosen();
    assert_relative_eq!(hp.lambda, best.lambda / best.sigma.powi(4), max_relative = 1e-12);
}

#[test]
fn folds_cover_every_point_once() {
    let f = make_folds(23, 5, 7).unwrap();
    let mut seen = vec![0; 23];
    for k in 0..5 {
        for i in f.fold(k) {
            seen[i] += 1;
        }
    }
    assert!(seen.iter().all(|&c| c == 1));
    let sizes = f.sizes();
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
}

#[test]
fn labeled_draws_match_unlabeled() {
    let spec = SyntheticSpec::new(Family::ThreeGaussianMixture, 3, 40, 5);
    let (a, labels) = generate_labeled(&spec).unwrap();
    let b = generate(&spec).unwrap();
    assert_eq!(a.as_slice(), b.as_slice());
    assert!(labels.iter().all(|&l| l < 3));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn bcd_reaches_analytic_from_any_start(
        seed in 0u64..1000,
        d in 2usize..4,
        gamma in 0.05f64..5.0,
        warm in any::<bool>(),
    ) {
        let data = generate(&SyntheticSpec::new(Family::DoubleGaussian, d, 25, seed)).unwrap();
        let basis = select_centers(&data, 8, seed).unwrap().with_bandwidth(1.2).unwrap();
        let stats = compute_stats(&data, &basis).unwrap();
        let hp = HyperParams::uniform(1.2, 0.05, Gamma::Finite(gamma), d).unwrap();
        let exact = solve_mt_analytic(&stats, &hp).unwrap();
        let init = warm.then(|| exact.map(|v| v * 0.5 + 0.1));
        let opts = BcdOptions { tol: 1e-11, max_sweeps: 100_000, record_objective: false };
        let sol = solve_mt_bcd(&stats, &hp, init.as_ref(), &opts).unwrap();
        prop_assert!(sol.converged);
        prop_assert!((&sol.theta - &exact).amax() < 1e-7);
        prop_assert!(mt_objective(&stats, &hp, &exact) <= mt_objective(&stats, &hp, &sol.theta) + 1e-9);
    }

    #[test]
    fn ari_is_symmetric_and_label_invariant(
        labels in proptest::collection::vec((0usize..4, 0usize..3), 2..40),
        shift in 1usize..5,
    ) {
        let a: Vec<usize> = labels.iter().map(|p| p.0).collect();
        let b: Vec<usize> = labels.iter().map(|p| p.1).collect();
        let relabeled: Vec<usize> = a.iter().map(|&l| (l + shift) % 4).collect();
        let ab = ari(&a, &b).unwrap();
        prop_assert!((ab - ari(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((ab - ari(&relabeled, &b).unwrap()).abs() < 1e-12);
        prop_assert_eq!(ari(&a, &relabeled).unwrap(), 1.0);
    }
}
