//! Cross-fitting hygiene and learner consistency checks.

use drpolicy_core::{
    assign_folds, cross_validate, fit_crossfit, fit_honest_forest, rng, Dataset, ForestParams,
    Matrix, NuisanceLearnerSpec, NuisanceTarget, PipelineConfig, ScoreFamily, TreatmentKind,
};

fn smooth_dataset(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let mut r = rng::stream(seed);
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for _ in 0..n {
        let a = rng::normal(&mut r);
        let b = rng::normal(&mut r);
        y.push(a * a + 0.5 * b + 0.1 * rng::normal(&mut r));
        w.push(rng::bernoulli(&mut r, 0.5) as u8 as f64);
        rows.push(vec![a, b]);
    }
    (rows, y, w)
}

fn dataset(rows: Vec<Vec<f64>>, y: Vec<f64>, w: Vec<f64>) -> Dataset {
    Dataset::new(
        Matrix::from_rows(rows).unwrap(),
        y,
        w,
        None,
        TreatmentKind::Binary,
        vec!["a".into(), "b".into()],
        vec![0, 1],
    )
    .unwrap()
}

/// Permuting the data of one fold among its own positions changes nothing
/// for predictions of the other folds: their training multiset is the same.
#[test]
fn out_of_fold_predictions_ignore_within_fold_order() {
    let n = 48;
    let k = 4;
    let (rows, y, w) = smooth_dataset(n, 5);
    let folds = assign_folds(n, k, 9).unwrap();
    let spec = NuisanceLearnerSpec::Knn { k: 3 };
    let targets = [NuisanceTarget::Outcome];

    let base = fit_crossfit(&dataset(rows.clone(), y.clone(), w.clone()), &folds, &spec, &targets, 1)
        .unwrap();

    // cycle the fold-2 rows among themselves
    let fold2 = folds.test_indices(2);
    let mut rows2 = rows;
    let mut y2 = y;
    let mut w2 = w;
    for pair in fold2.windows(2) {
        rows2.swap(pair[0], pair[1]);
        y2.swap(pair[0], pair[1]);
        w2.swap(pair[0], pair[1]);
    }
    let permuted = fit_crossfit(&dataset(rows2, y2, w2), &folds, &spec, &targets, 1).unwrap();

    let f_base = base.get(NuisanceTarget::Outcome).unwrap();
    let f_perm = permuted.get(NuisanceTarget::Outcome).unwrap();
    for i in 0..n {
        if folds.fold(i) != 2 {
            assert_eq!(f_base[i], f_perm[i], "prediction {i} moved");
        }
    }
}

/// Step-function smoke test: average forest MSE at n = 4000 is no worse
/// than at n = 500, over 10 seeds.
#[test]
fn forest_mse_improves_with_sample_size() {
    let step_data = |n: usize, seed: u64| {
        let mut r = rng::stream(seed);
        let xs: Vec<f64> = (0..n).map(|_| 2.0 * rng::unit(&mut r) - 1.0).collect();
        let y: Vec<f64> = xs.iter().map(|&v| f64::from(v > 0.0)).collect();
        (Matrix::from_rows(xs.into_iter().map(|v| vec![v]).collect()).unwrap(), y)
    };
    let grid: Vec<f64> = (0..200).map(|i| -0.99 + 0.01 * i as f64).collect();
    let mse_at = |n: usize, seed: u64| {
        let (x, y) = step_data(n, seed);
        let f = fit_honest_forest(&x, &y, None, &ForestParams::default(), seed ^ 0xF0).unwrap();
        grid.iter()
            .map(|&g| {
                let truth = f64::from(g > 0.0);
                let err = f.predict(&[g]) - truth;
                err * err
            })
            .sum::<f64>()
            / grid.len() as f64
    };
    let mut small = 0.0;
    let mut large = 0.0;
    for seed in 0..10 {
        small += mse_at(500, seed);
        large += mse_at(4000, seed);
    }
    assert!(
        large <= small,
        "mse(n=4000) = {} > mse(n=500) = {}",
        large / 10.0,
        small / 10.0
    );
}

/// cross_validate with K = n fails once a training subset cannot hold K
/// inner folds.
#[test]
fn cross_validate_rejects_k_equal_n() {
    let (rows, y, w) = smooth_dataset(8, 3);
    let data = dataset(rows, y, w);
    let cfg = PipelineConfig {
        family: ScoreFamily::Ipw,
        learner: NuisanceLearnerSpec::Knn { k: 2 },
        depth: 1,
        k: 8,
        ..PipelineConfig::default()
    };
    let err = cross_validate(&data, &cfg, 8, 1);
    assert!(err.is_err(), "K = n must fail: {:?}", err.map(|r| r.a_cv));
}

/// The refit-scores-per-fold variant runs and produces finite output.
#[test]
fn cross_validate_refit_variant_runs() {
    let (rows, y, w) = smooth_dataset(90, 12);
    let data = dataset(rows, y, w);
    let cfg = PipelineConfig {
        family: ScoreFamily::Aipw,
        learner: NuisanceLearnerSpec::Knn { k: 7 },
        depth: 1,
        k: 3,
        refit_scores_per_fold: true,
        ..PipelineConfig::default()
    };
    let cv = cross_validate(&data, &cfg, 3, 2).unwrap();
    assert!(cv.a_cv.is_finite());
    assert_eq!(cv.fold_policies.len(), 3);
    assert!(cv.refit_scores_per_fold);
}
