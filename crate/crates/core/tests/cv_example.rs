//! Cross-validated advantage against the Monte Carlo truth of the learned
//! fold policies on the endogenous-treatment simulator.

use drpolicy_core::{
    aipw_scores, assign_folds, cross_validate, fit_crossfit, rng, simulate_iv,
    true_improvement, ForestParams, NuisanceLearnerSpec, OracleFunctions, PipelineConfig,
    ScoreFamily, TauSpec,
};

/// When every fold policy is treat-everyone, the cross-validated advantage
/// collapses to the plain score mean.
#[test]
fn cv_reduces_to_score_mean_for_constant_policies() {
    // outcomes with sign matching the treatment make every AIPW score
    // positive under the flat oracle, so every learned policy treats everyone
    let n = 200;
    let mut r = rng::stream(9);
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for _ in 0..n {
        let wi = rng::bernoulli(&mut r, 0.5) as u8 as f64;
        y.push((2.0 * wi - 1.0) * (1.0 + rng::unit(&mut r)));
        w.push(wi);
        rows.push(vec![rng::normal(&mut r), rng::normal(&mut r)]);
    }
    let data = drpolicy_core::Dataset::new(
        drpolicy_core::Matrix::from_rows(rows).unwrap(),
        y,
        w,
        None,
        drpolicy_core::TreatmentKind::Binary,
        vec!["x1".into(), "x2".into()],
        vec![0, 1],
    )
    .unwrap();
    let learner = NuisanceLearnerSpec::Oracle(
        OracleFunctions::new()
            .with_f(|_| 0.0)
            .with_e(|_| 0.5)
            .with_tau(|_| 0.0),
    );
    let cfg = PipelineConfig {
        family: ScoreFamily::Aipw,
        learner: learner.clone(),
        depth: 2,
        k: 4,
        ..PipelineConfig::default()
    };
    let cv = cross_validate(&data, &cfg, 4, 5).unwrap();
    assert!(cv.fold_policies.iter().all(|p| p.depth() == 0));

    // oracle predictions are fold-independent, so any fold assignment
    // reproduces the full-data scores
    let folds = assign_folds(data.n(), 4, 123).unwrap();
    let nu = fit_crossfit(&data, &folds, &learner, ScoreFamily::Aipw.required_targets(), 0)
        .unwrap();
    let scores = aipw_scores(&data, &nu, cfg.c, cfg.eta).unwrap();
    let mean = scores.gamma.iter().sum::<f64>() / scores.n() as f64;
    assert_eq!(cv.a_cv, mean);
}

#[test]
fn cv_advantage_tracks_fold_policy_truth() {
    let (data, _) = simulate_iv(2000, &TauSpec::Product, 3).unwrap();
    let cfg = PipelineConfig {
        family: ScoreFamily::Iv,
        learner: NuisanceLearnerSpec::HonestForest(ForestParams {
            num_trees: 50,
            ..ForestParams::default()
        }),
        depth: 2,
        k: 5,
        delta_min: 1e-3,
        ..PipelineConfig::default()
    };
    let cv = cross_validate(&data, &cfg, 5, 11).unwrap();
    let mut truth = 0.0;
    for (i, p) in cv.fold_policies.iter().enumerate() {
        let p = p.clone();
        truth += true_improvement(
            move |x| p.action(x).unwrap(),
            &TauSpec::Product,
            100_000,
            rng::splitmix64(900 + i as u64),
        )
        .unwrap();
    }
    truth /= cv.fold_policies.len() as f64;
    assert!(
        (cv.a_cv - truth).abs() <= 3.0 * cv.se,
        "a_cv {} vs mean fold truth {truth}, se {}",
        cv.a_cv,
        cv.se
    );
}
