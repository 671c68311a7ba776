//! Statistical checks of the simulators against closed forms and
//! independent Monte Carlo oracles.

use drpolicy_core::{rng, simulate_ambiguous, simulate_iv, true_improvement, TauSpec};

/// E[(x3 + x4)_+] with x3, x4 iid N(0,1) equals E[max(N(0,2), 0)] = 1/sqrt(pi).
#[test]
fn iv_baseline_mean_matches_closed_form() {
    let closed_form = 1.0 / std::f64::consts::PI.sqrt();

    // independent Monte Carlo oracle for the closed form itself
    let mut r = rng::stream(555);
    let m = 100_000;
    let oracle: f64 = (0..m)
        .map(|_| (rng::normal(&mut r) + rng::normal(&mut r)).max(0.0))
        .sum::<f64>()
        / m as f64;
    assert!((oracle - closed_form).abs() < 0.01, "oracle {oracle}");

    let (data, _) = simulate_iv(100_000, &TauSpec::Product, 4).unwrap();
    let mean: f64 = (0..data.n())
        .map(|i| {
            let row = data.features().row(i);
            (row[2] + row[3]).max(0.0)
        })
        .sum::<f64>()
        / data.n() as f64;
    assert!((mean - closed_form).abs() < 0.01, "simulated {mean} vs {closed_form}");
}

/// OLS of Y on (W - 1/2) in the ambiguous design: the fitted slope is
/// statistically indistinguishable from E|tau|/sqrt(n) at this noise level.
#[test]
fn ambiguous_regression_slope_is_consistent() {
    let n = 10_000;
    let data = simulate_ambiguous(n, 2, 1.0, 31).unwrap();
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for i in 0..n {
        let xw = data.treatment()[i] - 0.5;
        sxy += xw * data.outcome()[i];
        sxx += xw * xw;
    }
    let slope = sxy / sxx;
    let mut rss = 0.0;
    for i in 0..n {
        let xw = data.treatment()[i] - 0.5;
        let resid = data.outcome()[i] - slope * xw;
        rss += resid * resid;
    }
    let se = (rss / (n as f64 - 2.0) / sxx).sqrt();
    let target = 1.0 / (n as f64).sqrt(); // E|tau| / sqrt(n)
    assert!(
        (slope - target).abs() <= 3.0 * se,
        "slope {slope}, target {target}, se {se}"
    );
}

/// Never-treat under the additive effect: A = -E[tau] = (1 - 2/sqrt(2 pi))/2.
#[test]
fn never_treat_additive_matches_closed_form() {
    let closed_form = (1.0 - 2.0 / (2.0 * std::f64::consts::PI).sqrt()) / 2.0;
    assert!((closed_form - 0.1011).abs() < 2e-4);
    let est = true_improvement(|_| 0, &TauSpec::Additive, 1_000_000, 77).unwrap();
    assert!((est - closed_form).abs() < 0.005, "estimate {est} vs {closed_form}");
}

/// In the IV design W = Q AND Z, so treated units are always encouraged.
#[test]
fn iv_noncompliance_is_one_sided() {
    let (data, _) = simulate_iv(20_000, &TauSpec::Additive, 8).unwrap();
    let z = data.instrument().unwrap();
    assert!((0..data.n()).all(|i| data.treatment()[i] <= z[i]));
}
