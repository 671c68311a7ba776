//! Score-family properties: the IV perfect-compliance reduction, order
//! equivariance, the Gaussian-model weight identity and oracle-score
//! unbiasedness.

use std::collections::BTreeMap;

use drpolicy_core::{
    aipw_scores, assign_folds, continuous_scores, iv_scores, rng, CrossFitNuisance, Dataset,
    Matrix, NuisanceTarget, TreatmentKind,
};

fn binary_dataset(
    y: Vec<f64>,
    w: Vec<f64>,
    z: Option<Vec<f64>>,
    x: Option<Matrix>,
) -> Dataset {
    let n = y.len();
    let x = x.unwrap_or_else(|| {
        Matrix::from_rows((0..n).map(|i| vec![i as f64]).collect()).unwrap()
    });
    let p = x.cols();
    Dataset::new(
        x,
        y,
        w,
        z,
        TreatmentKind::Binary,
        (1..=p).map(|j| format!("x{j}")).collect(),
        (0..p).collect(),
    )
    .unwrap()
}

fn nuisance_from(
    n: usize,
    cols: Vec<(NuisanceTarget, Vec<f64>)>,
) -> CrossFitNuisance {
    let folds = assign_folds(n, 2, 0).unwrap();
    let map: BTreeMap<_, _> = cols.into_iter().collect();
    CrossFitNuisance::from_columns(map, folds, serde_json::json!({"kind": "oracle"})).unwrap()
}

/// With perfect compliance (Z = W, z_hat = e_hat, delta = 1) the IV score
/// reduces to the AIPW score exactly, input by input.
#[test]
fn iv_reduces_to_aipw_under_perfect_compliance() {
    let n = 100;
    let eta = 0.05;
    let mut r = rng::stream(42);
    let w: Vec<f64> = (0..n).map(|_| rng::bernoulli(&mut r, 0.5) as u8 as f64).collect();
    let y: Vec<f64> = (0..n).map(|_| 2.0 * rng::normal(&mut r)).collect();
    let f: Vec<f64> = (0..n).map(|_| rng::normal(&mut r)).collect();
    let tau: Vec<f64> = (0..n).map(|_| rng::normal(&mut r)).collect();
    // propensities respect overlap so clipping never kicks in
    let e: Vec<f64> = (0..n).map(|_| 0.06 + 0.88 * rng::unit(&mut r)).collect();

    let data = binary_dataset(y, w.clone(), Some(w), None);
    let nu_aipw = nuisance_from(
        n,
        vec![
            (NuisanceTarget::Outcome, f.clone()),
            (NuisanceTarget::Propensity, e.clone()),
            (NuisanceTarget::Cate, tau.clone()),
        ],
    );
    let nu_iv = nuisance_from(
        n,
        vec![
            (NuisanceTarget::Outcome, f),
            (NuisanceTarget::Propensity, e.clone()),
            (NuisanceTarget::Cate, tau),
            (NuisanceTarget::InstrumentPropensity, e),
            (NuisanceTarget::Compliance, vec![1.0; n]),
        ],
    );
    let a = aipw_scores(&data, &nu_aipw, 0.3, eta).unwrap();
    let b = iv_scores(&data, &nu_iv, 0.3, eta, 0.5).unwrap();
    assert_eq!(a.gamma, b.gamma);
}

#[test]
fn scores_are_permutation_equivariant() {
    let n = 60;
    let mut r = rng::stream(7);
    let w: Vec<f64> = (0..n).map(|_| rng::bernoulli(&mut r, 0.4) as u8 as f64).collect();
    let y: Vec<f64> = (0..n).map(|_| rng::normal(&mut r)).collect();
    let f: Vec<f64> = (0..n).map(|_| rng::normal(&mut r)).collect();
    let tau: Vec<f64> = (0..n).map(|_| rng::normal(&mut r)).collect();
    let e: Vec<f64> = (0..n).map(|_| 0.1 + 0.8 * rng::unit(&mut r)).collect();

    let data = binary_dataset(y.clone(), w.clone(), None, None);
    let nu = nuisance_from(
        n,
        vec![
            (NuisanceTarget::Outcome, f.clone()),
            (NuisanceTarget::Propensity, e.clone()),
            (NuisanceTarget::Cate, tau.clone()),
        ],
    );
    let base = aipw_scores(&data, &nu, 0.0, 0.05).unwrap();

    let perm: Vec<usize> = (0..n).rev().collect();
    let data_p = binary_dataset(
        perm.iter().map(|&i| y[i]).collect(),
        perm.iter().map(|&i| w[i]).collect(),
        None,
        None,
    );
    let nu_p = nuisance_from(
        n,
        vec![
            (NuisanceTarget::Outcome, perm.iter().map(|&i| f[i]).collect()),
            (NuisanceTarget::Propensity, perm.iter().map(|&i| e[i]).collect()),
            (NuisanceTarget::Cate, perm.iter().map(|&i| tau[i]).collect()),
        ],
    );
    let permuted = aipw_scores(&data_p, &nu_p, 0.0, 0.05).unwrap();
    for (pos, &i) in perm.iter().enumerate() {
        assert_eq!(base.gamma[i], permuted.gamma[pos]);
    }
}

/// With the exact conditional model W | X ~ N(x, 1), the implied weight
/// matches the symbolic log-density derivative -d/dw log phi(w - x) = w - x.
#[test]
fn gaussian_weight_matches_log_density_derivative() {
    let n = 100;
    let mut r = rng::stream(11);
    let x_vals: Vec<f64> = (0..n).map(|_| rng::normal(&mut r)).collect();
    let w: Vec<f64> = x_vals.iter().map(|&x| x + rng::normal(&mut r)).collect();
    let x = Matrix::from_rows(x_vals.iter().map(|&v| vec![v]).collect()).unwrap();
    // Y = 1, f = 0, tau = 0 makes gamma equal to the weight itself.
    let data = Dataset::new(
        x,
        vec![1.0; n],
        w.clone(),
        None,
        TreatmentKind::Continuous,
        vec!["x1".into()],
        vec![0],
    )
    .unwrap();
    let nu = nuisance_from(
        n,
        vec![
            (NuisanceTarget::Outcome, vec![0.0; n]),
            (NuisanceTarget::Cate, vec![0.0; n]),
            (NuisanceTarget::TreatmentMean, x_vals.clone()),
            (NuisanceTarget::TreatmentStd, vec![1.0; n]),
        ],
    );
    let s = continuous_scores(&data, &nu, 0.0, 1e9).unwrap();
    let log_phi = |v: f64| -0.5 * v * v; // constants cancel in the difference
    for i in 0..n {
        let symbolic = w[i] - x_vals[i];
        assert!(
            (s.gamma[i] - symbolic).abs() <= 1e-12,
            "weight {} vs symbolic {symbolic}",
            s.gamma[i]
        );
        // independent finite-difference check of the symbolic form
        let h = 1e-5;
        let fd = -(log_phi(w[i] + h - x_vals[i]) - log_phi(w[i] - h - x_vals[i])) / (2.0 * h);
        assert!((fd - symbolic).abs() < 1e-7);
    }
}

/// With oracle nuisances and C = 0, mean(gamma) is unbiased for E[tau(X)]:
/// the grand mean over 200 replications of n = 500 sits within 3 standard
/// errors of the truth.
#[test]
fn oracle_scores_estimate_mean_effect_unbiasedly() {
    let sigmoid = |v: f64| 1.0 / (1.0 + (-v).exp());
    let reps = 200;
    let n = 500;
    let mut means = Vec::with_capacity(reps);
    for rep in 0..reps {
        let mut r = rng::stream(1000 + rep as u64);
        let mut x_rows = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        let mut f_col = Vec::with_capacity(n);
        let mut e_col = Vec::with_capacity(n);
        let mut tau_col = Vec::with_capacity(n);
        for _ in 0..n {
            let x1 = rng::normal(&mut r);
            let x2 = rng::normal(&mut r);
            let e = sigmoid(x2);
            let tau = x1;
            let wi = rng::bernoulli(&mut r, e) as u8 as f64;
            let b = 1.0 + x2;
            y.push(b + wi * tau + rng::normal(&mut r));
            w.push(wi);
            f_col.push(b + e * tau); // E[Y | X]
            e_col.push(e);
            tau_col.push(tau);
            x_rows.push(vec![x1, x2]);
        }
        let data = binary_dataset(y, w, None, Some(Matrix::from_rows(x_rows).unwrap()));
        let nu = nuisance_from(
            n,
            vec![
                (NuisanceTarget::Outcome, f_col),
                (NuisanceTarget::Propensity, e_col),
                (NuisanceTarget::Cate, tau_col),
            ],
        );
        let s = aipw_scores(&data, &nu, 0.0, 0.05).unwrap();
        means.push(s.gamma.iter().sum::<f64>() / n as f64);
    }
    let grand = means.iter().sum::<f64>() / reps as f64;
    let var = means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (reps as f64 - 1.0);
    let se = (var / reps as f64).sqrt();
    // E[tau(X)] = E[x1] = 0
    assert!(
        grand.abs() <= 3.0 * se,
        "grand mean {grand} exceeds 3 se = {}",
        3.0 * se
    );
}
