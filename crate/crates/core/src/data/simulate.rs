//! Synthetic data-generating processes for the simulation studies.

use crate::data::{Dataset, Matrix, TauSpec, TreatmentKind};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Endogenous-treatment simulator with a binary instrument and one-sided
/// noncompliance:
///
/// X ~ N(0, I_10), Z | X ~ Bernoulli(sigmoid(x3)), eps ~ N(0, 1),
/// Q ~ Bernoulli(sigmoid(eps + x4)), W = Q AND Z,
/// Y = (x3 + x4)_+ + W tau(X) + eps.
///
/// Returns the dataset and the realized tau(X_i) values.
pub fn simulate_iv(n: usize, tau: &TauSpec, seed: u64) -> Result<(Dataset, Vec<f64>)> {
    if n == 0 {
        return Err(Error::EmptyData);
    }
    const P: usize = 10;
    let mut r: Stream = rng::stream(seed);
    let mut flat = Vec::with_capacity(n * P);
    let mut y = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    let mut true_tau = Vec::with_capacity(n);
    let mut x = [0.0f64; P];
    for _ in 0..n {
        for v in x.iter_mut() {
            *v = rng::normal(&mut r);
        }
        let zi = rng::bernoulli(&mut r, sigmoid(x[2]));
        let eps = rng::normal(&mut r);
        let qi = rng::bernoulli(&mut r, sigmoid(eps + x[3]));
        let wi = qi && zi;
        let t = tau.evaluate(&x);
        y.push((x[2] + x[3]).max(0.0) + (wi as u8 as f64) * t + eps);
        w.push(wi as u8 as f64);
        z.push(zi as u8 as f64);
        true_tau.push(t);
        flat.extend_from_slice(&x);
    }
    let data = Dataset::new(
        Matrix::from_flat(flat, n, P)?,
        y,
        w,
        Some(z),
        TreatmentKind::Binary,
        (1..=P).map(|j| format!("x{j}")).collect(),
        (0..P).collect(),
    )?;
    Ok((data, true_tau))
}

/// Asymptotically ambiguous problem sequence over [-0.5, 0.5]^s:
///
/// X ~ Uniform[-0.5, 0.5]^s, W | X ~ Bernoulli(1/2),
/// Y | X, W ~ N((W - 1/2) * tau(X) / sqrt(n), 1),
/// with tau(x) = tau_scale * sign(x1).
///
/// This is the flat instance f = 0, e = 1/2, sigma = 1, chosen so the
/// scale constant S = E[sigma^2 / (e (1 - e))] = 4 is known in closed form.
pub fn simulate_ambiguous(n: usize, s: usize, tau_scale: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::EmptyData);
    }
    if s == 0 {
        return Err(Error::InvalidParam("dimension s must be >= 1".into()));
    }
    let mut r: Stream = rng::stream(seed);
    let root_n = (n as f64).sqrt();
    let mut flat = Vec::with_capacity(n * s);
    let mut y = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for _ in 0..n {
        let start = flat.len();
        for _ in 0..s {
            flat.push(rng::unit(&mut r) - 0.5);
        }
        let x1 = flat[start];
        let tau = tau_scale * if x1 > 0.0 { 1.0 } else if x1 < 0.0 { -1.0 } else { 0.0 };
        let wi = rng::bernoulli(&mut r, 0.5);
        let mean = ((wi as u8 as f64) - 0.5) * tau / root_n;
        y.push(mean + rng::normal(&mut r));
        w.push(wi as u8 as f64);
    }
    Dataset::new(
        Matrix::from_flat(flat, n, s)?,
        y,
        w,
        None,
        TreatmentKind::Binary,
        (1..=s).map(|j| format!("x{j}")).collect(),
        (0..s).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iv_is_deterministic_and_one_sided() {
        let (a, ta) = simulate_iv(500, &TauSpec::Product, 11).unwrap();
        let (b, tb) = simulate_iv(500, &TauSpec::Product, 11).unwrap();
        assert_eq!(a.outcome(), b.outcome());
        assert_eq!(ta, tb);
        // W = Q AND Z implies W <= Z elementwise.
        let z = a.instrument().unwrap();
        for i in 0..a.n() {
            assert!(a.treatment()[i] <= z[i]);
        }
    }

    #[test]
    fn product_tau_has_constant_magnitude() {
        let (_, tau) = simulate_iv(2000, &TauSpec::Product, 5).unwrap();
        assert!(tau.iter().all(|t| t.abs() == 0.5));
    }

    #[test]
    fn instrument_mean_is_half() {
        let (d, _) = simulate_iv(100_000, &TauSpec::Product, 1).unwrap();
        let mean_z =
            d.instrument().unwrap().iter().sum::<f64>() / d.n() as f64;
        assert!((mean_z - 0.5).abs() < 0.01, "mean z = {mean_z}");
    }

    #[test]
    fn ambiguous_treated_fraction_is_half() {
        let d = simulate_ambiguous(10_000, 2, 1.0, 3).unwrap();
        let frac = d.treatment().iter().sum::<f64>() / d.n() as f64;
        assert!((frac - 0.5).abs() < 0.02, "treated fraction {frac}");
    }

    #[test]
    fn ambiguous_zero_effect_outcome_is_centered() {
        let n = 10_000;
        let d = simulate_ambiguous(n, 2, 0.0, 17).unwrap();
        let mean_y = d.outcome().iter().sum::<f64>() / n as f64;
        assert!(mean_y.abs() < 3.0 / (n as f64).sqrt(), "mean y = {mean_y}");
    }
}
