//! Per-observation doubly robust (and baseline IPW) scores.
//!
//! Each score family produces gamma values whose sample mean estimates the
//! average treatment effect (net of the treatment cost C), and whose signed
//! sum is the policy-search objective. Propensity-type quantities are
//! clipped to [eta, 1 - eta] before weighting and the clipping level is
//! recorded on the output.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FoldAssignment, TreatmentKind};
use crate::error::{Error, Result};
use crate::nuisance::{CrossFitNuisance, NuisanceTarget};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreFamily {
    Aipw,
    Iv,
    Continuous,
    Ipw,
}

impl ScoreFamily {
    pub fn required_targets(self) -> &'static [NuisanceTarget] {
        use NuisanceTarget::*;
        match self {
            ScoreFamily::Aipw => &[Outcome, Propensity, Cate],
            ScoreFamily::Iv => &[Outcome, Propensity, Cate, InstrumentPropensity, Compliance],
            ScoreFamily::Continuous => &[Outcome, Cate, TreatmentMean, TreatmentStd],
            ScoreFamily::Ipw => &[Propensity],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScoreFamily::Aipw => "aipw",
            ScoreFamily::Iv => "iv",
            ScoreFamily::Continuous => "continuous",
            ScoreFamily::Ipw => "ipw",
        }
    }
}

impl std::str::FromStr for ScoreFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aipw" => Ok(ScoreFamily::Aipw),
            "iv" => Ok(ScoreFamily::Iv),
            "continuous" => Ok(ScoreFamily::Continuous),
            "ipw" => Ok(ScoreFamily::Ipw),
            other => Err(Error::InvalidParam(format!("unknown score family `{other}`"))),
        }
    }
}

impl std::fmt::Display for ScoreFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Doubly robust scores with their construction provenance.
#[derive(Debug, Clone)]
pub struct ScoreSet {
    pub gamma: Vec<f64>,
    pub family: ScoreFamily,
    /// Treatment cost C, already subtracted inside gamma.
    pub cost: f64,
    /// Propensity clipping level, where the family uses one.
    pub eta: Option<f64>,
    /// Weight cap for the continuous family.
    pub gmax: Option<f64>,
    /// Weak-instrument threshold for the IV family.
    pub delta_min: Option<f64>,
    pub folds: FoldAssignment,
}

impl ScoreSet {
    pub fn n(&self) -> usize {
        self.gamma.len()
    }

    fn check_finite(self) -> Result<Self> {
        if let Some(i) = self.gamma.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteScore(i));
        }
        Ok(self)
    }
}

fn clip(v: f64, lo: f64, hi: f64) -> f64 {
    v.clamp(lo, hi)
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta < 0.5) {
        return Err(Error::InvalidParam(format!("eta = {eta} must lie in (0, 0.5)")));
    }
    Ok(())
}

fn check_binary(data: &Dataset, family: ScoreFamily) -> Result<()> {
    if data.treatment_kind() != TreatmentKind::Binary {
        return Err(Error::InvalidParam(format!(
            "{family} scores require a binary treatment"
        )));
    }
    Ok(())
}

pub(crate) fn gamma_aipw_row(
    y: f64,
    w: f64,
    f: f64,
    e: f64,
    tau: f64,
    c: f64,
    eta: f64,
) -> f64 {
    let et = clip(e, eta, 1.0 - eta);
    tau - c + (w - et) / (et * (1.0 - et)) * (y - f - (w - et) * tau)
}

pub(crate) fn gamma_iv_row(
    y: f64,
    w: f64,
    z: f64,
    f: f64,
    e: f64,
    tau: f64,
    z_hat: f64,
    delta: f64,
    c: f64,
    eta: f64,
) -> f64 {
    let zt = clip(z_hat, eta, 1.0 - eta);
    let g = (z - zt) / (delta * zt * (1.0 - zt));
    tau - c + g * (y - f - (w - e) * tau)
}

pub(crate) fn gamma_continuous_row(
    y: f64,
    w: f64,
    f: f64,
    tau: f64,
    mu_w: f64,
    sigma_w: f64,
    c: f64,
    gmax: f64,
) -> f64 {
    let g = clip((w - mu_w) / (sigma_w * sigma_w), -gmax, gmax);
    let m = f + (w - mu_w) * tau;
    tau - c + g * (y - m)
}

pub(crate) fn gamma_ipw_row(y: f64, w: f64, e: f64, c: f64, eta: f64) -> f64 {
    let et = clip(e, eta, 1.0 - eta);
    w * y / et - (1.0 - w) * y / (1.0 - et) - c
}

/// Augmented inverse-propensity weighted scores for a binary, unconfounded
/// treatment: gamma = tau - C + (W - e)/(e(1-e)) (Y - f - (W - e) tau),
/// with e clipped to [eta, 1 - eta].
pub fn aipw_scores(
    data: &Dataset,
    nu: &CrossFitNuisance,
    c: f64,
    eta: f64,
) -> Result<ScoreSet> {
    check_binary(data, ScoreFamily::Aipw)?;
    check_eta(eta)?;
    let f = nu.require(NuisanceTarget::Outcome)?;
    let e = nu.require(NuisanceTarget::Propensity)?;
    let tau = nu.require(NuisanceTarget::Cate)?;
    let gamma = (0..data.n())
        .map(|i| {
            gamma_aipw_row(data.outcome()[i], data.treatment()[i], f[i], e[i], tau[i], c, eta)
        })
        .collect();
    ScoreSet {
        gamma,
        family: ScoreFamily::Aipw,
        cost: c,
        eta: Some(eta),
        gmax: None,
        delta_min: None,
        folds: nu.folds().clone(),
    }
    .check_finite()
}

/// Compliance-weighted scores for a binary endogenous treatment with a
/// binary instrument. Errors when any |delta_hat| falls below `delta_min`.
pub fn iv_scores(
    data: &Dataset,
    nu: &CrossFitNuisance,
    c: f64,
    eta: f64,
    delta_min: f64,
) -> Result<ScoreSet> {
    check_binary(data, ScoreFamily::Iv)?;
    check_eta(eta)?;
    if !(delta_min > 0.0) {
        return Err(Error::InvalidParam(format!(
            "delta_min = {delta_min} must be positive"
        )));
    }
    let z_obs = data.instrument().ok_or(Error::TargetUnavailable {
        target: "instrument",
        reason: "iv scores need an instrument column".into(),
    })?;
    let f = nu.require(NuisanceTarget::Outcome)?;
    let e = nu.require(NuisanceTarget::Propensity)?;
    let tau = nu.require(NuisanceTarget::Cate)?;
    let z_hat = nu.require(NuisanceTarget::InstrumentPropensity)?;
    let delta = nu.require(NuisanceTarget::Compliance)?;

    let weak: Vec<usize> = (0..data.n())
        .filter(|&i| delta[i].abs() < delta_min)
        .collect();
    if !weak.is_empty() {
        let count = weak.len();
        return Err(Error::WeakInstrument {
            delta_min,
            count,
            indices: weak.into_iter().take(20).collect(),
        });
    }

    let gamma = (0..data.n())
        .map(|i| {
            gamma_iv_row(
                data.outcome()[i],
                data.treatment()[i],
                z_obs[i],
                f[i],
                e[i],
                tau[i],
                z_hat[i],
                delta[i],
                c,
                eta,
            )
        })
        .collect();
    ScoreSet {
        gamma,
        family: ScoreFamily::Iv,
        cost: c,
        eta: Some(eta),
        gmax: None,
        delta_min: Some(delta_min),
        folds: nu.folds().clone(),
    }
    .check_finite()
}

/// Scores for infinitesimal nudges to a continuous treatment, using the
/// Gaussian conditional model W | X ~ N(mu_W, sigma_W^2), whose
/// log-density derivative gives the weight g = (w - mu)/sigma^2.
pub fn continuous_scores(
    data: &Dataset,
    nu: &CrossFitNuisance,
    c: f64,
    gmax: f64,
) -> Result<ScoreSet> {
    if data.treatment_kind() != TreatmentKind::Continuous {
        return Err(Error::InvalidParam(
            "continuous scores require a continuous treatment".into(),
        ));
    }
    if !(gmax > 0.0) {
        return Err(Error::InvalidParam(format!("gmax = {gmax} must be positive")));
    }
    let f = nu.require(NuisanceTarget::Outcome)?;
    let tau = nu.require(NuisanceTarget::Cate)?;
    let mu = nu.require(NuisanceTarget::TreatmentMean)?;
    let sigma = nu.require(NuisanceTarget::TreatmentStd)?;
    if let Some(i) = sigma.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::NonPositiveSigma { index: i, value: sigma[i] });
    }
    let gamma = (0..data.n())
        .map(|i| {
            gamma_continuous_row(
                data.outcome()[i],
                data.treatment()[i],
                f[i],
                tau[i],
                mu[i],
                sigma[i],
                c,
                gmax,
            )
        })
        .collect();
    ScoreSet {
        gamma,
        family: ScoreFamily::Continuous,
        cost: c,
        eta: None,
        gmax: Some(gmax),
        delta_min: None,
        folds: nu.folds().clone(),
    }
    .check_finite()
}

/// Plain inverse-propensity weighted scores,
/// gamma = W Y / e - (1 - W) Y / (1 - e) - C. Maximizing the signed-score
/// objective with these is equivalent to inverse-propensity weighted policy
/// search up to a policy-independent constant.
pub fn ipw_scores(
    data: &Dataset,
    nu: &CrossFitNuisance,
    c: f64,
    eta: f64,
) -> Result<ScoreSet> {
    check_binary(data, ScoreFamily::Ipw)?;
    check_eta(eta)?;
    let e = nu.require(NuisanceTarget::Propensity)?;
    let gamma = (0..data.n())
        .map(|i| gamma_ipw_row(data.outcome()[i], data.treatment()[i], e[i], c, eta))
        .collect();
    ScoreSet {
        gamma,
        family: ScoreFamily::Ipw,
        cost: c,
        eta: Some(eta),
        gmax: None,
        delta_min: None,
        folds: nu.folds().clone(),
    }
    .check_finite()
}

/// Export as CSV with columns `index,gamma,fold`.
pub fn write_scores_csv<P: AsRef<Path>>(scores: &ScoreSet, path: P) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "gamma", "fold"])?;
    for (i, g) in scores.gamma.iter().enumerate() {
        w.write_record([
            i.to_string(),
            format!("{g}"),
            scores.folds.fold(i).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
