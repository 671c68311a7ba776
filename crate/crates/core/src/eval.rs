//! Policy value estimation, cross-validated procedure evaluation, stability
//! diagnostics and the regret-bound scaling diagnostic.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::data::{assign_folds, Dataset, Matrix, TauSpec};
use crate::error::{Error, Result};
use crate::nuisance::{
    fit_crossfit, fit_targets_predict, CrossFitNuisance, NuisanceLearnerSpec, NuisanceTarget,
};
use crate::policy::{exact_tree_search, TreePolicy};
use crate::rng;
use crate::scores::{
    aipw_scores, continuous_scores, gamma_aipw_row, gamma_continuous_row, gamma_ipw_row,
    gamma_iv_row, ipw_scores, iv_scores, ScoreFamily, ScoreSet,
};

/// Advantage estimate for one policy against one score set.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    /// Â(π) = (1/n) Σ (2π(X_i) - 1) Γ_i.
    pub a_hat: f64,
    /// Sample std of the signed scores over sqrt(n).
    pub se: f64,
    /// Ŝ = mean Γ².
    pub s_hat: f64,
    pub n: usize,
    pub family: ScoreFamily,
    pub bound: Option<RegretBoundDiag>,
}

pub fn advantage(actions: &[u8], scores: &ScoreSet) -> Result<EvalReport> {
    let n = scores.n();
    if actions.len() != n {
        return Err(Error::LengthMismatch(format!(
            "{} actions for {n} scores",
            actions.len()
        )));
    }
    let signed: Vec<f64> = actions
        .iter()
        .zip(&scores.gamma)
        .map(|(&a, &g)| if a == 1 { g } else { -g })
        .collect();
    let a_hat = signed.iter().sum::<f64>() / n as f64;
    let se = if n >= 2 {
        let var =
            signed.iter().map(|s| (s - a_hat) * (s - a_hat)).sum::<f64>() / (n as f64 - 1.0);
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    let s_hat = scores.gamma.iter().map(|g| g * g).sum::<f64>() / n as f64;
    Ok(EvalReport { a_hat, se, s_hat, n, family: scores.family, bound: None })
}

/// Regret-rate diagnostic built from the tree-class entropy shape.
///
/// DIAGNOSTIC ONLY: the universal constant in the regret bound is unknown,
/// so these numbers order configurations but guarantee nothing.
#[derive(Debug, Clone, Serialize)]
pub struct RegretBoundDiag {
    pub s_hat: f64,
    pub depth: usize,
    pub p: usize,
    /// VC-style dimension proxy 2^L (log2(p) + L + 2).
    pub vc_proxy_d: f64,
    pub eps: f64,
    /// Hamming entropy bound d (ln(1/eps) + ln 2 + 1) + ln(d + 1) + 1.
    pub entropy_at_eps: f64,
    /// Unnormalized rate sqrt(d * s_hat / n).
    pub rate: f64,
    pub note: &'static str,
}

pub fn regret_bound_diag(
    scores: &ScoreSet,
    depth: usize,
    p: usize,
    eps: f64,
) -> Result<RegretBoundDiag> {
    if depth < 1 {
        return Err(Error::InvalidParam("diagnostic needs depth >= 1".into()));
    }
    if p < 1 {
        return Err(Error::InvalidParam("diagnostic needs p >= 1".into()));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParam(format!("eps = {eps} must lie in (0, 1)")));
    }
    let n = scores.n() as f64;
    let s_hat = scores.gamma.iter().map(|g| g * g).sum::<f64>() / n;
    let d = (1u64 << depth) as f64 * ((p as f64).log2() + depth as f64 + 2.0);
    let entropy = d * ((1.0 / eps).ln() + std::f64::consts::LN_2 + 1.0) + (d + 1.0).ln() + 1.0;
    Ok(RegretBoundDiag {
        s_hat,
        depth,
        p,
        vc_proxy_d: d,
        eps,
        entropy_at_eps: entropy,
        rate: (d * s_hat / n).sqrt(),
        note: "scaling heuristic; the universal constant of the regret bound is unknown",
    })
}

/// Everything a batch run needs to turn a dataset into a policy.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub family: ScoreFamily,
    pub learner: NuisanceLearnerSpec,
    pub depth: usize,
    pub k: usize,
    pub c: f64,
    pub eta: f64,
    pub delta_min: f64,
    pub gmax: f64,
    pub refit_scores_per_fold: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            family: ScoreFamily::Aipw,
            learner: NuisanceLearnerSpec::forest_default(),
            depth: 2,
            k: 10,
            c: 0.0,
            eta: 0.05,
            delta_min: 0.05,
            gmax: 20.0,
            refit_scores_per_fold: false,
        }
    }
}

impl PipelineConfig {
    pub fn provenance(&self) -> serde_json::Value {
        serde_json::json!({
            "family": self.family.name(),
            "learner": self.learner.provenance(),
            "depth": self.depth,
            "k": self.k,
            "c": self.c,
            "eta": self.eta,
            "delta_min": self.delta_min,
            "gmax": self.gmax,
            "refit_scores_per_fold": self.refit_scores_per_fold,
        })
    }
}

pub fn compute_scores(
    data: &Dataset,
    nu: &CrossFitNuisance,
    cfg: &PipelineConfig,
) -> Result<ScoreSet> {
    match cfg.family {
        ScoreFamily::Aipw => aipw_scores(data, nu, cfg.c, cfg.eta),
        ScoreFamily::Iv => iv_scores(data, nu, cfg.c, cfg.eta, cfg.delta_min),
        ScoreFamily::Continuous => continuous_scores(data, nu, cfg.c, cfg.gmax),
        ScoreFamily::Ipw => ipw_scores(data, nu, cfg.c, cfg.eta),
    }
}

#[derive(Debug, Clone)]
pub struct LearnOutput {
    pub policy: TreePolicy,
    pub objective: f64,
    pub scores: ScoreSet,
    pub nuisance: CrossFitNuisance,
    pub report: EvalReport,
}

/// Full pipeline: folds, cross-fit nuisances, scores, exact tree search,
/// advantage report. Deterministic in (data, cfg, seed).
pub fn learn_policy(data: &Dataset, cfg: &PipelineConfig, seed: u64) -> Result<LearnOutput> {
    let folds = assign_folds(data.n(), cfg.k, rng::splitmix64(seed ^ 0xF01D))?;
    let nuisance = fit_crossfit(
        data,
        &folds,
        &cfg.learner,
        cfg.family.required_targets(),
        rng::splitmix64(seed ^ 0x0115),
    )?;
    learn_policy_from_nuisance(data, cfg, nuisance)
}

/// Pipeline tail for callers that already hold out-of-fold nuisance
/// predictions (e.g. an oracle table loaded from disk).
pub fn learn_policy_from_nuisance(
    data: &Dataset,
    cfg: &PipelineConfig,
    nuisance: CrossFitNuisance,
) -> Result<LearnOutput> {
    let scores = compute_scores(data, &nuisance, cfg)?;
    let searched =
        exact_tree_search(data.features(), data.policy_feature_mask(), &scores.gamma, cfg.depth)?;
    let actions = searched.policy.actions(data.features())?;
    let mut report = advantage(&actions, &scores)?;
    if cfg.depth >= 1 {
        report.bound = Some(regret_bound_diag(&scores, cfg.depth, data.p(), 0.25)?);
    }
    Ok(LearnOutput {
        policy: searched.policy,
        objective: searched.objective,
        scores,
        nuisance,
        report,
    })
}

/// Gamma values for selected rows from per-target prediction columns.
fn gamma_rows(
    data: &Dataset,
    rows: &[usize],
    cols: &BTreeMap<NuisanceTarget, Vec<f64>>,
    cfg: &PipelineConfig,
) -> Result<Vec<f64>> {
    let need = |t: NuisanceTarget| -> Result<&Vec<f64>> {
        cols.get(&t).ok_or(Error::MissingNuisance(t.name()))
    };
    let y = data.outcome();
    let w = data.treatment();
    let out: Vec<f64> = match cfg.family {
        ScoreFamily::Aipw => {
            let f = need(NuisanceTarget::Outcome)?;
            let e = need(NuisanceTarget::Propensity)?;
            let tau = need(NuisanceTarget::Cate)?;
            rows.iter()
                .enumerate()
                .map(|(pos, &i)| {
                    gamma_aipw_row(y[i], w[i], f[pos], e[pos], tau[pos], cfg.c, cfg.eta)
                })
                .collect()
        }
        ScoreFamily::Iv => {
            let z_obs = data.instrument().ok_or(Error::TargetUnavailable {
                target: "instrument",
                reason: "iv scores need an instrument column".into(),
            })?;
            let f = need(NuisanceTarget::Outcome)?;
            let e = need(NuisanceTarget::Propensity)?;
            let tau = need(NuisanceTarget::Cate)?;
            let zh = need(NuisanceTarget::InstrumentPropensity)?;
            let delta = need(NuisanceTarget::Compliance)?;
            let weak: Vec<usize> = rows
                .iter()
                .enumerate()
                .filter(|(pos, _)| delta[*pos].abs() < cfg.delta_min)
                .map(|(_, &i)| i)
                .collect();
            if !weak.is_empty() {
                return Err(Error::WeakInstrument {
                    delta_min: cfg.delta_min,
                    count: weak.len(),
                    indices: weak.into_iter().take(20).collect(),
                });
            }
            rows.iter()
                .enumerate()
                .map(|(pos, &i)| {
                    gamma_iv_row(
                        y[i], w[i], z_obs[i], f[pos], e[pos], tau[pos], zh[pos], delta[pos],
                        cfg.c, cfg.eta,
                    )
                })
                .collect()
        }
        ScoreFamily::Continuous => {
            let f = need(NuisanceTarget::Outcome)?;
            let tau = need(NuisanceTarget::Cate)?;
            let mu = need(NuisanceTarget::TreatmentMean)?;
            let sigma = need(NuisanceTarget::TreatmentStd)?;
            rows.iter()
                .enumerate()
                .map(|(pos, &i)| {
                    gamma_continuous_row(
                        y[i], w[i], f[pos], tau[pos], mu[pos], sigma[pos], cfg.c, cfg.gmax,
                    )
                })
                .collect()
        }
        ScoreFamily::Ipw => {
            let e = need(NuisanceTarget::Propensity)?;
            rows.iter()
                .enumerate()
                .map(|(pos, &i)| gamma_ipw_row(y[i], w[i], e[pos], cfg.c, cfg.eta))
                .collect()
        }
    };
    if let Some(pos) = out.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteScore(rows[pos]));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct CrossValReport {
    /// Cross-validated advantage of the learning procedure.
    pub a_cv: f64,
    pub se: f64,
    pub n: usize,
    pub k: usize,
    pub refit_scores_per_fold: bool,
    pub fold_policies: Vec<TreePolicy>,
}

/// K-fold evaluation of the whole learning procedure: fold k's policy is
/// learned on the other folds (with its own internal cross-fitting) and
/// scored on fold k. By default the scores come from one full-data
/// cross-fit; `refit_scores_per_fold` refits them per fold instead.
pub fn cross_validate(
    data: &Dataset,
    cfg: &PipelineConfig,
    k: usize,
    seed: u64,
) -> Result<CrossValReport> {
    let n = data.n();
    let folds = assign_folds(n, k, rng::splitmix64(seed ^ 0xC0DE))?;

    let full_gamma: Option<Vec<f64>> = if cfg.refit_scores_per_fold {
        None
    } else {
        let nu = fit_crossfit(
            data,
            &folds,
            &cfg.learner,
            cfg.family.required_targets(),
            rng::splitmix64(seed ^ 0x0115),
        )?;
        Some(compute_scores(data, &nu, cfg)?.gamma)
    };

    let mut signed = vec![0.0; n];
    let mut fold_policies = Vec::with_capacity(k);
    for fk in 1..=k as u32 {
        let train_idx = folds.train_indices(fk);
        let test_idx = folds.test_indices(fk);
        let sub = data.subset(&train_idx)?;
        let learned = learn_policy(&sub, cfg, rng::splitmix64(seed ^ (0xCF00 + fk as u64)))?;

        let gamma_test: Vec<f64> = match &full_gamma {
            Some(g) => test_idx.iter().map(|&i| g[i]).collect(),
            None => {
                let cols = fit_targets_predict(
                    &sub,
                    data.features(),
                    &test_idx,
                    &cfg.learner,
                    &cfg.family.required_targets().iter().copied().collect(),
                    rng::splitmix64(seed ^ (0x5C00 + fk as u64)),
                    fk as usize,
                )?;
                gamma_rows(data, &test_idx, &cols, cfg)?
            }
        };
        for (pos, &i) in test_idx.iter().enumerate() {
            let a = learned.policy.action(data.features().row(i))?;
            signed[i] = if a == 1 { gamma_test[pos] } else { -gamma_test[pos] };
        }
        fold_policies.push(learned.policy);
    }

    let a_cv = signed.iter().sum::<f64>() / n as f64;
    let se = {
        let var =
            signed.iter().map(|s| (s - a_cv) * (s - a_cv)).sum::<f64>() / (n as f64 - 1.0);
        (var / n as f64).sqrt()
    };
    Ok(CrossValReport {
        a_cv,
        se,
        n,
        k,
        refit_scores_per_fold: cfg.refit_scores_per_fold,
        fold_policies,
    })
}

/// Per-observation fraction of fold policies that agree with the full-data
/// policy's action.
pub fn fold_agreement(
    full: &TreePolicy,
    fold_policies: &[TreePolicy],
    x: &Matrix,
) -> Result<Vec<f64>> {
    if fold_policies.is_empty() {
        return Err(Error::InvalidParam("need at least one fold policy".into()));
    }
    let full_actions = full.actions(x)?;
    let mut agree = vec![0.0; x.rows()];
    for p in fold_policies {
        let acts = p.actions(x)?;
        for i in 0..x.rows() {
            if acts[i] == full_actions[i] {
                agree[i] += 1.0;
            }
        }
    }
    let m = fold_policies.len() as f64;
    for a in &mut agree {
        *a /= m;
    }
    Ok(agree)
}

/// Monte Carlo estimate of A(π) = E[(2π(X) - 1) τ(X)] under the
/// 10-dimensional standard normal feature law of the IV simulation.
pub fn true_improvement<F: Fn(&[f64]) -> u8>(
    policy: F,
    tau: &TauSpec,
    n_mc: usize,
    seed: u64,
) -> Result<f64> {
    if n_mc == 0 {
        return Err(Error::InvalidParam("n_mc must be >= 1".into()));
    }
    let mut r = rng::stream(seed);
    let mut x = [0.0f64; 10];
    let mut acc = 0.0;
    for _ in 0..n_mc {
        for v in x.iter_mut() {
            *v = rng::normal(&mut r);
        }
        let t = tau.evaluate(&x);
        let a = policy(&x);
        acc += if a == 1 { t } else { -t };
    }
    Ok(acc / n_mc as f64)
}

/// Exact A(π) = E[(2π(X) - 1) tau_scale sign(x1)] for tree policies under
/// X ~ Uniform[-0.5, 0.5]^s, the ambiguous-sequence feature law. Computed
/// by integrating over the axis-aligned cells the tree induces.
pub fn ambiguous_improvement(
    policy: &TreePolicy,
    s: usize,
    tau_scale: f64,
) -> Result<f64> {
    if s == 0 {
        return Err(Error::InvalidParam("dimension s must be >= 1".into()));
    }
    if let Some(max) = policy.max_feature() {
        if max >= s {
            return Err(Error::FeatureOutOfRange { index: max, p: s });
        }
    }
    fn walk(node: &crate::policy::PolicyNode, lo: &mut [f64], hi: &mut [f64]) -> f64 {
        match node {
            crate::policy::PolicyNode::Leaf(a) => {
                // signed mass of sign(x1) over the cell, times other lengths
                let pos = (hi[0].max(0.0) - lo[0].max(0.0)).max(0.0);
                let neg = (hi[0].min(0.0) - lo[0].min(0.0)).max(0.0);
                let rest: f64 = lo[1..]
                    .iter()
                    .zip(&hi[1..])
                    .map(|(l, h)| (h - l).max(0.0))
                    .product();
                (if *a == 1 { 1.0 } else { -1.0 }) * (pos - neg) * rest
            }
            crate::policy::PolicyNode::Split { feature, threshold, left, right } => {
                let f = *feature;
                let t = *threshold;
                let (old_lo, old_hi) = (lo[f], hi[f]);
                hi[f] = old_hi.min(t);
                let l = if hi[f] > lo[f] { walk(left, lo, hi) } else { 0.0 };
                hi[f] = old_hi;
                lo[f] = old_lo.max(t);
                let r = if hi[f] > lo[f] { walk(right, lo, hi) } else { 0.0 };
                lo[f] = old_lo;
                l + r
            }
        }
    }
    let mut lo = vec![-0.5; s];
    let mut hi = vec![0.5; s];
    Ok(tau_scale * walk(policy.root(), &mut lo, &mut hi))
}

/// Convenience for sweep outputs: one row per (seed, n) replication.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub seed: u64,
    pub n: usize,
    pub family: ScoreFamily,
    pub a_hat: f64,
    pub se: f64,
    pub true_improvement: f64,
}
