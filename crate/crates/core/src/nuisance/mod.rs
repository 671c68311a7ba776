//! Cross-fitting engine with pluggable nuisance learners.
//!
//! For each fold k, every requested conditional function is fit on the
//! other K-1 folds and predicted on fold k, so no out-of-fold prediction
//! ever sees its own fold's data.

mod forest;
mod knn;

pub use forest::{fit_honest_forest, ForestParams, HonestForest};
pub use knn::{fit_knn, KnnModel};

pub(crate) use forest::midpoint as forest_midpoint;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::data::{Dataset, FoldAssignment, Matrix, TreatmentKind};
use crate::error::{Error, Result};
use crate::rng;

/// Conditional functions the engine can estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum NuisanceTarget {
    /// f(x) = E[Y | X = x]
    Outcome,
    /// e(x) = P[W = 1 | X = x] for binary treatments
    Propensity,
    /// z(x) = P[Z = 1 | X = x]
    InstrumentPropensity,
    /// mu_W(x) = E[W | X = x] for continuous treatments
    TreatmentMean,
    /// sigma_W(x) = sd(W | X = x), floored away from zero
    TreatmentStd,
    /// Delta(x) = P[W | Z = 1, X = x] - P[W | Z = 0, X = x]
    Compliance,
    /// tau(x), the conditional average treatment effect
    Cate,
}

impl NuisanceTarget {
    pub fn name(self) -> &'static str {
        match self {
            NuisanceTarget::Outcome => "f_hat",
            NuisanceTarget::Propensity => "e_hat",
            NuisanceTarget::InstrumentPropensity => "z_hat",
            NuisanceTarget::TreatmentMean => "mu_w_hat",
            NuisanceTarget::TreatmentStd => "sigma_w_hat",
            NuisanceTarget::Compliance => "delta_hat",
            NuisanceTarget::Cate => "tau_hat",
        }
    }

    fn needs_instrument(self) -> bool {
        matches!(
            self,
            NuisanceTarget::InstrumentPropensity | NuisanceTarget::Compliance
        )
    }
}

pub type OracleFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Known conditional functions, used to test score formulas exactly.
#[derive(Clone, Default)]
pub struct OracleFunctions {
    pub f: Option<OracleFn>,
    pub e: Option<OracleFn>,
    pub tau: Option<OracleFn>,
    pub z: Option<OracleFn>,
    pub delta: Option<OracleFn>,
    pub mu_w: Option<OracleFn>,
    pub sigma_w: Option<OracleFn>,
}

impl OracleFunctions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_f(mut self, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.f = Some(Arc::new(f));
        self
    }

    pub fn with_e(mut self, e: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.e = Some(Arc::new(e));
        self
    }

    pub fn with_tau(mut self, tau: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.tau = Some(Arc::new(tau));
        self
    }

    pub fn with_z(mut self, z: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.z = Some(Arc::new(z));
        self
    }

    pub fn with_delta(mut self, d: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.delta = Some(Arc::new(d));
        self
    }

    pub fn with_mu_w(mut self, m: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.mu_w = Some(Arc::new(m));
        self
    }

    pub fn with_sigma_w(mut self, s: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.sigma_w = Some(Arc::new(s));
        self
    }

    fn get(&self, t: NuisanceTarget) -> Option<&OracleFn> {
        match t {
            NuisanceTarget::Outcome => self.f.as_ref(),
            NuisanceTarget::Propensity => self.e.as_ref(),
            NuisanceTarget::InstrumentPropensity => self.z.as_ref(),
            NuisanceTarget::TreatmentMean => self.mu_w.as_ref(),
            NuisanceTarget::TreatmentStd => self.sigma_w.as_ref(),
            NuisanceTarget::Compliance => self.delta.as_ref(),
            NuisanceTarget::Cate => self.tau.as_ref(),
        }
    }
}

impl std::fmt::Debug for OracleFunctions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let supplied: Vec<&str> = [
            ("f", self.f.is_some()),
            ("e", self.e.is_some()),
            ("tau", self.tau.is_some()),
            ("z", self.z.is_some()),
            ("delta", self.delta.is_some()),
            ("mu_w", self.mu_w.is_some()),
            ("sigma_w", self.sigma_w.is_some()),
        ]
        .iter()
        .filter(|(_, s)| *s)
        .map(|(n, _)| *n)
        .collect();
        write!(f, "OracleFunctions{supplied:?}")
    }
}

#[derive(Debug, Clone)]
pub enum NuisanceLearnerSpec {
    HonestForest(ForestParams),
    Knn { k: usize },
    Oracle(OracleFunctions),
}

impl NuisanceLearnerSpec {
    pub fn forest_default() -> Self {
        Self::HonestForest(ForestParams::default())
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            NuisanceLearnerSpec::HonestForest(p) => p.validate(),
            NuisanceLearnerSpec::Knn { k } => {
                if *k == 0 {
                    Err(Error::InvalidParam("knn k must be >= 1".into()))
                } else {
                    Ok(())
                }
            }
            NuisanceLearnerSpec::Oracle(_) => Ok(()),
        }
    }

    /// JSON description for provenance blocks.
    pub fn provenance(&self) -> serde_json::Value {
        match self {
            NuisanceLearnerSpec::HonestForest(p) => serde_json::json!({
                "kind": "honest_forest",
                "num_trees": p.num_trees,
                "subsample": p.subsample,
                "min_leaf": p.min_leaf,
                "mtry": p.mtry,
            }),
            NuisanceLearnerSpec::Knn { k } => serde_json::json!({"kind": "knn", "k": k}),
            NuisanceLearnerSpec::Oracle(_) => serde_json::json!({"kind": "oracle"}),
        }
    }
}

/// Out-of-fold nuisance predictions, each aligned with the dataset rows.
#[derive(Debug, Clone)]
pub struct CrossFitNuisance {
    f_hat: Option<Vec<f64>>,
    e_hat: Option<Vec<f64>>,
    z_hat: Option<Vec<f64>>,
    mu_w_hat: Option<Vec<f64>>,
    sigma_w_hat: Option<Vec<f64>>,
    delta_hat: Option<Vec<f64>>,
    tau_hat: Option<Vec<f64>>,
    folds: FoldAssignment,
    learner: serde_json::Value,
}

impl CrossFitNuisance {
    pub fn get(&self, t: NuisanceTarget) -> Option<&[f64]> {
        match t {
            NuisanceTarget::Outcome => self.f_hat.as_deref(),
            NuisanceTarget::Propensity => self.e_hat.as_deref(),
            NuisanceTarget::InstrumentPropensity => self.z_hat.as_deref(),
            NuisanceTarget::TreatmentMean => self.mu_w_hat.as_deref(),
            NuisanceTarget::TreatmentStd => self.sigma_w_hat.as_deref(),
            NuisanceTarget::Compliance => self.delta_hat.as_deref(),
            NuisanceTarget::Cate => self.tau_hat.as_deref(),
        }
    }

    pub fn require(&self, t: NuisanceTarget) -> Result<&[f64]> {
        self.get(t).ok_or(Error::MissingNuisance(t.name()))
    }

    pub fn folds(&self) -> &FoldAssignment {
        &self.folds
    }

    pub fn learner_provenance(&self) -> &serde_json::Value {
        &self.learner
    }

    /// Assemble from externally computed prediction columns (e.g. an oracle
    /// table loaded from disk).
    pub fn from_columns(
        columns: BTreeMap<NuisanceTarget, Vec<f64>>,
        folds: FoldAssignment,
        learner: serde_json::Value,
    ) -> Result<Self> {
        let n = folds.n();
        for (t, col) in &columns {
            if col.len() != n {
                return Err(Error::LengthMismatch(format!(
                    "column `{}` has {} entries, expected {n}",
                    t.name(),
                    col.len()
                )));
            }
        }
        if let Some(sigma) = columns.get(&NuisanceTarget::TreatmentStd) {
            if let Some(i) = sigma.iter().position(|&v| !(v > 0.0)) {
                return Err(Error::NonPositiveSigma { index: i, value: sigma[i] });
            }
        }
        let mut nu = CrossFitNuisance {
            f_hat: None,
            e_hat: None,
            z_hat: None,
            mu_w_hat: None,
            sigma_w_hat: None,
            delta_hat: None,
            tau_hat: None,
            folds,
            learner,
        };
        for (t, col) in columns {
            nu.set(t, col);
        }
        Ok(nu)
    }

    fn set(&mut self, t: NuisanceTarget, col: Vec<f64>) {
        match t {
            NuisanceTarget::Outcome => self.f_hat = Some(col),
            NuisanceTarget::Propensity => self.e_hat = Some(col),
            NuisanceTarget::InstrumentPropensity => self.z_hat = Some(col),
            NuisanceTarget::TreatmentMean => self.mu_w_hat = Some(col),
            NuisanceTarget::TreatmentStd => self.sigma_w_hat = Some(col),
            NuisanceTarget::Compliance => self.delta_hat = Some(col),
            NuisanceTarget::Cate => self.tau_hat = Some(col),
        }
    }
}

/// Conditional standard deviations are floored here after the residual
/// variance regression.
pub const SIGMA_W_FLOOR: f64 = 1e-3;

/// Residual denominators smaller than this carry no weight in the CATE
/// regression and are dropped.
const CATE_DENOM_EPS: f64 = 1e-6;

enum FittedModel {
    Forest(HonestForest),
    Knn(KnnModel),
}

impl FittedModel {
    fn predict_rows(&self, x: &Matrix, idx: &[usize]) -> Vec<f64> {
        match self {
            FittedModel::Forest(f) => f.predict_rows(x, idx),
            FittedModel::Knn(m) => m.predict_rows(x, idx),
        }
    }
}

fn fit_model(
    spec: &NuisanceLearnerSpec,
    x: &Matrix,
    targets: &[f64],
    weights: Option<&[f64]>,
    seed: u64,
) -> Result<FittedModel> {
    match spec {
        NuisanceLearnerSpec::HonestForest(p) => {
            Ok(FittedModel::Forest(fit_honest_forest(x, targets, weights, p, seed)?))
        }
        NuisanceLearnerSpec::Knn { k } => {
            Ok(FittedModel::Knn(fit_knn(x, targets, weights, *k)?))
        }
        NuisanceLearnerSpec::Oracle(_) => unreachable!("oracle specs never fit models"),
    }
}

/// Expand a requested target set with the targets its estimation depends on.
fn expand_targets(
    requested: &BTreeSet<NuisanceTarget>,
    kind: TreatmentKind,
) -> BTreeSet<NuisanceTarget> {
    let mut active = requested.clone();
    if active.contains(&NuisanceTarget::Cate) {
        active.insert(NuisanceTarget::Outcome);
        match kind {
            TreatmentKind::Binary => active.insert(NuisanceTarget::Propensity),
            TreatmentKind::Continuous => active.insert(NuisanceTarget::TreatmentMean),
        };
    }
    if active.contains(&NuisanceTarget::TreatmentStd) {
        active.insert(NuisanceTarget::TreatmentMean);
    }
    active
}

/// Fit all `active` targets on `train` and predict the listed `test_idx`
/// rows of `test_x`. `fold_label` only names the fold in error messages.
pub(crate) fn fit_targets_predict(
    train: &Dataset,
    test_x: &Matrix,
    test_idx: &[usize],
    spec: &NuisanceLearnerSpec,
    active: &BTreeSet<NuisanceTarget>,
    seed: u64,
    fold_label: usize,
) -> Result<BTreeMap<NuisanceTarget, Vec<f64>>> {
    let mut out = BTreeMap::new();

    if let NuisanceLearnerSpec::Oracle(fns) = spec {
        for &t in active {
            let f = fns.get(t).ok_or(Error::TargetUnavailable {
                target: t.name(),
                reason: "oracle function not supplied".into(),
            })?;
            let col: Vec<f64> = test_idx.iter().map(|&i| f(test_x.row(i))).collect();
            if t == NuisanceTarget::TreatmentStd {
                if let Some(j) = col.iter().position(|&v| !(v > 0.0)) {
                    return Err(Error::NonPositiveSigma { index: test_idx[j], value: col[j] });
                }
            }
            out.insert(t, col);
        }
        return Ok(out);
    }

    let x_train = train.features();
    let y_train = train.outcome();
    let w_train = train.treatment();
    let train_all: Vec<usize> = (0..train.n()).collect();

    let binary_models = active.contains(&NuisanceTarget::Propensity)
        || active.contains(&NuisanceTarget::Compliance)
        || (active.contains(&NuisanceTarget::Cate)
            && train.treatment_kind() == TreatmentKind::Binary);
    if binary_models && train.treatment_kind() == TreatmentKind::Binary {
        let treated = w_train.iter().filter(|&&w| w == 1.0).count();
        if treated == 0 || treated == train.n() {
            return Err(Error::DegenerateFold {
                fold: fold_label,
                reason: if treated == 0 {
                    "training folds contain no treated observations".into()
                } else {
                    "training folds contain no control observations".into()
                },
            });
        }
    }

    let sub = |tag: u64| rng::splitmix64(seed ^ tag);

    let mut model_f = None;
    let mut model_e = None;
    let mut model_mu = None;

    if active.contains(&NuisanceTarget::Outcome) {
        let m = fit_model(spec, x_train, y_train, None, sub(1))?;
        out.insert(NuisanceTarget::Outcome, m.predict_rows(test_x, test_idx));
        model_f = Some(m);
    }
    if active.contains(&NuisanceTarget::Propensity) {
        let m = fit_model(spec, x_train, w_train, None, sub(2))?;
        out.insert(NuisanceTarget::Propensity, m.predict_rows(test_x, test_idx));
        model_e = Some(m);
    }
    if active.contains(&NuisanceTarget::InstrumentPropensity) {
        let z_train = train.instrument().ok_or(Error::TargetUnavailable {
            target: NuisanceTarget::InstrumentPropensity.name(),
            reason: "dataset has no instrument column".into(),
        })?;
        let m = fit_model(spec, x_train, z_train, None, sub(3))?;
        out.insert(
            NuisanceTarget::InstrumentPropensity,
            m.predict_rows(test_x, test_idx),
        );
    }
    if active.contains(&NuisanceTarget::TreatmentMean) {
        let m = fit_model(spec, x_train, w_train, None, sub(4))?;
        out.insert(NuisanceTarget::TreatmentMean, m.predict_rows(test_x, test_idx));
        model_mu = Some(m);
    }
    if active.contains(&NuisanceTarget::TreatmentStd) {
        let mu_in = model_mu
            .as_ref()
            .expect("TreatmentMean fitted before TreatmentStd")
            .predict_rows(x_train, &train_all);
        let sq_resid: Vec<f64> = (0..train.n())
            .map(|i| {
                let r = w_train[i] - mu_in[i];
                r * r
            })
            .collect();
        let m = fit_model(spec, x_train, &sq_resid, None, sub(5))?;
        let sigma: Vec<f64> = m
            .predict_rows(test_x, test_idx)
            .into_iter()
            .map(|v| v.max(0.0).sqrt().max(SIGMA_W_FLOOR))
            .collect();
        out.insert(NuisanceTarget::TreatmentStd, sigma);
    }
    if active.contains(&NuisanceTarget::Compliance) {
        let z_train = train.instrument().ok_or(Error::TargetUnavailable {
            target: NuisanceTarget::Compliance.name(),
            reason: "dataset has no instrument column".into(),
        })?;
        let idx1: Vec<usize> = (0..train.n()).filter(|&i| z_train[i] == 1.0).collect();
        let idx0: Vec<usize> = (0..train.n()).filter(|&i| z_train[i] == 0.0).collect();
        if idx1.is_empty() || idx0.is_empty() {
            return Err(Error::DegenerateFold {
                fold: fold_label,
                reason: format!(
                    "training folds have {} rows with Z=1 and {} with Z=0",
                    idx1.len(),
                    idx0.len()
                ),
            });
        }
        let x1 = x_train.select_rows(&idx1);
        let w1: Vec<f64> = idx1.iter().map(|&i| w_train[i]).collect();
        let x0 = x_train.select_rows(&idx0);
        let w0: Vec<f64> = idx0.iter().map(|&i| w_train[i]).collect();
        let m1 = fit_model(spec, &x1, &w1, None, sub(6))?;
        let m0 = fit_model(spec, &x0, &w0, None, sub(7))?;
        let e1 = m1.predict_rows(test_x, test_idx);
        let e0 = m0.predict_rows(test_x, test_idx);
        out.insert(
            NuisanceTarget::Compliance,
            e1.iter().zip(&e0).map(|(a, b)| a - b).collect(),
        );
    }
    if active.contains(&NuisanceTarget::Cate) {
        // Residual-on-residual regression: targets (Y - f)/(W - center)
        // with weights (W - center)^2, a local Robinson decomposition.
        let f_in = model_f
            .as_ref()
            .expect("Outcome fitted before Cate")
            .predict_rows(x_train, &train_all);
        let center_in = match train.treatment_kind() {
            TreatmentKind::Binary => model_e
                .as_ref()
                .expect("Propensity fitted before Cate")
                .predict_rows(x_train, &train_all),
            TreatmentKind::Continuous => model_mu
                .as_ref()
                .expect("TreatmentMean fitted before Cate")
                .predict_rows(x_train, &train_all),
        };
        let mut tgt = vec![0.0; train.n()];
        let mut wgt = vec![0.0; train.n()];
        for i in 0..train.n() {
            let denom = w_train[i] - center_in[i];
            if denom.abs() >= CATE_DENOM_EPS {
                tgt[i] = (y_train[i] - f_in[i]) / denom;
                wgt[i] = denom * denom;
            }
        }
        let m = fit_model(spec, x_train, &tgt, Some(&wgt), sub(8))?;
        out.insert(NuisanceTarget::Cate, m.predict_rows(test_x, test_idx));
    }

    Ok(out)
}

/// Cross-fit every requested nuisance target: for each fold k, models are
/// fit on the other folds and predict fold k.
pub fn fit_crossfit(
    data: &Dataset,
    folds: &FoldAssignment,
    spec: &NuisanceLearnerSpec,
    targets: &[NuisanceTarget],
    seed: u64,
) -> Result<CrossFitNuisance> {
    spec.validate()?;
    if folds.n() != data.n() {
        return Err(Error::LengthMismatch(format!(
            "fold assignment covers {} rows, dataset has {}",
            folds.n(),
            data.n()
        )));
    }
    if targets.is_empty() {
        return Err(Error::InvalidParam("no nuisance targets requested".into()));
    }
    let requested: BTreeSet<NuisanceTarget> = targets.iter().copied().collect();
    for &t in &requested {
        if t.needs_instrument() && data.instrument().is_none() {
            return Err(Error::TargetUnavailable {
                target: t.name(),
                reason: "dataset has no instrument column".into(),
            });
        }
    }

    let n = data.n();
    if let NuisanceLearnerSpec::Oracle(_) = spec {
        let all: Vec<usize> = (0..n).collect();
        let cols =
            fit_targets_predict(data, data.features(), &all, spec, &requested, seed, 0)?;
        return CrossFitNuisance::from_columns(cols, folds.clone(), spec.provenance());
    }

    let active = expand_targets(&requested, data.treatment_kind());
    let mut columns: BTreeMap<NuisanceTarget, Vec<f64>> = active
        .iter()
        .map(|&t| (t, vec![f64::NAN; n]))
        .collect();

    for k in 1..=folds.k() as u32 {
        let train_idx = folds.train_indices(k);
        let test_idx = folds.test_indices(k);
        if test_idx.is_empty() {
            continue;
        }
        let train = data.subset(&train_idx)?;
        let fold_cols = fit_targets_predict(
            &train,
            data.features(),
            &test_idx,
            spec,
            &active,
            rng::splitmix64(seed).wrapping_add(k as u64),
            k as usize,
        )?;
        for (t, preds) in fold_cols {
            let col = columns.get_mut(&t).expect("active target column");
            for (pos, &i) in test_idx.iter().enumerate() {
                col[i] = preds[pos];
            }
        }
    }

    CrossFitNuisance::from_columns(columns, folds.clone(), spec.provenance())
}
