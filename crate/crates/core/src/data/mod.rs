//! Dataset representation, CSV ingestion and the synthetic data-generating
//! processes used by the simulation harnesses.

mod csv_io;
mod simulate;

pub use csv_io::{load_csv, write_csv, CsvSchema, FeatureSelect};
pub use simulate::{simulate_ambiguous, simulate_iv};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Dense row-major matrix of feature values.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Matrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::EmptyData);
        }
        let p = rows[0].len();
        let mut data = Vec::with_capacity(n * p);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(Error::LengthMismatch(format!(
                    "row {i} has {} entries, expected {p}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { data, rows: n, cols: p })
    }

    pub fn from_flat(data: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch(format!(
                "flat data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { data, rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// Copy of column `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// New matrix containing the given rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix { data, rows: idx.len(), cols: self.cols }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreatmentKind {
    Binary,
    Continuous,
}

/// Observational dataset: features X, outcome Y (utility units, larger is
/// better), treatment W and an optional binary instrument Z.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Matrix,
    outcome: Vec<f64>,
    treatment: Vec<f64>,
    instrument: Option<Vec<f64>>,
    treatment_kind: TreatmentKind,
    feature_names: Vec<String>,
    /// 0-based feature columns eligible for policy splits.
    policy_feature_mask: Vec<usize>,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        outcome: Vec<f64>,
        treatment: Vec<f64>,
        instrument: Option<Vec<f64>>,
        treatment_kind: TreatmentKind,
        feature_names: Vec<String>,
        policy_feature_mask: Vec<usize>,
    ) -> Result<Self> {
        let n = features.rows();
        let p = features.cols();
        if n == 0 || p == 0 {
            return Err(Error::EmptyData);
        }
        if outcome.len() != n || treatment.len() != n {
            return Err(Error::LengthMismatch(format!(
                "features have {n} rows, outcome {} and treatment {}",
                outcome.len(),
                treatment.len()
            )));
        }
        if let Some(z) = &instrument {
            if z.len() != n {
                return Err(Error::LengthMismatch(format!(
                    "instrument has {} entries, expected {n}",
                    z.len()
                )));
            }
            if let Some(i) = z.iter().position(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::BinaryViolation {
                    row: i + 1,
                    column: "instrument".into(),
                    value: z[i],
                });
            }
        }
        if feature_names.len() != p {
            return Err(Error::LengthMismatch(format!(
                "{} feature names for {p} columns",
                feature_names.len()
            )));
        }
        if treatment_kind == TreatmentKind::Binary {
            if let Some(i) = treatment.iter().position(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::BinaryViolation {
                    row: i + 1,
                    column: "treatment".into(),
                    value: treatment[i],
                });
            }
        }
        let mut mask = policy_feature_mask;
        mask.sort_unstable();
        mask.dedup();
        if mask.is_empty() {
            return Err(Error::EmptyMask);
        }
        if let Some(&j) = mask.iter().find(|&&j| j >= p) {
            return Err(Error::FeatureOutOfRange { index: j, p });
        }
        Ok(Self {
            features,
            outcome,
            treatment,
            instrument,
            treatment_kind,
            feature_names,
            policy_feature_mask: mask,
        })
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn p(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn treatment(&self) -> &[f64] {
        &self.treatment
    }

    pub fn instrument(&self) -> Option<&[f64]> {
        self.instrument.as_deref()
    }

    pub fn treatment_kind(&self) -> TreatmentKind {
        self.treatment_kind
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn policy_feature_mask(&self) -> &[usize] {
        &self.policy_feature_mask
    }

    /// Same data with a different policy feature mask.
    pub fn with_mask(mut self, mask: Vec<usize>) -> Result<Self> {
        let p = self.p();
        let mut mask = mask;
        mask.sort_unstable();
        mask.dedup();
        if mask.is_empty() {
            return Err(Error::EmptyMask);
        }
        if let Some(&j) = mask.iter().find(|&&j| j >= p) {
            return Err(Error::FeatureOutOfRange { index: j, p });
        }
        self.policy_feature_mask = mask;
        Ok(self)
    }

    /// New dataset containing the given rows, in order.
    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        if idx.is_empty() {
            return Err(Error::EmptyData);
        }
        Ok(Dataset {
            features: self.features.select_rows(idx),
            outcome: idx.iter().map(|&i| self.outcome[i]).collect(),
            treatment: idx.iter().map(|&i| self.treatment[i]).collect(),
            instrument: self
                .instrument
                .as_ref()
                .map(|z| idx.iter().map(|&i| z[i]).collect()),
            treatment_kind: self.treatment_kind,
            feature_names: self.feature_names.clone(),
            policy_feature_mask: self.policy_feature_mask.clone(),
        })
    }
}

/// Assignment of observations to K cross-fitting folds (fold ids 1..=K).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    fold_of: Vec<u32>,
    k: u32,
}

/// Uniformly random balanced partition into K folds, deterministic in seed.
pub fn assign_folds(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 || k > n {
        return Err(Error::BadFoldCount { k, n });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = rng::stream(seed);
    use rand::seq::SliceRandom;
    perm.shuffle(&mut rng);
    let mut fold_of = vec![0u32; n];
    for (pos, &i) in perm.iter().enumerate() {
        fold_of[i] = (pos % k) as u32 + 1;
    }
    Ok(FoldAssignment { fold_of, k: k as u32 })
}

impl FoldAssignment {
    /// Single-fold placeholder for tests that build nuisance columns by hand.
    #[cfg(test)]
    pub(crate) fn trivial(n: usize) -> Self {
        Self { fold_of: vec![1; n], k: 1 }
    }

    pub fn k(&self) -> usize {
        self.k as usize
    }

    pub fn n(&self) -> usize {
        self.fold_of.len()
    }

    pub fn fold_of(&self) -> &[u32] {
        &self.fold_of
    }

    pub fn fold(&self, i: usize) -> u32 {
        self.fold_of[i]
    }

    /// Indices held out in fold `k`.
    pub fn test_indices(&self, k: u32) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.fold_of[i] == k).collect()
    }

    /// Indices in all folds except `k`.
    pub fn train_indices(&self, k: u32) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.fold_of[i] != k).collect()
    }
}

/// Treatment effect specification for the simulators.
#[derive(Clone)]
pub enum TauSpec {
    /// tau(x) = ((x1)+ + (x2)+ - 1) / 2
    Additive,
    /// tau(x) = sign(x1 * x2) / 2
    Product,
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl TauSpec {
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        match self {
            TauSpec::Additive => (x[0].max(0.0) + x[1].max(0.0) - 1.0) / 2.0,
            TauSpec::Product => sign(x[0] * x[1]) / 2.0,
            TauSpec::Custom(f) => f(x),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TauSpec::Additive => "additive",
            TauSpec::Product => "product",
            TauSpec::Custom(_) => "custom",
        }
    }
}

impl std::fmt::Debug for TauSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
