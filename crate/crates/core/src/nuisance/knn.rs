//! k-nearest-neighbor regression, the lightweight learner alternative.

use crate::data::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct KnnModel {
    x: Matrix,
    targets: Vec<f64>,
    weights: Option<Vec<f64>>,
    k: usize,
}

pub fn fit_knn(
    x: &Matrix,
    targets: &[f64],
    weights: Option<&[f64]>,
    k: usize,
) -> Result<KnnModel> {
    let n = x.rows();
    if k == 0 {
        return Err(Error::InvalidParam("knn k must be >= 1".into()));
    }
    if targets.len() != n {
        return Err(Error::LengthMismatch(format!(
            "{} targets for {n} rows",
            targets.len()
        )));
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::LengthMismatch(format!(
                "{} weights for {n} rows",
                w.len()
            )));
        }
    }
    Ok(KnnModel {
        x: x.clone(),
        targets: targets.to_vec(),
        weights: weights.map(|w| w.to_vec()),
        k: k.min(n),
    })
}

impl KnnModel {
    /// Weighted mean over the k nearest training points. Distance ties break
    /// toward the lower training index.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let n = self.x.rows();
        let mut dist: Vec<(f64, usize)> = (0..n)
            .map(|i| {
                let row = self.x.row(i);
                let d2: f64 = row
                    .iter()
                    .zip(x)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d2, i)
            })
            .collect();
        dist.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let mut sw = 0.0;
        let mut swt = 0.0;
        let mut st = 0.0;
        for &(_, i) in dist.iter().take(self.k) {
            let w = self.weights.as_ref().map_or(1.0, |w| w[i]);
            sw += w;
            swt += w * self.targets[i];
            st += self.targets[i];
        }
        if sw > 0.0 {
            swt / sw
        } else {
            st / self.k as f64
        }
    }

    pub fn predict_rows(&self, x: &Matrix, idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&i| self.predict(x.row(i))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_neighbor_identity() {
        let x = Matrix::from_rows(vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 0.5]]).unwrap();
        let y = vec![10.0, 20.0, 30.0];
        let m = fit_knn(&x, &y, None, 1).unwrap();
        assert_eq!(m.predict(&[1.0, 1.0]), 20.0);
        assert_eq!(m.predict(&[2.0, 0.5]), 30.0);
    }

    #[test]
    fn k_larger_than_n_is_clamped() {
        let x = Matrix::from_rows(vec![vec![0.0], vec![1.0]]).unwrap();
        let m = fit_knn(&x, &[2.0, 4.0], None, 10).unwrap();
        assert_eq!(m.predict(&[0.4]), 3.0);
    }

    #[test]
    fn weighted_mean_uses_weights() {
        let x = Matrix::from_rows(vec![vec![0.0], vec![0.1]]).unwrap();
        let m = fit_knn(&x, &[1.0, 3.0], Some(&[1.0, 3.0]), 2).unwrap();
        assert_eq!(m.predict(&[0.05]), (1.0 + 9.0) / 4.0);
    }
}
