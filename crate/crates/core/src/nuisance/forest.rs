//! Honest regression forest.
//!
//! Each tree is grown on a subsample drawn without replacement; the
//! subsample is split 50/50 into a structure half (which chooses splits by
//! weighted variance reduction) and an estimation half (which supplies leaf
//! means). Predictions average leaf means over trees. Per-tree seeds are
//! derived from the master seed, so results do not depend on thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub num_trees: usize,
    /// Fraction of the sample drawn (without replacement) per tree.
    /// Must lie in (0, 0.5]; honesty halves the subsample again.
    pub subsample: f64,
    /// Minimum number of structure observations per leaf.
    pub min_leaf: usize,
    /// Features tried per split; 0 means ceil(sqrt(p)).
    pub mtry: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { num_trees: 200, subsample: 0.5, min_leaf: 5, mtry: 0 }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_trees == 0 {
            return Err(Error::InvalidParam("num_trees must be >= 1".into()));
        }
        if !(self.subsample > 0.0 && self.subsample <= 0.5) {
            return Err(Error::InvalidParam(
                "subsample fraction must lie in (0, 0.5]".into(),
            ));
        }
        if self.min_leaf == 0 {
            return Err(Error::InvalidParam("min_leaf must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
    estimation: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct HonestForest {
    trees: Vec<Tree>,
    p: usize,
}

pub fn fit_honest_forest(
    x: &Matrix,
    targets: &[f64],
    weights: Option<&[f64]>,
    params: &ForestParams,
    seed: u64,
) -> Result<HonestForest> {
    params.validate()?;
    let n = x.rows();
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
    // min_leaf only gates splits; the subsample must still hold one
    // structure and one estimation observation.
    let m = (params.subsample * n as f64).floor() as usize;
    if m < 2 {
        return Err(Error::InvalidParam(format!(
            "n = {n} too small for subsample fraction {}",
            params.subsample
        )));
    }
    let p = x.cols();
    let mtry = if params.mtry == 0 {
        (p as f64).sqrt().ceil() as usize
    } else {
        params.mtry.min(p)
    };

    let trees: Vec<Tree> = (0..params.num_trees)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::substream(seed, t as u64);
            grow_tree(x, targets, weights, params, mtry, m, &mut r)
        })
        .collect();
    Ok(HonestForest { trees, p })
}

impl HonestForest {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for tree in &self.trees {
            acc += tree_value(tree, x);
        }
        acc / self.trees.len() as f64
    }

    pub fn predict_rows(&self, x: &Matrix, idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&i| self.predict(x.row(i))).collect()
    }

    pub fn num_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn num_features(&self) -> usize {
        self.p
    }

    /// Estimation-half sample indices of one tree (diagnostics/tests).
    pub fn estimation_indices(&self, tree: usize) -> &[u32] {
        &self.trees[tree].estimation
    }
}

fn tree_value(tree: &Tree, x: &[f64]) -> f64 {
    let mut at = 0usize;
    loop {
        match &tree.nodes[at] {
            Node::Leaf(v) => return *v,
            Node::Split { feature, threshold, left, right } => {
                at = if x[*feature as usize] <= *threshold {
                    *left as usize
                } else {
                    *right as usize
                };
            }
        }
    }
}

fn grow_tree(
    x: &Matrix,
    targets: &[f64],
    weights: Option<&[f64]>,
    params: &ForestParams,
    mtry: usize,
    m: usize,
    r: &mut Stream,
) -> Tree {
    let n = x.rows();
    let mut idx: Vec<u32> = (0..n as u32).collect();
    use rand::seq::SliceRandom;
    idx.shuffle(r);
    idx.truncate(m);
    let structure: Vec<u32> = idx[..m / 2].to_vec();
    let estimation: Vec<u32> = idx[m / 2..].to_vec();

    let mut nodes = Vec::new();
    build_node(
        x, targets, weights, params, mtry, structure, estimation.clone(), &mut nodes, r,
    );
    Tree { nodes, estimation }
}

fn weight_of(weights: Option<&[f64]>, i: u32) -> f64 {
    weights.map_or(1.0, |w| w[i as usize])
}

fn leaf_value(targets: &[f64], weights: Option<&[f64]>, est: &[u32]) -> f64 {
    let mut sw = 0.0;
    let mut swt = 0.0;
    for &i in est {
        let w = weight_of(weights, i);
        sw += w;
        swt += w * targets[i as usize];
    }
    if sw > 0.0 {
        swt / sw
    } else {
        0.0
    }
}

/// Appends the subtree for (structure, estimation) and returns its root index.
#[allow(clippy::too_many_arguments)]
fn build_node(
    x: &Matrix,
    targets: &[f64],
    weights: Option<&[f64]>,
    params: &ForestParams,
    mtry: usize,
    structure: Vec<u32>,
    estimation: Vec<u32>,
    nodes: &mut Vec<Node>,
    r: &mut Stream,
) -> u32 {
    let make_leaf = |nodes: &mut Vec<Node>| -> u32 {
        nodes.push(Node::Leaf(leaf_value(targets, weights, &estimation)));
        (nodes.len() - 1) as u32
    };

    if structure.len() < 2 * params.min_leaf || estimation.len() < 2 {
        return make_leaf(nodes);
    }

    // Sample candidate features, then scan them in ascending order so the
    // chosen split does not depend on sampling order.
    let p = x.cols();
    let mut feats: Vec<usize> = (0..p).collect();
    use rand::seq::SliceRandom;
    feats.shuffle(r);
    feats.truncate(mtry);
    feats.sort_unstable();

    let Some((feature, threshold)) =
        best_split(x, targets, weights, params.min_leaf, &structure, &feats)
    else {
        return make_leaf(nodes);
    };

    let (s_left, s_right): (Vec<u32>, Vec<u32>) = structure
        .iter()
        .partition(|&&i| x.get(i as usize, feature) <= threshold);
    let (e_left, e_right): (Vec<u32>, Vec<u32>) = estimation
        .iter()
        .partition(|&&i| x.get(i as usize, feature) <= threshold);
    // Honesty: both children need estimation data to carry a mean.
    if e_left.is_empty() || e_right.is_empty() {
        return make_leaf(nodes);
    }

    let at = nodes.len();
    nodes.push(Node::Leaf(0.0)); // placeholder
    let left = build_node(x, targets, weights, params, mtry, s_left, e_left, nodes, r);
    let right = build_node(x, targets, weights, params, mtry, s_right, e_right, nodes, r);
    nodes[at] = Node::Split { feature: feature as u32, threshold, left, right };
    at as u32
}

/// Best (feature, threshold) by weighted variance reduction on the
/// structure sample, or None when no admissible split improves.
fn best_split(
    x: &Matrix,
    targets: &[f64],
    weights: Option<&[f64]>,
    min_leaf: usize,
    structure: &[u32],
    feats: &[usize],
) -> Option<(usize, f64)> {
    let mut total_w = 0.0;
    let mut total_wt = 0.0;
    for &i in structure {
        let w = weight_of(weights, i);
        total_w += w;
        total_wt += w * targets[i as usize];
    }
    let parent_score = if total_w > 0.0 { total_wt * total_wt / total_w } else { 0.0 };

    let mut best: Option<(f64, usize, f64)> = None; // (gain, feature, threshold)
    let mut vals: Vec<(f64, u32)> = Vec::with_capacity(structure.len());
    for &f in feats {
        vals.clear();
        vals.extend(structure.iter().map(|&i| (x.get(i as usize, f), i)));
        vals.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());

        let mut left_w = 0.0;
        let mut left_wt = 0.0;
        for cut in 0..vals.len() - 1 {
            let (v, i) = vals[cut];
            let w = weight_of(weights, i);
            left_w += w;
            left_wt += w * targets[i as usize];
            let next = vals[cut + 1].0;
            if next <= v {
                continue; // needs a strict value boundary
            }
            let left_count = cut + 1;
            if left_count < min_leaf || vals.len() - left_count < min_leaf {
                continue;
            }
            let right_w = total_w - left_w;
            let right_wt = total_wt - left_wt;
            if left_w <= 0.0 || right_w <= 0.0 {
                continue;
            }
            let gain =
                left_wt * left_wt / left_w + right_wt * right_wt / right_w - parent_score;
            if best.map_or(gain > 1e-12, |(g, _, _)| gain > g) {
                best = Some((gain, f, midpoint(v, next)));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

/// Midpoint that is guaranteed to separate lo from hi under `<=` routing.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let t = lo + (hi - lo) / 2.0;
    if t >= lo && t < hi {
        t
    } else {
        lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(v: Vec<f64>) -> Matrix {
        let n = v.len();
        Matrix::from_flat(v, n, 1).unwrap()
    }

    #[test]
    fn constant_target_predicts_exactly() {
        let x = column((0..100).map(|i| i as f64).collect());
        let y = vec![5.0; 100];
        let f = fit_honest_forest(&x, &y, None, &ForestParams::default(), 1).unwrap();
        for probe in [-10.0, 0.0, 3.7, 250.0] {
            assert_eq!(f.predict(&[probe]), 5.0);
        }
    }

    #[test]
    fn no_split_degenerate_returns_estimation_mean() {
        let n = 20;
        let x = column((0..n).map(|i| i as f64).collect());
        let y: Vec<f64> = (0..n).map(|i| (i * i) as f64).collect();
        let params = ForestParams { num_trees: 1, subsample: 0.5, min_leaf: n, mtry: 0 };
        let f = fit_honest_forest(&x, &y, None, &params, 7).unwrap();
        let est = f.estimation_indices(0);
        let mean = est.iter().map(|&i| y[i as usize]).sum::<f64>() / est.len() as f64;
        assert_eq!(f.predict(&[0.0]), mean);
        assert_eq!(f.predict(&[1e9]), mean);
    }

    #[test]
    fn step_function_is_recovered() {
        let n = 2000;
        let mut r = rng::stream(13);
        let xs: Vec<f64> = (0..n).map(|_| 2.0 * rng::unit(&mut r) - 1.0).collect();
        let y: Vec<f64> = xs.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
        let x = column(xs);
        let f = fit_honest_forest(&x, &y, None, &ForestParams::default(), 3).unwrap();
        assert!(f.predict(&[-0.5]).abs() < 0.1);
        assert!((f.predict(&[0.5]) - 1.0).abs() < 0.1);
    }

    #[test]
    fn deterministic_in_seed() {
        let n = 300;
        let mut r = rng::stream(4);
        let xs: Vec<f64> = (0..n).map(|_| rng::normal(&mut r)).collect();
        let y: Vec<f64> = xs.iter().map(|&v| v * v + 0.1).collect();
        let x = column(xs);
        let a = fit_honest_forest(&x, &y, None, &ForestParams::default(), 5).unwrap();
        let b = fit_honest_forest(&x, &y, None, &ForestParams::default(), 5).unwrap();
        for probe in [-1.5, 0.0, 0.8] {
            assert_eq!(a.predict(&[probe]), b.predict(&[probe]));
        }
    }

    #[test]
    fn too_small_sample_errors() {
        let x = column(vec![0.0, 1.0]);
        let y = vec![0.0, 1.0];
        let err = fit_honest_forest(&x, &y, None, &ForestParams::default(), 0);
        assert!(matches!(err, Err(Error::InvalidParam(_))));
    }

    #[test]
    fn invalid_params_are_rejected() {
        let bad = ForestParams { subsample: 0.8, ..ForestParams::default() };
        assert!(bad.validate().is_err());
        let bad = ForestParams { num_trees: 0, ..ForestParams::default() };
        assert!(bad.validate().is_err());
    }
}
