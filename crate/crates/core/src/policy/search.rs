//! Exact maximization of Â(π) = (1/n) Σ (2π(x_i) - 1) γ_i over depth-L
//! axis-aligned trees.
//!
//! Depth 1 is a presorted prefix-sum sweep per feature. Depth 2 enumerates
//! every root (feature, threshold) candidate and solves two independent
//! depth-1 problems per partition, one pass over each feature handling both
//! sides. Candidate thresholds sit at midpoints of consecutive distinct
//! values, which realizes every achievable partition.
//!
//! Tie-breaking is total and documented: higher objective wins; on exact
//! ties, shallower candidates beat deeper ones, then lower split feature,
//! smaller threshold, and action 0. Parallel evaluation reduces with the
//! same order, so results do not depend on thread count.

use rayon::prelude::*;

use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::nuisance::forest_midpoint as midpoint;
use crate::policy::{objective_of, PolicyNode, TreePolicy};

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub policy: TreePolicy,
    /// Â(π) of the returned policy, recomputed by routing every row.
    pub objective: f64,
}

/// Sorted, deduplicated mask after validation.
pub(crate) fn validate_inputs(
    x: &Matrix,
    mask: &[usize],
    gamma: &[f64],
    depth: usize,
) -> Result<Vec<usize>> {
    if gamma.is_empty() {
        return Err(Error::EmptyData);
    }
    if gamma.len() != x.rows() {
        return Err(Error::LengthMismatch(format!(
            "{} scores for {} rows",
            gamma.len(),
            x.rows()
        )));
    }
    if let Some(i) = gamma.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteScore(i));
    }
    if depth > 2 {
        return Err(Error::InvalidParam(format!(
            "exact search supports depth 0..=2, got {depth}"
        )));
    }
    let mut mask: Vec<usize> = mask.to_vec();
    mask.sort_unstable();
    mask.dedup();
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    if let Some(&j) = mask.iter().find(|&&j| j >= x.cols()) {
        return Err(Error::FeatureOutOfRange { index: j, p: x.cols() });
    }
    Ok(mask)
}

/// Presorted view of the masked columns.
struct Sorted {
    /// Row indices per masked feature, ascending by value (ties by index).
    order: Vec<Vec<u32>>,
    /// Values aligned with `order`.
    vals: Vec<Vec<f64>>,
    /// Scores aligned with `order`, so the hot scans stream sequentially.
    gsort: Vec<Vec<f64>>,
}

impl Sorted {
    fn build(x: &Matrix, mask: &[usize], gamma: &[f64]) -> Self {
        let n = x.rows();
        let mut order = Vec::with_capacity(mask.len());
        let mut vals = Vec::with_capacity(mask.len());
        let mut gsort = Vec::with_capacity(mask.len());
        for &f in mask {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_unstable_by(|&a, &b| {
                x.get(a as usize, f)
                    .partial_cmp(&x.get(b as usize, f))
                    .unwrap()
                    .then(a.cmp(&b))
            });
            let v: Vec<f64> = idx.iter().map(|&i| x.get(i as usize, f)).collect();
            let g: Vec<f64> = idx.iter().map(|&i| gamma[i as usize]).collect();
            order.push(idx);
            vals.push(v);
            gsort.push(g);
        }
        Sorted { order, vals, gsort }
    }
}

/// Best depth <= 1 subtree on one side of a partition.
#[derive(Debug, Clone, Copy)]
struct Sub {
    sum: f64,
    /// (tier, feature position, cut index); tier 0 = constant, 1 = split.
    rank: (u8, u32, u32),
    shape: SubShape,
}

#[derive(Debug, Clone, Copy)]
enum SubShape {
    Constant(u8),
    Split { mask_pos: u32, threshold: f64, left: u8, right: u8 },
}

impl Sub {
    fn constant(total: f64) -> Sub {
        // action 0 scores -total, action 1 scores +total; ties keep 0
        if total > 0.0 {
            Sub { sum: total, rank: (0, 1, 0), shape: SubShape::Constant(1) }
        } else {
            Sub { sum: -total, rank: (0, 0, 0), shape: SubShape::Constant(0) }
        }
    }

    fn beats(&self, other: &Sub) -> bool {
        self.sum > other.sum || (self.sum == other.sum && self.rank < other.rank)
    }

    fn into_node(self, mask: &[usize]) -> PolicyNode {
        match self.shape {
            SubShape::Constant(a) => PolicyNode::Leaf(a),
            SubShape::Split { mask_pos, threshold, left, right } => PolicyNode::Split {
                feature: mask[mask_pos as usize],
                threshold,
                left: Box::new(PolicyNode::Leaf(left)),
                right: Box::new(PolicyNode::Leaf(right)),
            },
        }
    }
}

/// Exact depth-1 solutions for both sides of a partition in one pass per
/// feature. `flags[i]` says whether row i lies on the left side (index 1).
/// The inner loop tracks only primitives; winning candidates become `Sub`s
/// once per feature, preserving the (feature, cut, action-0) tie order.
fn best_depth1_pair(sorted: &Sorted, flags: &[bool], totals: [f64; 2]) -> (Sub, Sub) {
    let mut best = [Sub::constant(totals[0]), Sub::constant(totals[1])];
    for pos in 0..sorted.order.len() {
        let order = &sorted.order[pos];
        let vals = &sorted.vals[pos];
        let gs = &sorted.gsort[pos];

        let mut sum = [0.0f64; 2];
        let mut seen = [0u32; 2];
        let mut cut = [0u32; 2];
        let mut last = [0.0f64; 2];
        // per-feature running best per side: objective sum, cut index,
        // threshold, left-prefix sum (actions recovered from its sign)
        let mut fb_sum = [f64::NEG_INFINITY; 2];
        let mut fb_cut = [0u32; 2];
        let mut fb_thr = [0.0f64; 2];
        let mut fb_sl = [0.0f64; 2];

        for j in 0..order.len() {
            let i = order[j] as usize;
            let v = vals[j];
            let side = flags[i] as usize;
            if seen[side] != 0 && v > last[side] {
                let sl = sum[side];
                let cand = sl.abs() + (totals[side] - sl).abs();
                if cand > fb_sum[side] {
                    fb_sum[side] = cand;
                    fb_cut[side] = cut[side];
                    fb_thr[side] = midpoint(last[side], v);
                    fb_sl[side] = sl;
                }
                cut[side] += 1;
            }
            sum[side] += gs[j];
            seen[side] += 1;
            last[side] = v;
        }

        for side in 0..2 {
            if fb_sum[side] > best[side].sum {
                let sl = fb_sl[side];
                let sr = totals[side] - sl;
                best[side] = Sub {
                    sum: fb_sum[side],
                    rank: (1, pos as u32, fb_cut[side]),
                    shape: SubShape::Split {
                        mask_pos: pos as u32,
                        threshold: fb_thr[side],
                        left: u8::from(sl > 0.0),
                        right: u8::from(sr > 0.0),
                    },
                };
            }
        }
    }
    let [right, left] = best;
    (left, right)
}

/// Global maximizer of Â(π) over axis-aligned trees of depth <= `depth`
/// splitting only on `mask` features. Exact for depth 0, 1 and 2.
pub fn exact_tree_search(
    x: &Matrix,
    mask: &[usize],
    gamma: &[f64],
    depth: usize,
) -> Result<SearchResult> {
    let mask = validate_inputs(x, mask, gamma, depth)?;
    let n = x.rows();
    let total: f64 = gamma.iter().sum();
    let sorted = Sorted::build(x, &mask, gamma);

    // tier 0/1: constants and single splits over the whole sample
    let mut best_shallow = Sub::constant(total);
    if depth >= 1 {
        let all = vec![true; n];
        let (b, _) = best_depth1_pair(&sorted, &all, [0.0, total]);
        if b.beats(&best_shallow) {
            best_shallow = b;
        }
    }

    // tier 2: root split with exact depth-1 subtrees per side
    let mut best_deep: Option<(f64, (u32, u32), PolicyNode)> = None;
    if depth == 2 {
        let per_feature: Vec<Option<(f64, (u32, u32), PolicyNode)>> = (0..mask.len())
            .into_par_iter()
            .map(|rj| {
                let order = &sorted.order[rj];
                let vals = &sorted.vals[rj];
                let gs = &sorted.gsort[rj];
                let mut flags = vec![false; n];
                let mut left_sum = 0.0;
                let mut seen = 0u32;
                let mut cut = 0u32;
                let mut last = f64::NAN;
                let mut best: Option<(f64, (u32, u32), PolicyNode)> = None;
                for j in 0..order.len() {
                    let v = vals[j];
                    if seen > 0 && v > last {
                        let (bl, br) =
                            best_depth1_pair(&sorted, &flags, [total - left_sum, left_sum]);
                        let sum = bl.sum + br.sum;
                        let rank = (rj as u32, cut);
                        let better = match &best {
                            None => true,
                            Some((s, r, _)) => sum > *s || (sum == *s && rank < *r),
                        };
                        if better {
                            let node = PolicyNode::Split {
                                feature: mask[rj],
                                threshold: midpoint(last, v),
                                left: Box::new(bl.into_node(&mask)),
                                right: Box::new(br.into_node(&mask)),
                            };
                            best = Some((sum, rank, node));
                        }
                        cut += 1;
                    }
                    flags[order[j] as usize] = true;
                    left_sum += gs[j];
                    seen += 1;
                    last = v;
                }
                best
            })
            .collect();
        for cand in per_feature.into_iter().flatten() {
            let better = match &best_deep {
                None => true,
                Some((s, r, _)) => cand.0 > *s || (cand.0 == *s && cand.1 < *r),
            };
            if better {
                best_deep = Some(cand);
            }
        }
    }

    let winner = match best_deep {
        Some((sum, _, node)) if sum > best_shallow.sum => node,
        _ => best_shallow.into_node(&mask),
    };
    let policy = TreePolicy::new(winner)?;
    let objective = objective_of(&policy, x, gamma)?;
    Ok(SearchResult { policy, objective })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_column(v: Vec<f64>) -> Matrix {
        let n = v.len();
        Matrix::from_flat(v, n, 1).unwrap()
    }

    #[test]
    fn spec_worked_example_depth1() {
        let x = single_column(vec![0.0, 1.0, 2.0]);
        let gamma = [-1.0, 2.0, -3.0];
        let r = exact_tree_search(&x, &[0], &gamma, 1).unwrap();
        assert!((r.objective - 4.0 / 3.0).abs() < 1e-12);
        match r.policy.root() {
            PolicyNode::Split { feature, threshold, left, right } => {
                assert_eq!(*feature, 0);
                assert!((threshold - 1.5).abs() < 1e-12);
                assert_eq!(**left, PolicyNode::Leaf(1));
                assert_eq!(**right, PolicyNode::Leaf(0));
            }
            other => panic!("expected a split, got {other:?}"),
        }
    }

    #[test]
    fn all_positive_scores_treat_everyone() {
        let x = single_column(vec![3.0, 1.0, 2.0]);
        let gamma = [0.5, 1.5, 0.25];
        for depth in 0..=2 {
            let r = exact_tree_search(&x, &[0], &gamma, depth).unwrap();
            assert_eq!(r.policy.root(), &PolicyNode::Leaf(1));
            assert!((r.objective - 2.25 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn depth0_tie_prefers_control() {
        let x = single_column(vec![1.0, 2.0]);
        let r = exact_tree_search(&x, &[0], &[1.0, -1.0], 0).unwrap();
        assert_eq!(r.policy.root(), &PolicyNode::Leaf(0));
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn all_zero_scores_return_all_control() {
        let x = single_column(vec![1.0, 2.0, 3.0]);
        for depth in 0..=2 {
            let r = exact_tree_search(&x, &[0], &[0.0, 0.0, 0.0], depth).unwrap();
            assert_eq!(r.policy.root(), &PolicyNode::Leaf(0));
            assert_eq!(r.objective, 0.0);
        }
    }

    #[test]
    fn single_observation_depth2() {
        let x = single_column(vec![0.7]);
        let r = exact_tree_search(&x, &[0], &[5.0], 2).unwrap();
        assert_eq!(r.policy.root(), &PolicyNode::Leaf(1));
        assert!((r.objective - 5.0).abs() < 1e-12);
    }

    #[test]
    fn mask_is_respected() {
        // feature 1 separates the scores perfectly, feature 0 not at all
        let x = Matrix::from_rows(vec![
            vec![1.0, -1.0],
            vec![1.0, 1.0],
            vec![1.0, -1.0],
            vec![1.0, 1.0],
        ])
        .unwrap();
        let gamma = [-1.0, 1.0, -1.0, 1.0];
        let r = exact_tree_search(&x, &[0], &gamma, 2).unwrap();
        assert!(r.policy.features_used().iter().all(|&f| f == 0));
        let r2 = exact_tree_search(&x, &[0, 1], &gamma, 1).unwrap();
        assert_eq!(r2.policy.features_used(), vec![1]);
        assert!((r2.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn depth2_recovers_xor_pattern() {
        // gamma positive on the diagonal quadrants only
        let x = Matrix::from_rows(vec![
            vec![-1.0, -1.0],
            vec![-1.0, 1.0],
            vec![1.0, -1.0],
            vec![1.0, 1.0],
        ])
        .unwrap();
        let gamma = [1.0, -1.0, -1.0, 1.0];
        let r1 = exact_tree_search(&x, &[0, 1], &gamma, 1).unwrap();
        assert_eq!(r1.objective, 0.0); // depth 1 cannot separate
        let r2 = exact_tree_search(&x, &[0, 1], &gamma, 2).unwrap();
        assert!((r2.objective - 1.0).abs() < 1e-12);
        assert_eq!(r2.policy.depth(), 2);
    }

    #[test]
    fn errors_on_bad_inputs() {
        let x = single_column(vec![1.0]);
        assert!(matches!(
            exact_tree_search(&x, &[], &[1.0], 1),
            Err(Error::EmptyMask)
        ));
        assert!(matches!(
            exact_tree_search(&x, &[0], &[f64::NAN], 1),
            Err(Error::NonFiniteScore(0))
        ));
        assert!(matches!(
            exact_tree_search(&x, &[0], &[1.0], 3),
            Err(Error::InvalidParam(_))
        ));
    }
}
