//! Exhaustive tree enumeration, the test oracle for `exact_tree_search`.
//!
//! Every candidate tree is scored by direct summation over rows, a code
//! path deliberately independent of the prefix-sum sweeps in the exact
//! search. Guard rails keep instances small.

use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::nuisance::forest_midpoint as midpoint;
use crate::policy::search::{validate_inputs, SearchResult};
use crate::policy::{objective_of, PolicyNode, TreePolicy};

const MAX_N: usize = 30;
const MAX_P: usize = 4;
const MAX_DEPTH: usize = 2;

/// Candidate thresholds for `rows` on feature `f`: midpoints between
/// consecutive distinct values, ascending.
fn thresholds(x: &Matrix, rows: &[usize], f: usize) -> Vec<f64> {
    let mut vals: Vec<f64> = rows.iter().map(|&i| x.get(i, f)).collect();
    vals.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    vals.dedup();
    vals.windows(2).map(|w| midpoint(w[0], w[1])).collect()
}

#[derive(Clone, Copy, PartialEq)]
enum Side {
    Constant(u8),
    Split { f: usize, t: f64, left: u8, right: u8 },
}

fn side_value(x: &Matrix, gamma: &[f64], rows: &[usize], cand: Side) -> f64 {
    let mut sum = 0.0;
    for &i in rows {
        let a = match cand {
            Side::Constant(a) => a,
            Side::Split { f, t, left, right } => {
                if x.get(i, f) <= t {
                    left
                } else {
                    right
                }
            }
        };
        sum += if a == 1 { gamma[i] } else { -gamma[i] };
    }
    sum
}

/// All depth <= 1 candidates for a row subset, in tie-break order:
/// constants first, then splits by (feature, threshold, actions).
fn side_candidates(x: &Matrix, mask: &[usize], rows: &[usize], depth: usize) -> Vec<Side> {
    let mut out = vec![Side::Constant(0), Side::Constant(1)];
    if depth >= 1 {
        for &f in mask {
            for t in thresholds(x, rows, f) {
                for (left, right) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    out.push(Side::Split { f, t, left, right });
                }
            }
        }
    }
    out
}

fn best_side(x: &Matrix, gamma: &[f64], mask: &[usize], rows: &[usize], depth: usize) -> (f64, Side) {
    let mut best = (f64::NEG_INFINITY, Side::Constant(0));
    for cand in side_candidates(x, mask, rows, depth) {
        let v = side_value(x, gamma, rows, cand);
        if v > best.0 {
            best = (v, cand);
        }
    }
    best
}

fn side_node(cand: Side) -> PolicyNode {
    match cand {
        Side::Constant(a) => PolicyNode::Leaf(a),
        Side::Split { f, t, left, right } => PolicyNode::Split {
            feature: f,
            threshold: t,
            left: Box::new(PolicyNode::Leaf(left)),
            right: Box::new(PolicyNode::Leaf(right)),
        },
    }
}

/// Exhaustive search over all depth <= `depth` trees. Same objective and
/// tie-breaking as `exact_tree_search`, evaluated the slow way.
pub fn brute_force_search(
    x: &Matrix,
    mask: &[usize],
    gamma: &[f64],
    depth: usize,
) -> Result<SearchResult> {
    let mask = validate_inputs(x, mask, gamma, depth)?;
    let n = x.rows();
    if n > MAX_N || x.cols() > MAX_P || depth > MAX_DEPTH {
        return Err(Error::BruteForceGuard(format!(
            "n = {n}, p = {}, depth = {depth} exceeds n <= {MAX_N}, p <= {MAX_P}, depth <= {MAX_DEPTH}",
            x.cols()
        )));
    }
    let all: Vec<usize> = (0..n).collect();

    // depth <= 1 over the full sample
    let (mut best_sum, shallow) = best_side(x, gamma, &mask, &all, depth.min(1));
    let mut best_node = side_node(shallow);

    if depth == 2 {
        for &rf in &mask {
            for rt in thresholds(x, &all, rf) {
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                    all.iter().partition(|&&i| x.get(i, rf) <= rt);
                let (lv, lc) = best_side(x, gamma, &mask, &left_rows, 1);
                let (rv, rc) = best_side(x, gamma, &mask, &right_rows, 1);
                if lv + rv > best_sum {
                    best_sum = lv + rv;
                    best_node = PolicyNode::Split {
                        feature: rf,
                        threshold: rt,
                        left: Box::new(side_node(lc)),
                        right: Box::new(side_node(rc)),
                    };
                }
            }
        }
    }

    let policy = TreePolicy::new(best_node)?;
    let objective = objective_of(&policy, x, gamma)?;
    Ok(SearchResult { policy, objective })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guard_rails_are_enforced() {
        let x = Matrix::from_flat(vec![0.0; 31], 31, 1).unwrap();
        let gamma = vec![1.0; 31];
        assert!(matches!(
            brute_force_search(&x, &[0], &gamma, 1),
            Err(Error::BruteForceGuard(_))
        ));
    }

    #[test]
    fn single_observation_treats_when_positive() {
        let x = Matrix::from_flat(vec![0.3], 1, 1).unwrap();
        let r = brute_force_search(&x, &[0], &[5.0], 2).unwrap();
        assert_eq!(r.policy.root(), &PolicyNode::Leaf(1));
        assert!((r.objective - 5.0).abs() < 1e-12);
    }

    #[test]
    fn zero_scores_fall_back_to_control() {
        let x = Matrix::from_flat(vec![1.0, 2.0, 3.0], 3, 1).unwrap();
        let r = brute_force_search(&x, &[0], &[0.0; 3], 2).unwrap();
        assert_eq!(r.policy.root(), &PolicyNode::Leaf(0));
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn matches_exact_on_the_spec_example() {
        let x = Matrix::from_flat(vec![0.0, 1.0, 2.0], 3, 1).unwrap();
        let gamma = [-1.0, 2.0, -3.0];
        let brute = brute_force_search(&x, &[0], &gamma, 1).unwrap();
        let exact = crate::policy::exact_tree_search(&x, &[0], &gamma, 1).unwrap();
        assert_eq!(brute.policy, exact.policy);
        assert!((brute.objective - exact.objective).abs() < 1e-15);
    }
}
