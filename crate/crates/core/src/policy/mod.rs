//! Tree policies and exact maximization of the signed-score objective.

mod brute;
mod search;

pub use brute::brute_force_search;
pub use search::{exact_tree_search, SearchResult};

use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::nuisance::{CrossFitNuisance, NuisanceTarget};

/// Axis-aligned decision tree mapping feature vectors to actions in {0, 1}.
/// Routing convention: x[feature] <= threshold goes left.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyNode {
    Leaf(u8),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<PolicyNode>,
        right: Box<PolicyNode>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreePolicy {
    root: PolicyNode,
}

impl TreePolicy {
    pub fn new(root: PolicyNode) -> Result<Self> {
        validate_node(&root)?;
        Ok(Self { root: collapse(root) })
    }

    /// Constant policy.
    pub fn leaf(action: u8) -> Self {
        Self { root: PolicyNode::Leaf(action) }
    }

    pub fn root(&self) -> &PolicyNode {
        &self.root
    }

    pub fn depth(&self) -> usize {
        depth_of(&self.root)
    }

    /// Largest feature index any split touches, if the tree splits at all.
    pub fn max_feature(&self) -> Option<usize> {
        max_feature(&self.root)
    }

    pub fn features_used(&self) -> Vec<usize> {
        let mut out = Vec::new();
        collect_features(&self.root, &mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Action for one feature vector; strict `<= threshold` goes left.
    pub fn action(&self, x: &[f64]) -> Result<u8> {
        let mut node = &self.root;
        loop {
            match node {
                PolicyNode::Leaf(a) => return Ok(*a),
                PolicyNode::Split { feature, threshold, left, right } => {
                    let v = *x.get(*feature).ok_or(Error::FeatureOutOfRange {
                        index: *feature,
                        p: x.len(),
                    })?;
                    node = if v <= *threshold { left } else { right };
                }
            }
        }
    }

    /// Actions for every row. Validates feature indices once up front.
    pub fn actions(&self, x: &Matrix) -> Result<Vec<u8>> {
        if let Some(max) = self.max_feature() {
            if max >= x.cols() {
                return Err(Error::FeatureOutOfRange { index: max, p: x.cols() });
            }
        }
        (0..x.rows()).map(|i| self.action(x.row(i))).collect()
    }
}

fn validate_node(node: &PolicyNode) -> Result<()> {
    match node {
        PolicyNode::Leaf(a) => {
            if *a > 1 {
                return Err(Error::BadPolicy(format!("leaf action {a} is not 0/1")));
            }
            Ok(())
        }
        PolicyNode::Split { threshold, left, right, .. } => {
            if !threshold.is_finite() {
                return Err(Error::BadPolicy(format!("non-finite threshold {threshold}")));
            }
            validate_node(left)?;
            validate_node(right)
        }
    }
}

/// Merge subtrees whose leaves all agree into a single leaf.
fn collapse(node: PolicyNode) -> PolicyNode {
    match node {
        PolicyNode::Leaf(a) => PolicyNode::Leaf(a),
        PolicyNode::Split { feature, threshold, left, right } => {
            let left = collapse(*left);
            let right = collapse(*right);
            if let (PolicyNode::Leaf(a), PolicyNode::Leaf(b)) = (&left, &right) {
                if a == b {
                    return PolicyNode::Leaf(*a);
                }
            }
            PolicyNode::Split {
                feature,
                threshold,
                left: Box::new(left),
                right: Box::new(right),
            }
        }
    }
}

fn depth_of(node: &PolicyNode) -> usize {
    match node {
        PolicyNode::Leaf(_) => 0,
        PolicyNode::Split { left, right, .. } => 1 + depth_of(left).max(depth_of(right)),
    }
}

fn max_feature(node: &PolicyNode) -> Option<usize> {
    match node {
        PolicyNode::Leaf(_) => None,
        PolicyNode::Split { feature, left, right, .. } => Some(
            (*feature)
                .max(max_feature(left).unwrap_or(0))
                .max(max_feature(right).unwrap_or(0)),
        ),
    }
}

fn collect_features(node: &PolicyNode, out: &mut Vec<usize>) {
    if let PolicyNode::Split { feature, left, right, .. } = node {
        out.push(*feature);
        collect_features(left, out);
        collect_features(right, out);
    }
}

// --- JSON form -------------------------------------------------------------
//
// A policy serializes as the complete tree of its depth in breadth-first
// order: `nodes` holds one entry per internal slot (2^depth - 1 of them),
// `leaves` one action per bottom slot (2^depth). A `null` node marks a slot
// covered by an early leaf; all bottom slots under it repeat that leaf's
// action, so the encoding is unambiguous. Thresholds are shortest
// round-trip decimals.

#[derive(Serialize, Deserialize)]
struct SplitJson {
    feature: usize,
    threshold: f64,
}

#[derive(Serialize, Deserialize)]
struct PolicyJson {
    depth: usize,
    nodes: Vec<Option<SplitJson>>,
    leaves: Vec<u8>,
}

impl Serialize for TreePolicy {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let d = self.depth();
        let mut nodes: Vec<Option<SplitJson>> = Vec::new();
        for _ in 0..(1usize << d).saturating_sub(1) {
            nodes.push(None);
        }
        let mut leaves = vec![0u8; 1usize << d];
        fill_slots(&self.root, 0, 0, d, &mut nodes, &mut leaves);
        PolicyJson { depth: d, nodes, leaves }.serialize(serializer)
    }
}

fn fill_slots(
    node: &PolicyNode,
    level: usize,
    pos: usize,
    depth: usize,
    nodes: &mut [Option<SplitJson>],
    leaves: &mut [u8],
) {
    match node {
        PolicyNode::Leaf(a) => {
            if level == depth {
                leaves[pos] = *a;
            } else {
                // early leaf: leave the slot null, propagate the action down
                fill_slots(node, level + 1, pos * 2, depth, nodes, leaves);
                fill_slots(node, level + 1, pos * 2 + 1, depth, nodes, leaves);
            }
        }
        PolicyNode::Split { feature, threshold, left, right } => {
            let slot = (1usize << level) - 1 + pos;
            nodes[slot] = Some(SplitJson { feature: *feature, threshold: *threshold });
            fill_slots(left, level + 1, pos * 2, depth, nodes, leaves);
            fill_slots(right, level + 1, pos * 2 + 1, depth, nodes, leaves);
        }
    }
}

impl<'de> Deserialize<'de> for TreePolicy {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let raw = PolicyJson::deserialize(deserializer)?;
        if raw.depth > 20 {
            return Err(D::Error::custom("policy depth exceeds 20"));
        }
        let want_nodes = (1usize << raw.depth) - 1;
        let want_leaves = 1usize << raw.depth;
        if raw.nodes.len() != want_nodes || raw.leaves.len() != want_leaves {
            return Err(D::Error::custom(format!(
                "depth {} needs {} node slots and {} leaves, found {} and {}",
                raw.depth,
                want_nodes,
                want_leaves,
                raw.nodes.len(),
                raw.leaves.len()
            )));
        }
        let root = read_slots(&raw, 0, 0).map_err(D::Error::custom)?;
        TreePolicy::new(root).map_err(|e| D::Error::custom(e.to_string()))
    }
}

fn read_slots(raw: &PolicyJson, level: usize, pos: usize) -> std::result::Result<PolicyNode, String> {
    if level == raw.depth {
        let a = raw.leaves[pos];
        if a > 1 {
            return Err(format!("leaf action {a} is not 0/1"));
        }
        return Ok(PolicyNode::Leaf(a));
    }
    let slot = (1usize << level) - 1 + pos;
    match &raw.nodes[slot] {
        Some(split) => Ok(PolicyNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(read_slots(raw, level + 1, pos * 2)?),
            right: Box::new(read_slots(raw, level + 1, pos * 2 + 1)?),
        }),
        None => {
            // every bottom slot under a null node must agree
            let left = read_slots(raw, level + 1, pos * 2)?;
            let right = read_slots(raw, level + 1, pos * 2 + 1)?;
            match (&left, &right) {
                (PolicyNode::Leaf(a), PolicyNode::Leaf(b)) if a == b => Ok(left),
                _ => Err(format!(
                    "null node slot at level {level}, position {pos} covers disagreeing leaves"
                )),
            }
        }
    }
}

/// The plug-in rule that thresholds CATE predictions: action 1 iff
/// tau_hat(X_i) > C. Returned per observation, not as a tree.
pub fn plugin_policy(nu: &CrossFitNuisance, c: f64) -> Result<Vec<u8>> {
    let tau = nu.require(NuisanceTarget::Cate)?;
    Ok(tau.iter().map(|&t| u8::from(t > c)).collect())
}

/// Â(π) numerator helper shared by the search routines:
/// sum over i of (2 a_i - 1) gamma_i, divided by n.
pub(crate) fn objective_of(policy: &TreePolicy, x: &Matrix, gamma: &[f64]) -> Result<f64> {
    let actions = policy.actions(x)?;
    let mut sum = 0.0;
    for (a, g) in actions.iter().zip(gamma) {
        sum += if *a == 1 { *g } else { -*g };
    }
    Ok(sum / gamma.len() as f64)
}
