//! CART baseline: a binary Gini decision tree over the 256 flattened pixel
//! features, grown greedily with midpoint thresholds.
//!
//! Determinism rules: candidate splits are scored per feature in ascending
//! feature order with thresholds at midpoints between consecutive distinct
//! sorted values; ties on impurity keep the lowest feature index, then the
//! lowest threshold. Leaves predict their majority class, ties going to
//! abnormal.

use serde::{Deserialize, Serialize};

use crate::encode::GrayImage;
use crate::error::{Error, Result};
use crate::ingest::Label;

/// Tree growth limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CartConfig {
    pub max_depth: usize,
    /// A split is admissible only if both children keep at least this many rows.
    pub min_leaf: usize,
}

impl Default for CartConfig {
    fn default() -> Self {
        CartConfig { max_depth: 12, min_leaf: 5 }
    }
}

impl CartConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::Tree("max_depth must be positive".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::Tree("min_leaf must be positive".into()));
        }
        Ok(())
    }
}

/// One tree node. `counts` on leaves records [normal, abnormal] training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        label: Label,
        counts: [usize; 2],
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaves() + right.leaves(),
        }
    }
}

/// Gini impurity of a [normal, abnormal] count pair.
pub fn gini(counts: [usize; 2]) -> f64 {
    let total = counts[0] + counts[1];
    if total == 0 {
        return 0.0;
    }
    let p0 = counts[0] as f64 / total as f64;
    let p1 = counts[1] as f64 / total as f64;
    1.0 - p0 * p0 - p1 * p1
}

fn count_labels(rows: &[usize], labels: &[Label]) -> [usize; 2] {
    let mut counts = [0usize; 2];
    for &r in rows {
        counts[labels[r].index()] += 1;
    }
    counts
}

fn majority(counts: [usize; 2]) -> Label {
    // tie goes to abnormal, the costlier miss
    if counts[1] >= counts[0] {
        Label::Abnormal
    } else {
        Label::Normal
    }
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    weighted_gini: f64,
}

/// Scan one feature for the best admissible midpoint threshold.
fn best_split_for_feature(
    feature: usize,
    rows: &[usize],
    features: &[Vec<f64>],
    labels: &[Label],
    min_leaf: usize,
) -> Option<(f64, f64)> {
    let mut order: Vec<usize> = rows.to_vec();
    order.sort_by(|&a, &b| {
        features[a][feature]
            .partial_cmp(&features[b][feature])
            .expect("pixel features are finite")
    });

    let total = count_labels(rows, labels);
    let n = rows.len() as f64;
    let mut left = [0usize; 2];
    let mut best: Option<(f64, f64)> = None;

    for i in 0..order.len() - 1 {
        left[labels[order[i]].index()] += 1;
        let a = features[order[i]][feature];
        let b = features[order[i + 1]][feature];
        if a == b {
            continue;
        }
        let left_n = i + 1;
        let right_n = order.len() - left_n;
        if left_n < min_leaf || right_n < min_leaf {
            continue;
        }
        let right = [total[0] - left[0], total[1] - left[1]];
        let weighted =
            (left_n as f64 / n) * gini(left) + (right_n as f64 / n) * gini(right);
        let threshold = (a + b) / 2.0;
        let better = match best {
            None => true,
            // strictly better impurity wins; ties keep the earlier
            // (lower) threshold for determinism
            Some((_, w)) => weighted < w,
        };
        if better {
            best = Some((threshold, weighted));
        }
    }
    best
}

fn grow(
    rows: Vec<usize>,
    features: &[Vec<f64>],
    labels: &[Label],
    config: &CartConfig,
    depth: usize,
) -> TreeNode {
    let counts = count_labels(&rows, labels);
    let node_gini = gini(counts);
    let leaf = || TreeNode::Leaf { label: majority(counts), counts };

    if node_gini == 0.0 || depth >= config.max_depth || rows.len() < 2 * config.min_leaf {
        return leaf();
    }

    let n_features = features[rows[0]].len();
    let mut best: Option<BestSplit> = None;
    for feature in 0..n_features {
        if let Some((threshold, weighted)) =
            best_split_for_feature(feature, &rows, features, labels, config.min_leaf)
        {
            let better = match &best {
                None => true,
                // lowest feature index wins ties because of scan order
                Some(b) => weighted < b.weighted_gini,
            };
            if better {
                best = Some(BestSplit { feature, threshold, weighted_gini: weighted });
            }
        }
    }

    let Some(split) = best else { return leaf() };
    // require a real impurity decrease, otherwise stop
    if split.weighted_gini >= node_gini {
        return leaf();
    }

    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
        .into_iter()
        .partition(|&r| features[r][split.feature] < split.threshold);

    TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(grow(left_rows, features, labels, config, depth + 1)),
        right: Box::new(grow(right_rows, features, labels, config, depth + 1)),
    }
}

/// Grow a tree on encoded training images.
pub fn train_cart(data: &[(GrayImage, Label)], config: &CartConfig) -> Result<TreeNode> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Tree("empty training set".into()));
    }
    let features: Vec<Vec<f64>> = data.iter().map(|(img, _)| img.to_features()).collect();
    let labels: Vec<Label> = data.iter().map(|(_, l)| *l).collect();
    let rows: Vec<usize> = (0..data.len()).collect();
    Ok(grow(rows, &features, &labels, config, 0))
}

/// Classify one image: descend left while feature < threshold.
pub fn predict_cart(tree: &TreeNode, image: &GrayImage) -> Label {
    let features = image.to_features();
    let mut node = tree;
    loop {
        match node {
            TreeNode::Leaf { label, .. } => return *label,
            TreeNode::Split { feature, threshold, left, right } => {
                node = if features[*feature] < *threshold { left } else { right };
            }
        }
    }
}

/// Indented text rendering, for inspection and debugging.
pub fn tree_to_text(tree: &TreeNode) -> String {
    fn rec(node: &TreeNode, indent: usize, out: &mut String) {
        let pad = "  ".repeat(indent);
        match node {
            TreeNode::Leaf { label, counts } => {
                let name = match label {
                    Label::Normal => "normal",
                    Label::Abnormal => "abnormal",
                };
                out.push_str(&format!(
                    "{pad}leaf {name} (normal {} / abnormal {})\n",
                    counts[0], counts[1]
                ));
            }
            TreeNode::Split { feature, threshold, left, right } => {
                out.push_str(&format!("{pad}pixel[{feature}] < {threshold:.6}\n"));
                rec(left, indent + 1, out);
                rec(right, indent + 1, out);
            }
        }
    }
    let mut out = String::new();
    rec(tree, 0, &mut out);
    out
}
