use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        /// Rows with `x[feature] <= threshold` go left.
        threshold: f64,
        gain: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Nodes with fewer rows are not split.
    pub min_samples: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { max_depth: 3, min_samples: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegressionTree {
    pub root: Node,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut n = &self.root;
        loop {
            match n {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right, .. } => {
                    n = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    /// Preorder index of the leaf `x` falls into.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        fn walk(n: &Node, x: &[f64], base: usize) -> usize {
            match n {
                Node::Leaf { .. } => base,
                Node::Split { feature, threshold, left, right, .. } => {
                    if x[*feature] <= *threshold {
                        walk(left, x, base)
                    } else {
                        walk(right, x, base + count_leaves(left))
                    }
                }
            }
        }
        walk(&self.root, x, 0)
    }

    pub fn depth(&self) -> usize {
        fn d(n: &Node) -> usize {
            match n {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + d(left).max(d(right)),
            }
        }
        d(&self.root)
    }

    pub fn leaf_count(&self) -> usize {
        count_leaves(&self.root)
    }

    /// Total gain per feature over all splits.
    pub fn add_gains(&self, into: &mut [f64]) {
        fn walk(n: &Node, into: &mut [f64]) {
            if let Node::Split { feature, gain, left, right, .. } = n {
                if let Some(g) = into.get_mut(*feature) {
                    *g += gain;
                }
                walk(left, into);
                walk(right, into);
            }
        }
        walk(&self.root, into)
    }
}

fn count_leaves(n: &Node) -> usize {
    match n {
        Node::Leaf { .. } => 1,
        Node::Split { left, right, .. } => count_leaves(left) + count_leaves(right),
    }
}

/// Best weighted variance-reduction split of `rows`. Scans features in
/// order and thresholds ascending, keeping the first strict maximum, so ties
/// go to the lowest feature and then the lowest threshold. Thresholds are
/// midpoints between consecutive distinct values.
pub fn best_split(x: &[Vec<f64>], rows: &[usize], targets: &[f64], weights: &[f64]) -> Option<Split> {
    let n_features = x.first().map_or(0, Vec::len);
    let (mut s, mut w, mut ss) = (0.0, 0.0, 0.0);
    for &r in rows {
        s += weights[r] * targets[r];
        w += weights[r];
        ss += weights[r] * targets[r] * targets[r];
    }
    if w <= 0.0 {
        return None;
    }
    let parent = s * s / w;
    // gains below this are rounding noise
    let floor = 1e-12 * ss.max(f64::MIN_POSITIVE);
    let mut best: Option<Split> = None;
    let mut order = rows.to_vec();
    for f in 0..n_features {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        let (mut sl, mut wl) = (0.0, 0.0);
        for i in 0..order.len() - 1 {
            let r = order[i];
            sl += weights[r] * targets[r];
            wl += weights[r];
            let (v, next) = (x[r][f], x[order[i + 1]][f]);
            if v == next {
                continue;
            }
            let wr = w - wl;
            if wl <= 0.0 || wr <= 0.0 {
                continue;
            }
            let sr = s - sl;
            let gain = sl * sl / wl + sr * sr / wr - parent;
            if gain > floor && best.is_none_or(|b| gain > b.gain) {
                best = Some(Split { feature: f, threshold: v + (next - v) / 2.0, gain });
            }
        }
    }
    best
}

fn grow(x: &[Vec<f64>], rows: Vec<usize>, t: &[f64], w: &[f64], depth: usize, p: &TreeParams) -> Node {
    let ws: f64 = rows.iter().map(|&r| w[r]).sum();
    let value = if ws > 0.0 { rows.iter().map(|&r| w[r] * t[r]).sum::<f64>() / ws } else { 0.0 };
    if depth == 0 || rows.len() < p.min_samples.max(2) {
        return Node::Leaf { value };
    }
    let Some(split) = best_split(x, &rows, t, w) else {
        return Node::Leaf { value };
    };
    let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| x[i][split.feature] <= split.threshold);
    Node::Split {
        feature: split.feature,
        threshold: split.threshold,
        gain: split.gain,
        left: Box::new(grow(x, l, t, w, depth - 1, p)),
        right: Box::new(grow(x, r, t, w, depth - 1, p)),
    }
}

/// Weighted least-squares regression tree over the given rows. Leaves hold
/// the weighted mean target.
pub fn fit_tree(x: &[Vec<f64>], rows: &[usize], targets: &[f64], weights: &[f64], params: &TreeParams) -> Result<RegressionTree> {
    if rows.is_empty() {
        return Err(Error::Empty("tree training rows"));
    }
    if targets.len() != x.len() || weights.len() != x.len() {
        return Err(Error::Shape(format!(
            "{} rows, {} targets, {} weights",
            x.len(),
            targets.len(),
            weights.len()
        )));
    }
    let width = x[0].len();
    if x.iter().any(|r| r.len() != width) {
        return Err(Error::Shape("ragged feature matrix".into()));
    }
    if x.iter().flatten().chain(targets).chain(weights).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("tree training data"));
    }
    Ok(RegressionTree { root: grow(x, rows.to_vec(), targets, weights, params.max_depth, params) })
}
