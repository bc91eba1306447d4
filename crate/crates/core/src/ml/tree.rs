//! CART regression trees with mean leaves or linear leaves.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::linear::{fit_lr, LinearModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    pub min_leaf: usize,
    pub max_depth: usize,
    /// Smallest group that gets a linear model in the linear-leaf variant.
    pub linear_leaf_min: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            min_leaf: 5,
            max_depth: 6,
            linear_leaf_min: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Leaf {
    Mean(f64),
    Linear(LinearModel),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
        rows: usize,
        /// Drop in squared error achieved by this split.
        gain: f64,
    },
    Leaf {
        leaf: Leaf,
        rows: usize,
        /// Training rows that reached this leaf.
        members: Vec<usize>,
    },
}

impl Node {
    pub fn rows(&self) -> usize {
        match self {
            Node::Split { rows, .. } | Node::Leaf { rows, .. } => *rows,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionTree {
    pub root: Node,
    pub num_features: usize,
}

fn mean(ix: &[usize], y: &[f64]) -> f64 {
    ix.iter().map(|&i| y[i]).sum::<f64>() / ix.len() as f64
}

fn sse(ix: &[usize], y: &[f64]) -> f64 {
    let m = mean(ix, y);
    ix.iter().map(|&i| (y[i] - m).powi(2)).sum()
}

struct Best {
    feature: usize,
    threshold: f64,
    cost: f64,
}

/// Best split of `ix`: lowest summed squared error, then lowest feature
/// index, then smallest threshold.
#[allow(clippy::needless_range_loop)]
fn best_split(x: &[Vec<f64>], y: &[f64], ix: &[usize], min_leaf: usize) -> Option<Best> {
    let p = x[ix[0]].len();
    let n = ix.len();
    let mut best: Option<Best> = None;
    for f in 0..p {
        let mut order = ix.to_vec();
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        let total: f64 = order.iter().map(|&i| y[i]).sum();
        let total_sq: f64 = order.iter().map(|&i| y[i] * y[i]).sum();
        let (mut s, mut sq) = (0.0, 0.0);
        for k in 1..n {
            let prev = order[k - 1];
            s += y[prev];
            sq += y[prev] * y[prev];
            if k < min_leaf || n - k < min_leaf {
                continue;
            }
            let lo = x[prev][f];
            let hi = x[order[k]][f];
            if lo == hi {
                continue;
            }
            let mid = lo + (hi - lo) / 2.0;
            let threshold = if mid < hi { mid } else { lo };
            let (nl, nr) = (k as f64, (n - k) as f64);
            let cost = (sq - s * s / nl) + ((total_sq - sq) - (total - s).powi(2) / nr);
            if best.as_ref().is_none_or(|b| cost < b.cost) {
                best = Some(Best {
                    feature: f,
                    threshold,
                    cost,
                });
            }
        }
    }
    best
}

fn grow(x: &[Vec<f64>], y: &[f64], ix: Vec<usize>, depth: usize, params: &TreeParams) -> Node {
    let parent = sse(&ix, y);
    let leaf = |ix: Vec<usize>| Node::Leaf {
        leaf: Leaf::Mean(mean(&ix, y)),
        rows: ix.len(),
        members: ix,
    };
    if depth >= params.max_depth || ix.len() < 2 * params.min_leaf.max(1) || parent == 0.0 {
        return leaf(ix);
    }
    let Some(b) = best_split(x, y, &ix, params.min_leaf.max(1)) else {
        return leaf(ix);
    };
    // recompute the split cost exactly; the running sums above only rank candidates
    let (l, r): (Vec<usize>, Vec<usize>) = ix.iter().partition(|&&i| x[i][b.feature] <= b.threshold);
    let cost = sse(&l, y) + sse(&r, y);
    if cost >= parent {
        return leaf(ix);
    }
    let rows = ix.len();
    Node::Split {
        feature: b.feature,
        threshold: b.threshold,
        left: Box::new(grow(x, y, l, depth + 1, params)),
        right: Box::new(grow(x, y, r, depth + 1, params)),
        rows,
        gain: parent - cost,
    }
}

fn members(node: &Node, out: &mut Vec<usize>) {
    match node {
        Node::Leaf { members: m, .. } => out.extend(m),
        Node::Split { left, right, .. } => {
            members(left, out);
            members(right, out);
        }
    }
}

/// Least squares on a forward-selected subset of features. Starting from the
/// mean, the feature that lowers the adjusted error most is added until none
/// does. `None` when no feature improves on the mean.
fn fit_linear(x: &[Vec<f64>], y: &[f64], ix: &[usize]) -> Option<LinearModel> {
    let n = ix.len();
    let p = x.get(*ix.first()?)?.len();
    let ty: Vec<f64> = ix.iter().map(|&i| y[i]).collect();
    let mean = ty.iter().sum::<f64>() / n as f64;
    let mut best_err = adjusted_error(ty.iter().map(|v| (v - mean).abs()).sum(), n, 1);
    let mut best: Option<LinearModel> = None;
    let mut chosen: Vec<usize> = Vec::new();
    while chosen.len() + 2 < n {
        let mut step: Option<(f64, usize, LinearModel)> = None;
        for j in (0..p).filter(|j| !chosen.contains(j)) {
            let cols: Vec<usize> = chosen.iter().copied().chain([j]).collect();
            let tx: Vec<Vec<f64>> = ix.iter().map(|&i| cols.iter().map(|&c| x[i][c]).collect()).collect();
            let Ok(lm) = fit_lr(&tx, &ty) else { continue };
            let abs: f64 = tx.iter().zip(&ty).map(|(r, v)| (v - lm.predict(r)).abs()).sum();
            let err = adjusted_error(abs, n, cols.len() + 1);
            if step.as_ref().is_none_or(|s| err < s.0) {
                let mut weights = vec![0.0; p];
                for (&c, &w) in cols.iter().zip(&lm.weights) {
                    weights[c] = w;
                }
                step = Some((
                    err,
                    j,
                    LinearModel {
                        intercept: lm.intercept,
                        weights,
                    },
                ));
            }
        }
        match step {
            Some((err, j, lm)) if err < best_err - 1e-9 * (1.0 + best_err) => {
                best_err = err;
                chosen.push(j);
                best = Some(lm);
            }
            _ => break,
        }
    }
    best
}

/// Mean absolute training error inflated by `(n + v) / (n - v)` for `v`
/// fitted parameters; infinite when `n <= v`.
fn adjusted_error(abs_err: f64, n: usize, v: usize) -> f64 {
    if n <= v {
        return f64::INFINITY;
    }
    abs_err / n as f64 * (n + v) as f64 / (n - v) as f64
}

fn leaf_error(leaf: &Leaf, x: &[Vec<f64>], y: &[f64], ix: &[usize]) -> f64 {
    let (abs, v) = match leaf {
        Leaf::Mean(m) => (ix.iter().map(|&i| (y[i] - m).abs()).sum::<f64>(), 1),
        Leaf::Linear(lm) => (
            ix.iter().map(|&i| (y[i] - lm.predict(&x[i])).abs()).sum::<f64>(),
            lm.weights.iter().filter(|w| **w != 0.0).count() + 1,
        ),
    };
    adjusted_error(abs, ix.len(), v)
}

/// Turns a mean-leaf tree into a linear-leaf tree. Leaves with at least
/// `min_rows` rows get a least-squares model. Working upwards, a subtree with
/// at least `min_rows` rows is replaced by a single linear leaf when the
/// linear model's adjusted error is no worse than the subtree's.
/// Returns the node's adjusted error.
fn attach_linear(node: &mut Node, x: &[Vec<f64>], y: &[f64], min_rows: usize) -> f64 {
    match node {
        Node::Leaf { leaf, members, .. } => {
            if members.len() >= min_rows {
                if let Some(lm) = fit_linear(x, y, members) {
                    *leaf = Leaf::Linear(lm);
                }
            }
            leaf_error(leaf, x, y, members)
        }
        Node::Split { left, right, rows, .. } => {
            let el = attach_linear(left, x, y, min_rows);
            let er = attach_linear(right, x, y, min_rows);
            let n = *rows as f64;
            let subtree = (el * left.rows() as f64 + er * right.rows() as f64) / n;
            if *rows < min_rows {
                return subtree;
            }
            let mut ix = Vec::with_capacity(*rows);
            members(node, &mut ix);
            ix.sort_unstable();
            let Some(lm) = fit_linear(x, y, &ix) else {
                return subtree;
            };
            let leaf = Leaf::Linear(lm);
            let err = leaf_error(&leaf, x, y, &ix);
            // ties within rounding favour the simpler model
            if err <= subtree + 1e-9 * (1.0 + subtree) {
                *node = Node::Leaf {
                    leaf,
                    rows: ix.len(),
                    members: ix,
                };
                err
            } else {
                subtree
            }
        }
    }
}

impl RegressionTree {
    /// Tree whose leaves predict the mean training target.
    pub fn fit_mean(x: &[Vec<f64>], y: &[f64], params: &TreeParams) -> Self {
        assert!(!y.is_empty() && x.len() == y.len());
        RegressionTree {
            root: grow(x, y, (0..y.len()).collect(), 0, params),
            num_features: x[0].len(),
        }
    }

    /// Same splits as [`fit_mean`](Self::fit_mean), then linear leaves where a
    /// group has at least `linear_leaf_min` rows.
    pub fn fit_linear(x: &[Vec<f64>], y: &[f64], params: &TreeParams) -> Self {
        let mut t = Self::fit_mean(x, y, params);
        attach_linear(&mut t.root, x, y, params.linear_leaf_min);
        t
    }

    pub fn leaf_for(&self, x: &[f64]) -> &Node {
        let mut node = &self.root;
        while let Node::Split {
            feature,
            threshold,
            left,
            right,
            ..
        } = node
        {
            node = if x[*feature] <= *threshold { left } else { right };
        }
        node
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self.leaf_for(x) {
            Node::Leaf {
                leaf: Leaf::Mean(m), ..
            } => *m,
            Node::Leaf {
                leaf: Leaf::Linear(lm), ..
            } => lm.predict(x),
            Node::Split { .. } => unreachable!(),
        }
    }

    /// Split features in pre-order.
    pub fn split_features(&self) -> Vec<usize> {
        fn walk(n: &Node, out: &mut Vec<usize>) {
            if let Node::Split {
                feature, left, right, ..
            } = n
            {
                out.push(*feature);
                walk(left, out);
                walk(right, out);
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    /// Split thresholds in pre-order.
    pub fn thresholds(&self) -> Vec<f64> {
        fn walk(n: &Node, out: &mut Vec<f64>) {
            if let Node::Split {
                threshold, left, right, ..
            } = n
            {
                out.push(*threshold);
                walk(left, out);
                walk(right, out);
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    /// Squared-error reduction per feature, normalized to sum to 1.
    pub fn importance(&self) -> Vec<f64> {
        fn walk(n: &Node, out: &mut [f64]) {
            if let Node::Split {
                feature,
                gain,
                left,
                right,
                ..
            } = n
            {
                out[*feature] += gain;
                walk(left, out);
                walk(right, out);
            }
        }
        let mut out = vec![0.0; self.num_features];
        walk(&self.root, &mut out);
        let total: f64 = out.iter().sum();
        if total > 0.0 {
            out.iter_mut().for_each(|v| *v /= total);
        }
        out
    }

    /// Indented text form, one node per line.
    pub fn render(&self, names: &[&str]) -> String {
        fn walk(n: &Node, depth: usize, names: &[&str], out: &mut String) {
            let pad = "  ".repeat(depth);
            match n {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    rows,
                    ..
                } => {
                    let name = names.get(*feature).copied().unwrap_or("?");
                    let _ = writeln!(out, "{pad}{name} <= {threshold} (n={rows})");
                    walk(left, depth + 1, names, out);
                    let _ = writeln!(out, "{pad}{name} > {threshold} (n={rows})");
                    walk(right, depth + 1, names, out);
                }
                Node::Leaf {
                    leaf: Leaf::Mean(m),
                    rows,
                    ..
                } => {
                    let _ = writeln!(out, "{pad}mean {m} (n={rows})");
                }
                Node::Leaf {
                    leaf: Leaf::Linear(lm),
                    rows,
                    ..
                } => {
                    let terms: Vec<String> = lm
                        .weights
                        .iter()
                        .enumerate()
                        .filter(|(_, w)| **w != 0.0)
                        .map(|(j, w)| format!("{w}*{}", names.get(j).copied().unwrap_or("?")))
                        .collect();
                    let _ = writeln!(out, "{pad}linear {} + {} (n={rows})", lm.intercept, terms.join(" + "));
                }
            }
        }
        let mut out = String::new();
        walk(&self.root, 0, names, &mut out);
        out
    }
}
