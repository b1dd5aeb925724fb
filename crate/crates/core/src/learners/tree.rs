//! CART kernel shared by the forests, the boosted classifier and the tree
//! interpreter.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::seed::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Sum-of-squares reduction.
    Variance,
    /// Gini impurity decrease for 0/1 targets.
    Gini,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf_size: usize,
    /// Features drawn at each node; `None` searches all of them.
    pub max_features: Option<usize>,
    pub criterion: Criterion,
}

impl TreeParams {
    pub fn regression(max_depth: usize, min_leaf_size: usize) -> Self {
        Self {
            max_depth,
            min_leaf_size,
            max_features: None,
            criterion: Criterion::Variance,
        }
    }
}

/// A fitted tree. Rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
        count: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        value: f64,
        count: usize,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn count(&self) -> usize {
        match self {
            TreeNode::Leaf { count, .. } | TreeNode::Split { count, .. } => *count,
        }
    }

    /// Mean target of the training rows that reached this node.
    pub fn value(&self) -> f64 {
        match self {
            TreeNode::Leaf { value, .. } | TreeNode::Split { value, .. } => *value,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }

    #[inline]
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if row[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    /// Index of the leaf reached by `row`, numbering leaves depth first.
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut node = self;
        let mut offset = 0;
        loop {
            match node {
                TreeNode::Leaf { .. } => return offset,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    if row[*feature] <= *threshold {
                        node = left;
                    } else {
                        offset += left.n_leaves();
                        node = right;
                    }
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    /// Number of splits on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Leaves in depth-first order.
    pub fn leaves(&self) -> Vec<&TreeNode> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a TreeNode>) {
        match self {
            TreeNode::Leaf { .. } => out.push(self),
            TreeNode::Split { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }

    /// Overwrites leaf values in depth-first order.
    pub fn set_leaf_values(&mut self, values: &[f64]) {
        fn walk(node: &mut TreeNode, values: &[f64], next: &mut usize) {
            match node {
                TreeNode::Leaf { value, .. } => {
                    *value = values[*next];
                    *next += 1;
                }
                TreeNode::Split { left, right, .. } => {
                    walk(left, values, next);
                    walk(right, values, next);
                }
            }
        }
        let mut next = 0;
        walk(self, values, &mut next);
        assert_eq!(next, values.len(), "one value per leaf");
    }
}

/// Best split of one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Midpoint between two consecutive distinct sorted values. Falls back to
/// the lower value when the midpoint rounds up to the upper one, so that
/// `lo <= t < hi` always holds.
#[inline]
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) * 0.5;
    if m >= hi {
        lo
    } else {
        m
    }
}

/// Searches `features` (ascending) for the split with the largest impurity
/// decrease. Ties go to the lowest feature index, then the lowest threshold.
/// `rows` may contain repeats (bootstrap draws).
pub fn best_split(
    x: &FeatureMatrix,
    y: &[f64],
    rows: &[usize],
    features: &[usize],
    criterion: Criterion,
    min_leaf_size: usize,
) -> Option<SplitCandidate> {
    let mut buf = Vec::with_capacity(rows.len());
    best_split_with(x, y, rows, features, criterion, min_leaf_size, &mut buf)
}

fn best_split_with(
    x: &FeatureMatrix,
    y: &[f64],
    rows: &[usize],
    features: &[usize],
    criterion: Criterion,
    min_leaf_size: usize,
    buf: &mut Vec<(f64, f64)>,
) -> Option<SplitCandidate> {
    let n = rows.len();
    let min_leaf = min_leaf_size.max(1);
    if n < 2 * min_leaf {
        return None;
    }
    let mean = rows.iter().map(|&r| y[r]).sum::<f64>() / n as f64;
    let factor = match criterion {
        Criterion::Variance => 1.0,
        Criterion::Gini => 2.0,
    };
    // gains within rounding of each other count as ties, so the earliest
    // (feature, threshold) wins regardless of summation order
    let ss: f64 = rows.iter().map(|&r| (y[r] - mean).powi(2)).sum();
    let tie = 8.0 * n as f64 * f64::EPSILON * factor * ss;
    let p = x.n_cols();
    let xv = x.values();
    let mut best: Option<SplitCandidate> = None;
    for &f in features {
        buf.clear();
        buf.extend(rows.iter().map(|&r| (xv[r * p + f], y[r] - mean)));
        buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        if buf[0].0 == buf[n - 1].0 {
            continue;
        }
        let total: f64 = buf.iter().map(|e| e.1).sum();
        let parent = total * total / n as f64;
        let mut left = 0.0;
        for k in 0..n - 1 {
            left += buf[k].1;
            let n_left = k + 1;
            if n_left < min_leaf {
                continue;
            }
            if n - n_left < min_leaf {
                break;
            }
            if buf[k].0 == buf[k + 1].0 {
                continue;
            }
            let right = total - left;
            let gain = factor
                * (left * left / n_left as f64 + right * right / (n - n_left) as f64 - parent);
            if best.is_none_or(|b| gain > b.gain + tie) {
                best = Some(SplitCandidate {
                    feature: f,
                    threshold: midpoint(buf[k].0, buf[k + 1].0),
                    gain,
                });
            }
        }
    }
    best.filter(|b| b.gain > 0.0)
}

/// Grows a CART tree on the given rows (repeats allowed). Feature subsets
/// are drawn from `rng` when `params.max_features` is smaller than the
/// column count.
pub fn fit_tree_on_rows(
    x: &FeatureMatrix,
    y: &[f64],
    rows: &[usize],
    params: &TreeParams,
    rng: &mut Rng,
) -> TreeNode {
    let mut builder = Builder {
        x,
        y,
        params,
        rng,
        buf: Vec::with_capacity(rows.len()),
        all_features: (0..x.n_cols()).collect(),
    };
    builder.grow(rows.to_vec(), 0)
}

/// Grows a CART tree on every row of `x`.
pub fn fit_tree(x: &FeatureMatrix, y: &[f64], params: &TreeParams, rng: &mut Rng) -> TreeNode {
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    fit_tree_on_rows(x, y, &rows, params, rng)
}

struct Builder<'a> {
    x: &'a FeatureMatrix,
    y: &'a [f64],
    params: &'a TreeParams,
    rng: &'a mut Rng,
    buf: Vec<(f64, f64)>,
    all_features: Vec<usize>,
}

impl Builder<'_> {
    fn features(&mut self) -> Vec<usize> {
        let p = self.all_features.len();
        match self.params.max_features {
            Some(m) if m < p => {
                let mut pool = self.all_features.clone();
                for k in 0..m.max(1) {
                    let j = self.rng.random_range(k..p);
                    pool.swap(k, j);
                }
                pool.truncate(m.max(1));
                pool.sort_unstable();
                pool
            }
            _ => self.all_features.clone(),
        }
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> TreeNode {
        let count = rows.len();
        let value = rows.iter().map(|&r| self.y[r]).sum::<f64>() / count.max(1) as f64;
        let leaf = TreeNode::Leaf { value, count };
        if depth >= self.params.max_depth || count < 2 * self.params.min_leaf_size.max(1) {
            return leaf;
        }
        let first = self.y[rows[0]];
        if rows.iter().all(|&r| self.y[r] == first) {
            return leaf;
        }
        let features = self.features();
        let Some(split) = best_split_with(
            self.x,
            self.y,
            &rows,
            &features,
            self.params.criterion,
            self.params.min_leaf_size,
            &mut self.buf,
        ) else {
            return leaf;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| self.x.get(r, split.feature) <= split.threshold);
        drop(rows);
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            gain: split.gain,
            value,
            count,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}
