//! Post-fit explanation of per-cell effects: a shallow regression tree over
//! the effect estimates and binned effect curves per covariate.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::causal::{LinearCateModel, Z95};
use crate::data::{FeatureMatrix, Scaler};
use crate::error::{Error, Result};
use crate::learners::{fit_tree_on_rows, TreeNode, TreeParams};
use crate::seed::stream;

/// Share of rows used as the default minimum leaf size.
pub const DEFAULT_MIN_LEAF_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpreterParams {
    pub max_depth: usize,
    /// Defaults to 5% of the rows, at least 1.
    pub min_leaf_size: Option<usize>,
}

impl Default for InterpreterParams {
    fn default() -> Self {
        Self {
            max_depth: 3,
            min_leaf_size: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (zero for a single member).
    pub std: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl LeafStats {
    pub fn from_values(v: &[f64]) -> Self {
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let half = Z95 * std / (n as f64).sqrt();
        Self {
            n,
            mean,
            std,
            ci_low: mean - half,
            ci_high: mean + half,
        }
    }
}

/// Interpreter node; ids are assigned in depth-first order, left first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum InterpreterNode {
    Split {
        id: usize,
        feature: String,
        feature_index: usize,
        /// Rows with standardized value `<= threshold_std` go left.
        threshold_std: f64,
        threshold_raw: f64,
        n: usize,
        left: Box<InterpreterNode>,
        right: Box<InterpreterNode>,
    },
    Leaf {
        id: usize,
        stats: LeafStats,
    },
}

impl InterpreterNode {
    pub fn id(&self) -> usize {
        match self {
            InterpreterNode::Split { id, .. } | InterpreterNode::Leaf { id, .. } => *id,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            InterpreterNode::Split { n, .. } => *n,
            InterpreterNode::Leaf { stats, .. } => stats.n,
        }
    }

    /// Split structure without statistics, for comparisons.
    pub fn shape(&self) -> TreeShape {
        match self {
            InterpreterNode::Split {
                feature,
                threshold_raw,
                left,
                right,
                ..
            } => TreeShape::Split {
                feature: feature.clone(),
                threshold: *threshold_raw,
                left: Box::new(left.shape()),
                right: Box::new(right.shape()),
            },
            InterpreterNode::Leaf { stats, .. } => TreeShape::Leaf { n: stats.n },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeShape {
    Split {
        feature: String,
        threshold: f64,
        left: Box<TreeShape>,
        right: Box<TreeShape>,
    },
    Leaf {
        n: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpreterTree {
    pub root: InterpreterNode,
    pub max_depth: usize,
    pub min_leaf_size: usize,
    pub n: usize,
}

impl InterpreterTree {
    /// Id of the leaf a standardized row falls into.
    pub fn leaf_of(&self, x_std: &[f64]) -> usize {
        let mut node = &self.root;
        loop {
            match node {
                InterpreterNode::Leaf { id, .. } => return *id,
                InterpreterNode::Split {
                    feature_index,
                    threshold_std,
                    left,
                    right,
                    ..
                } => {
                    node = if x_std[*feature_index] <= *threshold_std { left } else { right };
                }
            }
        }
    }

    /// Leaves in depth-first order.
    pub fn leaves(&self) -> Vec<(usize, LeafStats)> {
        fn walk(node: &InterpreterNode, out: &mut Vec<(usize, LeafStats)>) {
            match node {
                InterpreterNode::Leaf { id, stats } => out.push((*id, *stats)),
                InterpreterNode::Split { left, right, .. } => {
                    walk(left, out);
                    walk(right, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    /// Indented outline, one node per line. The first child under a split
    /// is the branch taken when its condition holds.
    pub fn render(&self) -> String {
        fn walk(node: &InterpreterNode, depth: usize, s: &mut String) {
            let pad = "  ".repeat(depth);
            match node {
                InterpreterNode::Split {
                    id,
                    feature,
                    threshold_raw,
                    n,
                    left,
                    right,
                    ..
                } => {
                    let _ = writeln!(s, "{pad}[{id}] {feature} <= {threshold_raw} (n={n})");
                    walk(left, depth + 1, s);
                    walk(right, depth + 1, s);
                }
                InterpreterNode::Leaf { id, stats } => {
                    let _ = writeln!(
                        s,
                        "{pad}[{id}] leaf n={} mean={} std={} ci=[{}, {}]",
                        stats.n, stats.mean, stats.std, stats.ci_low, stats.ci_high
                    );
                }
            }
        }
        let mut s = String::new();
        walk(&self.root, 0, &mut s);
        s
    }
}

/// Reads the split structure back from [`InterpreterTree::render`] output.
pub fn parse_rendered(text: &str) -> Result<TreeShape> {
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut pos = 0;
    let shape = parse_node(&lines, &mut pos, 0)?;
    if pos != lines.len() {
        return Err(Error::ModelFormat(format!("trailing tree line {}", pos + 1)));
    }
    Ok(shape)
}

fn parse_node(lines: &[&str], pos: &mut usize, depth: usize) -> Result<TreeShape> {
    let bad = |at: usize, what: &str| Error::ModelFormat(format!("tree line {}: {what}", at + 1));
    let line = *lines.get(*pos).ok_or_else(|| bad(*pos, "missing node"))?;
    let at = *pos;
    *pos += 1;
    let indent = line.len() - line.trim_start().len();
    if indent != 2 * depth {
        return Err(bad(at, "unexpected indentation"));
    }
    let body = line.trim_start();
    let body = body
        .split_once("] ")
        .map(|(_, rest)| rest)
        .ok_or_else(|| bad(at, "missing node id"))?;
    if let Some(rest) = body.strip_prefix("leaf n=") {
        let n = rest
            .split_whitespace()
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(at, "bad leaf count"))?;
        return Ok(TreeShape::Leaf { n });
    }
    let (feature, rest) = body.split_once(" <= ").ok_or_else(|| bad(at, "expected a condition"))?;
    let threshold = rest
        .split_whitespace()
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad(at, "bad threshold"))?;
    let left = parse_node(lines, pos, depth + 1)?;
    let right = parse_node(lines, pos, depth + 1)?;
    Ok(TreeShape::Split {
        feature: feature.to_string(),
        threshold,
        left: Box::new(left),
        right: Box::new(right),
    })
}

/// Regression tree over effect estimates with exhaustive variance-reduction
/// splits on standardized covariates; thresholds are also reported in raw
/// units through `scaler`. Leaf statistics are recomputed from the members.
pub fn fit_interpreter(
    x_std: &FeatureMatrix,
    cate: &[f64],
    scaler: &Scaler,
    params: &InterpreterParams,
) -> Result<InterpreterTree> {
    let n = x_std.n_rows();
    if cate.len() != n {
        return Err(Error::DimensionMismatch(format!("{} effects for {n} rows", cate.len())));
    }
    if scaler.n_cols() != x_std.n_cols() {
        return Err(Error::DimensionMismatch(format!(
            "scaler has {} columns, covariates have {}",
            scaler.n_cols(),
            x_std.n_cols()
        )));
    }
    if let Some(i) = cate.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: i,
            column: "cate".into(),
        });
    }
    let min_leaf = params
        .min_leaf_size
        .unwrap_or_else(|| ((DEFAULT_MIN_LEAF_FRACTION * n as f64).ceil() as usize).max(1));
    if min_leaf == 0 || n < 2 * min_leaf {
        return Err(Error::invalid(format!(
            "{n} rows cannot hold two leaves of min_leaf_size {min_leaf}"
        )));
    }
    let tree_params = TreeParams::regression(params.max_depth, min_leaf);
    let rows: Vec<usize> = (0..n).collect();
    let tree = fit_tree_on_rows(x_std, cate, &rows, &tree_params, &mut stream(0, 0));

    let mut next_id = 0;
    let root = convert(&tree, x_std, cate, scaler, rows, &mut next_id);
    Ok(InterpreterTree {
        root,
        max_depth: params.max_depth,
        min_leaf_size: min_leaf,
        n,
    })
}

fn convert(
    node: &TreeNode,
    x: &FeatureMatrix,
    cate: &[f64],
    scaler: &Scaler,
    rows: Vec<usize>,
    next_id: &mut usize,
) -> InterpreterNode {
    let id = *next_id;
    *next_id += 1;
    match node {
        TreeNode::Leaf { .. } => {
            let values: Vec<f64> = rows.iter().map(|&r| cate[r]).collect();
            InterpreterNode::Leaf {
                id,
                stats: LeafStats::from_values(&values),
            }
        }
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
            ..
        } => {
            let n = rows.len();
            let (lr, rr): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&r| x.get(r, *feature) <= *threshold);
            let left = convert(left, x, cate, scaler, lr, next_id);
            let right = convert(right, x, cate, scaler, rr, next_id);
            InterpreterNode::Split {
                id,
                feature: x.column_names()[*feature].clone(),
                feature_index: *feature,
                threshold_std: *threshold,
                threshold_raw: scaler.unscale_value(*feature, *threshold),
                n,
                left: Box::new(left),
                right: Box::new(right),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveBin {
    pub lo: f64,
    pub hi: f64,
    /// Bin center in standardized units.
    pub center: f64,
    pub center_raw: f64,
    pub n: usize,
    /// `None` for an empty bin.
    pub mean_effect: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectCurve {
    pub feature: String,
    pub bins: Vec<CurveBin>,
}

impl EffectCurve {
    /// `feature,bin_center,mean_effect,ci_low,ci_high,n`; empty bins leave
    /// the effect columns blank.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("feature,bin_center,mean_effect,ci_low,ci_high,n\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for b in &self.bins {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                self.feature,
                b.center,
                opt(b.mean_effect),
                opt(b.ci_low),
                opt(b.ci_high),
                b.n
            );
        }
        s
    }
}

/// Equal-width bins over the observed standardized range of `feature`; per
/// bin, the mean effect and a band of `Z95` times the mean standard error.
pub fn effect_curve(model: &LinearCateModel, x_std: &FeatureMatrix, feature: &str, n_bins: usize) -> Result<EffectCurve> {
    if n_bins < 2 {
        return Err(Error::invalid(format!("need at least 2 bins, got {n_bins}")));
    }
    let j = x_std.column_index(feature)?;
    if x_std.n_rows() == 0 {
        return Err(Error::Empty("no rows for an effect curve".into()));
    }
    let col = x_std.column(j);
    let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / n_bins as f64;
    let effects = model.cate_rows(x_std)?;
    let mut sum = vec![0.0; n_bins];
    let mut se = vec![0.0; n_bins];
    let mut count = vec![0usize; n_bins];
    for (v, e) in col.iter().zip(&effects) {
        let k = if width > 0.0 {
            (((v - lo) / width).floor() as usize).min(n_bins - 1)
        } else {
            0
        };
        sum[k] += e.point;
        se[k] += e.std_error;
        count[k] += 1;
    }
    let bins = (0..n_bins)
        .map(|k| {
            let blo = lo + k as f64 * width;
            let bhi = if k + 1 == n_bins { hi } else { lo + (k + 1) as f64 * width };
            let center = 0.5 * (blo + bhi);
            let (mean_effect, ci_low, ci_high) = if count[k] == 0 {
                (None, None, None)
            } else {
                let m = sum[k] / count[k] as f64;
                let s = se[k] / count[k] as f64;
                (Some(m), Some(m - Z95 * s), Some(m + Z95 * s))
            };
            CurveBin {
                lo: blo,
                hi: bhi,
                center,
                center_raw: model.scaler.unscale_value(j, center),
                n: count[k],
                mean_effect,
                ci_low,
                ci_high,
            }
        })
        .collect();
    Ok(EffectCurve {
        feature: feature.to_string(),
        bins,
    })
}
