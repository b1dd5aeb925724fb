use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree_on_rows, Criterion, TreeNode, TreeParams};
use super::{check_binary, Predictor, Task};
use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::seed::stream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    /// ⌈√p⌉
    Sqrt,
    /// ⌈p/3⌉
    Third,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, p: usize) -> usize {
        let m = match self {
            MaxFeatures::All => p,
            MaxFeatures::Sqrt => (p as f64).sqrt().ceil() as usize,
            MaxFeatures::Third => p.div_ceil(3),
            MaxFeatures::Count(m) => m,
        };
        m.clamp(1, p.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf_size: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
}

impl ForestParams {
    pub fn regression() -> Self {
        Self {
            n_trees: 200,
            max_depth: 12,
            min_leaf_size: 5,
            max_features: MaxFeatures::Third,
            bootstrap: true,
        }
    }

    pub fn classification() -> Self {
        Self {
            max_features: MaxFeatures::Sqrt,
            ..Self::regression()
        }
    }

    pub fn defaults_for(task: Task) -> Self {
        match task {
            Task::Regression => Self::regression(),
            Task::Classification => Self::classification(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::invalid("n_trees must be at least 1"));
        }
        if self.min_leaf_size == 0 {
            return Err(Error::invalid("min_leaf_size must be at least 1"));
        }
        if let MaxFeatures::Count(0) = self.max_features {
            return Err(Error::invalid("max_features must be at least 1"));
        }
        Ok(())
    }
}

/// Bagged CART ensemble. Classification forests average per-tree class-1
/// fractions, so `predict` is a probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub task: Task,
    pub params: ForestParams,
    pub seed: u64,
    pub n_features: usize,
    pub trees: Vec<TreeNode>,
}

impl Predictor for ForestModel {
    fn predict_row(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        sum / self.trees.len() as f64
    }
}

pub fn fit_random_forest(
    x: &FeatureMatrix,
    y: &[f64],
    task: Task,
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel> {
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    fit_random_forest_on_rows(x, y, &rows, task, params, seed)
}

/// Tree `k` draws its bootstrap sample and feature subsets from the stream
/// `(seed, k)`; trees are fitted in parallel and kept in index order.
pub fn fit_random_forest_on_rows(
    x: &FeatureMatrix,
    y: &[f64],
    rows: &[usize],
    task: Task,
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel> {
    params.validate()?;
    if y.len() != x.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} targets for {} rows",
            y.len(),
            x.n_rows()
        )));
    }
    if rows.len() < 2 * params.min_leaf_size {
        return Err(Error::invalid(format!(
            "{} rows cannot hold two leaves of min_leaf_size {}",
            rows.len(),
            params.min_leaf_size
        )));
    }
    let criterion = match task {
        Task::Regression => Criterion::Variance,
        Task::Classification => {
            check_binary(rows.iter().map(|&r| y[r]))?;
            Criterion::Gini
        }
    };
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_leaf_size: params.min_leaf_size,
        max_features: Some(params.max_features.resolve(x.n_cols())),
        criterion,
    };
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(seed, k as u64);
            let sample: Vec<usize> = if params.bootstrap {
                (0..rows.len())
                    .map(|_| rows[rng.random_range(0..rows.len())])
                    .collect()
            } else {
                rows.to_vec()
            };
            fit_tree_on_rows(x, y, &sample, &tree_params, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        task,
        params: params.clone(),
        seed,
        n_features: x.n_cols(),
        trees,
    })
}
