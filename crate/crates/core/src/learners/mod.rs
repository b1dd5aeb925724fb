//! First-stage and propensity learners built from a shared CART kernel.

mod boost;
mod cv;
mod forest;
pub mod metrics;
mod persist;
mod tree;

use serde::{Deserialize, Serialize};

pub use boost::{fit_boosted_on_rows, fit_gradient_boosted_classifier, logistic, BoostParams, BoostedModel, PROBABILITY_CLIP};
pub use cv::{cross_validate, fold_assignment, fold_splits, score, CvScores};
pub use forest::{fit_random_forest, fit_random_forest_on_rows, ForestModel, ForestParams, MaxFeatures};
pub use metrics::{f1_score, r2_score};
pub use persist::{load_model, save_model, SavedModel, MODEL_FORMAT, MODEL_VERSION};
pub use tree::{best_split, fit_tree, fit_tree_on_rows, midpoint, Criterion, SplitCandidate, TreeNode, TreeParams};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    /// Binary targets; predictions are class-1 probabilities.
    Classification,
}

/// A fitted model mapping a feature row to a number (a regression value or a
/// class-1 probability).
pub trait Predictor: Send + Sync {
    fn predict_row(&self, row: &[f64]) -> f64;

    fn predict(&self, x: &FeatureMatrix, rows: &[usize]) -> Vec<f64> {
        rows.iter().map(|&r| self.predict_row(x.row(r))).collect()
    }
}

/// Something that can be trained on a subset of rows.
pub trait Learner: Sync {
    type Model: Predictor;

    fn task(&self) -> Task;

    fn fit(&self, x: &FeatureMatrix, y: &[f64], rows: &[usize], seed: u64) -> Result<Self::Model>;
}

pub(crate) fn check_binary(values: impl IntoIterator<Item = f64>) -> Result<()> {
    for v in values {
        if v != 0.0 && v != 1.0 {
            return Err(Error::invalid(format!("classification target {v} is not 0/1")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestLearner {
    pub task: Task,
    pub params: ForestParams,
}

impl ForestLearner {
    pub fn regression(params: ForestParams) -> Self {
        Self {
            task: Task::Regression,
            params,
        }
    }

    pub fn classification(params: ForestParams) -> Self {
        Self {
            task: Task::Classification,
            params,
        }
    }
}

impl Learner for ForestLearner {
    type Model = ForestModel;

    fn task(&self) -> Task {
        self.task
    }

    fn fit(&self, x: &FeatureMatrix, y: &[f64], rows: &[usize], seed: u64) -> Result<ForestModel> {
        fit_random_forest_on_rows(x, y, rows, self.task, &self.params, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BoostedLearner {
    pub params: BoostParams,
}

impl Learner for BoostedLearner {
    type Model = BoostedModel;

    fn task(&self) -> Task {
        Task::Classification
    }

    fn fit(&self, x: &FeatureMatrix, y: &[f64], rows: &[usize], seed: u64) -> Result<BoostedModel> {
        fit_boosted_on_rows(x, y, rows, &self.params, seed)
    }
}

/// Predicts the training mean; the no-skill regression baseline.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeanLearner;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantModel(pub f64);

impl Predictor for ConstantModel {
    fn predict_row(&self, _row: &[f64]) -> f64 {
        self.0
    }
}

impl Learner for MeanLearner {
    type Model = ConstantModel;

    fn task(&self) -> Task {
        Task::Regression
    }

    fn fit(&self, _x: &FeatureMatrix, y: &[f64], rows: &[usize], _seed: u64) -> Result<ConstantModel> {
        if rows.is_empty() {
            return Err(Error::Empty("no training rows".into()));
        }
        Ok(ConstantModel(rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64))
    }
}
