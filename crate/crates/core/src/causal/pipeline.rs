use serde::{Deserialize, Serialize};

use super::crossfit::{cross_fit_residuals, ResidualSet};
use super::effect::EffectEstimate;
use super::final_stage::{fit_linear_cate, LinearCateModel};
use super::propensity::estimate_propensity;
use super::trim::{trim_overlap, TrimReport, Trimmed};
use crate::data::{LabeledDataset, Scaler};
use crate::error::{Error, Result};
use crate::learners::{BoostParams, ForestLearner, ForestParams};

/// Estimator settings for one DML run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DmlConfig {
    pub folds: usize,
    pub trim_lo: f64,
    pub trim_hi: f64,
    pub propensity: BoostParams,
    pub outcome: ForestParams,
    pub treatment: ForestParams,
}

impl Default for DmlConfig {
    fn default() -> Self {
        Self {
            folds: 3,
            trim_lo: 0.2,
            trim_hi: 0.8,
            propensity: BoostParams::default(),
            outcome: ForestParams::regression(),
            treatment: ForestParams::classification(),
        }
    }
}

impl DmlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::invalid(format!("folds must be at least 2, got {}", self.folds)));
        }
        if !(0.0..=1.0).contains(&self.trim_lo) || !(0.0..=1.0).contains(&self.trim_hi) || self.trim_lo > self.trim_hi {
            return Err(Error::invalid(format!(
                "trim bounds [{}, {}] must satisfy 0 <= lo <= hi <= 1",
                self.trim_lo, self.trim_hi
            )));
        }
        self.propensity.validate()?;
        self.outcome.validate()?;
        self.treatment.validate()
    }
}

/// Average effect over the analysis population with sample accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteSummary {
    pub estimate: EffectEstimate,
    pub mean_outcome: f64,
    /// Point estimate as a percentage of `mean_outcome`.
    pub percent_of_mean_outcome: f64,
    pub trim: TrimReport,
}

#[derive(Debug, Clone)]
pub struct DmlFit {
    /// Out-of-fold propensity per input row.
    pub propensity: Vec<f64>,
    pub trimmed: Trimmed,
    pub residuals: ResidualSet,
    pub model: LinearCateModel,
    pub ate: AteSummary,
}

/// Propensity scores, overlap trimming, cross-fitted residuals and the
/// linear final stage. `dataset.x` must already be standardized by `scaler`.
pub fn run_dml(dataset: &LabeledDataset, scaler: &Scaler, config: &DmlConfig, seed: u64) -> Result<DmlFit> {
    config.validate()?;
    let propensity = estimate_propensity(&dataset.x, &dataset.t, &config.propensity, config.folds, seed)?;
    let trimmed = trim_overlap(dataset, &propensity, config.trim_lo, config.trim_hi)?;
    let residuals = cross_fit_residuals(
        &trimmed.dataset,
        config.folds,
        &ForestLearner::regression(config.outcome.clone()),
        &ForestLearner::classification(config.treatment.clone()),
        seed,
    )?;
    let model = fit_linear_cate(&residuals, &trimmed.dataset.x, scaler)?;
    let estimate = model.ate(&trimmed.dataset.x)?;
    let y = &trimmed.dataset.y;
    let mean_outcome = y.iter().sum::<f64>() / y.len() as f64;
    let ate = AteSummary {
        estimate,
        mean_outcome,
        percent_of_mean_outcome: 100.0 * estimate.point / mean_outcome,
        trim: trimmed.report,
    };
    Ok(DmlFit {
        propensity,
        trimmed,
        residuals,
        model,
        ate,
    })
}
