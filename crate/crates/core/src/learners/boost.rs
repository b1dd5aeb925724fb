//! Logistic-loss gradient boosting with Newton leaf values.

use serde::{Deserialize, Serialize};

use super::tree::{fit_tree_on_rows, TreeNode, TreeParams};
use super::{check_binary, Predictor};
use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::seed::stream;

pub const PROBABILITY_CLIP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf_size: usize,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_leaf_size: 5,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::invalid("learning_rate must be finite and non-negative"));
        }
        if self.min_leaf_size == 0 {
            return Err(Error::invalid("min_leaf_size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    /// Log-odds of the training base rate.
    pub base_score: f64,
    pub learning_rate: f64,
    pub n_features: usize,
    /// Regression trees whose leaves hold Newton steps.
    pub stages: Vec<TreeNode>,
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn clip(p: f64) -> f64 {
    p.clamp(PROBABILITY_CLIP, 1.0 - PROBABILITY_CLIP)
}

impl BoostedModel {
    pub fn raw_score(&self, row: &[f64]) -> f64 {
        let stages: f64 = self.stages.iter().map(|s| s.predict(row)).sum();
        self.base_score + self.learning_rate * stages
    }
}

impl Predictor for BoostedModel {
    /// Clipped probability of class 1.
    fn predict_row(&self, row: &[f64]) -> f64 {
        clip(logistic(self.raw_score(row)))
    }
}

pub fn fit_gradient_boosted_classifier(
    x: &FeatureMatrix,
    t: &[f64],
    params: &BoostParams,
    seed: u64,
) -> Result<BoostedModel> {
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    fit_boosted_on_rows(x, t, &rows, params, seed)
}

/// Each round fits a depth-limited regression tree to `t - p`, then sets
/// every leaf to `Σ(t - p) / Σ p(1 - p)` over its training rows.
pub fn fit_boosted_on_rows(
    x: &FeatureMatrix,
    t: &[f64],
    rows: &[usize],
    params: &BoostParams,
    seed: u64,
) -> Result<BoostedModel> {
    params.validate()?;
    if t.len() != x.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} rows",
            t.len(),
            x.n_rows()
        )));
    }
    check_binary(rows.iter().map(|&r| t[r]))?;
    let positives = rows.iter().filter(|&&r| t[r] == 1.0).count();
    if positives == 0 || positives == rows.len() {
        return Err(Error::SingleClass(format!(
            "{positives} of {} training labels are 1",
            rows.len()
        )));
    }
    let rate = positives as f64 / rows.len() as f64;
    let base_score = (rate / (1.0 - rate)).ln();
    let tree_params = TreeParams::regression(params.max_depth, params.min_leaf_size);

    let mut raw = vec![base_score; x.n_rows()];
    let mut residual = vec![0.0; x.n_rows()];
    let mut stages = Vec::with_capacity(params.n_rounds);
    for round in 0..params.n_rounds {
        for &r in rows {
            residual[r] = t[r] - clip(logistic(raw[r]));
        }
        let mut rng = stream(seed, round as u64);
        let mut tree = fit_tree_on_rows(x, &residual, rows, &tree_params, &mut rng);
        let n_leaves = tree.n_leaves();
        let mut num = vec![0.0; n_leaves];
        let mut den = vec![0.0; n_leaves];
        for &r in rows {
            let leaf = tree.leaf_index(x.row(r));
            let p = clip(logistic(raw[r]));
            num[leaf] += residual[r];
            den[leaf] += p * (1.0 - p);
        }
        let steps: Vec<f64> = num.iter().zip(&den).map(|(n, d)| n / d).collect();
        tree.set_leaf_values(&steps);
        for &r in rows {
            raw[r] += params.learning_rate * tree.predict(x.row(r));
        }
        stages.push(tree);
    }
    Ok(BoostedModel {
        base_score,
        learning_rate: params.learning_rate,
        n_features: x.n_cols(),
        stages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(values: &[f64]) -> FeatureMatrix {
        let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
        FeatureMatrix::from_rows(vec!["x".into()], &rows).unwrap()
    }

    #[test]
    fn constant_features_predict_base_rate() {
        let x = one_d(&[1.0; 10]);
        let t = [1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let m = fit_gradient_boosted_classifier(&x, &t, &BoostParams::default(), 0).unwrap();
        for row in x.rows() {
            assert!((m.predict_row(row) - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn separable_data_is_classified_perfectly() {
        let values: Vec<f64> = (0..40).map(|i| i as f64 / 4.0).collect();
        let t: Vec<f64> = values.iter().map(|&v| f64::from(v > 4.9)).collect();
        let x = one_d(&values);
        let params = BoostParams {
            n_rounds: 50,
            ..Default::default()
        };
        let m = fit_gradient_boosted_classifier(&x, &t, &params, 0).unwrap();
        let correct = x
            .rows()
            .zip(&t)
            .filter(|(r, &ti)| f64::from(m.predict_row(r) >= 0.5) == ti)
            .count();
        assert_eq!(correct, 40);
    }

    #[test]
    fn zero_learning_rate_is_constant() {
        let values: Vec<f64> = (0..20).map(f64::from).collect();
        let t: Vec<f64> = values.iter().map(|&v| f64::from(v >= 5.0)).collect();
        let x = one_d(&values);
        let params = BoostParams {
            learning_rate: 0.0,
            n_rounds: 7,
            ..Default::default()
        };
        let m = fit_gradient_boosted_classifier(&x, &t, &params, 0).unwrap();
        for row in x.rows() {
            assert!((m.predict_row(row) - 0.75).abs() < 1e-12);
        }
    }

    #[test]
    fn probabilities_stay_clipped() {
        let values: Vec<f64> = (0..30).map(f64::from).collect();
        let t: Vec<f64> = values.iter().map(|&v| f64::from(v >= 15.0)).collect();
        let x = one_d(&values);
        let params = BoostParams {
            n_rounds: 300,
            learning_rate: 1.0,
            max_depth: 3,
            min_leaf_size: 1,
        };
        let m = fit_gradient_boosted_classifier(&x, &t, &params, 0).unwrap();
        for row in x.rows() {
            let p = m.predict_row(row);
            assert!(p >= PROBABILITY_CLIP && p <= 1.0 - PROBABILITY_CLIP);
        }
    }

    #[test]
    fn single_class_is_an_error() {
        let x = one_d(&[0.0, 1.0, 2.0]);
        let err = fit_gradient_boosted_classifier(&x, &[1.0, 1.0, 1.0], &BoostParams::default(), 0);
        assert!(matches!(err, Err(Error::SingleClass(_))));
    }
}
