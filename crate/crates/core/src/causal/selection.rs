use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::pipeline::DmlConfig;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::learners::{cross_validate, score, BoostedLearner, ForestLearner, Learner};
use crate::seed::{derive_seed, purpose, stream};

/// Share of rows in the training side of the diagnostic split.
pub const TRAIN_FRACTION: f64 = 0.8;
/// Cross-validation folds inside the training side.
pub const SELECTION_FOLDS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    /// `E[Y|X]` or `E[T|X]`.
    pub target: String,
    pub model: String,
    /// `r2` or `f1`.
    pub metric: String,
    /// Mean cross-validated score on the training split.
    pub train: f64,
    /// Score on the held-out split of the model refitted on the whole
    /// training split.
    pub test: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub n_train: usize,
    pub n_test: usize,
    pub rows: Vec<SelectionRow>,
}

impl SelectionReport {
    /// Fixed-width table, one line per candidate.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "first-stage selection (train n = {}, test n = {})", self.n_train, self.n_test);
        let _ = writeln!(s, "{:<8} {:<18} {:<6} {:>8} {:>8} selected", "task", "model", "metric", "train", "test");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<8} {:<18} {:<6} {:>8.4} {:>8.4} {}",
                r.target,
                r.model,
                r.metric,
                r.train,
                r.test,
                if r.selected { "*" } else { "" }
            );
        }
        s
    }
}

/// Deterministic split of row positions keyed on row ids.
pub fn train_test_split(row_ids: &[u64], train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = row_ids.len();
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::invalid(format!(
            "a {train_fraction} split of {n} rows leaves one side empty"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (row_ids[i], i));
    order.shuffle(&mut stream(seed, 0));
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_by_key(|&i| (row_ids[i], i));
    test.sort_by_key(|&i| (row_ids[i], i));
    Ok((train, test))
}

fn evaluate<L: Learner>(
    learner: &L,
    dataset: &LabeledDataset,
    y: &[f64],
    train: &[usize],
    test: &[usize],
    seed: u64,
) -> Result<(f64, f64)> {
    let cv = cross_validate(learner, &dataset.x, y, train, SELECTION_FOLDS, seed)?;
    let model = learner.fit(&dataset.x, y, train, derive_seed(seed, SELECTION_FOLDS as u64))?;
    let test_score = score(learner.task(), &model, &dataset.x, y, test)?;
    Ok((cv.mean, test_score))
}

/// Overfitting check for the first-stage learners: cross-validated training
/// scores next to held-out scores on an 80/20 split.
pub fn first_stage_diagnostic(dataset: &LabeledDataset, config: &DmlConfig, seed: u64) -> Result<SelectionReport> {
    let base = derive_seed(seed, purpose::SELECTION);
    let (train, test) = train_test_split(dataset.x.row_ids(), TRAIN_FRACTION, base)?;
    let t = dataset.treatment_f64();
    let candidates: [(&str, &str, &str); 3] = [
        ("E[Y|X]", "random_forest", "r2"),
        ("E[T|X]", "random_forest", "f1"),
        ("E[T|X]", "gradient_boosting", "f1"),
    ];
    let scores = [
        evaluate(&ForestLearner::regression(config.outcome.clone()), dataset, &dataset.y, &train, &test, derive_seed(base, 1))?,
        evaluate(&ForestLearner::classification(config.treatment.clone()), dataset, &t, &train, &test, derive_seed(base, 2))?,
        evaluate(&BoostedLearner { params: config.propensity.clone() }, dataset, &t, &train, &test, derive_seed(base, 3))?,
    ];
    let mut rows: Vec<SelectionRow> = candidates
        .iter()
        .zip(scores)
        .map(|(&(target, model, metric), (tr, te))| SelectionRow {
            target: target.into(),
            model: model.into(),
            metric: metric.into(),
            train: tr,
            test: te,
            selected: false,
        })
        .collect();
    for target in ["E[Y|X]", "E[T|X]"] {
        let best = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.target == target)
            .fold(None::<(usize, f64)>, |acc, (i, r)| match acc {
                Some((_, s)) if s >= r.train => acc,
                _ => Some((i, r.train)),
            });
        if let Some((i, _)) = best {
            rows[i].selected = true;
        }
    }
    Ok(SelectionReport {
        n_train: train.len(),
        n_test: test.len(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_disjoint_and_sized() {
        let ids: Vec<u64> = (0..100).collect();
        let (tr, te) = train_test_split(&ids, 0.8, 3).unwrap();
        assert_eq!(tr.len(), 80);
        assert_eq!(te.len(), 20);
        assert!(te.iter().all(|i| !tr.contains(i)));
        assert!(train_test_split(&ids[..1], 0.8, 3).is_err());
    }
}
