use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{f1_score, r2_score};
use super::{Learner, Predictor, Task};
use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::seed::{derive_seed, stream};

/// Shuffled fold labels in `0..k`; fold sizes differ by at most one.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::invalid(format!("{k} folds for {n} rows")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, u64::MAX));
    let mut folds = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        folds[row] = pos % k;
    }
    Ok(folds)
}

/// `(train, test)` row lists per fold.
pub fn fold_splits(folds: &[usize], k: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    (0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..folds.len()).partition(|&i| folds[i] == f);
            (train, test)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScores {
    pub fold_scores: Vec<f64>,
    pub mean: f64,
}

/// Held-out score of a fitted model: R² for regression, F1 at a 0.5
/// probability cut for classification.
pub fn score<P: Predictor>(task: Task, model: &P, x: &FeatureMatrix, y: &[f64], rows: &[usize]) -> Result<f64> {
    let pred = model.predict(x, rows);
    let truth: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
    match task {
        Task::Regression => r2_score(&truth, &pred),
        Task::Classification => {
            let t: Vec<u8> = truth.iter().map(|&v| u8::from(v == 1.0)).collect();
            let p: Vec<u8> = pred.iter().map(|&v| u8::from(v >= 0.5)).collect();
            f1_score(&t, &p)
        }
    }
}

/// K-fold cross-validation over `rows`. Fold `f` trains with seed
/// `derive_seed(seed, f)`.
pub fn cross_validate<L: Learner>(
    learner: &L,
    x: &FeatureMatrix,
    y: &[f64],
    rows: &[usize],
    k: usize,
    seed: u64,
) -> Result<CvScores> {
    let folds = fold_assignment(rows.len(), k, seed)?;
    let splits = fold_splits(&folds, k);
    let fold_scores = splits
        .par_iter()
        .enumerate()
        .map(|(f, (train, test))| {
            let train: Vec<usize> = train.iter().map(|&i| rows[i]).collect();
            let test: Vec<usize> = test.iter().map(|&i| rows[i]).collect();
            let model = learner.fit(x, y, &train, derive_seed(seed, f as u64))?;
            score(learner.task(), &model, x, y, &test)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = fold_scores.iter().sum::<f64>() / k as f64;
    Ok(CvScores { fold_scores, mean })
}
