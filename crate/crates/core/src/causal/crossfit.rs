use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::FoldPlan;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::learners::{Learner, Predictor};
use crate::seed::{derive_seed, purpose};

/// First-stage residuals aligned with the rows of the source dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSet {
    /// `Y - E[Y|X]`, out of fold.
    pub y_res: Vec<f64>,
    /// `T - P(T=1|X)`, out of fold.
    pub t_res: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub t_hat: Vec<f64>,
    pub fold_id: Vec<usize>,
    /// Training positions of the models used for fold `f`.
    #[serde(skip)]
    pub fold_train_rows: Vec<Vec<usize>>,
}

impl ResidualSet {
    pub fn len(&self) -> usize {
        self.y_res.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_res.is_empty()
    }

    /// Builds a set from precomputed residuals, all in one pseudo-fold.
    pub fn from_residuals(y_res: Vec<f64>, t_res: Vec<f64>) -> Result<Self> {
        if y_res.len() != t_res.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} outcome residuals, {} treatment residuals",
                y_res.len(),
                t_res.len()
            )));
        }
        let n = y_res.len();
        Ok(Self {
            y_res,
            t_res,
            y_hat: vec![0.0; n],
            t_hat: vec![0.0; n],
            fold_id: vec![0; n],
            fold_train_rows: vec![Vec::new()],
        })
    }

    pub fn y_res_norm(&self) -> f64 {
        self.y_res.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// K-fold cross-fitting: for each fold, `E[Y|X]` and `P(T=1|X)` are fitted on
/// the other folds and evaluated on the held-out one.
pub fn cross_fit_residuals<LY, LT>(
    dataset: &LabeledDataset,
    k: usize,
    outcome: &LY,
    treatment: &LT,
    seed: u64,
) -> Result<ResidualSet>
where
    LY: Learner,
    LT: Learner,
{
    let n = dataset.len();
    let plan = FoldPlan::new(dataset.x.row_ids(), k, derive_seed(seed, purpose::CROSS_FIT))?;
    for (f, test) in plan.test.iter().enumerate() {
        let treated = test.iter().filter(|&&r| dataset.t[r] == 1).count();
        if treated == 0 || treated == test.len() {
            let missing = if treated == 0 { "treated" } else { "control" };
            return Err(Error::SingleClass(format!(
                "cross-fitting fold {f} of {k} has no {missing} rows; use fewer folds or more data"
            )));
        }
    }
    let t = dataset.treatment_f64();
    let y_seed = derive_seed(seed, purpose::OUTCOME_MODEL);
    let t_seed = derive_seed(seed, purpose::TREATMENT_MODEL);
    let per_fold = (0..k)
        .into_par_iter()
        .map(|f| {
            let train = &plan.train[f];
            let test = &plan.test[f];
            let (my, mt) = rayon::join(
                || outcome.fit(&dataset.x, &dataset.y, train, derive_seed(y_seed, f as u64)),
                || treatment.fit(&dataset.x, &t, train, derive_seed(t_seed, f as u64)),
            );
            let (my, mt) = (my?, mt?);
            Ok((my.predict(&dataset.x, test), mt.predict(&dataset.x, test)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut y_hat = vec![0.0; n];
    let mut t_hat = vec![0.0; n];
    for (f, (py, pt)) in per_fold.into_iter().enumerate() {
        for ((&r, a), b) in plan.test[f].iter().zip(py).zip(pt) {
            y_hat[r] = a;
            t_hat[r] = b;
        }
    }
    Ok(ResidualSet {
        y_res: dataset.y.iter().zip(&y_hat).map(|(y, h)| y - h).collect(),
        t_res: t.iter().zip(&t_hat).map(|(v, h)| v - h).collect(),
        y_hat,
        t_hat,
        fold_id: plan.fold_id,
        fold_train_rows: plan.train,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureMatrix;
    use crate::learners::{ForestLearner, ForestParams, MeanLearner};
    use crate::seed::stream;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn random_dataset(n: usize, seed: u64) -> LabeledDataset {
        let mut rng = stream(seed, 0);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let y = rows.iter().map(|r| 3.0 * r[0] + rng.random::<f64>()).collect();
        let t = (0..n).map(|_| u8::from(rng.random::<bool>())).collect();
        let x = FeatureMatrix::from_rows(vec!["a".into(), "b".into()], &rows).unwrap();
        LabeledDataset::new(x, y, t).unwrap()
    }

    fn small_forests() -> (ForestLearner, ForestLearner) {
        let mut p = ForestParams::regression();
        p.n_trees = 10;
        p.max_depth = 6;
        let mut c = ForestParams::classification();
        c.n_trees = 10;
        c.max_depth = 6;
        (ForestLearner::regression(p), ForestLearner::classification(c))
    }

    #[test]
    fn residuals_are_out_of_fold() {
        let d = random_dataset(150, 1);
        let (ly, lt) = small_forests();
        let r = cross_fit_residuals(&d, 3, &ly, &lt, 5).unwrap();
        assert_eq!(r.len(), 150);
        for i in 0..150 {
            assert!(!r.fold_train_rows[r.fold_id[i]].contains(&i));
            assert_eq!(r.y_res[i], d.y[i] - r.y_hat[i]);
            assert!((0.0..=1.0).contains(&r.t_hat[i]));
        }
    }

    #[test]
    fn independent_treatment_residuals_center_on_zero() {
        let n = 2000;
        let d = random_dataset(n, 2);
        let r = cross_fit_residuals(&d, 3, &MeanLearner, &MeanLearner, 5).unwrap();
        let mean = r.t_res.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() <= 3.0 * (0.25 / n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn row_permutation_only_permutes_residuals() {
        let d = random_dataset(120, 3);
        let (ly, lt) = small_forests();
        let base = cross_fit_residuals(&d, 3, &ly, &lt, 11).unwrap();
        let mut perm: Vec<usize> = (0..120).collect();
        perm.shuffle(&mut stream(4, 4));
        let shuffled = d.select_rows(&perm);
        let r = cross_fit_residuals(&shuffled, 3, &ly, &lt, 11).unwrap();
        for (pos, &orig) in perm.iter().enumerate() {
            assert_eq!(r.y_res[pos], base.y_res[orig]);
            assert_eq!(r.t_res[pos], base.t_res[orig]);
            assert_eq!(r.fold_id[pos], base.fold_id[orig]);
        }
    }

    #[test]
    fn fold_without_treated_rows_is_an_error() {
        let rows: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64]).collect();
        let x = FeatureMatrix::from_rows(vec!["a".into()], &rows).unwrap();
        let mut t = vec![0u8; 9];
        t[0] = 1;
        let d = LabeledDataset::new(x, vec![0.0; 9], t).unwrap();
        let err = cross_fit_residuals(&d, 3, &MeanLearner, &MeanLearner, 0).unwrap_err();
        assert!(matches!(err, Error::SingleClass(ref m) if m.contains("fewer folds")));
    }
}
