use rayon::prelude::*;

use super::folds::FoldPlan;
use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::learners::{BoostParams, BoostedLearner, Learner, Predictor};
use crate::seed::{derive_seed, purpose};

/// Out-of-fold `P(T = 1 | X)` from gradient-boosted classifiers: each row is
/// scored by the model trained on the other `k - 1` folds.
pub fn estimate_propensity(x: &FeatureMatrix, t: &[u8], params: &BoostParams, k: usize, seed: u64) -> Result<Vec<f64>> {
    if t.len() != x.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} treatments for {} rows",
            t.len(),
            x.n_rows()
        )));
    }
    let treated = t.iter().filter(|&&v| v == 1).count();
    if treated == 0 || treated == t.len() {
        return Err(Error::SingleClass(format!(
            "{treated} of {} rows are treated; both groups are needed",
            t.len()
        )));
    }
    let base = derive_seed(seed, purpose::PROPENSITY);
    let plan = FoldPlan::new(x.row_ids(), k, base)?;
    let tf: Vec<f64> = t.iter().map(|&v| f64::from(v)).collect();
    let learner = BoostedLearner { params: params.clone() };
    let per_fold = (0..k)
        .into_par_iter()
        .map(|f| {
            let model = learner.fit(x, &tf, &plan.train[f], derive_seed(base, f as u64))?;
            Ok(model.predict(x, &plan.test[f]))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut scores = vec![0.0; x.n_rows()];
    for (f, preds) in per_fold.into_iter().enumerate() {
        for (&r, p) in plan.test[f].iter().zip(preds) {
            scores[r] = p;
        }
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::logistic;
    use crate::seed::stream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn constant_features_give_base_rate() {
        let n = 3000;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![1.0, 2.0]).collect();
        let x = FeatureMatrix::from_rows(vec!["a".into(), "b".into()], &rows).unwrap();
        let t: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let s = estimate_propensity(&x, &t, &BoostParams::default(), 3, 4).unwrap();
        assert!(s.iter().all(|p| (p - 0.5).abs() <= 0.02), "{s:?}");
    }

    #[test]
    fn separable_treatment_is_pushed_to_extremes() {
        let n = 300;
        let t: Vec<u8> = (0..n).map(|i| u8::from(i >= n / 2)).collect();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 + 1000.0 * f64::from(t[i])]).collect();
        let x = FeatureMatrix::from_rows(vec!["a".into()], &rows).unwrap();
        let s = estimate_propensity(&x, &t, &BoostParams::default(), 3, 4).unwrap();
        for (p, &ti) in s.iter().zip(&t) {
            if ti == 1 {
                assert!(*p > 0.8, "{p}");
            } else {
                assert!(*p < 0.2);
            }
        }
    }

    #[test]
    fn recovers_logistic_propensity() {
        let n = 5000;
        let mut rng = stream(77, 0);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let truth: Vec<f64> = rows.iter().map(|r| logistic(r[0])).collect();
        let t: Vec<u8> = truth.iter().map(|&p| u8::from(rng.random::<f64>() < p)).collect();
        let x = FeatureMatrix::from_rows(vec!["a".into(), "b".into(), "c".into()], &rows).unwrap();
        let s = estimate_propensity(&x, &t, &BoostParams::default(), 3, 1).unwrap();
        let mae = s.iter().zip(&truth).map(|(a, b)| (a - b).abs()).sum::<f64>() / n as f64;
        assert!(mae <= 0.1, "mean abs error {mae}");
    }

    #[test]
    fn single_class_is_rejected() {
        let x = FeatureMatrix::from_rows(vec!["a".into()], &[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let err = estimate_propensity(&x, &[1, 1, 1], &BoostParams::default(), 3, 0).unwrap_err();
        assert!(matches!(err, Error::SingleClass(_)));
    }
}
