use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};

/// Kept and removed counts per treatment arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrimReport {
    pub kept_treated: usize,
    pub kept_control: usize,
    pub removed_treated: usize,
    pub removed_control: usize,
}

impl TrimReport {
    pub fn kept(&self) -> usize {
        self.kept_treated + self.kept_control
    }

    pub fn removed(&self) -> usize {
        self.removed_treated + self.removed_control
    }
}

#[derive(Debug, Clone)]
pub struct Trimmed {
    /// Retained rows, carrying their propensity scores.
    pub dataset: LabeledDataset,
    /// Positions of retained rows in the input.
    pub kept_rows: Vec<usize>,
    pub report: TrimReport,
}

/// Keeps rows whose score lies in `[lo, hi]`, bounds inclusive.
pub fn trim_overlap(dataset: &LabeledDataset, scores: &[f64], lo: f64, hi: f64) -> Result<Trimmed> {
    if scores.len() != dataset.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores for {} rows",
            scores.len(),
            dataset.len()
        )));
    }
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
        return Err(Error::invalid(format!("trim bounds [{lo}, {hi}] must satisfy 0 <= lo <= hi <= 1")));
    }
    let mut report = TrimReport::default();
    let mut kept_rows = Vec::new();
    for (i, (&s, &t)) in scores.iter().zip(&dataset.t).enumerate() {
        let keep = lo <= s && s <= hi;
        match (keep, t) {
            (true, 1) => report.kept_treated += 1,
            (true, _) => report.kept_control += 1,
            (false, 1) => report.removed_treated += 1,
            (false, _) => report.removed_control += 1,
        }
        if keep {
            kept_rows.push(i);
        }
    }
    if kept_rows.is_empty() {
        return Err(Error::NoOverlap {
            lo,
            hi,
            removed: dataset.len(),
        });
    }
    let kept_scores = kept_rows.iter().map(|&i| scores[i]).collect();
    let dataset = dataset.select_rows(&kept_rows).with_propensity(kept_scores)?;
    Ok(Trimmed {
        dataset,
        kept_rows,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureMatrix;

    fn dataset(n: usize) -> LabeledDataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let x = FeatureMatrix::from_rows(vec!["x".into()], &rows).unwrap();
        LabeledDataset::new(x, vec![0.0; n], (0..n).map(|i| (i % 2) as u8).collect()).unwrap()
    }

    #[test]
    fn boundaries_are_kept() {
        let d = dataset(5);
        let t = trim_overlap(&d, &[0.1, 0.2, 0.5, 0.8, 0.9], 0.2, 0.8).unwrap();
        assert_eq!(t.kept_rows, vec![1, 2, 3]);
        assert_eq!(t.report.kept(), 3);
        assert_eq!(t.report.removed(), 2);
        assert_eq!(t.report.kept_treated, 2);
        assert_eq!(t.dataset.propensity.as_deref(), Some(&[0.2, 0.5, 0.8][..]));
    }

    #[test]
    fn identity_cases() {
        let d = dataset(4);
        let t = trim_overlap(&d, &[0.5; 4], 0.2, 0.8).unwrap();
        assert_eq!(t.kept_rows, vec![0, 1, 2, 3]);
        let t = trim_overlap(&d, &[0.0, 1.0, 0.3, 0.99], 0.0, 1.0).unwrap();
        assert_eq!(t.kept_rows.len(), 4);
    }

    #[test]
    fn nothing_left_is_no_overlap() {
        let d = dataset(3);
        let err = trim_overlap(&d, &[0.01, 0.95, 0.99], 0.2, 0.8).unwrap_err();
        assert!(matches!(err, Error::NoOverlap { removed: 3, .. }));
        assert!(trim_overlap(&d, &[0.5; 3], 0.9, 0.1).is_err());
    }
}
