//! Joins abundance, environmental and outcome tables into the per-cell
//! analysis dataset.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::abundance::{diversification_count, mean_coverage, AbundanceTable};
use super::grid::GridSpec;
use crate::data::{
    median_binarize, standardize, temporal_aggregate, FeatureMatrix, LabeledDataset,
    MissingYearPolicy, Scaler, YearRecord, COVARIATES,
};
use crate::error::{Error, Result};

/// Per-year environmental records with their column names.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvTable {
    pub columns: Vec<String>,
    pub records: Vec<YearRecord>,
}

impl EnvTable {
    /// Reorders columns to [`COVARIATES`], failing on the first one missing.
    pub fn canonical(&self) -> Result<EnvTable> {
        let idx: Vec<usize> = COVARIATES
            .iter()
            .map(|name| {
                self.columns
                    .iter()
                    .position(|c| c == name)
                    .ok_or_else(|| Error::MissingColumn {
                        column: name.to_string(),
                        file: None,
                    })
            })
            .collect::<Result<_>>()?;
        Ok(EnvTable {
            columns: COVARIATES.iter().map(|s| s.to_string()).collect(),
            records: self
                .records
                .iter()
                .map(|r| YearRecord {
                    cell_id: r.cell_id,
                    year: r.year,
                    values: idx.iter().map(|&k| r.values[k]).collect(),
                })
                .collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMeta {
    pub cell_id: u64,
    pub x_center: f64,
    pub y_center: f64,
    /// Mean number of crops present over the study years.
    pub diversification: f64,
    /// Mean fraction of the cell covered by parcels.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct JoinReport {
    pub study_years: Vec<i32>,
    pub env_cells: usize,
    pub outcome_cells: usize,
    pub parcel_cells: usize,
    pub dropped_missing_env: usize,
    pub dropped_missing_outcome: usize,
    pub dropped_missing_parcels: usize,
    pub dropped_outside_grid: usize,
    /// Cells dropped by the missing-year policy, per source table.
    pub env_incomplete_years: usize,
    pub outcome_incomplete_years: usize,
    pub rows: usize,
    pub treated: usize,
    pub control: usize,
    pub median_threshold: f64,
    pub median_ties: usize,
    pub zero_variance_columns: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct AssembledDataset {
    pub dataset: LabeledDataset,
    pub scaler: Scaler,
    pub cells: Vec<CellMeta>,
    pub report: JoinReport,
}

/// Temporal aggregation, inner join on cell id, median-binarized
/// diversification as treatment, standardized covariates.
pub fn assemble_dataset(
    abundance: &AbundanceTable,
    env: &EnvTable,
    outcome: &[YearRecord],
    grid: &GridSpec,
    years: &BTreeSet<i32>,
    policy: MissingYearPolicy,
) -> Result<AssembledDataset> {
    let env = env.canonical()?;
    if let Some(r) = outcome.iter().find(|r| r.values.len() != 1) {
        return Err(Error::DimensionMismatch(format!(
            "outcome record for cell {} carries {} values",
            r.cell_id,
            r.values.len()
        )));
    }
    let env_agg = temporal_aggregate(&env.records, years, policy)?;
    let out_agg = temporal_aggregate(outcome, years, policy)?;
    let coverage = mean_coverage(abundance);
    let parcel_cells: BTreeSet<u64> = abundance
        .entries()
        .filter(|(_, y, _)| years.contains(y))
        .map(|(c, _, _)| c)
        .collect();

    let mut report = JoinReport {
        study_years: years.iter().copied().collect(),
        env_cells: env_agg.cells.len() + env_agg.report.dropped_cells.len(),
        outcome_cells: out_agg.cells.len() + out_agg.report.dropped_cells.len(),
        parcel_cells: parcel_cells.len(),
        env_incomplete_years: env_agg.report.dropped_cells.len(),
        outcome_incomplete_years: out_agg.report.dropped_cells.len(),
        ..Default::default()
    };

    let mut universe: BTreeSet<u64> = env_agg.cells.keys().copied().collect();
    universe.extend(&env_agg.report.dropped_cells);
    universe.extend(out_agg.cells.keys());
    universe.extend(&out_agg.report.dropped_cells);
    universe.extend(&parcel_cells);

    let mut kept = Vec::new();
    for cell in universe {
        if grid.row_col(cell).is_none() {
            report.dropped_outside_grid += 1;
            continue;
        }
        let has_env = env_agg.cells.contains_key(&cell);
        let has_out = out_agg.cells.contains_key(&cell);
        let has_parcels = parcel_cells.contains(&cell);
        report.dropped_missing_env += usize::from(!has_env);
        report.dropped_missing_outcome += usize::from(!has_out);
        report.dropped_missing_parcels += usize::from(!has_parcels);
        if has_env && has_out && has_parcels {
            kept.push(cell);
        }
    }
    if kept.is_empty() {
        return Err(Error::Empty("no cell is present in all input tables".into()));
    }

    let mut diversification = Vec::with_capacity(kept.len());
    for &cell in &kept {
        let mut total = 0usize;
        for &year in years {
            if abundance.get(cell, year).is_some() {
                total += diversification_count(abundance, cell, year)?;
            }
        }
        diversification.push(total as f64 / years.len() as f64);
    }
    let (t, threshold) = median_binarize(&diversification)?;

    let mut values = Vec::with_capacity(kept.len() * COVARIATES.len());
    for cell in &kept {
        values.extend_from_slice(&env_agg.cells[cell]);
    }
    let raw = FeatureMatrix::new(env.columns.clone(), values, kept.clone())?;
    let (x, scaler) = standardize(&raw)?;
    let y: Vec<f64> = kept.iter().map(|c| out_agg.cells[c][0]).collect();

    let cells: Vec<CellMeta> = kept
        .iter()
        .zip(&diversification)
        .map(|(&cell_id, &d)| {
            let (x_center, y_center) = grid.cell_center(cell_id).expect("cell checked against grid");
            CellMeta {
                cell_id,
                x_center,
                y_center,
                diversification: d,
                coverage: coverage.get(&cell_id).copied().unwrap_or(0.0),
            }
        })
        .collect();

    report.rows = kept.len();
    report.treated = t.iter().filter(|&&v| v == 1).count();
    report.control = report.rows - report.treated;
    report.median_threshold = threshold;
    report.median_ties = diversification.iter().filter(|&&d| d == threshold).count();
    report.zero_variance_columns = scaler.zero_variance_columns();

    Ok(AssembledDataset {
        dataset: LabeledDataset::new(x, y, t)?,
        scaler,
        cells,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env_record(cell: u64, year: i32, base: f64) -> YearRecord {
        YearRecord {
            cell_id: cell,
            year,
            values: (0..9).map(|k| base + k as f64 * (cell as f64 + 1.0)).collect(),
        }
    }

    fn fixture(cells: &[u64], outcome_cells: &[u64]) -> (AbundanceTable, EnvTable, Vec<YearRecord>) {
        let years = [2019, 2020];
        let mut ab = Vec::new();
        let mut env = Vec::new();
        let mut out = Vec::new();
        for &c in cells {
            for y in years {
                ab.push((c, y, "wheat".to_string(), 0.5));
                if c % 2 == 0 {
                    ab.push((c, y, "barley".to_string(), 0.2));
                }
                env.push(env_record(c, y, y as f64 - 2000.0));
            }
        }
        for &c in outcome_cells {
            for y in years {
                out.push(YearRecord {
                    cell_id: c,
                    year: y,
                    values: vec![1000.0 + c as f64],
                });
            }
        }
        let table = EnvTable {
            columns: COVARIATES.iter().map(|s| s.to_string()).collect(),
            records: env,
        };
        (AbundanceTable::from_fractions(ab).unwrap(), table, out)
    }

    #[test]
    fn three_complete_cells() {
        let grid = GridSpec::new(0.0, 3.0, 1.0, 3, 3).unwrap();
        let (ab, env, out) = fixture(&[0, 1, 2], &[0, 1, 2]);
        let years: BTreeSet<i32> = [2019, 2020].into();
        let a = assemble_dataset(&ab, &env, &out, &grid, &years, MissingYearPolicy::default()).unwrap();
        assert_eq!(a.dataset.len(), 3);
        assert_eq!(a.report.rows, 3);
        assert_eq!(a.report.treated + a.report.control, 3);
        assert_eq!(a.cells[1].diversification, 1.0);
        assert_eq!(a.cells[0].diversification, 2.0);
        // median of [2, 1, 2] is 2, so nothing lies strictly above it
        assert_eq!(a.report.median_threshold, 2.0);
        assert_eq!(a.dataset.t, vec![0, 0, 0]);
        assert!((a.cells[0].coverage - 0.7).abs() < 1e-12);
    }

    #[test]
    fn missing_outcome_is_dropped_and_counted() {
        let grid = GridSpec::new(0.0, 3.0, 1.0, 3, 3).unwrap();
        let (ab, env, out) = fixture(&[0, 1, 2], &[0, 2]);
        let years: BTreeSet<i32> = [2019, 2020].into();
        let a = assemble_dataset(&ab, &env, &out, &grid, &years, MissingYearPolicy::default()).unwrap();
        assert_eq!(a.dataset.len(), 2);
        assert_eq!(a.report.dropped_missing_outcome, 1);
        assert_eq!(a.report.dropped_missing_env, 0);
        assert_eq!(a.dataset.x.row_ids(), &[0, 2]);
    }

    #[test]
    fn missing_env_column_is_named() {
        let grid = GridSpec::new(0.0, 3.0, 1.0, 3, 3).unwrap();
        let (ab, mut env, out) = fixture(&[0], &[0]);
        env.columns[8] = "other".into();
        let years: BTreeSet<i32> = [2019, 2020].into();
        let err = assemble_dataset(&ab, &env, &out, &grid, &years, MissingYearPolicy::default()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn { ref column, .. } if column == "soile"));
    }

    #[test]
    fn hundred_cells_split_at_hand_computed_median() {
        let grid = GridSpec::new(0.0, 10.0, 1.0, 10, 10).unwrap();
        let crops = ["a", "b", "c", "d", "e"];
        let mut ab = Vec::new();
        let mut env = Vec::new();
        let mut out = Vec::new();
        let mut expected_div = Vec::new();
        for c in 0..100u64 {
            let k = (c * 7 % 5 + 1) as usize;
            expected_div.push(k as f64);
            for crop in &crops[..k] {
                ab.push((c, 2020, crop.to_string(), 0.1));
            }
            env.push(env_record(c, 2020, (c % 13) as f64));
            out.push(YearRecord {
                cell_id: c,
                year: 2020,
                values: vec![c as f64],
            });
        }
        let env = EnvTable {
            columns: COVARIATES.iter().map(|s| s.to_string()).collect(),
            records: env,
        };
        let years: BTreeSet<i32> = [2020].into();
        let a = assemble_dataset(
            &AbundanceTable::from_fractions(ab).unwrap(),
            &env,
            &out,
            &grid,
            &years,
            MissingYearPolicy::default(),
        )
        .unwrap();
        let mut sorted = expected_div.clone();
        sorted.sort_by(f64::total_cmp);
        let med = 0.5 * (sorted[49] + sorted[50]);
        assert_eq!(a.report.median_threshold, med);
        let expect_t: Vec<u8> = expected_div.iter().map(|&d| u8::from(d > med)).collect();
        assert_eq!(a.dataset.t, expect_t);
        let ties = expected_div.iter().filter(|&&d| d == med).count();
        assert!(a.report.treated.abs_diff(a.report.control) <= ties);
    }
}
