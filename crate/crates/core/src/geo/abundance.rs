//! Crop abundance per grid cell and year, the diversification count and the
//! agricultural-area mask.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::geometry::{clip_polygon_to_cell, parse_wkt_polygon, Ring};
use super::grid::GridSpec;
use crate::error::{Error, Result};

/// Abundance below this counts as absent.
pub const ABUNDANCE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParcelRecord {
    pub parcel_id: String,
    pub year: i32,
    pub crop_code: String,
    pub ring: Ring,
}

impl ParcelRecord {
    pub fn new(
        parcel_id: impl Into<String>,
        year: i32,
        crop_code: impl Into<String>,
        vertices: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let parcel_id = parcel_id.into();
        let ring = Ring::new(&parcel_id, vertices)?;
        Ok(Self {
            parcel_id,
            year,
            crop_code: crop_code.into(),
            ring,
        })
    }

    pub fn from_wkt(parcel_id: &str, year: i32, crop_code: &str, wkt: &str) -> Result<Self> {
        let pts = parse_wkt_polygon(wkt).map_err(|reason| Error::DegeneratePolygon {
            parcel_id: parcel_id.to_string(),
            reason,
        })?;
        Self::new(parcel_id, year, crop_code, pts)
    }
}

/// Abundances of one (cell, year).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CellYear {
    /// Fraction of the cell covered by each crop.
    pub crops: BTreeMap<String, f64>,
    /// Fraction of the cell covered by any parcel, clamped to 1.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AbundanceTable {
    entries: BTreeMap<(u64, i32), CellYear>,
    years: BTreeSet<i32>,
}

impl AbundanceTable {
    pub fn get(&self, cell_id: u64, year: i32) -> Option<&CellYear> {
        self.entries.get(&(cell_id, year))
    }

    pub fn entries(&self) -> impl Iterator<Item = (u64, i32, &CellYear)> {
        self.entries.iter().map(|(&(c, y), e)| (c, y, e))
    }

    /// Years carried by at least one parcel.
    pub fn years(&self) -> &BTreeSet<i32> {
        &self.years
    }

    pub fn cells(&self) -> BTreeSet<u64> {
        self.entries.keys().map(|&(c, _)| c).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Builds a table directly from fractions, e.g. for fixtures.
    pub fn from_fractions(
        rows: impl IntoIterator<Item = (u64, i32, String, f64)>,
    ) -> Result<Self> {
        let mut areas: BTreeMap<(u64, i32), BTreeMap<String, f64>> = BTreeMap::new();
        let mut years = BTreeSet::new();
        for (cell, year, crop, frac) in rows {
            if !frac.is_finite() || frac < 0.0 {
                return Err(Error::invalid(format!(
                    "abundance {frac} for cell {cell} year {year} crop {crop}"
                )));
            }
            years.insert(year);
            *areas.entry((cell, year)).or_default().entry(crop).or_default() += frac;
        }
        Ok(Self::normalize(areas, 1.0, years))
    }

    /// Converts covered areas into clamped fractions. Each crop is capped at
    /// the full cell; if overlapping parcels push the crop total past the
    /// cell, all crops are scaled down proportionally so they sum to 1.
    fn normalize(
        areas: BTreeMap<(u64, i32), BTreeMap<String, f64>>,
        cell_area: f64,
        years: BTreeSet<i32>,
    ) -> Self {
        let entries = areas
            .into_iter()
            .map(|(key, crops)| {
                let mut crops: BTreeMap<String, f64> = crops
                    .into_iter()
                    .map(|(c, a)| (c, (a / cell_area).clamp(0.0, 1.0)))
                    .collect();
                let total: f64 = crops.values().sum();
                if total > 1.0 {
                    crops.values_mut().for_each(|v| *v /= total);
                }
                let coverage = total.min(1.0);
                (key, CellYear { crops, coverage })
            })
            .collect();
        Self { entries, years }
    }
}

/// Clips every parcel against the grid and accumulates per-crop covered
/// fractions. Parcels are clipped in parallel; contributions are merged in
/// parcel order, so the result is independent of scheduling.
pub fn compute_abundance(parcels: &[ParcelRecord], grid: &GridSpec) -> Result<AbundanceTable> {
    grid.validate()?;
    let pieces: Vec<Vec<(u64, f64)>> = parcels
        .par_iter()
        .map(|p| {
            let Some(((r0, r1), (c0, c1))) = grid.cells_overlapping(&p.ring.bounds()) else {
                return Vec::new();
            };
            let mut out = Vec::new();
            for i in r0..=r1 {
                for j in c0..=c1 {
                    let area = clip_polygon_to_cell(&p.ring, &grid.cell_bounds(i, j));
                    if area > 0.0 {
                        out.push((grid.cell_id(i, j), area));
                    }
                }
            }
            out
        })
        .collect();

    let mut areas: BTreeMap<(u64, i32), BTreeMap<String, f64>> = BTreeMap::new();
    let mut years = BTreeSet::new();
    for (parcel, cells) in parcels.iter().zip(pieces) {
        years.insert(parcel.year);
        for (cell, area) in cells {
            *areas
                .entry((cell, parcel.year))
                .or_default()
                .entry(parcel.crop_code.clone())
                .or_default() += area;
        }
    }
    Ok(AbundanceTable::normalize(areas, grid.cell_area(), years))
}

/// Number of crops with abundance above [`ABUNDANCE_EPS`] in one cell-year.
pub fn diversification_count(table: &AbundanceTable, cell_id: u64, year: i32) -> Result<usize> {
    let entry = table
        .get(cell_id, year)
        .ok_or(Error::MissingCell { cell_id, year })?;
    Ok(entry.crops.values().filter(|&&a| a > ABUNDANCE_EPS).count())
}

/// Mean parcel coverage of each cell over the table's years; a year with
/// no parcels in the cell counts as zero coverage.
pub fn mean_coverage(table: &AbundanceTable) -> BTreeMap<u64, f64> {
    let n_years = table.years().len().max(1) as f64;
    let mut sums: BTreeMap<u64, f64> = BTreeMap::new();
    for (cell, _, e) in table.entries() {
        *sums.entry(cell).or_default() += e.coverage;
    }
    sums.into_iter().map(|(c, s)| (c, s / n_years)).collect()
}

/// Cells whose mean coverage reaches `threshold` (inclusive).
pub fn agricultural_mask(coverage: &BTreeMap<u64, f64>, threshold: f64) -> Result<BTreeSet<u64>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::invalid(format!(
            "agricultural threshold {threshold} outside [0, 1]"
        )));
    }
    Ok(coverage
        .iter()
        .filter(|(_, &c)| c >= threshold)
        .map(|(&id, _)| id)
        .collect())
}
