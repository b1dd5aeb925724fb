use serde::{Deserialize, Serialize};

use super::geometry::Bounds;
use crate::error::{Error, Result};

/// Regular north-up grid. Row `i` counts downward from `origin_y`, column
/// `j` rightward from `origin_x`; cell ids are row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub origin_x: f64,
    pub origin_y: f64,
    pub cell_size: f64,
    pub n_cols: u32,
    pub n_rows: u32,
}

impl GridSpec {
    pub fn new(origin_x: f64, origin_y: f64, cell_size: f64, n_cols: u32, n_rows: u32) -> Result<Self> {
        let g = Self {
            origin_x,
            origin_y,
            cell_size,
            n_cols,
            n_rows,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return Err(Error::invalid("grid cell_size must be positive"));
        }
        if !self.origin_x.is_finite() || !self.origin_y.is_finite() {
            return Err(Error::invalid("grid origin must be finite"));
        }
        if self.n_cols == 0 || self.n_rows == 0 {
            return Err(Error::invalid("grid must have at least one row and column"));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> u64 {
        u64::from(self.n_cols) * u64::from(self.n_rows)
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_size * self.cell_size
    }

    pub fn cell_id(&self, row: u32, col: u32) -> u64 {
        u64::from(row) * u64::from(self.n_cols) + u64::from(col)
    }

    pub fn row_col(&self, cell_id: u64) -> Option<(u32, u32)> {
        (cell_id < self.n_cells()).then(|| {
            let n = u64::from(self.n_cols);
            ((cell_id / n) as u32, (cell_id % n) as u32)
        })
    }

    pub fn cell_bounds(&self, row: u32, col: u32) -> Bounds {
        let s = self.cell_size;
        Bounds {
            x_min: self.origin_x + f64::from(col) * s,
            x_max: self.origin_x + f64::from(col + 1) * s,
            y_min: self.origin_y - f64::from(row + 1) * s,
            y_max: self.origin_y - f64::from(row) * s,
        }
    }

    pub fn cell_center(&self, cell_id: u64) -> Option<(f64, f64)> {
        let (i, j) = self.row_col(cell_id)?;
        let s = self.cell_size;
        Some((
            self.origin_x + (f64::from(j) + 0.5) * s,
            self.origin_y - (f64::from(i) + 0.5) * s,
        ))
    }

    /// Inclusive (row, col) ranges of cells whose closure meets `b`, or
    /// `None` when `b` lies entirely off the grid.
    pub fn cells_overlapping(&self, b: &Bounds) -> Option<((u32, u32), (u32, u32))> {
        let s = self.cell_size;
        let col_lo = ((b.x_min - self.origin_x) / s).floor();
        let col_hi = ((b.x_max - self.origin_x) / s).floor();
        let row_lo = ((self.origin_y - b.y_max) / s).floor();
        let row_hi = ((self.origin_y - b.y_min) / s).floor();
        let clamp = |v: f64, n: u32| -> Option<u32> {
            if v < 0.0 {
                Some(0)
            } else if v >= f64::from(n) {
                None
            } else {
                Some(v as u32)
            }
        };
        if col_hi < 0.0 || row_hi < 0.0 {
            return None;
        }
        let c0 = clamp(col_lo, self.n_cols)?;
        let r0 = clamp(row_lo, self.n_rows)?;
        let c1 = clamp(col_hi, self.n_cols).unwrap_or(self.n_cols - 1);
        let r1 = clamp(row_hi, self.n_rows).unwrap_or(self.n_rows - 1);
        Some(((r0, r1), (c0, c1)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_row_major_and_bijective() {
        let g = GridSpec::new(10.0, 20.0, 2.0, 4, 3).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for i in 0..3 {
            for j in 0..4 {
                let id = g.cell_id(i, j);
                assert_eq!(g.row_col(id), Some((i, j)));
                seen.insert(id);
            }
        }
        assert_eq!(seen.len(), 12);
        assert_eq!(g.row_col(12), None);
        let b = g.cell_bounds(1, 2);
        assert_eq!((b.x_min, b.x_max, b.y_min, b.y_max), (14.0, 16.0, 16.0, 18.0));
        assert_eq!(g.cell_center(g.cell_id(1, 2)), Some((15.0, 17.0)));
    }

    #[test]
    fn overlap_ranges_clamp_to_grid() {
        let g = GridSpec::new(0.0, 3.0, 1.0, 3, 3).unwrap();
        let b = Bounds {
            x_min: -5.0,
            y_min: 1.5,
            x_max: 0.5,
            y_max: 10.0,
        };
        assert_eq!(g.cells_overlapping(&b), Some(((0, 1), (0, 0))));
        let off = Bounds {
            x_min: 4.0,
            y_min: 0.0,
            x_max: 5.0,
            y_max: 1.0,
        };
        assert_eq!(g.cells_overlapping(&off), None);
    }

    #[test]
    fn invalid_grids_rejected() {
        assert!(GridSpec::new(0.0, 0.0, 0.0, 1, 1).is_err());
        assert!(GridSpec::new(0.0, 0.0, 1.0, 0, 1).is_err());
    }
}
