//! Geospatial ingestion: parcel polygons to per-cell crop abundance, the
//! diversification treatment and the joined analysis dataset.

mod abundance;
mod assemble;
mod geometry;
mod grid;

pub use abundance::{
    agricultural_mask, compute_abundance, diversification_count, mean_coverage, AbundanceTable,
    CellYear, ParcelRecord, ABUNDANCE_EPS,
};
pub use assemble::{assemble_dataset, AssembledDataset, CellMeta, EnvTable, JoinReport};
pub use geometry::{clip_polygon_to_cell, clip_to_bounds, parse_wkt_polygon, signed_area, Bounds, Point, Ring};
pub use grid::GridSpec;
