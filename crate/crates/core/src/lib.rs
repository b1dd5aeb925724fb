//! Heterogeneous treatment effects of crop diversification with double
//! machine learning.
//!
//! The crate is organised as the pipeline runs:
//!
//! * [`data`]: feature matrices, standardization, binarization, temporal
//!   aggregation;
//! * [`geo`]: parcel polygons to per-cell abundance and the joined dataset;
//! * [`learners`]: CART, random forests, gradient boosting, cross-validation;
//! * [`causal`]: propensity trimming, cross-fitting, the linear final stage
//!   and effect inference;
//! * [`interpret`]: tree interpreter and binned effect curves;
//! * [`synth`]: synthetic partially linear data and a Monte Carlo harness.

pub mod causal;
pub mod data;
pub mod error;
pub mod geo;
pub mod interpret;
pub mod io;
pub mod learners;
pub mod seed;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
