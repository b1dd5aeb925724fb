//! Double machine learning: propensity scores, overlap trimming,
//! cross-fitted first stage and a linear final stage for the conditional
//! average treatment effect.

mod crossfit;
mod effect;
mod final_stage;
mod folds;
mod pipeline;
mod propensity;
mod selection;
mod trim;

pub use crossfit::{cross_fit_residuals, ResidualSet};
pub use effect::{two_sided_p, EffectEstimate, Z95};
pub use final_stage::{fit_linear_cate, normal_equation_gap, LinearCateModel, RANK_TOLERANCE};
pub use folds::FoldPlan;
pub use pipeline::{run_dml, AteSummary, DmlConfig, DmlFit};
pub use propensity::estimate_propensity;
pub use selection::{first_stage_diagnostic, train_test_split, SelectionReport, SelectionRow, SELECTION_FOLDS, TRAIN_FRACTION};
pub use trim::{trim_overlap, TrimReport, Trimmed};
