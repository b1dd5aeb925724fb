//! Versioned JSON model files.
//!
//! ```text
//! { "format": "agrocate-model", "version": 1, "model": { "kind": "forest", ... } }
//! ```
//!
//! Floats are written in shortest round-trip form and parsed with exact
//! rounding, so save → load → predict is bit-identical.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BoostedModel, ForestModel, Predictor};
use crate::error::{Error, Result};
use crate::io::{read_string, write_string};

pub const MODEL_FORMAT: &str = "agrocate-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SavedModel {
    Forest(ForestModel),
    Boosted(BoostedModel),
}

impl Predictor for SavedModel {
    fn predict_row(&self, row: &[f64]) -> f64 {
        match self {
            SavedModel::Forest(m) => m.predict_row(row),
            SavedModel::Boosted(m) => m.predict_row(row),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    model: SavedModel,
}

pub fn save_model(path: &Path, model: &SavedModel) -> Result<()> {
    let env = Envelope {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        model: model.clone(),
    };
    write_string(path, &serde_json::to_string(&env).expect("serializable model"))
}

pub fn load_model(path: &Path) -> Result<SavedModel> {
    let text = read_string(path)?;
    let env: Envelope = serde_json::from_str(&text).map_err(|e| Error::ModelFormat(format!("{}: {e}", path.display())))?;
    if env.format != MODEL_FORMAT {
        return Err(Error::ModelFormat(format!("unexpected format `{}`", env.format)));
    }
    if env.version != MODEL_VERSION {
        return Err(Error::ModelFormat(format!("unsupported version {}", env.version)));
    }
    Ok(env.model)
}
