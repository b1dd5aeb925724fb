//! Run configuration, read from TOML. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use agrocate::causal::DmlConfig;
use agrocate::geo::GridSpec;
use agrocate::interpret::InterpreterParams;
use agrocate::synth::DgpSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("config: {0}")]
    Missing(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub grid: Option<GridSpec>,
    pub study: StudyConfig,
    pub dml: DmlConfig,
    pub interpreter: InterpretConfig,
    pub report: ReportConfig,
    pub simulate: SimulateConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub parcels: Option<PathBuf>,
    pub env: Option<PathBuf>,
    pub outcome: Option<PathBuf>,
    /// Defaults to `<output_dir>/dataset.csv`.
    pub dataset: Option<PathBuf>,
    /// Defaults to `scaler.json` next to the dataset.
    pub scaler: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            parcels: None,
            env: None,
            outcome: None,
            dataset: None,
            scaler: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    /// Defaults to every year present in the environmental table.
    pub years: Option<Vec<i32>>,
    pub max_missing_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpretConfig {
    pub max_depth: usize,
    pub min_leaf_size: Option<usize>,
    pub n_bins: usize,
}

impl Default for InterpretConfig {
    fn default() -> Self {
        let p = InterpreterParams::default();
        Self {
            max_depth: p.max_depth,
            min_leaf_size: p.min_leaf_size,
            n_bins: 20,
        }
    }
}

impl InterpretConfig {
    pub fn params(&self) -> InterpreterParams {
        InterpreterParams {
            max_depth: self.max_depth,
            min_leaf_size: self.min_leaf_size,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Minimum mean parcel coverage of an agricultural cell.
    pub agricultural_threshold: f64,
    pub significance: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            agricultural_threshold: 0.5,
            significance: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub reps: usize,
    pub dgp: DgpSpec,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            reps: 200,
            dgp: DgpSpec::default(),
        }
    }
}

impl RunConfig {
    /// Parses a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.paths.resolve(base);
        Ok(cfg)
    }

    /// SHA-256 of every setting except file locations.
    pub fn settings_digest(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("paths");
        }
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    pub fn output_dir(&self) -> &Path {
        &self.paths.output_dir
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.paths
            .dataset
            .clone()
            .unwrap_or_else(|| self.paths.output_dir.join("dataset.csv"))
    }

    pub fn scaler_path(&self) -> PathBuf {
        self.paths.scaler.clone().unwrap_or_else(|| {
            self.dataset_path()
                .parent()
                .map_or_else(|| PathBuf::from("scaler.json"), |d| d.join("scaler.json"))
        })
    }

    pub fn require(&self, what: &str, p: &Option<PathBuf>) -> Result<PathBuf, ConfigError> {
        p.clone()
            .ok_or_else(|| ConfigError::Missing(format!("paths.{what} is required")))
    }
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.parcels,
            &mut self.env,
            &mut self.outcome,
            &mut self.dataset,
            &mut self.scaler,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.output_dir);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let c = RunConfig::default();
        assert_eq!(c.dml.folds, 3);
        assert_eq!((c.dml.trim_lo, c.dml.trim_hi), (0.2, 0.8));
        assert_eq!(c.report.agricultural_threshold, 0.5);
        assert_eq!(c.interpreter.max_depth, 3);
        assert_eq!(c.interpreter.n_bins, 20);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sed = 3").is_err());
        assert!(toml::from_str::<RunConfig>("[dml]\nfolds = 5\nbogus = 1").is_err());
        let c: RunConfig = toml::from_str(
            "seed = 9\n[dml]\nfolds = 5\n[dml.outcome]\nn_trees = 10\nmax_depth = 4\nmin_leaf_size = 2\nmax_features = \"all\"\nbootstrap = true\n[simulate.dgp]\nn = 100\ntheta = { form = \"linear\", a = 1.0, b = [1.0] }",
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.dml.folds, 5);
        assert_eq!(c.dml.outcome.n_trees, 10);
        assert_eq!(c.simulate.dgp.n, 100);
    }

    #[test]
    fn digest_ignores_paths() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.paths.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.settings_digest(), b.settings_digest());
        b.seed = 1;
        assert_ne!(a.settings_digest(), b.settings_digest());
    }
}
