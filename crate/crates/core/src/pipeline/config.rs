use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::RasterConfig;
use crate::tps::DEFAULT_SAMPLES;
use crate::trio::DEFAULT_TRIOS_PER_CATEGORY;

/// Settings for one dataset generation run.
///
/// Loaded from TOML; every key except `corpus_index` is optional:
///
/// ```toml
/// corpus_index = "corpus/index.csv"   # relative to this file
/// output_dir = "dataset"              # relative to this file
/// samples = 500                       # vertices per bending system
/// trios_per_category = 64000
/// train_fraction = 0.75
/// seed = 0
/// workers = 0                         # 0 = one per CPU
///
/// [raster]
/// grid_rows = 320
/// grid_cols = 320
/// margin = 1.1
/// lambda = 1e-5
/// normal_neighbors = 12
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus_index: PathBuf,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_trios")]
    pub trios_per_category: usize,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub raster: RasterConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("dataset")
}
fn default_samples() -> usize {
    DEFAULT_SAMPLES
}
fn default_trios() -> usize {
    DEFAULT_TRIOS_PER_CATEGORY
}
fn default_train_fraction() -> f64 {
    0.75
}

impl PipelineConfig {
    pub fn new(corpus_index: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            corpus_index: corpus_index.into(),
            output_dir: output_dir.into(),
            samples: DEFAULT_SAMPLES,
            trios_per_category: DEFAULT_TRIOS_PER_CATEGORY,
            train_fraction: default_train_fraction(),
            seed: 0,
            workers: 0,
            raster: RasterConfig::default(),
        }
    }

    /// Parses a TOML config; relative paths are resolved against the file's
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: PipelineConfig = toml::from_str(&text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start].lines().count().max(1))
                .unwrap_or(0);
            Error::parse(path, line, e.message().to_string())
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        if config.corpus_index.is_relative() {
            config.corpus_index = base.join(&config.corpus_index);
        }
        if config.output_dir.is_relative() {
            config.output_dir = base.join(&config.output_dir);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "train_fraction {} must lie strictly between 0 and 1",
                self.train_fraction
            )));
        }
        if self.samples < crate::corpus::MIN_VERTICES {
            return Err(Error::InvalidArgument(format!(
                "samples {} below the minimum of {}",
                self.samples,
                crate::corpus::MIN_VERTICES
            )));
        }
        if !self.raster.lambda.is_finite() || self.raster.lambda <= 0.0 {
            return Err(Error::InvalidArgument(
                "raster.lambda must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "corpus_index = \"c/index.csv\"\n[raster]\nlambda = 2e-5\n",
        )
        .unwrap();
        let c = PipelineConfig::load(&path).unwrap();
        assert_eq!(c.corpus_index, dir.path().join("c/index.csv"));
        assert_eq!(c.output_dir, dir.path().join("dataset"));
        assert_eq!(c.trios_per_category, 64_000);
        assert_eq!(c.train_fraction, 0.75);
        assert_eq!(c.samples, 500);
        assert_eq!(c.raster.lambda, 2e-5);
        assert_eq!(c.raster.grid_rows, 320);
    }

    #[test]
    fn rejects_bad_split_and_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "corpus_index = \"x\"\ntrain_fraction = 1.0\n").unwrap();
        assert!(PipelineConfig::load(&path).is_err());
        std::fs::write(&path, "corpus_index = \"x\"\nbogus = 1\n").unwrap();
        assert!(matches!(
            PipelineConfig::load(&path),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn toml_round_trip() {
        let c = PipelineConfig::new("/a/index.csv", "/b");
        let back: PipelineConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }
}
