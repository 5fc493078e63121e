//! Top-level JSON configuration shared by the command-line tools.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::{KkrConfig, ScalingConfig};
use crate::data::{generate, load_csv, SeriesSet, SynthSpec};
use crate::error::{Error, Result};
use crate::network::RunConfig;

/// Where the series comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic {
        #[serde(default = "SynthSpec::benchmark")]
        spec: SynthSpec,
        #[serde(default = "default_length")]
        length: usize,
        /// Generator seed, independent of the training seed.
        #[serde(default)]
        seed: u64,
    },
    /// CSV with a header row; relative paths resolve against the config file.
    Csv { path: PathBuf },
}

fn default_length() -> usize {
    4000
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            spec: SynthSpec::benchmark(),
            length: default_length(),
            seed: 0,
        }
    }
}

/// Scaling benchmark options; the block shape comes from `model`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingOptions {
    #[serde(default = "default_lengths")]
    pub lengths: Vec<usize>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default)]
    pub with_grad: bool,
}

fn default_lengths() -> Vec<usize> {
    vec![256, 512, 1024, 2048]
}

fn default_repeats() -> usize {
    5
}

fn default_batch() -> usize {
    32
}

impl Default for ScalingOptions {
    fn default() -> Self {
        Self {
            lengths: default_lengths(),
            repeats: default_repeats(),
            batch: default_batch(),
            with_grad: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Required by every command except `verify-kkr`.
    #[serde(default)]
    pub model: Option<RunConfig>,
    #[serde(default)]
    pub data: DataSource,
    #[serde(default)]
    pub kkr: KkrConfig,
    #[serde(default)]
    pub scaling: ScalingOptions,
    /// Directory the config was read from, for resolving relative paths.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let mut cfg = Self::from_json(&std::fs::read_to_string(path)?)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn model(&self) -> Result<&RunConfig> {
        self.model
            .as_ref()
            .ok_or_else(|| Error::Config("config has no \"model\" section".into()))
    }

    pub fn scaling_config(&self) -> Result<ScalingConfig> {
        let s = &self.scaling;
        Ok(ScalingConfig {
            model: self.model()?.clone(),
            lengths: s.lengths.clone(),
            repeats: s.repeats,
            batch: s.batch,
            with_grad: s.with_grad,
        })
    }

    pub fn load_series(&self) -> Result<SeriesSet> {
        match &self.data {
            DataSource::Synthetic { spec, length, seed } => generate(spec, *length, *seed),
            DataSource::Csv { path } => {
                let full = match (&self.base_dir, path.is_relative()) {
                    (Some(base), true) => base.join(path),
                    _ => path.clone(),
                };
                load_csv(&full)
            }
        }
    }
}
