use serde::{Deserialize, Serialize};

use crate::attention::FcaDims;
use crate::error::{Error, Result};
use crate::spectral::{FrequencyTransform, WindowSpec};

/// Model and training hyperparameters.
///
/// Only `n_vars`, `lookback` and `horizon` are required in JSON; everything
/// else has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Number of variables D.
    pub n_vars: usize,
    /// Lookback length L.
    pub lookback: usize,
    /// Horizon length T.
    pub horizon: usize,
    #[serde(default = "defaults::embed_dim")]
    pub embed_dim: usize,
    #[serde(default = "defaults::n_blocks")]
    pub n_blocks: usize,
    /// Coefficients kept per channel and window.
    #[serde(default = "defaults::top_m")]
    pub top_m: usize,
    #[serde(default = "defaults::n_heads")]
    pub n_heads: usize,
    #[serde(default = "defaults::width")]
    pub d_k: usize,
    #[serde(default = "defaults::width")]
    pub d_v: usize,
    #[serde(default = "defaults::width")]
    pub d_hidden: usize,
    #[serde(default = "defaults::windows")]
    pub windows: Vec<WindowSpec>,
    /// Odd square kernel sizes of the Inception branches.
    #[serde(default = "defaults::inception_kernels")]
    pub inception_kernels: Vec<usize>,
    #[serde(default = "defaults::lr")]
    pub lr: f64,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    #[serde(default = "defaults::patience")]
    pub patience: usize,
    #[serde(default)]
    pub seed: u64,
    /// Step between consecutive training windows.
    #[serde(default = "defaults::stride")]
    pub stride: usize,
}

mod defaults {
    use crate::spectral::WindowSpec;

    pub fn embed_dim() -> usize {
        32
    }
    pub fn n_blocks() -> usize {
        4
    }
    pub fn top_m() -> usize {
        10
    }
    pub fn n_heads() -> usize {
        4
    }
    pub fn width() -> usize {
        64
    }
    pub fn windows() -> Vec<WindowSpec> {
        vec![WindowSpec::hann(100), WindowSpec::hann(50), WindowSpec::hann(20)]
    }
    pub fn inception_kernels() -> Vec<usize> {
        vec![1, 3, 5, 7, 9, 11]
    }
    pub fn lr() -> f64 {
        1e-3
    }
    pub fn batch_size() -> usize {
        32
    }
    pub fn epochs() -> usize {
        10
    }
    pub fn patience() -> usize {
        3
    }
    pub fn stride() -> usize {
        1
    }
}

impl RunConfig {
    /// Defaults for everything except the data shape.
    pub fn new(n_vars: usize, lookback: usize, horizon: usize) -> Self {
        Self {
            n_vars,
            lookback,
            horizon,
            embed_dim: defaults::embed_dim(),
            n_blocks: defaults::n_blocks(),
            top_m: defaults::top_m(),
            n_heads: defaults::n_heads(),
            d_k: defaults::width(),
            d_v: defaults::width(),
            d_hidden: defaults::width(),
            windows: defaults::windows(),
            inception_kernels: defaults::inception_kernels(),
            lr: defaults::lr(),
            batch_size: defaults::batch_size(),
            epochs: defaults::epochs(),
            patience: defaults::patience(),
            seed: 0,
            stride: defaults::stride(),
        }
    }

    pub fn fca_dims(&self) -> FcaDims {
        FcaDims {
            embed: self.embed_dim,
            heads: self.n_heads,
            d_k: self.d_k,
            d_v: self.d_v,
            d_hidden: self.d_hidden,
        }
    }

    pub fn n_windows(&self) -> usize {
        self.windows.len()
    }

    /// Largest Inception kernel; every branch is centered inside it.
    pub fn max_kernel(&self) -> usize {
        self.inception_kernels.iter().copied().max().unwrap_or(1)
    }

    pub fn frequency_transform(&self) -> Result<FrequencyTransform> {
        FrequencyTransform::new(&self.windows, self.top_m)
    }

    /// Checks every constraint that would otherwise fail mid-computation.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_vars", self.n_vars),
            ("lookback", self.lookback),
            ("horizon", self.horizon),
            ("top_m", self.top_m),
            ("batch_size", self.batch_size),
            ("patience", self.patience),
            ("stride", self.stride),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.lookback < 2 {
            return Err(Error::Config("lookback must be at least 2".into()));
        }
        self.fca_dims().validate()?;
        if self.windows.is_empty() {
            return Err(Error::Config("at least one window is required".into()));
        }
        for w in &self.windows {
            w.validate()?;
        }
        if self.inception_kernels.is_empty() {
            return Err(Error::Config("at least one inception kernel is required".into()));
        }
        if let Some(k) = self.inception_kernels.iter().find(|&&k| k % 2 == 0) {
            return Err(Error::Config(format!("inception kernel sizes must be odd, got {k}")));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Config(format!("lr must be finite and non-negative, got {}", self.lr)));
        }
        self.frequency_transform()?.check_length(self.lookback)
    }
}
