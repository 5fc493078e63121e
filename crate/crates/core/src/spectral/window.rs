use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hann,
    Rectangular,
}

/// One analysis window: length in samples, taper, and hop between frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub size: usize,
    #[serde(default = "default_kind")]
    pub kind: WindowKind,
    /// Defaults to `size / 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hop: Option<usize>,
}

fn default_kind() -> WindowKind {
    WindowKind::Hann
}

impl WindowSpec {
    pub fn hann(size: usize) -> Self {
        Self {
            size,
            kind: WindowKind::Hann,
            hop: None,
        }
    }

    pub fn rectangular(size: usize) -> Self {
        Self {
            size,
            kind: WindowKind::Rectangular,
            hop: None,
        }
    }

    pub fn with_hop(mut self, hop: usize) -> Self {
        self.hop = Some(hop);
        self
    }

    pub fn hop(&self) -> usize {
        self.hop.unwrap_or((self.size / 2).max(1))
    }

    /// One-sided bins `k = 0..=W/2`.
    pub fn n_freqs(&self) -> usize {
        self.size / 2 + 1
    }

    pub fn n_frames(&self, len: usize) -> usize {
        if len < self.size {
            0
        } else {
            (len - self.size) / self.hop() + 1
        }
    }

    pub fn omega(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.size as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < 2 {
            return Err(Error::Config(format!(
                "window size must be at least 2, got {}",
                self.size
            )));
        }
        let hop = self.hop();
        if hop == 0 || hop > self.size {
            return Err(Error::Config(format!(
                "window hop must be in 1..={}, got {hop}",
                self.size
            )));
        }
        Ok(())
    }

    /// Smallest series length giving at least `m` time-frequency bins.
    pub fn min_length_for(&self, m: usize) -> usize {
        let frames = m.div_ceil(self.n_freqs()).max(1);
        self.size + (frames - 1) * self.hop()
    }
}

/// Window weights: periodic-free Hann `0.5 - 0.5 cos(2 pi n / (W - 1))`, or ones.
pub fn make_window(spec: &WindowSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let w = spec.size;
    Ok(match spec.kind {
        WindowKind::Rectangular => vec![1.0; w],
        WindowKind::Hann => (0..w)
            .map(|n| {
                if n == 0 || n == w - 1 {
                    0.0
                } else {
                    0.5 - 0.5 * (2.0 * PI * n as f64 / (w - 1) as f64).cos()
                }
            })
            .collect(),
    })
}
