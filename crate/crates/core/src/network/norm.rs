use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const NORM_EPSILON: f64 = 1e-5;

/// Per-variable lookback statistics, shaped like the input minus its time
/// axis (`[D]` or `[B, D]`).
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub mu: Tensor,
    /// Population standard deviation.
    pub sigma: Tensor,
    pub epsilon: f64,
}

impl NormStats {
    /// Multiplier restoring the original scale: `sigma + epsilon`.
    pub fn scale(&self) -> Tensor {
        self.sigma.map(|s| s + self.epsilon)
    }
}

/// Z-scores each variable over the last (time) axis.
pub fn normalize(x: &Tensor) -> Result<(Tensor, NormStats)> {
    let shape = x.shape();
    let len = *shape.last().unwrap_or(&0);
    if shape.is_empty() || len < 2 {
        return Err(Error::Input(format!("normalization needs at least 2 time steps, got shape {shape:?}")));
    }
    let rows = x.numel() / len;
    let mut mu = Vec::with_capacity(rows);
    let mut sigma = Vec::with_capacity(rows);
    let mut out = Vec::with_capacity(x.numel());
    for row in x.data().chunks(len) {
        let m = row.iter().sum::<f64>() / len as f64;
        let var = row.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / len as f64;
        let s = var.sqrt();
        out.extend(row.iter().map(|v| (v - m) / (s + NORM_EPSILON)));
        mu.push(m);
        sigma.push(s);
    }
    let stat_shape = &shape[..shape.len() - 1];
    let stat = |v: Vec<f64>| {
        if stat_shape.is_empty() {
            Tensor::scalar(v[0])
        } else {
            Tensor::new(stat_shape, v).expect("stat shape")
        }
    };
    Ok((
        Tensor::new(shape, out)?,
        NormStats {
            mu: stat(mu),
            sigma: stat(sigma),
            epsilon: NORM_EPSILON,
        },
    ))
}

/// Inverse of [`normalize`] applied along the last axis of `y`, whose
/// leading axes must match the statistics.
pub fn denormalize(y: &Tensor, stats: &NormStats) -> Result<Tensor> {
    let shape = y.shape();
    let len = *shape.last().unwrap_or(&0);
    if shape.is_empty() || shape[..shape.len() - 1] != *stats.mu.shape() {
        return Err(Error::dim(
            "denormalize",
            format!("values {shape:?} vs statistics {:?}", stats.mu.shape()),
        ));
    }
    let scale = stats.scale();
    let mut out = y.to_vec();
    for (r, row) in out.chunks_mut(len).enumerate() {
        let (m, s) = (stats.mu.data()[r], scale.data()[r]);
        row.iter_mut().for_each(|v| *v = *v * s + m);
    }
    Tensor::new(shape, out)
}
