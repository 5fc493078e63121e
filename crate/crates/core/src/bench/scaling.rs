use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::attention::FcaDims;
use crate::network::{block_forward, BlockParams, RunConfig};
use crate::spectral::FrequencyTransform;
use crate::rng::Rng;
use crate::tensor::{alloc, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    /// Block hyperparameters; `lookback` is overridden per length.
    pub model: RunConfig,
    #[serde(default = "default_lengths")]
    pub lengths: Vec<usize>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Input batch of the timed forward pass.
    #[serde(default = "default_batch")]
    pub batch: usize,
    /// Record a gradient tape during the timed pass.
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

impl ScalingConfig {
    pub fn new(model: RunConfig) -> Self {
        Self {
            model,
            lengths: default_lengths(),
            repeats: default_repeats(),
            batch: default_batch(),
            with_grad: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats < 5 {
            return Err(Error::Config(format!("repeats must be at least 5, got {}", self.repeats)));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be positive".into()));
        }
        if self.lengths.len() < 2 || self.lengths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("lengths must be at least two strictly increasing values".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingReport {
    pub lengths: Vec<usize>,
    /// Median over repeats, seconds.
    pub wall_times_s: Vec<f64>,
    /// Peak tracked tensor bytes above the pre-call baseline.
    pub alloc_bytes: Vec<usize>,
    pub time_slope: f64,
    pub alloc_slope: f64,
    pub repeats: usize,
    pub with_grad: bool,
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Times one residual block forward at each length: one discarded warm-up
/// per length, then `repeats` rounds that visit every length in turn, so
/// slow drift in machine speed lands on all lengths alike. Reports the
/// median time and the largest peak allocation per length. Parameters and
/// inputs are built outside the timed region; only the time-restoring map
/// depends on the length.
pub fn bench_scaling(cfg: &ScalingConfig, seed: u64) -> Result<ScalingReport> {
    cfg.validate()?;
    let mut cases = Vec::with_capacity(cfg.lengths.len());
    for &len in &cfg.lengths {
        let mut model = cfg.model.clone();
        model.lookback = len;
        model.validate()?;
        let mut rng = Rng::new(seed);
        let params = BlockParams::init(&model, &mut rng);
        let x = Tensor::randn(&[cfg.batch, model.embed_dim, len], &mut rng);
        cases.push((model.frequency_transform()?, model.fca_dims(), params, x));
    }

    let run = |(transform, dims, params, x): &(FrequencyTransform, FcaDims, BlockParams<Tensor>, Tensor)| -> Result<(f64, usize)> {
        let base = alloc::live_bytes();
        alloc::reset_peak();
        let started = Instant::now();
        {
            let mut tape = if cfg.with_grad { Tape::new() } else { Tape::no_grad() };
            let bp = params.map(&mut |t| if cfg.with_grad { tape.param(t.clone()) } else { tape.constant(t.clone()) });
            let xv = tape.constant(x.clone());
            block_forward(&mut tape, xv, &bp, transform, dims)?;
        }
        let elapsed = started.elapsed().as_secs_f64();
        Ok((elapsed, alloc::peak_bytes().saturating_sub(base)))
    };

    for case in &cases {
        run(case)?;
    }
    let mut samples = vec![Vec::with_capacity(cfg.repeats); cases.len()];
    let mut allocs = vec![0; cases.len()];
    for _ in 0..cfg.repeats {
        for (i, case) in cases.iter().enumerate() {
            let (t, a) = run(case)?;
            samples[i].push(t);
            allocs[i] = allocs[i].max(a);
        }
    }
    let times: Vec<f64> = samples.iter_mut().map(|s| median(s)).collect();
    for ((len, t), a) in cfg.lengths.iter().zip(&times).zip(&allocs) {
        log::info!("L={len}: {t:.5}s, {a} bytes");
    }
    let ls: Vec<f64> = cfg.lengths.iter().map(|&l| l as f64).collect();
    Ok(ScalingReport {
        lengths: cfg.lengths.clone(),
        time_slope: log_log_slope(&ls, &times),
        alloc_slope: log_log_slope(&ls, &allocs.iter().map(|&a| a as f64).collect::<Vec<_>>()),
        wall_times_s: times,
        alloc_bytes: allocs,
        repeats: cfg.repeats,
        with_grad: cfg.with_grad,
    })
}

pub fn write_scaling_csv<W: Write>(r: &ScalingReport, mut out: W) -> Result<()> {
    writeln!(out, "L,time_s,alloc_bytes")?;
    for ((l, t), a) in r.lengths.iter().zip(&r.wall_times_s).zip(&r.alloc_bytes) {
        writeln!(out, "{l},{t},{a}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::WindowSpec;

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((log_log_slope(&x, &y) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn too_few_repeats_rejected() {
        let mut cfg = ScalingConfig::new(RunConfig::new(1, 64, 4));
        cfg.repeats = 3;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn small_run_reports_every_length() {
        let mut model = RunConfig::new(1, 64, 4);
        model.embed_dim = 2;
        model.d_k = 2;
        model.d_v = 2;
        model.d_hidden = 2;
        model.n_heads = 1;
        model.top_m = 3;
        model.windows = vec![WindowSpec::hann(16)];
        model.inception_kernels = vec![1, 3];
        let mut cfg = ScalingConfig::new(model);
        cfg.lengths = vec![64, 128];
        cfg.batch = 2;
        let r = bench_scaling(&cfg, 0).unwrap();
        assert_eq!(r.wall_times_s.len(), 2);
        assert!(r.alloc_bytes[1] > r.alloc_bytes[0]);
        let mut buf = Vec::new();
        write_scaling_csv(&r, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }
}
