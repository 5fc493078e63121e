use crate::attention::FcaDims;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::spectral::FrequencyTransform;
use crate::tensor::Tensor;

use super::block::{block_forward, BlockTrace};
use super::norm::{normalize, NormStats};
use super::{ModelParams, RunConfig};

/// Forecasting network for a fixed configuration.
#[derive(Clone, Debug)]
pub struct Forecaster {
    cfg: RunConfig,
    transform: FrequencyTransform,
    dims: FcaDims,
}

/// Forward pass result on the tape.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// Denormalized forecast `[B, D, T]`.
    pub forecast: Var,
    /// Head output before denormalization.
    pub normalized: Var,
    pub stats: NormStats,
    pub blocks: Vec<BlockTrace>,
}

impl Forecaster {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg: cfg.clone(),
            transform: cfg.frequency_transform()?,
            dims: cfg.fca_dims(),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn init_params(&self, seed: u64) -> ModelParams<Tensor> {
        ModelParams::init(&self.cfg, seed)
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (d, l) = (self.cfg.n_vars, self.cfg.lookback);
        let s = x.shape();
        if s.len() != 3 || s[1] != d || s[2] != l {
            return Err(Error::dim("forecast input", format!("expected [B, {d}, {l}], got {s:?}")));
        }
        if !x.is_finite() {
            return Err(Error::Input("lookback contains non-finite values".into()));
        }
        Ok(())
    }

    /// Records the full pass on `x [B, D, L]`.
    pub fn forward(&self, tape: &mut Tape, params: &ModelParams<Var>, x: &Tensor) -> Result<ForwardOutput> {
        self.check_input(x)?;
        if params.blocks.len() != self.cfg.n_blocks {
            return Err(Error::Config(format!(
                "parameters hold {} blocks, config expects {}",
                params.blocks.len(),
                self.cfg.n_blocks
            )));
        }
        let (xn, stats) = normalize(x)?;
        let xv = tape.constant(xn);

        let tokens = tape.permute(xv, &[0, 2, 1])?;
        let embedded = tape.linear(tokens, params.embed, Some(params.embed_bias))?;
        let mut h = tape.permute(embedded, &[0, 2, 1])?;

        let mut blocks = Vec::with_capacity(params.blocks.len());
        for bp in &params.blocks {
            let trace = block_forward(tape, h, bp, &self.transform, &self.dims)?;
            h = trace.output;
            blocks.push(trace);
        }

        let normalized = self.head(tape, h, params)?;
        let forecast = denormalize_on_tape(tape, normalized, &stats)?;
        Ok(ForwardOutput { forecast, normalized, stats, blocks })
    }

    /// Channel map E -> D per step, then time map L -> T per variable.
    pub fn head(&self, tape: &mut Tape, h: Var, params: &ModelParams<Var>) -> Result<Var> {
        let steps = tape.permute(h, &[0, 2, 1])?;
        let chans = tape.linear(steps, params.head_channel, Some(params.head_channel_bias))?;
        let vars = tape.permute(chans, &[0, 2, 1])?;
        tape.linear(vars, params.head_time, Some(params.head_time_bias))
    }

    /// Forecast without recording gradients. Accepts `[D, L]` or `[B, D, L]`.
    pub fn predict(&self, params: &ModelParams<Tensor>, x: &Tensor) -> Result<Tensor> {
        let single = x.ndim() == 2;
        let batched = if single {
            let mut s = vec![1];
            s.extend_from_slice(x.shape());
            x.reshape(&s)?
        } else {
            x.clone()
        };
        let mut tape = Tape::no_grad();
        let vars = params.map(&mut |t| tape.constant(t.clone()));
        let out = self.forward(&mut tape, &vars, &batched)?;
        let y = tape.value(out.forecast).clone();
        if single {
            y.reshape(&y.shape()[1..])
        } else {
            Ok(y)
        }
    }
}

/// `y * (sigma + eps) + mu` with statistics as constants.
fn denormalize_on_tape(tape: &mut Tape, y: Var, stats: &NormStats) -> Result<Var> {
    let mut s = stats.mu.shape().to_vec();
    s.push(1);
    let scale = tape.constant(stats.scale().reshape(&s)?);
    let mu = tape.constant(stats.mu.reshape(&s)?);
    let scaled = tape.mul(y, scale)?;
    tape.add(scaled, mu)
}
