//! Top-M amplitude selection over the flattened time-frequency grid.
//!
//! Within each (signal row, window scale) the M bins of largest amplitude
//! `sqrt(re^2 + im^2)` are kept, ordered by decreasing amplitude with ties
//! broken by smaller `k` and then by earlier frame. Selection indices are
//! fixed during the forward pass, so gradients flow only into the chosen
//! bins.

use std::cmp::Ordering;
use std::sync::Arc;

use super::stft::{StftGrid, StftPlan};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bin {
    pub k: usize,
    pub frame: usize,
    pub frame_start: usize,
}

/// Selected coefficients shaped `[..., channels, P, M]`; `bins` follows the
/// same flat order.
#[derive(Clone, Debug)]
pub struct SpectralSelection {
    pub re: Tensor,
    pub im: Tensor,
    pub amplitudes: Tensor,
    pub bins: Vec<Bin>,
}

impl SpectralSelection {
    pub fn n_windows(&self) -> usize {
        self.re.shape()[self.re.ndim() - 2]
    }

    pub fn m(&self) -> usize {
        self.re.shape()[self.re.ndim() - 1]
    }
}

fn by_amplitude(amps: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    // flat index k * frames + f orders (k, frame) lexicographically
    move |&a, &b| amps[b].total_cmp(&amps[a]).then(a.cmp(&b))
}

/// Positions of the `m` largest amplitudes in selection order.
pub fn top_m_indices(amps: &[f64], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..amps.len()).collect();
    let cmp = by_amplitude(amps);
    if m < idx.len() {
        idx.select_nth_unstable_by(m, &cmp);
        idx.truncate(m);
    }
    idx.sort_unstable_by(&cmp);
    idx
}

fn check_bins(spec_size: usize, window: usize, freqs: usize, frames: usize, m: usize, min_len: usize) -> Result<()> {
    if freqs * frames < m {
        return Err(Error::Config(format!(
            "window {window} (size {spec_size}) yields {} time-frequency bins but M = {m}; \
             the series must have length at least {min_len}",
            freqs * frames
        )));
    }
    Ok(())
}

/// Selects the Top-M bins of every grid. All grids must cover the same
/// signal rows.
pub fn top_m_select(grids: &[StftGrid], m: usize) -> Result<SpectralSelection> {
    let Some(first) = grids.first() else {
        return Err(Error::Config("top_m_select needs at least one grid".into()));
    };
    if m == 0 {
        return Err(Error::Config("M must be positive".into()));
    }
    let lead: Vec<usize> = first.re.shape()[..first.re.ndim() - 2].to_vec();
    let rows = first.rows();
    for g in grids {
        check_bins(
            g.spec.size,
            g.window_index,
            g.n_freqs(),
            g.n_frames(),
            m,
            g.spec.min_length_for(m),
        )?;
        if g.rows() != rows || g.re.shape()[..g.re.ndim() - 2] != lead[..] {
            return Err(Error::dim("top_m_select", "grids cover different signal rows"));
        }
    }
    let p = grids.len();
    let n = rows * p * m;
    let (mut re, mut im, mut amp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut bins = vec![
        Bin {
            k: 0,
            frame: 0,
            frame_start: 0
        };
        n
    ];
    for (pi, g) in grids.iter().enumerate() {
        let cells = g.n_freqs() * g.n_frames();
        let frames = g.n_frames();
        for r in 0..rows {
            let base = r * cells;
            let amps: Vec<f64> = (0..cells).map(|c| g.amplitude(base + c)).collect();
            for (mi, c) in top_m_indices(&amps, m).into_iter().enumerate() {
                let o = (r * p + pi) * m + mi;
                re[o] = g.re.data()[base + c];
                im[o] = g.im.data()[base + c];
                amp[o] = amps[c];
                bins[o] = Bin {
                    k: c / frames,
                    frame: c % frames,
                    frame_start: g.frame_starts[c % frames],
                };
            }
        }
    }
    let mut shape = lead;
    shape.extend([p, m]);
    Ok(SpectralSelection {
        re: Tensor::from_parts(shape.clone(), re),
        im: Tensor::from_parts(shape.clone(), im),
        amplitudes: Tensor::from_parts(shape, amp),
        bins,
    })
}

/// Frequency transform: multi-window STFT followed by Top-M selection.
#[derive(Clone, Debug)]
pub struct FrequencyTransform {
    plans: Vec<Arc<StftPlan>>,
    m: usize,
}

impl FrequencyTransform {
    pub fn new(windows: &[super::WindowSpec], m: usize) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::Config("at least one window is required".into()));
        }
        if m == 0 {
            return Err(Error::Config("M must be positive".into()));
        }
        let plans = windows.iter().map(StftPlan::new).collect::<Result<_>>()?;
        Ok(Self { plans, m })
    }

    pub fn n_windows(&self) -> usize {
        self.plans.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn check_length(&self, len: usize) -> Result<()> {
        for (i, plan) in self.plans.iter().enumerate() {
            let spec = &plan.spec;
            if len < spec.size {
                return Err(Error::Config(format!(
                    "lookback {len} is shorter than window {i} (size {})",
                    spec.size
                )));
            }
            check_bins(spec.size, i, plan.n_freqs, plan.n_frames(len), self.m, spec.min_length_for(self.m))?;
        }
        Ok(())
    }

    /// Full grids for every window, without recording gradients.
    pub fn grids(&self, x: &Tensor) -> Result<Vec<StftGrid>> {
        self.plans
            .iter()
            .enumerate()
            .map(|(i, p)| super::stft::grid_from_plan(p, x, i))
            .collect()
    }

    /// Differentiable selected coefficients of `x` (`[..., channels, L]`),
    /// returned as `(re, im)` shaped `[..., channels, P, M]`.
    ///
    /// Equivalent to `tape.stft` per window followed by a gather of the
    /// selected bins, but the backward pass only touches selected bins.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<(Var, Var, SpectralSelection)> {
        let xt = tape.value(x);
        let len = *xt.shape().last().ok_or_else(|| Error::dim("frequency transform", "rank 0 input"))?;
        self.check_length(len)?;
        let sel = top_m_select(&self.grids(xt)?, self.m)?;

        let rows = xt.numel() / len;
        let (p, m) = (self.plans.len(), self.m);
        let x_shape = xt.shape().to_vec();
        let plans = self.plans.clone();
        let bins: Arc<Vec<Bin>> = Arc::new(sel.bins.clone());

        let backward = move |g: &Tensor, use_re: bool| {
            let gd = g.data();
            let mut gx = vec![0.0; rows * len];
            for r in 0..rows {
                for (pi, plan) in plans.iter().enumerate() {
                    let w = plan.spec.size;
                    for mi in 0..m {
                        let o = (r * p + pi) * m + mi;
                        let gv = gd[o];
                        if gv == 0.0 {
                            continue;
                        }
                        let bin = bins[o];
                        let dst = &mut gx[r * len + bin.frame_start..][..w];
                        for (n, d) in dst.iter_mut().enumerate() {
                            let wt = if use_re {
                                plan.cos_weight(n, bin.k)
                            } else {
                                plan.neg_sin_weight(n, bin.k)
                            };
                            *d += gv * wt;
                        }
                    }
                }
            }
            Tensor::from_parts(x_shape.clone(), gx)
        };
        let backward = Arc::new(backward);
        let b1 = Arc::clone(&backward);
        let re = tape.record(sel.re.clone(), &[x], move |g| vec![Some(b1(g, true))]);
        let im = tape.record(sel.im.clone(), &[x], move |g| vec![Some(backward(g, false))]);
        Ok((re, im, sel))
    }
}
