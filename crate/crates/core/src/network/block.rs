use crate::attention::{fca_forward, FcaDims};
use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::spectral::FrequencyTransform;

use super::BlockParams;

/// Intermediate values of one block, exposed for inspection.
#[derive(Clone, Copy, Debug)]
pub struct BlockTrace {
    /// Selected coefficients, `[B, E, P, M]`.
    pub re: Var,
    pub im: Var,
    /// Mixed features arranged as an E-channel `[P, M]` grid, before the
    /// Inception stage: `[B, E, P, M]`.
    pub pre_inception: Var,
    pub output: Var,
}

/// Averaged Inception kernel: every branch zero-padded to the largest size
/// and summed, divided by the branch count. Convolving with it equals
/// averaging the separate same-padded branch convolutions.
pub fn inception_kernel(tape: &mut Tape, kernels: &[Var]) -> Result<Var> {
    let size = kernels.iter().map(|&k| tape.shape(k)[2]).max().unwrap_or(1);
    tape.scope(|tape| {
        let mut total: Option<Var> = None;
        for &k in kernels {
            let padded = tape.pad_centered(k, size, size)?;
            total = Some(match total {
                None => padded,
                Some(t) => tape.add(t, padded)?,
            });
        }
        let total = total.expect("at least one inception kernel");
        Ok(tape.scale(total, 1.0 / kernels.len() as f64))
    })
}

/// One residual block on `x [B, E, L]`.
pub fn block_forward(
    tape: &mut Tape,
    x: Var,
    params: &BlockParams<Var>,
    transform: &FrequencyTransform,
    dims: &FcaDims,
) -> Result<BlockTrace> {
    let (re, im, _) = transform.forward(tape, x)?;
    block_from_coefficients(tape, x, re, im, params, dims)
}

/// The block downstream of coefficient selection: `re`, `im` are
/// `[B, E, P, M]` and `x [B, E, L]` is the residual input.
pub fn block_from_coefficients(
    tape: &mut Tape,
    x: Var,
    re: Var,
    im: Var,
    params: &BlockParams<Var>,
    dims: &FcaDims,
) -> Result<BlockTrace> {
    // Each stage is scoped so forward-only passes free its temporaries.
    let grid = tape.scope(|tape| {
        let (re_aug, im_aug) = fca_forward(tape, re, im, &params.fca, dims)?;
        let joint = tape.concat(&[re_aug, im_aug], 3)?;
        let mixed = tape.linear(joint, params.mix, Some(params.mix_bias))?;
        tape.permute(mixed, &[0, 3, 1, 2])
    })?;
    let act = tape.scope(|tape| {
        let kernel = inception_kernel(tape, &params.inception)?;
        let conv = tape.conv2d(grid, kernel)?;
        Ok(tape.relu(conv))
    })?;
    let output = tape.scope(|tape| {
        let s = tape.shape(act).to_vec();
        let flat = tape.reshape(act, &[s[0], s[1], s[2] * s[3]])?;
        let restored = tape.linear(flat, params.time_restore, None)?;
        tape.add(x, restored)
    })?;
    Ok(BlockTrace { re, im, pre_inception: grid, output })
}
