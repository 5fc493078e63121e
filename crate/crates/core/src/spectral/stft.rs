//! Sliding short-time Fourier transform into real and imaginary grids.
//!
//! For frame start `s` and bin `k` (angular frequency `2 pi k / W`):
//!
//! ```text
//! re[k, f] =  sum_n x[s + n] w[n] cos(omega_k n)
//! im[k, f] = -sum_n x[s + n] w[n] sin(omega_k n)
//! ```
//!
//! with the phase referenced to the start of each frame. Frames are
//! evaluated as one matrix product against a `[W, 2F]` cosine/sine basis.

use std::sync::Arc;

use super::window::{make_window, WindowSpec};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{gemm, Tensor};

/// Precomputed window weights and trigonometric basis for one window spec.
#[derive(Debug)]
pub struct StftPlan {
    pub spec: WindowSpec,
    pub window: Vec<f64>,
    pub n_freqs: usize,
    // [W, 2F]: columns 0..F hold cos, F..2F hold -sin
    basis: Vec<f64>,
}

impl StftPlan {
    pub fn new(spec: &WindowSpec) -> Result<Arc<Self>> {
        let window = make_window(spec)?;
        let w = spec.size;
        let f = spec.n_freqs();
        let mut basis = vec![0.0; w * 2 * f];
        for n in 0..w {
            for k in 0..f {
                let phase = spec.omega(k) * n as f64;
                basis[n * 2 * f + k] = phase.cos();
                basis[n * 2 * f + f + k] = if k == 0 { 0.0 } else { -phase.sin() };
            }
        }
        Ok(Arc::new(StftPlan {
            spec: spec.clone(),
            window,
            n_freqs: f,
            basis,
        }))
    }

    pub fn n_frames(&self, len: usize) -> usize {
        self.spec.n_frames(len)
    }

    /// cos(omega_k n) * w[n]
    pub fn cos_weight(&self, n: usize, k: usize) -> f64 {
        self.basis[n * 2 * self.n_freqs + k] * self.window[n]
    }

    /// -sin(omega_k n) * w[n]
    pub fn neg_sin_weight(&self, n: usize, k: usize) -> f64 {
        self.basis[n * 2 * self.n_freqs + self.n_freqs + k] * self.window[n]
    }

    fn check_len(&self, len: usize) -> Result<usize> {
        if len < self.spec.size {
            return Err(Error::Input(format!(
                "series length {len} is shorter than window size {}",
                self.spec.size
            )));
        }
        Ok(self.n_frames(len))
    }

    /// Full grids for every signal row of `x` (`[..., L]`), shaped
    /// `[..., F, frames]`.
    pub fn transform(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let shape = x.shape();
        let Some(&len) = shape.last() else {
            return Err(Error::dim("stft", "input must have a time axis"));
        };
        let frames = self.check_len(len)?;
        let rows = x.numel() / len;
        let (w, f, hop) = (self.spec.size, self.n_freqs, self.spec.hop());

        // Windowed frames, [rows * frames, W].
        let mut framed = Tensor::zeros(&[rows * frames, w]);
        {
            let fd = framed.data_mut();
            let xd = x.data();
            for r in 0..rows {
                for fr in 0..frames {
                    let src = &xd[r * len + fr * hop..][..w];
                    let dst = &mut fd[(r * frames + fr) * w..][..w];
                    for ((d, s), wn) in dst.iter_mut().zip(src).zip(&self.window) {
                        *d = s * wn;
                    }
                }
            }
        }
        let mut coeffs = Tensor::zeros(&[rows * frames, 2 * f]);
        gemm(
            rows * frames,
            w,
            2 * f,
            framed.data(),
            (w, 1),
            &self.basis,
            (2 * f, 1),
            coeffs.data_mut(),
            (2 * f, 1),
            0.0,
        );
        drop(framed);

        let mut out_shape = shape[..shape.len() - 1].to_vec();
        out_shape.extend([f, frames]);
        let mut re = vec![0.0; rows * f * frames];
        let mut im = vec![0.0; rows * f * frames];
        let cd = coeffs.data();
        for r in 0..rows {
            for fr in 0..frames {
                let row = &cd[(r * frames + fr) * 2 * f..][..2 * f];
                for k in 0..f {
                    re[(r * f + k) * frames + fr] = row[k];
                    im[(r * f + k) * frames + fr] = row[f + k];
                }
            }
        }
        Ok((
            Tensor::from_parts(out_shape.clone(), re),
            Tensor::from_parts(out_shape, im),
        ))
    }

    /// Adjoint of [`StftPlan::transform`]: maps grid gradients back to
    /// the time axis of a `[rows, len]` signal.
    fn adjoint(&self, g_re: &[f64], g_im: &[f64], rows: usize, len: usize) -> Vec<f64> {
        let frames = self.n_frames(len);
        let (w, f, hop) = (self.spec.size, self.n_freqs, self.spec.hop());
        let mut gcoef = vec![0.0; rows * frames * 2 * f];
        for r in 0..rows {
            for fr in 0..frames {
                let row = &mut gcoef[(r * frames + fr) * 2 * f..][..2 * f];
                for k in 0..f {
                    row[k] = g_re[(r * f + k) * frames + fr];
                    row[f + k] = g_im[(r * f + k) * frames + fr];
                }
            }
        }
        // [rows*frames, 2F] x basis^T [2F, W]
        let mut gframes = vec![0.0; rows * frames * w];
        gemm(
            rows * frames,
            2 * f,
            w,
            &gcoef,
            (2 * f, 1),
            &self.basis,
            (1, 2 * f),
            &mut gframes,
            (w, 1),
            0.0,
        );
        let mut gx = vec![0.0; rows * len];
        for r in 0..rows {
            for fr in 0..frames {
                let src = &gframes[(r * frames + fr) * w..][..w];
                let dst = &mut gx[r * len + fr * hop..][..w];
                for ((d, s), wn) in dst.iter_mut().zip(src).zip(&self.window) {
                    *d += s * wn;
                }
            }
        }
        gx
    }
}

/// Real/imaginary time-frequency grid of one window scale.
#[derive(Clone, Debug)]
pub struct StftGrid {
    pub window_index: usize,
    pub spec: WindowSpec,
    pub frame_starts: Vec<usize>,
    pub freqs: Vec<usize>,
    pub omegas: Vec<f64>,
    /// `[..., channels, n_freqs, n_frames]`
    pub re: Tensor,
    pub im: Tensor,
}

impl StftGrid {
    pub fn n_freqs(&self) -> usize {
        self.freqs.len()
    }

    pub fn n_frames(&self) -> usize {
        self.frame_starts.len()
    }

    /// Number of independent signal rows (all leading axes flattened).
    pub fn rows(&self) -> usize {
        self.re.numel() / (self.n_freqs() * self.n_frames())
    }

    pub fn amplitude(&self, flat: usize) -> f64 {
        self.re.data()[flat].hypot(self.im.data()[flat])
    }
}

/// STFT of `x` shaped `[channels, L]` (or with extra leading axes).
pub fn stft(x: &Tensor, spec: &WindowSpec) -> Result<StftGrid> {
    stft_indexed(x, spec, 0)
}

pub(crate) fn stft_indexed(x: &Tensor, spec: &WindowSpec, window_index: usize) -> Result<StftGrid> {
    let plan = StftPlan::new(spec)?;
    grid_from_plan(&plan, x, window_index)
}

pub(crate) fn grid_from_plan(plan: &StftPlan, x: &Tensor, window_index: usize) -> Result<StftGrid> {
    let (re, im) = plan.transform(x)?;
    let spec = &plan.spec;
    let frames = re.shape()[re.ndim() - 1];
    Ok(StftGrid {
        window_index,
        spec: spec.clone(),
        frame_starts: (0..frames).map(|f| f * spec.hop()).collect(),
        freqs: (0..plan.n_freqs).collect(),
        omegas: (0..plan.n_freqs).map(|k| spec.omega(k)).collect(),
        re,
        im,
    })
}

impl Tape {
    /// Differentiable STFT of `x` (`[..., L]`) returning `(re, im)` grids
    /// shaped `[..., F, frames]`.
    pub fn stft(&mut self, x: Var, spec: &WindowSpec) -> Result<(Var, Var)> {
        let plan = StftPlan::new(spec)?;
        let xt = self.value(x).clone();
        let (re, im) = plan.transform(&xt)?;
        let len = *xt.shape().last().unwrap();
        let rows = xt.numel() / len;
        let x_shape = xt.shape().to_vec();
        let zeros = vec![0.0; re.numel()];

        let (p1, s1, z1) = (Arc::clone(&plan), x_shape.clone(), zeros.clone());
        let re_var = self.record(re, &[x], move |g| {
            let gx = p1.adjoint(g.data(), &z1, rows, len);
            vec![Some(Tensor::from_parts(s1.clone(), gx))]
        });
        let im_var = self.record(im, &[x], move |g| {
            let gx = plan.adjoint(&zeros, g.data(), rows, len);
            vec![Some(Tensor::from_parts(x_shape.clone(), gx))]
        });
        Ok((re_var, im_var))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradient_check;
    use crate::rng::Rng;
    use std::f64::consts::PI;

    /// Brute-force DFT of one block: (re, im) for k = 0..=W/2.
    fn dft_block(x: &[f64]) -> Vec<(f64, f64)> {
        let w = x.len();
        (0..=w / 2)
            .map(|k| {
                let mut re = 0.0;
                let mut im = 0.0;
                for (n, &v) in x.iter().enumerate() {
                    let ph = 2.0 * PI * (k * n) as f64 / w as f64;
                    re += v * ph.cos();
                    im -= v * ph.sin();
                }
                (re, im)
            })
            .collect()
    }

    #[test]
    fn zeros_give_zero_grid() {
        let g = stft(&Tensor::zeros(&[2, 40]), &WindowSpec::hann(16)).unwrap();
        assert!(g.re.data().iter().chain(g.im.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn cosine_peak() {
        let x = Tensor::from_fn(&[1, 8], |n| (2.0 * PI * n as f64 / 8.0).cos());
        let g = stft(&x, &WindowSpec::rectangular(8)).unwrap();
        assert_eq!(g.re.shape(), &[1, 5, 1]);
        assert!((g.re.get(&[0, 1, 0]) - 4.0).abs() < 1e-12);
        assert!(g.im.get(&[0, 1, 0]).abs() < 1e-12);
    }

    #[test]
    fn dc_imaginary_part_is_zero() {
        let mut rng = Rng::new(2);
        let x = Tensor::randn(&[3, 64], &mut rng);
        let g = stft(&x, &WindowSpec::hann(20)).unwrap();
        for c in 0..3 {
            for f in 0..g.n_frames() {
                assert_eq!(g.im.get(&[c, 0, f]), 0.0);
            }
        }
    }

    #[test]
    fn short_input_is_error_naming_lengths() {
        let err = stft(&Tensor::zeros(&[1, 10]), &WindowSpec::hann(16)).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Input(_)));
        assert!(msg.contains("10") && msg.contains("16"), "{msg}");
    }

    #[test]
    fn matches_block_dft() {
        let mut rng = Rng::new(4);
        let w = 16;
        let x = Tensor::randn(&[2, 4 * w], &mut rng);
        let g = stft(&x, &WindowSpec::rectangular(w).with_hop(w)).unwrap();
        for c in 0..2 {
            for b in 0..4 {
                let block = &x.data()[c * 4 * w + b * w..][..w];
                for (k, (re, im)) in dft_block(block).into_iter().enumerate() {
                    assert!((g.re.get(&[c, k, b]) - re).abs() < 1e-10);
                    assert!((g.im.get(&[c, k, b]) - im).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn hann_frames_use_local_phase() {
        let mut rng = Rng::new(5);
        let spec = WindowSpec::hann(10).with_hop(3);
        let x = Tensor::randn(&[1, 31], &mut rng);
        let g = stft(&x, &spec).unwrap();
        let w = make_window(&spec).unwrap();
        for (fi, &s) in g.frame_starts.iter().enumerate() {
            let block: Vec<f64> = (0..10).map(|n| x.data()[s + n] * w[n]).collect();
            for (k, (re, im)) in dft_block(&block).into_iter().enumerate() {
                assert!((g.re.get(&[0, k, fi]) - re).abs() < 1e-12);
                assert!((g.im.get(&[0, k, fi]) - im).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stft_gradient_matches_finite_differences() {
        let mut rng = Rng::new(6);
        let x = Tensor::randn(&[2, 30], &mut rng);
        let wr = Tensor::randn(&[2, 6, 4], &mut rng);
        let wi = Tensor::randn(&[2, 6, 4], &mut rng);
        let spec = WindowSpec::hann(10).with_hop(6);
        let r = gradient_check(
            |t, p| {
                let (re, im) = t.stft(p[0], &spec)?;
                let a = t.mul(re, p[1])?;
                let b = t.mul(im, p[2])?;
                let b = t.mul(b, b)?;
                let s = t.add(a, b)?;
                Ok(t.sum(s))
            },
            &[x, wr, wi],
            1e-5,
            1e-6,
            None,
            &mut rng,
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn signal(rows: usize, len: usize, seed: u64) -> Tensor {
            Tensor::randn(&[rows, len], &mut crate::rng::Rng::new(seed))
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn rectangular_blocks_equal_brute_force_dft(w in 2usize..24, blocks in 1usize..5, seed in any::<u64>()) {
                let x = signal(1, w * blocks, seed);
                let g = stft(&x, &WindowSpec::rectangular(w).with_hop(w)).unwrap();
                for b in 0..blocks {
                    for (k, (re, im)) in dft_block(&x.data()[b * w..][..w]).into_iter().enumerate() {
                        prop_assert!((g.re.get(&[0, k, b]) - re).abs() < 1e-10);
                        prop_assert!((g.im.get(&[0, k, b]) - im).abs() < 1e-10);
                    }
                }
            }

            #[test]
            fn transform_is_linear(
                w in 8usize..32, extra in 0usize..40, hop in 1usize..8,
                a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>(),
            ) {
                let spec = WindowSpec::hann(w).with_hop(hop);
                let (x, y) = (signal(2, w + extra, seed), signal(2, w + extra, seed ^ 0x5a5a));
                let mix = Tensor::from_fn(x.shape(), |i| a * x.data()[i] + b * y.data()[i]);
                let (gx, gy, gm) = (stft(&x, &spec).unwrap(), stft(&y, &spec).unwrap(), stft(&mix, &spec).unwrap());
                for i in 0..gm.re.numel() {
                    prop_assert!((gm.re.data()[i] - a * gx.re.data()[i] - b * gy.re.data()[i]).abs() < 1e-10);
                    prop_assert!((gm.im.data()[i] - a * gx.im.data()[i] - b * gy.im.data()[i]).abs() < 1e-10);
                }
            }

            #[test]
            fn rectangular_frames_satisfy_parseval(w in 2usize..40, extra in 0usize..30, seed in any::<u64>()) {
                let spec = WindowSpec::rectangular(w);
                let x = signal(1, w + extra, seed);
                let g = stft(&x, &spec).unwrap();
                for (fi, &start) in g.frame_starts.iter().enumerate() {
                    let energy: f64 = x.data()[start..start + w].iter().map(|v| v * v).sum();
                    let spectral: f64 = (0..g.n_freqs())
                        .map(|k| {
                            let weight = if k == 0 || (w % 2 == 0 && k == w / 2) { 1.0 } else { 2.0 };
                            weight * (g.re.get(&[0, k, fi]).powi(2) + g.im.get(&[0, k, fi]).powi(2))
                        })
                        .sum();
                    prop_assert!((spectral - w as f64 * energy).abs() < 1e-8, "{spectral} vs {}", w as f64 * energy);
                }
            }
        }
    }
}
