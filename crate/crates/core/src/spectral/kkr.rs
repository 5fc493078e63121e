//! Numerical check of the Kramers-Kronig relations for sampled signals.
//!
//! A signal is zero-padded to `N * padding_factor` samples and its discrete
//! spectrum `Re + i Im` is computed on the uniform grid
//! `omega_j = 2 pi j / N_pad`. Each part is then reconstructed from the
//! other with the principal-value integrals
//!
//! ```text
//! Re(w) =  (1/pi) PV int Im(s) / (w - s) ds
//! Im(w) = -(1/pi) PV int Re(s) / (w - s) ds
//! ```
//!
//! taken over the whole real line. The spectrum of a sampled signal is
//! 2 pi-periodic, so the images `1 / (u + 2 pi m)` sum to `cot(u / 2) / 2`
//! and the integral reduces to one period. Quadrature is the trapezoid rule
//! on the grid with the singular node skipped. For sampled signals the
//! origin sample `x[0]` contributes a constant to the real part that no
//! integral of `Im` can produce, so it is added back explicitly.
//!
//! Residuals are the largest reconstruction error divided by the largest
//! spectral magnitude.

use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KkrReport {
    pub residual_re: f64,
    pub residual_im: f64,
    pub padding_factor: usize,
}

/// Direct DFT `X_j = sum_n x[n] e^{-i 2 pi j n / N}`.
pub fn dft(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let (cos, sin) = twiddles(n);
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    for j in 0..n {
        let (mut r, mut i) = (0.0, 0.0);
        for (t, &v) in x.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let idx = (j * t) % n;
            r += v * cos[idx];
            i -= v * sin[idx];
        }
        re[j] = r;
        im[j] = i;
    }
    (re, im)
}

fn twiddles(n: usize) -> (Vec<f64>, Vec<f64>) {
    (0..n)
        .map(|i| {
            let ph = 2.0 * PI * i as f64 / n as f64;
            (ph.cos(), ph.sin())
        })
        .unzip()
}

/// Residuals for a causal signal starting at `t = 0`.
pub fn kkr_residual(x_causal: &[f64], padding_factor: usize) -> Result<KkrReport> {
    kkr_residual_about(x_causal, 0, padding_factor)
}

/// Residuals for a signal whose sample `origin` sits at `t = 0`; samples
/// before it are negative times and wrap to the end of the padded buffer.
pub fn kkr_residual_about(samples: &[f64], origin: usize, padding_factor: usize) -> Result<KkrReport> {
    if padding_factor == 0 {
        return Err(Error::Config("padding factor must be at least 1".into()));
    }
    if samples.is_empty() || origin >= samples.len() {
        return Err(Error::Input("signal must contain its origin sample".into()));
    }
    if let Some(bad) = samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::Input(format!("non-finite sample at index {bad}")));
    }
    if samples.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate(
            "all-zero signal: relative residual undefined".into(),
        ));
    }

    let np = samples.len() * padding_factor;
    let mut buf = vec![0.0; np];
    for (i, &v) in samples.iter().enumerate() {
        let t = i as isize - origin as isize;
        buf[t.rem_euclid(np as isize) as usize] += v;
    }
    let (re, im) = dft(&buf);

    // Kernel of the periodic principal value, indexed by (j - k) mod np.
    let kernel: Vec<f64> = (0..np)
        .map(|d| {
            if d == 0 {
                0.0
            } else {
                0.5 / (PI * d as f64 / np as f64).tan()
            }
        })
        .collect();
    let dsigma = 2.0 * PI / np as f64;

    let mut err_re: f64 = 0.0;
    let mut err_im: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for j in 0..np {
        let (mut from_im, mut from_re) = (0.0, 0.0);
        for k in 0..np {
            if k == j {
                continue;
            }
            let kern = kernel[(j + np - k) % np];
            from_im += im[k] * kern;
            from_re += re[k] * kern;
        }
        let re_hat = buf[0] + from_im * dsigma / PI;
        let im_hat = -from_re * dsigma / PI;
        err_re = err_re.max((re_hat - re[j]).abs());
        err_im = err_im.max((im_hat - im[j]).abs());
        scale = scale.max(re[j].hypot(im[j]));
    }
    Ok(KkrReport {
        residual_re: err_re / scale,
        residual_im: err_im / scale,
        padding_factor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_decay(a: f64, n: usize) -> Vec<f64> {
        (0..n).map(|t| (-a * t as f64).exp()).collect()
    }

    #[test]
    fn all_zero_is_degenerate() {
        assert!(matches!(kkr_residual(&[0.0; 16], 2), Err(Error::Degenerate(_))));
    }

    #[test]
    fn zero_padding_is_config_error() {
        assert!(matches!(kkr_residual(&[1.0; 4], 0), Err(Error::Config(_))));
    }

    #[test]
    fn dft_matches_analytic_exponential_spectrum() {
        // Oracle: sum_n r^n e^{-i w n} = 1 / (1 - r e^{-i w}) for r = e^{-a}.
        // Its trapezoid-corrected real part (Re - x0/2) equals the periodized
        // continuous transform sum_m a / (a^2 + (w + 2 pi m)^2)
        // = sinh(a) / (2 (cosh(a) - cos w)).
        let a = 0.5;
        let n = 256;
        let (re, im) = dft(&exp_decay(a, n));
        let r = (-a).exp();
        for j in 0..n {
            let w = 2.0 * PI * j as f64 / n as f64;
            let den = 1.0 - 2.0 * r * w.cos() + r * r;
            let re_exact = (1.0 - r * w.cos()) / den;
            let im_exact = -r * w.sin() / den;
            assert!((re[j] - re_exact).abs() < 1e-10);
            assert!((im[j] - im_exact).abs() < 1e-10);
            let periodized: f64 = (-200..=200)
                .map(|m| {
                    let s = w + 2.0 * PI * m as f64;
                    a / (a * a + s * s)
                })
                .sum();
            let closed = a.sinh() / (2.0 * (a.cosh() - w.cos()));
            assert!((periodized - closed).abs() < 1e-3);
            assert!((re[j] - 0.5 - closed).abs() < 1e-10);
        }
    }

    #[test]
    fn exponential_residuals_shrink_with_padding() {
        let x = exp_decay(0.5, 256);
        let reports: Vec<KkrReport> = [1, 2, 4, 8]
            .iter()
            .map(|&p| kkr_residual(&x, p).unwrap())
            .collect();
        for w in reports.windows(2) {
            assert!(w[1].residual_re <= w[0].residual_re);
            assert!(w[1].residual_im <= w[0].residual_im);
        }
        assert!(reports[3].residual_re < 0.05);
        assert!(reports[3].residual_im < 0.05);
    }

    #[test]
    fn even_noncausal_signal_fails_the_relations() {
        let half = 24;
        let g: Vec<f64> = (0..=2 * half)
            .map(|i| {
                let t = i as f64 - half as f64;
                (-0.5 * (t / 4.0).powi(2)).exp()
            })
            .collect();
        for p in [1, 2, 4, 8] {
            let r = kkr_residual_about(&g, half, p).unwrap();
            assert!(r.residual_re > 0.5, "{r:?}");
        }
    }
}
