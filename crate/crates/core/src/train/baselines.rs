//! Reference forecasters: persistence and per-variable least squares.

use nalgebra::DMatrix;

use crate::data::WindowSet;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Ridge strength used when the normal equations are singular.
pub const RIDGE_LAMBDA: f64 = 1e-6;

/// Repeats the last lookback value over the horizon: `[..., D, L] -> [..., D, T]`.
pub fn persistence(lookback: &Tensor, horizon: usize) -> Result<Tensor> {
    let s = lookback.shape();
    let l = *s.last().ok_or_else(|| Error::dim("persistence", "rank 0 input"))?;
    let rows = lookback.numel() / l;
    let mut out = Vec::with_capacity(rows * horizon);
    for r in 0..rows {
        let last = lookback.data()[r * l + l - 1];
        out.extend(std::iter::repeat(last).take(horizon));
    }
    let mut shape = s.to_vec();
    *shape.last_mut().unwrap() = horizon;
    Tensor::new(&shape, out)
}

/// Per-variable affine map from the lookback to the horizon, fitted by
/// least squares on the training windows.
#[derive(Clone, Debug)]
pub struct LinearBaseline {
    /// Per variable, `[L + 1, T]` with the intercept in the last row.
    weights: Vec<DMatrix<f64>>,
    lookback: usize,
    horizon: usize,
    /// Whether any variable needed the ridge fallback.
    pub used_ridge: bool,
}

impl LinearBaseline {
    pub fn fit(train: &WindowSet) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Data("cannot fit the linear baseline on an empty split".into()));
        }
        let (l, t, d, n) = (train.lookback, train.horizon, train.n_vars(), train.len());
        let (x, y) = train.all();
        let mut weights = Vec::with_capacity(d);
        let mut used_ridge = false;
        for j in 0..d {
            let feats = DMatrix::from_fn(n, l + 1, |i, c| {
                if c == l {
                    1.0
                } else {
                    x.data()[(i * d + j) * l + c]
                }
            });
            let targets = DMatrix::from_fn(n, t, |i, c| y.data()[(i * d + j) * t + c]);
            let (w, ridge) = solve_least_squares(&feats, &targets)?;
            if ridge {
                log::warn!("linear baseline: singular normal equations for variable {j}; using ridge {RIDGE_LAMBDA}");
            }
            used_ridge |= ridge;
            weights.push(w);
        }
        Ok(Self { weights, lookback: l, horizon: t, used_ridge })
    }

    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let (d, l, t) = (self.weights.len(), self.lookback, self.horizon);
        let s = x.shape();
        if s.len() != 3 || s[1] != d || s[2] != l {
            return Err(Error::dim("linear baseline", format!("expected [B, {d}, {l}], got {s:?}")));
        }
        let b = s[0];
        let mut out = vec![0.0; b * d * t];
        for i in 0..b {
            for (j, w) in self.weights.iter().enumerate() {
                let row = &x.data()[(i * d + j) * l..][..l];
                for h in 0..t {
                    let mut acc = w[(l, h)];
                    for (c, v) in row.iter().enumerate() {
                        acc += v * w[(c, h)];
                    }
                    out[(i * d + j) * t + h] = acc;
                }
            }
        }
        Tensor::new(&[b, d, t], out)
    }
}

/// Normal equations via Cholesky; if they are singular or numerically
/// rank deficient, ridge regression solved on the augmented system
/// `[X; sqrt(lambda) I] w = [Y; 0]` by SVD.
fn solve_least_squares(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    if let Some(ch) = xtx.clone().cholesky() {
        let diag = ch.l_dirty().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if lo > 0.0 && (lo / hi).powi(2) > 1e-12 {
            return Ok((ch.solve(&xty), false));
        }
    }
    let (n, k) = x.shape();
    let mut aug = DMatrix::zeros(n + k, k);
    aug.rows_mut(0, n).copy_from(x);
    for i in 0..k {
        aug[(n + i, i)] = RIDGE_LAMBDA.sqrt();
    }
    let mut rhs = DMatrix::zeros(n + k, y.ncols());
    rhs.rows_mut(0, n).copy_from(y);
    let w = aug
        .svd(true, true)
        .solve(&rhs, 0.0)
        .map_err(|e| Error::Degenerate(format!("ridge solve failed: {e}")))?;
    Ok((w, true))
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{window_pairs, SeriesSet, SplitSpec};
    use crate::rng::Rng;
    use crate::train::metrics;

    #[test]
    fn persistence_on_constant_is_exact() {
        let x = Tensor::full(&[2, 3, 8], 4.2);
        let p = persistence(&x, 5).unwrap();
        let (mse, mae) = metrics(&p, &Tensor::full(&[2, 3, 5], 4.2)).unwrap();
        assert_eq!((mse, mae), (0.0, 0.0));
    }

    #[test]
    fn persistence_error_grows_with_step_on_ramp() {
        let x = Tensor::from_fn(&[1, 10], |i| i as f64);
        let p = persistence(&x, 4).unwrap();
        let truth: Vec<f64> = (10..14).map(|v| v as f64).collect();
        for (h, (a, b)) in p.data().iter().zip(&truth).enumerate() {
            assert_eq!(b - a, (h + 1) as f64);
        }
    }

    #[test]
    fn linear_fits_a_trend_nearly_exactly() {
        let s = SeriesSet::unnamed(Tensor::from_fn(&[1, 400], |i| 0.5 * i as f64 - 20.0)).unwrap();
        let w = window_pairs(&s, 12, 3, 1, SplitSpec::default()).unwrap();
        let model = LinearBaseline::fit(&w.train).unwrap();
        assert!(model.used_ridge);
        let (x, y) = w.test.all();
        let (mse, _) = metrics(&model.predict(&x).unwrap(), &y).unwrap();
        assert!(mse < 1e-8, "{mse}");
    }

    #[test]
    fn linear_recovers_an_autoregression() {
        // x_t = 0.6 x_{t-1} - 0.3 x_{t-2} + 1 + noise; one-step map is exact
        // up to the noise, so the fit should approach the true coefficients.
        let mut rng = Rng::new(3);
        let mut v = vec![0.0, 0.0];
        for t in 2..3000 {
            let next = 0.6 * v[t - 1] - 0.3 * v[t - 2] + 1.0 + 0.1 * rng.normal();
            v.push(next);
        }
        let s = SeriesSet::unnamed(Tensor::new(&[1, 3000], v).unwrap()).unwrap();
        let w = window_pairs(&s, 4, 1, 1, SplitSpec::default()).unwrap();
        let model = LinearBaseline::fit(&w.train).unwrap();
        assert!(!model.used_ridge);
        let (x, y) = w.test.all();
        let (mse, _) = metrics(&model.predict(&x).unwrap(), &y).unwrap();
        assert!((mse - 0.01).abs() < 0.002, "{mse}");
    }
}
