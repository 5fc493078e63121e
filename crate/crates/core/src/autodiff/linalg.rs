use super::ops::split_at_axis;
use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{broadcast_shapes, broadcast_strides, for_each_broadcast, gemm, Tensor};

struct MatmulPlan {
    m: usize,
    k: usize,
    n: usize,
    batch: Vec<usize>,
    stride_a: Vec<usize>,
    stride_b: Vec<usize>,
}

fn plan(a: &[usize], b: &[usize]) -> Result<MatmulPlan> {
    let mismatch = || Error::dim("matmul", format!("{a:?} x {b:?}"));
    if a.len() < 2 || b.len() < 2 {
        return Err(mismatch());
    }
    let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
    let (k2, n) = (b[b.len() - 2], b[b.len() - 1]);
    if k != k2 {
        return Err(mismatch());
    }
    let (ba, bb) = (&a[..a.len() - 2], &b[..b.len() - 2]);
    let batch = broadcast_shapes(ba, bb).ok_or_else(mismatch)?;
    let stride_a = broadcast_strides(ba, &batch).iter().map(|s| s * m * k).collect();
    let stride_b = broadcast_strides(bb, &batch).iter().map(|s| s * k * n).collect();
    Ok(MatmulPlan {
        m,
        k,
        n,
        batch,
        stride_a,
        stride_b,
    })
}

impl Tape {
    /// Batched matrix product `[..., m, k] x [..., k, n] -> [..., m, n]`
    /// with numpy broadcasting over the batch axes.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (at, bt) = (self.value(a).clone(), self.value(b).clone());
        let p = plan(at.shape(), bt.shape())?;
        let (m, k, n) = (p.m, p.k, p.n);
        let nb: usize = p.batch.iter().product();
        let mut out = vec![0.0; nb * m * n];
        {
            let (ad, bd) = (at.data(), bt.data());
            for_each_broadcast(&p.batch, &p.stride_a, &p.stride_b, |i, oa, ob| {
                gemm(
                    m,
                    k,
                    n,
                    &ad[oa..],
                    (k, 1),
                    &bd[ob..],
                    (n, 1),
                    &mut out[i * m * n..],
                    (n, 1),
                    0.0,
                );
            });
        }
        let mut out_shape = p.batch.clone();
        out_shape.extend([m, n]);
        let out = Tensor::from_parts(out_shape, out);
        Ok(self.record(out, &[a, b], move |g| {
            let (ad, bd, gd) = (at.data(), bt.data(), g.data());
            let mut ga = vec![0.0; at.numel()];
            let mut gb = vec![0.0; bt.numel()];
            for_each_broadcast(&p.batch, &p.stride_a, &p.stride_b, |i, oa, ob| {
                let gi = &gd[i * m * n..];
                // dA = dC B^T
                gemm(m, n, k, gi, (n, 1), &bd[ob..], (1, n), &mut ga[oa..], (k, 1), 1.0);
                // dB = A^T dC
                gemm(k, m, n, &ad[oa..], (1, k), gi, (n, 1), &mut gb[ob..], (n, 1), 1.0);
            });
            vec![
                Some(Tensor::from_parts(at.shape().to_vec(), ga)),
                Some(Tensor::from_parts(bt.shape().to_vec(), gb)),
            ]
        }))
    }

    /// Affine map of the last axis: `x [..., i] @ w [i, o] + bias [o]`,
    /// evaluated as a single matrix product over all leading positions.
    pub fn linear(&mut self, x: Var, w: Var, bias: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.is_empty() || ws.len() != 2 || xs[xs.len() - 1] != ws[0] {
            return Err(Error::dim("linear", format!("{xs:?} x {ws:?}")));
        }
        let rows = xs[..xs.len() - 1].iter().product();
        let flat = self.reshape(x, &[rows, ws[0]])?;
        let mut y = self.matmul(flat, w)?;
        if let Some(b) = bias {
            y = self.add(y, b)?;
        }
        let mut out = xs;
        *out.last_mut().unwrap() = ws[1];
        self.reshape(y, &out)
    }

    /// Softmax along `axis`, stabilized by subtracting the running maximum.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let xt = self.value(x);
        let shape = xt.shape().to_vec();
        if axis >= shape.len() {
            return Err(Error::dim("softmax", format!("axis {axis} out of range for {shape:?}")));
        }
        let (outer, len, inner) = split_at_axis(&shape, axis);
        let d = xt.data();
        let mut y = vec![0.0; d.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |a: usize| (o * len + a) * inner + i;
                let max = (0..len).map(|a| d[at(a)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for a in 0..len {
                    let e = (d[at(a)] - max).exp();
                    y[at(a)] = e;
                    total += e;
                }
                for a in 0..len {
                    y[at(a)] /= total;
                }
            }
        }
        let y = Tensor::from_parts(shape, y);
        let saved = y.clone();
        Ok(self.record(y, &[x], move |g| {
            let (yd, gd) = (saved.data(), g.data());
            let mut gx = vec![0.0; yd.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |a: usize| (o * len + a) * inner + i;
                    let dot: f64 = (0..len).map(|a| gd[at(a)] * yd[at(a)]).sum();
                    for a in 0..len {
                        gx[at(a)] = yd[at(a)] * (gd[at(a)] - dot);
                    }
                }
            }
            vec![Some(Tensor::from_parts(saved.shape().to_vec(), gx))]
        }))
    }
}
