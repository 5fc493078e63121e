//! Elementwise, reduction and shape operations.

use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{
    broadcast_shapes, broadcast_strides, for_each_broadcast, reduce_to_shape, Tensor,
};

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn broadcast_apply(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor> {
    if a.shape() == b.shape() {
        return a.zip_map(b, f);
    }
    let out_shape = broadcast_shapes(a.shape(), b.shape())
        .ok_or_else(|| Error::dim(op, format!("{:?} vs {:?}", a.shape(), b.shape())))?;
    let sa = broadcast_strides(a.shape(), &out_shape);
    let sb = broadcast_strides(b.shape(), &out_shape);
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; out_shape.iter().product()];
    for_each_broadcast(&out_shape, &sa, &sb, |o, ia, ib| out[o] = f(ad[ia], bd[ib]));
    Ok(Tensor::from_parts(out_shape, out))
}

/// Full-size gradient `g * d(a, b)` over the broadcast grid, reduced to `target`.
fn broadcast_partial(
    g: &Tensor,
    a: &Tensor,
    b: &Tensor,
    target: &[usize],
    d: impl Fn(f64, f64) -> f64,
) -> Tensor {
    let out_shape = g.shape();
    let sa = broadcast_strides(a.shape(), out_shape);
    let sb = broadcast_strides(b.shape(), out_shape);
    let (ad, bd, gd) = (a.data(), b.data(), g.data());
    let mut full = vec![0.0; g.numel()];
    for_each_broadcast(out_shape, &sa, &sb, |o, ia, ib| full[o] = gd[o] * d(ad[ia], bd[ib]));
    reduce_to_shape(&Tensor::from_parts(out_shape.to_vec(), full), target)
}

fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(Error::dim(op, format!("axis {axis} out of range for {shape:?}")));
    }
    Ok(())
}

/// (outer, axis length, inner) decomposition of a shape around `axis`.
pub(crate) fn split_at_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Tape {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (at, bt) = (self.value(a).clone(), self.value(b).clone());
        let out = broadcast_apply("add", &at, &bt, |x, y| x + y)?;
        let (sa, sb) = (at.shape().to_vec(), bt.shape().to_vec());
        Ok(self.record(out, &[a, b], move |g| {
            vec![Some(reduce_to_shape(g, &sa)), Some(reduce_to_shape(g, &sb))]
        }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (at, bt) = (self.value(a).clone(), self.value(b).clone());
        let out = broadcast_apply("sub", &at, &bt, |x, y| x - y)?;
        let (sa, sb) = (at.shape().to_vec(), bt.shape().to_vec());
        Ok(self.record(out, &[a, b], move |g| {
            vec![
                Some(reduce_to_shape(g, &sa)),
                Some(reduce_to_shape(&g.map(|v| -v), &sb)),
            ]
        }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (at, bt) = (self.value(a).clone(), self.value(b).clone());
        let out = broadcast_apply("mul", &at, &bt, |x, y| x * y)?;
        Ok(self.record(out, &[a, b], move |g| {
            vec![
                Some(broadcast_partial(g, &at, &bt, at.shape(), |_, y| y)),
                Some(broadcast_partial(g, &at, &bt, bt.shape(), |x, _| x)),
            ]
        }))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let (at, bt) = (self.value(a).clone(), self.value(b).clone());
        let out = broadcast_apply("div", &at, &bt, |x, y| x / y)?;
        Ok(self.record(out, &[a, b], move |g| {
            vec![
                Some(broadcast_partial(g, &at, &bt, at.shape(), |_, y| 1.0 / y)),
                Some(broadcast_partial(g, &at, &bt, bt.shape(), |x, y| -x / (y * y))),
            ]
        }))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).map(|v| v * c);
        self.record(out, &[x], move |g| vec![Some(g.map(|v| v * c))])
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).map(|v| v + c);
        self.record(out, &[x], |g| vec![Some(g.clone())])
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xt = self.value(x).clone();
        let out = xt.map(|v| v.max(0.0));
        self.record(out, &[x], move |g| {
            vec![Some(g.zip_map(&xt, |gv, xv| if xv > 0.0 { gv } else { 0.0 }).unwrap())]
        })
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let xt = self.value(x).clone();
        let out = xt.map(|v| 0.5 * v * (1.0 + (GELU_C * (v + 0.044715 * v * v * v)).tanh()));
        self.record(out, &[x], move |g| {
            let d = xt.map(|v| {
                let u = GELU_C * (v + 0.044715 * v * v * v);
                let t = u.tanh();
                let du = GELU_C * (1.0 + 3.0 * 0.044715 * v * v);
                0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du
            });
            vec![Some(g.zip_map(&d, |a, b| a * b).unwrap())]
        })
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::sqrt);
        let y = out.clone();
        self.record(out, &[x], move |g| {
            vec![Some(g.zip_map(&y, |gv, yv| gv * 0.5 / yv).unwrap())]
        })
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::exp);
        let y = out.clone();
        self.record(out, &[x], move |g| vec![Some(g.zip_map(&y, |a, b| a * b).unwrap())])
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let shape = self.shape(x).to_vec();
        let out = Tensor::scalar(self.value(x).sum());
        self.record(out, &[x], move |g| vec![Some(Tensor::full(&shape, g.item()))])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Sum along `axis`, keeping it as a length-1 dimension.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let xt = self.value(x);
        check_axis("sum_axis", xt.shape(), axis)?;
        let shape = xt.shape().to_vec();
        let (outer, len, inner) = split_at_axis(&shape, axis);
        let d = xt.data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for a in 0..len {
                let src = &d[(o * len + a) * inner..][..inner];
                for (acc, v) in out[o * inner..][..inner].iter_mut().zip(src) {
                    *acc += v;
                }
            }
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = 1;
        let out = Tensor::from_parts(out_shape, out);
        Ok(self.record(out, &[x], move |g| {
            let gd = g.data();
            let mut full = Vec::with_capacity(outer * len * inner);
            for o in 0..outer {
                for _ in 0..len {
                    full.extend_from_slice(&gd[o * inner..][..inner]);
                }
            }
            vec![Some(Tensor::from_parts(shape.clone(), full))]
        }))
    }

    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let s = self.sum_axis(x, axis)?;
        let n = self.shape(x)[axis] as f64;
        Ok(self.scale(s, 1.0 / n))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let old = self.shape(x).to_vec();
        let out = self.value(x).reshape(shape)?;
        Ok(self.record(out, &[x], move |g| vec![Some(g.reshape(&old).unwrap())]))
    }

    /// Output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let out = self.value(x).permute(axes)?;
        let mut inverse = vec![0; axes.len()];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        Ok(self.record(out, &[x], move |g| vec![Some(g.permute(&inverse).unwrap())]))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let nd = self.shape(x).len();
        if nd < 2 {
            return Err(Error::dim("transpose", format!("needs rank >= 2, got {nd}")));
        }
        let mut axes: Vec<usize> = (0..nd).collect();
        axes.swap(nd - 2, nd - 1);
        self.permute(x, &axes)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::dim("concat", "no operands"));
        };
        let base = self.shape(first).to_vec();
        check_axis("concat", &base, axis)?;
        let mut lens = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::dim("concat", format!("{base:?} vs {s:?} along axis {axis}")));
            }
            lens.push(s[axis]);
        }
        let total: usize = lens.iter().sum();
        let (outer, _, inner) = split_at_axis(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (&p, &len) in parts.iter().zip(&lens) {
                out.extend_from_slice(&self.value(p).data()[o * len * inner..][..len * inner]);
            }
        }
        let mut out_shape = base.clone();
        out_shape[axis] = total;
        let out = Tensor::from_parts(out_shape, out);
        Ok(self.record(out, parts, move |g| {
            let gd = g.data();
            let mut grads: Vec<Vec<f64>> =
                lens.iter().map(|l| Vec::with_capacity(outer * l * inner)).collect();
            for o in 0..outer {
                let mut off = o * total * inner;
                for (dst, &len) in grads.iter_mut().zip(&lens) {
                    dst.extend_from_slice(&gd[off..off + len * inner]);
                    off += len * inner;
                }
            }
            grads
                .into_iter()
                .zip(&lens)
                .map(|(d, &len)| {
                    let mut s = base.clone();
                    s[axis] = len;
                    Some(Tensor::from_parts(s, d))
                })
                .collect()
        }))
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        check_axis("slice", &shape, axis)?;
        if start >= end || end > shape[axis] {
            return Err(Error::dim(
                "slice",
                format!("range {start}..{end} invalid for axis {axis} of {shape:?}"),
            ));
        }
        let (outer, len, inner) = split_at_axis(&shape, axis);
        let width = end - start;
        let d = self.value(x).data();
        let mut out = Vec::with_capacity(outer * width * inner);
        for o in 0..outer {
            out.extend_from_slice(&d[(o * len + start) * inner..][..width * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = width;
        let out = Tensor::from_parts(out_shape, out);
        Ok(self.record(out, &[x], move |g| {
            let mut full = vec![0.0; outer * len * inner];
            let gd = g.data();
            for o in 0..outer {
                full[(o * len + start) * inner..][..width * inner]
                    .copy_from_slice(&gd[o * width * inner..][..width * inner]);
            }
            vec![Some(Tensor::from_parts(shape.clone(), full))]
        }))
    }

    /// Gathers flat element indices of `x` into a tensor of `out_shape`.
    /// Gradients scatter-add back to the gathered positions.
    pub fn take(&mut self, x: Var, indices: Vec<usize>, out_shape: &[usize]) -> Result<Var> {
        let xt = self.value(x);
        let n = xt.numel();
        if indices.len() != out_shape.iter().product::<usize>() {
            return Err(Error::dim(
                "take",
                format!("{} indices for output shape {out_shape:?}", indices.len()),
            ));
        }
        if let Some(bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::dim("take", format!("index {bad} out of range for {n} elements")));
        }
        let d = xt.data();
        let out = Tensor::from_parts(out_shape.to_vec(), indices.iter().map(|&i| d[i]).collect());
        let shape = xt.shape().to_vec();
        Ok(self.record(out, &[x], move |g| {
            let mut full = vec![0.0; n];
            for (&i, &gv) in indices.iter().zip(g.data()) {
                full[i] += gv;
            }
            vec![Some(Tensor::from_parts(shape.clone(), full))]
        }))
    }

    /// Zero-pads the last two axes to `(h, w)`, keeping the input centered.
    pub fn pad_centered(&mut self, x: Var, h: usize, w: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let nd = shape.len();
        if nd < 2 {
            return Err(Error::dim("pad_centered", format!("needs rank >= 2, got {shape:?}")));
        }
        let (xh, xw) = (shape[nd - 2], shape[nd - 1]);
        if h < xh || w < xw || (h - xh) % 2 != 0 || (w - xw) % 2 != 0 {
            return Err(Error::dim(
                "pad_centered",
                format!("cannot center {xh}x{xw} inside {h}x{w}"),
            ));
        }
        let (oy, ox) = ((h - xh) / 2, (w - xw) / 2);
        let planes: usize = shape[..nd - 2].iter().product();
        let d = self.value(x).data();
        let mut out = vec![0.0; planes * h * w];
        for p in 0..planes {
            for r in 0..xh {
                out[p * h * w + (r + oy) * w + ox..][..xw]
                    .copy_from_slice(&d[p * xh * xw + r * xw..][..xw]);
            }
        }
        let mut out_shape = shape.clone();
        out_shape[nd - 2] = h;
        out_shape[nd - 1] = w;
        let out = Tensor::from_parts(out_shape, out);
        Ok(self.record(out, &[x], move |g| {
            let gd = g.data();
            let mut back = Vec::with_capacity(planes * xh * xw);
            for p in 0..planes {
                for r in 0..xh {
                    back.extend_from_slice(&gd[p * h * w + (r + oy) * w + ox..][..xw]);
                }
            }
            vec![Some(Tensor::from_parts(shape.clone(), back))]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradient_check;
    use crate::rng::Rng;

    fn t(shape: &[usize], v: Vec<f64>) -> Tensor {
        Tensor::new(shape, v).unwrap()
    }

    #[test]
    fn add_zeros_is_identity() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let z = tape.constant(Tensor::zeros(&[2, 2]));
        let y = tape.add(x, z).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
    }

    #[test]
    fn concat_shape() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::ones(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        let c = tape.concat(&[a, b], 1).unwrap();
        assert_eq!(tape.shape(c), &[2, 6]);
        assert_eq!(tape.value(c).data()[..6], [1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn mean_gradient_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[4], vec![3.0, -1.0, 2.0, 8.0]));
        let m = tape.mean(x);
        tape.backward(m).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[0.25; 4]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::ones(&[2, 3]));
        let b = tape.constant(Tensor::ones(&[3, 2]));
        let err = tape.add(a, b).unwrap_err();
        assert!(err.to_string().contains("[2, 3]") && err.to_string().contains("[3, 2]"));
        assert!(tape.concat(&[a, b], 1).is_err());
        assert!(tape.slice(a, 1, 2, 5).is_err());
    }

    #[test]
    fn broadcast_ops_gradients() {
        let mut rng = Rng::new(5);
        let a = Tensor::randn(&[3, 4], &mut rng);
        let b = Tensor::randn(&[4], &mut rng);
        let c = Tensor::uniform(&[3, 1], 0.5, 2.0, &mut rng);
        let report = gradient_check(
            |tape, p| {
                let s = tape.add(p[0], p[1])?;
                let m = tape.mul(s, p[2])?;
                let d = tape.div(m, p[2])?;
                let d = tape.sub(d, p[1])?;
                let q = tape.mul(d, m)?;
                Ok(tape.sum(q))
            },
            &[a, b, c],
            1e-5,
            1e-6,
            None,
            &mut rng,
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn shape_op_gradients() {
        let mut rng = Rng::new(9);
        let a = Tensor::randn(&[2, 3, 4], &mut rng);
        let w = Tensor::randn(&[2, 4, 5], &mut rng);
        let report = gradient_check(
            |tape, p| {
                let x = tape.permute(p[0], &[2, 0, 1])?; // [4,2,3]
                let x = tape.reshape(x, &[4, 6])?;
                let y = tape.slice(x, 1, 1, 5)?; // [4,4]
                let z = tape.concat(&[y, x], 1)?; // [4,10]
                let z = tape.gelu(z);
                let z = tape.sum_axis(z, 0)?;
                let idx = vec![0, 3, 3, 9];
                let z = tape.take(z, idx, &[2, 2])?;
                let pw = tape.pad_centered(p[1], 6, 7)?;
                let pw = tape.mean_axis(pw, 2)?;
                let s1 = tape.sum(z);
                let s2 = tape.sum(pw);
                let e = tape.exp(s2);
                let s = tape.mul(s1, e)?;
                let sq = tape.add_scalar(s, 10.0);
                let sq = tape.mul(sq, sq)?;
                Ok(tape.sqrt(sq))
            },
            &[a, w],
            1e-5,
            1e-6,
            None,
            &mut rng,
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn relu_zeroes_negative_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[3], vec![-1.0, 0.5, 2.0]));
        let y = tape.relu(x);
        let s = tape.sum(y);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[0.0, 1.0, 1.0]);
    }
}
