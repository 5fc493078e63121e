//! Frequency cross attention between the real and imaginary spectral parts.
//!
//! Tokens are the M selected frequency slots of one window; attention runs
//! independently per window. Queries and keys derived from one part attend
//! over values derived from the other:
//!
//! * real-side Q/K with imaginary-side V produce the augmented imaginary part,
//! * imaginary-side Q/K with real-side V produce the augmented real part.
//!
//! Per-head projections are stored concatenated (`[E, H * d]`), which is the
//! same parameterization as H separate `[E, d]` matrices.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::params::param_group;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FcaDims {
    pub embed: usize,
    pub heads: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub d_hidden: usize,
}

impl FcaDims {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("embed_dim", self.embed),
            ("n_heads", self.heads),
            ("d_k", self.d_k),
            ("d_v", self.d_v),
            ("d_hidden", self.d_hidden),
        ];
        for (name, v) in named {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Closed-form scalar parameter count.
    pub fn param_count(&self) -> usize {
        let FcaDims { embed: e, heads: h, d_k, d_v, d_hidden } = *self;
        2 * h * (2 * e * d_k + e * d_v + 2 * d_k + d_v) + 2 * h * d_v * d_hidden
    }
}

param_group! {
    /// `re_*` projections read the real coefficients, `im_*` the imaginary
    /// ones. `re_out` maps attended real-side values to the augmented real
    /// part; `im_out` likewise for the imaginary part.
    FcaParams {
        re_query, re_query_bias, re_key, re_key_bias, re_value, re_value_bias,
        im_query, im_query_bias, im_key, im_key_bias, im_value, im_value_bias,
        re_out, im_out,
    }
}

impl FcaParams<Tensor> {
    /// Uniform fan-in initialization, zero biases.
    pub fn init(dims: &FcaDims, rng: &mut Rng) -> Self {
        let FcaDims { embed: e, heads: h, d_k, d_v, d_hidden } = *dims;
        let mut w = |rows: usize, cols: usize| {
            let a = 1.0 / (rows as f64).sqrt();
            Tensor::uniform(&[rows, cols], -a, a, rng)
        };
        let (rq, rk, rv) = (w(e, h * d_k), w(e, h * d_k), w(e, h * d_v));
        let (iq, ik, iv) = (w(e, h * d_k), w(e, h * d_k), w(e, h * d_v));
        let (ro, io) = (w(h * d_v, d_hidden), w(h * d_v, d_hidden));
        let z = |n: usize| Tensor::zeros(&[n]);
        FcaParams {
            re_query: rq,
            re_query_bias: z(h * d_k),
            re_key: rk,
            re_key_bias: z(h * d_k),
            re_value: rv,
            re_value_bias: z(h * d_v),
            im_query: iq,
            im_query_bias: z(h * d_k),
            im_key: ik,
            im_key_bias: z(h * d_k),
            im_value: iv,
            im_value_bias: z(h * d_v),
            re_out: ro,
            im_out: io,
        }
    }

    pub fn zeros(dims: &FcaDims) -> Self {
        Self::init(dims, &mut Rng::new(0)).map(&mut |t| Tensor::zeros(t.shape()))
    }
}

/// Per-head queries, keys and values, each `[..., P, H, M, d]`.
#[derive(Clone, Copy, Debug)]
pub struct HeadProjections {
    pub query: Var,
    pub key: Var,
    pub value: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct Qkv {
    pub re: HeadProjections,
    pub im: HeadProjections,
}

/// `[..., E, P, M]` coefficients to `[..., P, M, E]` tokens.
fn to_tokens(tape: &mut Tape, x: Var, embed: usize) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    let n = shape.len();
    if n < 3 || shape[n - 3] != embed {
        return Err(Error::Config(format!(
            "attention expects [..., {embed}, P, M] coefficients, got {shape:?}"
        )));
    }
    let mut axes: Vec<usize> = (0..n - 3).collect();
    axes.extend([n - 2, n - 1, n - 3]);
    tape.permute(x, &axes)
}

/// `[..., P, M, H * d]` to `[..., P, H, M, d]`.
fn split_heads(tape: &mut Tape, x: Var, heads: usize) -> Result<Var> {
    let mut shape = tape.shape(x).to_vec();
    let n = shape.len();
    let d = shape[n - 1] / heads;
    shape[n - 1] = heads;
    shape.push(d);
    let x = tape.reshape(x, &shape)?;
    let mut axes: Vec<usize> = (0..n - 2).collect();
    axes.extend([n - 1, n - 2, n]);
    tape.permute(x, &axes)
}

/// `[..., P, H, M, d]` to `[..., P, M, H * d]`.
fn merge_heads(tape: &mut Tape, x: Var) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    let n = shape.len();
    let mut axes: Vec<usize> = (0..n - 3).collect();
    axes.extend([n - 2, n - 3, n - 1]);
    let x = tape.permute(x, &axes)?;
    let mut out = shape[..n - 3].to_vec();
    out.extend([shape[n - 2], shape[n - 3] * shape[n - 1]]);
    tape.reshape(x, &out)
}

fn project(tape: &mut Tape, tokens: Var, w: Var, b: Var, heads: usize) -> Result<Var> {
    tape.scope(|tape| {
        let y = tape.linear(tokens, w, Some(b))?;
        split_heads(tape, y, heads)
    })
}

/// Affine maps of both parts' coefficients (`[..., E, P, M]`) into per-head
/// queries, keys and values.
pub fn project_qkv(tape: &mut Tape, re: Var, im: Var, params: &FcaParams<Var>, dims: &FcaDims) -> Result<Qkv> {
    let h = dims.heads;
    let re_t = to_tokens(tape, re, dims.embed)?;
    let im_t = to_tokens(tape, im, dims.embed)?;
    let p = params;
    Ok(Qkv {
        re: HeadProjections {
            query: project(tape, re_t, p.re_query, p.re_query_bias, h)?,
            key: project(tape, re_t, p.re_key, p.re_key_bias, h)?,
            value: project(tape, re_t, p.re_value, p.re_value_bias, h)?,
        },
        im: HeadProjections {
            query: project(tape, im_t, p.im_query, p.im_query_bias, h)?,
            key: project(tape, im_t, p.im_key, p.im_key_bias, h)?,
            value: project(tape, im_t, p.im_value, p.im_value_bias, h)?,
        },
    })
}

/// Row-softmax of `q k^T / sqrt(d_k)`: `[..., M, d_k]` pairs to `[..., M, M]`.
pub fn attention_weights(tape: &mut Tape, q: Var, k: Var) -> Result<Var> {
    let d_k = *tape.shape(q).last().unwrap_or(&1) as f64;
    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, kt)?;
    let scores = tape.scale(scores, 1.0 / d_k.sqrt());
    let last = tape.shape(scores).len() - 1;
    tape.softmax(scores, last)
}

/// Scaled dot-product attention of `q`, `k` over `v` along the token axis.
pub fn cross_attend(tape: &mut Tape, q: Var, k: Var, v: Var) -> Result<Var> {
    tape.scope(|tape| {
        let weights = attention_weights(tape, q, k)?;
        tape.matmul(weights, v)
    })
}

/// Augmented `(re, im)` spectra, each `[..., P, M, d_hidden]`.
pub fn fca_forward(tape: &mut Tape, re: Var, im: Var, params: &FcaParams<Var>, dims: &FcaDims) -> Result<(Var, Var)> {
    tape.scope(|tape| {
        let qkv = project_qkv(tape, re, im, params, dims)?;
        let from_re = cross_attend(tape, qkv.re.query, qkv.re.key, qkv.im.value)?;
        let from_im = cross_attend(tape, qkv.im.query, qkv.im.key, qkv.re.value)?;
        let im_aug = tape.scope(|tape| {
            let merged = merge_heads(tape, from_re)?;
            tape.linear(merged, params.im_out, None)
        })?;
        let re_aug = tape.scope(|tape| {
            let merged = merge_heads(tape, from_im)?;
            tape.linear(merged, params.re_out, None)
        })?;
        Ok((re_aug, im_aug))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradient_check;

    fn dims(e: usize, h: usize, d: usize, dh: usize) -> FcaDims {
        FcaDims { embed: e, heads: h, d_k: d, d_v: d, d_hidden: dh }
    }

    fn on_tape(tape: &mut Tape, p: &FcaParams<Tensor>) -> FcaParams<Var> {
        p.map(&mut |t| tape.param(t.clone()))
    }

    #[test]
    fn param_count_matches_enumeration() {
        for d in [dims(3, 2, 4, 5), dims(32, 4, 64, 64), FcaDims { embed: 2, heads: 3, d_k: 1, d_v: 7, d_hidden: 2 }] {
            let p = FcaParams::init(&d, &mut Rng::new(1));
            let mut total = 0;
            p.visit("", &mut |_, t| total += t.numel());
            assert_eq!(total, d.param_count());
        }
    }

    #[test]
    fn zero_weights_map_every_token_to_bias() {
        let d = dims(3, 2, 2, 2);
        let mut p = FcaParams::zeros(&d);
        p.re_query_bias = Tensor::new(&[4], vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let mut tape = Tape::new();
        let vars = on_tape(&mut tape, &p);
        let x = tape.constant(Tensor::randn(&[3, 2, 5], &mut Rng::new(2)));
        let qkv = project_qkv(&mut tape, x, x, &vars, &d).unwrap();
        let q = tape.value(qkv.re.query);
        assert_eq!(q.shape(), &[2, 2, 5, 2]);
        for p_ in 0..2 {
            for h in 0..2 {
                for m in 0..5 {
                    for j in 0..2 {
                        let v = q.data()[((p_ * 2 + h) * 5 + m) * 2 + j];
                        assert_eq!(v, [1.0, -2.0, 0.5, 3.0][h * 2 + j]);
                    }
                }
            }
        }
    }

    #[test]
    fn unit_scalar_projection_returns_coefficients() {
        let d = dims(1, 1, 1, 1);
        let mut p = FcaParams::zeros(&d);
        p.im_key = Tensor::ones(&[1, 1]);
        let x = Tensor::randn(&[1, 3, 4], &mut Rng::new(3));
        let mut tape = Tape::new();
        let vars = on_tape(&mut tape, &p);
        let xv = tape.constant(x.clone());
        let qkv = project_qkv(&mut tape, xv, xv, &vars, &d).unwrap();
        assert_eq!(tape.value(qkv.im.key).data(), x.data());
    }

    #[test]
    fn projection_matches_loop_oracle() {
        let d = FcaDims { embed: 3, heads: 2, d_k: 2, d_v: 3, d_hidden: 4 };
        let mut rng = Rng::new(4);
        let mut p = FcaParams::init(&d, &mut rng);
        p.re_value_bias = Tensor::randn(&[6], &mut rng);
        let x = Tensor::randn(&[3, 2, 4], &mut rng);
        let mut tape = Tape::new();
        let vars = on_tape(&mut tape, &p);
        let xv = tape.constant(x.clone());
        let qkv = project_qkv(&mut tape, xv, xv, &vars, &d).unwrap();
        let v = tape.value(qkv.re.value);
        let (w, b) = (p.re_value.data(), p.re_value_bias.data());
        for pi in 0..2 {
            for h in 0..2 {
                for m in 0..4 {
                    for j in 0..3 {
                        let col = h * 3 + j;
                        let mut want = b[col];
                        for e in 0..3 {
                            want += x.data()[(e * 2 + pi) * 4 + m] * w[e * 6 + col];
                        }
                        let got = v.data()[((pi * 2 + h) * 4 + m) * 3 + j];
                        assert!((got - want).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn wrong_channel_count_is_config_error() {
        let d = dims(3, 1, 2, 2);
        let p = FcaParams::zeros(&d);
        let mut tape = Tape::new();
        let vars = on_tape(&mut tape, &p);
        let x = tape.constant(Tensor::zeros(&[2, 2, 4]));
        assert!(matches!(project_qkv(&mut tape, x, x, &vars, &d), Err(Error::Config(_))));
    }

    #[test]
    fn single_token_returns_value() {
        let mut tape = Tape::new();
        let mut rng = Rng::new(5);
        let q = tape.constant(Tensor::randn(&[2, 1, 3], &mut rng));
        let k = tape.constant(Tensor::randn(&[2, 1, 3], &mut rng));
        let v = tape.constant(Tensor::randn(&[2, 1, 4], &mut rng));
        let out = cross_attend(&mut tape, q, k, v).unwrap();
        assert!(tape.value(out).max_abs_diff(tape.value(v)) < 1e-15);
    }

    #[test]
    fn identical_keys_average_values() {
        let mut tape = Tape::new();
        let mut rng = Rng::new(6);
        let q = tape.constant(Tensor::randn(&[3, 2], &mut rng));
        let k = tape.constant(Tensor::new(&[3, 2], vec![0.3, -1.0, 0.3, -1.0, 0.3, -1.0]).unwrap());
        let vt = Tensor::randn(&[3, 2], &mut rng);
        let v = tape.constant(vt.clone());
        let out = cross_attend(&mut tape, q, k, v).unwrap();
        for r in 0..3 {
            for c in 0..2 {
                let mean = (0..3).map(|i| vt.data()[i * 2 + c]).sum::<f64>() / 3.0;
                assert!((tape.value(out).data()[r * 2 + c] - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_token_hand_example() {
        let mut tape = Tape::new();
        let q = tape.constant(Tensor::new(&[2, 1], vec![1.0, 0.0]).unwrap());
        let k = tape.constant(Tensor::new(&[2, 1], vec![1.0, 0.0]).unwrap());
        let v = tape.constant(Tensor::new(&[2, 1], vec![2.0, 4.0]).unwrap());
        let out = cross_attend(&mut tape, q, k, v).unwrap();
        let w0 = 1f64.exp() / (1f64.exp() + 1.0);
        let want = 2.0 * w0 + 4.0 * (1.0 - w0);
        assert!((tape.value(out).data()[0] - want).abs() < 1e-12);
        assert!((tape.value(out).data()[0] - 2.5379).abs() < 1e-4);
    }

    #[test]
    fn weights_are_row_stochastic_and_shift_invariant() {
        let mut rng = Rng::new(7);
        let q = Tensor::randn(&[3, 2, 5, 4], &mut rng);
        let k = Tensor::randn(&[3, 2, 5, 4], &mut rng);
        let mut tape = Tape::new();
        let (qv, kv) = (tape.constant(q.clone()), tape.constant(k.clone()));
        let w = attention_weights(&mut tape, qv, kv).unwrap();
        let wt = tape.value(w).clone();
        for row in wt.data().chunks(5) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&x| x > 0.0));
        }
        // With every query's last coordinate 1, adding c to every key's last
        // coordinate adds c / sqrt(d) to each score row; weights must not move.
        let q2: Vec<f64> = {
            let mut d = q.to_vec();
            for c in d.chunks_mut(4) {
                c[3] = 1.0;
            }
            d
        };
        let q2 = Tensor::new(&[3, 2, 5, 4], q2).unwrap();
        let mut k2 = k.to_vec();
        let mut k3 = k.to_vec();
        for (c2, c3) in k2.chunks_mut(4).zip(k3.chunks_mut(4)) {
            c3[3] = c2[3] + 2.5;
        }
        let run = |kk: Vec<f64>| {
            let mut tape = Tape::new();
            let qv = tape.constant(q2.clone());
            let kv = tape.constant(Tensor::new(&[3, 2, 5, 4], kk).unwrap());
            let w = attention_weights(&mut tape, qv, kv).unwrap();
            tape.value(w).clone()
        };
        assert!(run(k2).max_abs_diff(&run(k3)) < 1e-12);
    }

    fn forward_values(p: &FcaParams<Tensor>, d: &FcaDims, re: &Tensor, im: &Tensor) -> (Tensor, Tensor) {
        let mut tape = Tape::new();
        let vars = on_tape(&mut tape, p);
        let (r, i) = (tape.constant(re.clone()), tape.constant(im.clone()));
        let (ra, ia) = fca_forward(&mut tape, r, i, &vars, d).unwrap();
        (tape.value(ra).clone(), tape.value(ia).clone())
    }

    #[test]
    fn single_head_identity_output_is_attention() {
        let d = dims(3, 1, 4, 4);
        let mut rng = Rng::new(8);
        let mut p = FcaParams::init(&d, &mut rng);
        p.im_out = Tensor::identity(4);
        let re = Tensor::randn(&[3, 2, 5], &mut rng);
        let im = Tensor::randn(&[3, 2, 5], &mut rng);
        let (_, im_aug) = forward_values(&p, &d, &re, &im);

        let mut tape = Tape::new();
        let vars = on_tape(&mut tape, &p);
        let (r, i) = (tape.constant(re), tape.constant(im));
        let qkv = project_qkv(&mut tape, r, i, &vars, &d).unwrap();
        let att = cross_attend(&mut tape, qkv.re.query, qkv.re.key, qkv.im.value).unwrap();
        // [P, 1, M, d] -> [P, M, d]
        let att = tape.value(att).reshape(&[2, 5, 4]).unwrap();
        assert!(im_aug.max_abs_diff(&att) < 1e-12);
    }

    #[test]
    fn zero_values_give_zero_outputs() {
        let d = dims(2, 2, 3, 3);
        let mut rng = Rng::new(9);
        let mut p = FcaParams::init(&d, &mut rng);
        p.re_value = Tensor::zeros(p.re_value.shape());
        p.im_value = Tensor::zeros(p.im_value.shape());
        let (ra, ia) = forward_values(&p, &d, &Tensor::randn(&[2, 3, 4], &mut rng), &Tensor::randn(&[2, 3, 4], &mut rng));
        assert!(ra.data().iter().chain(ia.data()).all(|&x| x == 0.0));
    }

    #[test]
    fn imaginary_output_uses_only_imaginary_values() {
        let d = dims(3, 2, 3, 4);
        let mut rng = Rng::new(10);
        let mut p = FcaParams::init(&d, &mut rng);
        p.im_value = Tensor::zeros(p.im_value.shape());
        for seed in 0..3 {
            let mut r = Rng::new(100 + seed);
            let (_, ia) = forward_values(&p, &d, &Tensor::randn(&[3, 2, 4], &mut r), &Tensor::randn(&[3, 2, 4], &mut r));
            assert!(ia.data().iter().all(|&x| x == 0.0));
        }
        let mut p = FcaParams::init(&d, &mut rng);
        p.re_value = Tensor::zeros(p.re_value.shape());
        let (ra, _) = forward_values(&p, &d, &Tensor::randn(&[3, 2, 4], &mut rng), &Tensor::randn(&[3, 2, 4], &mut rng));
        assert!(ra.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn permuting_windows_permutes_outputs() {
        let d = dims(2, 2, 3, 3);
        let mut rng = Rng::new(11);
        let p = FcaParams::init(&d, &mut rng);
        let re = Tensor::randn(&[2, 3, 4], &mut rng);
        let im = Tensor::randn(&[2, 3, 4], &mut rng);
        let order = [2, 0, 1];
        let swap = |t: &Tensor| {
            Tensor::from_fn(&[2, 3, 4], |i| {
                let (e, pi, m) = (i / 12, (i / 4) % 3, i % 4);
                t.data()[(e * 3 + order[pi]) * 4 + m]
            })
        };
        let (ra, ia) = forward_values(&p, &d, &re, &im);
        let (rb, ib) = forward_values(&p, &d, &swap(&re), &swap(&im));
        for pi in 0..3 {
            for j in 0..4 * 3 {
                assert_eq!(rb.data()[pi * 12 + j], ra.data()[order[pi] * 12 + j]);
                assert_eq!(ib.data()[pi * 12 + j], ia.data()[order[pi] * 12 + j]);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let d = FcaDims { embed: 3, heads: 2, d_k: 2, d_v: 3, d_hidden: 2 };
        let mut rng = Rng::new(12);
        let p = FcaParams::init(&d, &mut rng);
        let mut flat = Vec::new();
        p.visit("", &mut |_, t| flat.push(t.map(|x| x + 0.1)));
        let re = Tensor::randn(&[2, 3, 2, 4], &mut rng);
        let im = Tensor::randn(&[2, 3, 2, 4], &mut rng);
        let report = gradient_check(
            |tape, vars| {
                let mut it = vars.iter().copied();
                let pv = p.map(&mut |_| it.next().unwrap());
                let (r, i) = (tape.constant(re.clone()), tape.constant(im.clone()));
                let (ra, ia) = fca_forward(tape, r, i, &pv, &d)?;
                let s = tape.add(ra, ia)?;
                Ok(tape.sum(s))
            },
            &flat,
            1e-5,
            1e-4,
            Some(20),
            &mut rng,
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
    }
}
