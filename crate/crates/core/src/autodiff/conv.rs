use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{gemm, Tensor};

/// Geometry of a same-padded convolution restricted to the kernel taps that
/// can overlap the input at all.
#[derive(Clone, Copy)]
struct Geometry {
    batch: usize,
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    // reach of the effective taps on each side of the centre
    ry: usize,
    rx: usize,
}

impl Geometry {
    fn ty(&self) -> usize {
        2 * self.ry + 1
    }
    fn tx(&self) -> usize {
        2 * self.rx + 1
    }
    fn rows(&self) -> usize {
        self.c_in * self.ty() * self.tx()
    }
    fn hw(&self) -> usize {
        self.h * self.w
    }
    fn cols(&self) -> usize {
        self.batch * self.hw()
    }

    /// Calls `f(row, col, input_offset)` for every in-bounds im2col entry.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (ty, tx, hw) = (self.ty(), self.tx(), self.hw());
        for b in 0..self.batch {
            for ci in 0..self.c_in {
                let plane = (b * self.c_in + ci) * hw;
                for dy in 0..ty {
                    for dx in 0..tx {
                        let row = (ci * ty + dy) * tx + dx;
                        for y in 0..self.h {
                            let sy = y as isize + dy as isize - self.ry as isize;
                            if sy < 0 || sy >= self.h as isize {
                                continue;
                            }
                            for x in 0..self.w {
                                let sx = x as isize + dx as isize - self.rx as isize;
                                if sx < 0 || sx >= self.w as isize {
                                    continue;
                                }
                                let col = b * hw + y * self.w + x;
                                f(row, col, plane + sy as usize * self.w + sx as usize);
                            }
                        }
                    }
                }
            }
        }
    }

    /// Kernel offset of effective tap `(ci, dy, dx)` for output channel `o`.
    fn kernel_offset(&self, o: usize, ci: usize, dy: usize, dx: usize) -> usize {
        let ky = self.kh / 2 - self.ry + dy;
        let kx = self.kw / 2 - self.rx + dx;
        ((o * self.c_in + ci) * self.kh + ky) * self.kw + kx
    }
}

impl Tape {
    /// Same-padded 2-D cross-correlation.
    ///
    /// `x` is `[C_in, H, W]` or `[B, C_in, H, W]`, `kernel` is
    /// `[C_out, C_in, kh, kw]` with odd `kh`, `kw`; the output keeps the
    /// spatial size of the input.
    pub fn conv2d(&mut self, x: Var, kernel: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ks = self.shape(kernel).to_vec();
        if ks.len() != 4 {
            return Err(Error::dim("conv2d", format!("kernel must be rank 4, got {ks:?}")));
        }
        if ks[2] % 2 == 0 || ks[3] % 2 == 0 {
            return Err(Error::Config(format!(
                "conv2d kernel sizes must be odd, got {}x{}",
                ks[2], ks[3]
            )));
        }
        let (batch, c_in, h, w) = match xs.as_slice() {
            &[c, h, w] => (1, c, h, w),
            &[b, c, h, w] => (b, c, h, w),
            _ => return Err(Error::dim("conv2d", format!("input must be rank 3 or 4, got {xs:?}"))),
        };
        if ks[1] != c_in {
            return Err(Error::dim("conv2d", format!("input {xs:?} vs kernel {ks:?}")));
        }
        let g = Geometry {
            batch,
            c_in,
            c_out: ks[0],
            h,
            w,
            kh: ks[2],
            kw: ks[3],
            ry: (ks[2] / 2).min(h - 1),
            rx: (ks[3] / 2).min(w - 1),
        };

        let xt = self.value(x).clone();
        let kt = self.value(kernel).clone();
        let cols = im2col(&g, xt.data());
        let keff = gather_kernel(&g, kt.data());

        // [C_out, B*HW]
        let mut tmp = vec![0.0; g.c_out * g.cols()];
        gemm(
            g.c_out,
            g.rows(),
            g.cols(),
            &keff,
            (g.rows(), 1),
            &cols,
            (g.cols(), 1),
            &mut tmp,
            (g.cols(), 1),
            0.0,
        );
        let hw = g.hw();
        let mut out = vec![0.0; batch * g.c_out * hw];
        for o in 0..g.c_out {
            for b in 0..batch {
                out[(b * g.c_out + o) * hw..][..hw].copy_from_slice(&tmp[o * g.cols() + b * hw..][..hw]);
            }
        }
        let mut out_shape = xs.clone();
        out_shape[xs.len() - 3] = g.c_out;
        let out = Tensor::from_parts(out_shape, out);

        let cols = Tensor::from_parts(vec![g.rows(), g.cols()], cols);
        Ok(self.record(out, &[x, kernel], move |grad| {
            let gd = grad.data();
            // Regroup the output gradient to [C_out, B*HW].
            let mut gmat = vec![0.0; g.c_out * g.cols()];
            for o in 0..g.c_out {
                for b in 0..g.batch {
                    gmat[o * g.cols() + b * hw..][..hw]
                        .copy_from_slice(&gd[(b * g.c_out + o) * hw..][..hw]);
                }
            }
            let mut gkeff = vec![0.0; g.c_out * g.rows()];
            gemm(
                g.c_out,
                g.cols(),
                g.rows(),
                &gmat,
                (g.cols(), 1),
                cols.data(),
                (1, g.cols()),
                &mut gkeff,
                (g.rows(), 1),
                0.0,
            );
            let mut gcols = vec![0.0; g.rows() * g.cols()];
            gemm(
                g.rows(),
                g.c_out,
                g.cols(),
                &keff,
                (1, g.rows()),
                &gmat,
                (g.cols(), 1),
                &mut gcols,
                (g.cols(), 1),
                0.0,
            );
            let mut gx = vec![0.0; xt.numel()];
            g.for_each_tap(|row, col, src| gx[src] += gcols[row * g.cols() + col]);
            let mut gk = vec![0.0; kt.numel()];
            scatter_kernel(&g, &gkeff, &mut gk);
            vec![
                Some(Tensor::from_parts(xt.shape().to_vec(), gx)),
                Some(Tensor::from_parts(kt.shape().to_vec(), gk)),
            ]
        }))
    }
}

fn im2col(g: &Geometry, x: &[f64]) -> Vec<f64> {
    let mut cols = vec![0.0; g.rows() * g.cols()];
    g.for_each_tap(|row, col, src| cols[row * g.cols() + col] = x[src]);
    cols
}

fn gather_kernel(g: &Geometry, k: &[f64]) -> Vec<f64> {
    let (ty, tx) = (g.ty(), g.tx());
    let mut keff = Vec::with_capacity(g.c_out * g.rows());
    for o in 0..g.c_out {
        for ci in 0..g.c_in {
            for dy in 0..ty {
                for dx in 0..tx {
                    keff.push(k[g.kernel_offset(o, ci, dy, dx)]);
                }
            }
        }
    }
    keff
}

fn scatter_kernel(g: &Geometry, keff: &[f64], k: &mut [f64]) {
    let (ty, tx) = (g.ty(), g.tx());
    let mut i = 0;
    for o in 0..g.c_out {
        for ci in 0..g.c_in {
            for dy in 0..ty {
                for dx in 0..tx {
                    k[g.kernel_offset(o, ci, dy, dx)] += keff[i];
                    i += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradient_check;
    use crate::rng::Rng;

    /// Direct loop implementation used as an oracle.
    fn conv_direct(x: &Tensor, k: &Tensor) -> Tensor {
        let (c_in, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (c_out, kh, kw) = (k.shape()[0], k.shape()[2], k.shape()[3]);
        let (ph, pw) = ((kh / 2) as isize, (kw / 2) as isize);
        Tensor::from_fn(&[c_out, h, w], |i| {
            let (o, y, xx) = (i / (h * w), (i / w) % h, i % w);
            let mut acc = 0.0;
            for ci in 0..c_in {
                for a in 0..kh {
                    for b in 0..kw {
                        let sy = y as isize + a as isize - ph;
                        let sx = xx as isize + b as isize - pw;
                        if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                            acc += k.get(&[o, ci, a, b]) * x.get(&[ci, sy as usize, sx as usize]);
                        }
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn unit_kernel_is_identity() {
        let mut rng = Rng::new(1);
        let mut tape = Tape::new();
        let xv = Tensor::randn(&[1, 4, 5], &mut rng);
        let x = tape.constant(xv.clone());
        let k = tape.constant(Tensor::ones(&[1, 1, 1, 1]));
        let y = tape.conv2d(x, k).unwrap();
        assert_eq!(tape.value(y), &xv);
    }

    #[test]
    fn ones_kernel_on_constant_image() {
        let c = 2.5;
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(&[1, 5, 6], c));
        let k = tape.constant(Tensor::ones(&[1, 1, 3, 3]));
        let y = tape.conv2d(x, k).unwrap();
        let v = tape.value(y);
        assert_eq!(v.get(&[0, 2, 2]), 9.0 * c);
        assert_eq!(v.get(&[0, 0, 0]), 4.0 * c);
        assert_eq!(v.get(&[0, 4, 5]), 4.0 * c);
        assert_eq!(v.get(&[0, 0, 3]), 6.0 * c);
    }

    #[test]
    fn even_kernel_is_config_error() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::ones(&[1, 3, 3]));
        let k = tape.constant(Tensor::ones(&[1, 1, 2, 3]));
        assert!(matches!(tape.conv2d(x, k), Err(Error::Config(_))));
    }

    #[test]
    fn matches_direct_loops_including_oversized_kernels() {
        let mut rng = Rng::new(3);
        for &(kh, kw) in &[(1, 1), (3, 5), (7, 7), (11, 11)] {
            let x = Tensor::randn(&[3, 3, 10], &mut rng);
            let k = Tensor::randn(&[2, 3, kh, kw], &mut rng);
            let mut tape = Tape::new();
            let xv = tape.constant(x.clone());
            let kv = tape.constant(k.clone());
            let y = tape.conv2d(xv, kv).unwrap();
            let expected = conv_direct(&x, &k);
            assert!(tape.value(y).max_abs_diff(&expected) < 1e-12, "{kh}x{kw}");
        }
    }

    #[test]
    fn batched_equals_per_sample() {
        let mut rng = Rng::new(4);
        let x = Tensor::randn(&[2, 3, 3, 4], &mut rng);
        let k = Tensor::randn(&[5, 3, 3, 3], &mut rng);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let kv = tape.constant(k.clone());
        let y = tape.conv2d(xv, kv).unwrap();
        for b in 0..2 {
            let xb = Tensor::new(&[3, 3, 4], x.data()[b * 36..(b + 1) * 36].to_vec()).unwrap();
            let expected = conv_direct(&xb, &k);
            let got = &tape.value(y).data()[b * 60..(b + 1) * 60];
            for (a, e) in got.iter().zip(expected.data()) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kernel_and_input_gradients() {
        let mut rng = Rng::new(6);
        let x = Tensor::randn(&[2, 3, 3, 6], &mut rng);
        let k = Tensor::randn(&[4, 3, 5, 5], &mut rng);
        let w = Tensor::randn(&[2, 4, 3, 6], &mut rng);
        let r = gradient_check(
            |tape, p| {
                let y = tape.conv2d(p[0], p[1])?;
                let y = tape.mul(y, p[2])?;
                Ok(tape.sum(y))
            },
            &[x, k, w],
            1e-5,
            1e-5,
            None,
            &mut rng,
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
    }
}
