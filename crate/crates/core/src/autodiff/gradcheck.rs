use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Gradients smaller than this are compared in absolute terms.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (parameter index, flat coordinate) of the worst agreement.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares tape gradients of a scalar-valued graph against central
/// differences with step `h`.
///
/// `samples` caps the number of coordinates checked per parameter (chosen
/// at random without replacement); `None` checks every coordinate.
/// The error measure is `max(0, |analytic - numeric| - r) / max(|analytic|, |numeric|, 1e-6)`,
/// where `r = eps * max(|f(x+h)|, |f(x-h)|) / h` bounds the rounding error
/// of the difference quotient when each evaluation is off by one ulp. Without it, a gradient that is
/// exactly zero (a dead ReLU, a softmax-invariant bias) fails on rounding noise.
pub fn gradient_check<F>(
    f: F,
    params: &[Tensor],
    h: f64,
    tol: f64,
    samples: Option<usize>,
    rng: &mut Rng,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |tape: &mut Tape, values: &[Tensor]| -> Result<(Vec<Var>, Var)> {
        let vars: Vec<Var> = values.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(tape, &vars)?;
        if tape.value(out).numel() != 1 {
            return Err(Error::Usage(format!(
                "gradient_check needs a scalar graph, got {:?}",
                tape.shape(out)
            )));
        }
        Ok((vars, out))
    };

    let mut tape = Tape::new();
    let (vars, out) = eval(&mut tape, params)?;
    tape.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| tape.grad_or_zeros(v)).collect();
    drop(tape);

    let scalar_at = |values: &[Tensor]| -> Result<f64> {
        let mut t = Tape::no_grad();
        let (_, out) = eval(&mut t, values)?;
        Ok(t.value(out).item())
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        tolerance: tol,
        passed: true,
    };
    let mut work: Vec<Tensor> = params.to_vec();
    for (pi, param) in params.iter().enumerate() {
        let mut coords: Vec<usize> = (0..param.numel()).collect();
        if let Some(n) = samples {
            rng.shuffle(&mut coords);
            coords.truncate(n);
        }
        for c in coords {
            let orig = param.data()[c];
            work[pi].data_mut()[c] = orig + h;
            let plus = scalar_at(&work)?;
            work[pi].data_mut()[c] = orig - h;
            let minus = scalar_at(&work)?;
            work[pi].data_mut()[c] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[pi].data()[c];
            let resolution = f64::EPSILON * plus.abs().max(minus.abs()) / h;
            let denom = a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
            let err = ((a - numeric).abs() - resolution).max(0.0) / denom;
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((pi, c));
            }
        }
    }
    report.passed = report.max_rel_error <= tol;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_is_exact() {
        // Integer inputs and a power-of-two step keep the differences exact.
        let mut rng = Rng::new(0);
        let x = Tensor::new(&[5], vec![3.0, -1.0, 4.0, 1.0, -5.0]).unwrap();
        let h = 1.0 / 65536.0;
        let r = gradient_check(|t, p| Ok(t.sum(p[0])), &[x], h, 0.0, None, &mut rng).unwrap();
        assert_eq!(r.max_rel_error, 0.0);
        assert!(r.passed);
        assert_eq!(r.checked, 5);
    }

    #[test]
    fn softmax_chain() {
        let mut rng = Rng::new(1);
        let x = Tensor::randn(&[3, 4], &mut rng);
        let w = Tensor::randn(&[3, 4], &mut rng);
        let r = gradient_check(
            |t, p| {
                let s = t.softmax(p[0], 1)?;
                let s = t.mul(s, p[1])?;
                let s = t.softmax(s, 0)?;
                let s = t.mul(s, p[1])?;
                Ok(t.sum(s))
            },
            &[x, w],
            1e-5,
            1e-6,
            None,
            &mut rng,
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // A hand-rolled op with a deliberately wrong backward rule.
        let mut rng = Rng::new(2);
        let x = Tensor::randn(&[4], &mut rng);
        let r = gradient_check(
            |t, p| {
                let v = t.value(p[0]).map(|a| a * a);
                let y = t.record(v, &[p[0]], |g| vec![Some(g.clone())]);
                Ok(t.sum(y))
            },
            &[x],
            1e-5,
            1e-4,
            None,
            &mut rng,
        )
        .unwrap();
        assert!(!r.passed);
    }

    #[test]
    fn exactly_zero_gradient_survives_rounding_noise() {
        // A shared shift of the logits leaves the softmax unchanged, so the
        // bias gradient is zero while the differences only see rounding.
        let mut rng = Rng::new(4);
        let logits = Tensor::randn(&[1, 64], &mut rng);
        let weights = Tensor::randn(&[1, 64], &mut rng).map(|v| 1e3 * v);
        let r = gradient_check(
            |t, p| {
                let z = t.constant(logits.clone());
                let z = t.add(z, p[0])?;
                let s = t.softmax(z, 1)?;
                let w = t.constant(weights.clone());
                let y = t.mul(s, w)?;
                Ok(t.sum(y))
            },
            &[Tensor::zeros(&[1, 1])],
            1e-5,
            1e-4,
            None,
            &mut rng,
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn sampling_caps_coordinates() {
        let mut rng = Rng::new(3);
        let x = Tensor::randn(&[50], &mut rng);
        let r = gradient_check(|t, p| Ok(t.sum(p[0])), &[x], 1e-5, 1e-9, Some(20), &mut rng)
            .unwrap();
        assert_eq!(r.checked, 20);
    }
}
