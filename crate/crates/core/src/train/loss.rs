use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean squared error over every element.
pub fn l2_loss(tape: &mut Tape, pred: Var, target: &Tensor) -> Result<Var> {
    if tape.shape(pred) != target.shape() {
        return Err(Error::dim(
            "l2 loss",
            format!("prediction {:?} vs target {:?}", tape.shape(pred), target.shape()),
        ));
    }
    let t = tape.constant(target.clone());
    let diff = tape.sub(pred, t)?;
    let sq = tape.mul(diff, diff)?;
    Ok(tape.mean(sq))
}

/// `(mse, mae)` averaged over all elements.
pub fn metrics(pred: &Tensor, target: &Tensor) -> Result<(f64, f64)> {
    let (se, ae) = error_sums(pred, target)?;
    let n = pred.numel() as f64;
    Ok((se / n, ae / n))
}

/// Sums of squared and absolute errors.
pub fn error_sums(pred: &Tensor, target: &Tensor) -> Result<(f64, f64)> {
    if pred.shape() != target.shape() {
        return Err(Error::dim(
            "metrics",
            format!("prediction {:?} vs target {:?}", pred.shape(), target.shape()),
        ));
    }
    let mut se = 0.0;
    let mut ae = 0.0;
    for (p, t) in pred.data().iter().zip(target.data()) {
        let e = p - t;
        se += e * e;
        ae += e.abs();
    }
    Ok((se, ae))
}
