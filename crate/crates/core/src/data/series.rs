use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A multivariate series: `values [D, length]`, one named row per variable.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesSet {
    pub values: Tensor,
    pub names: Vec<String>,
}

impl SeriesSet {
    pub fn new(values: Tensor, names: Vec<String>) -> Result<Self> {
        if values.ndim() != 2 {
            return Err(Error::dim("series", format!("expected [D, length], got {:?}", values.shape())));
        }
        if names.len() != values.shape()[0] {
            return Err(Error::Data(format!(
                "{} variable names for {} variables",
                names.len(),
                values.shape()[0]
            )));
        }
        if !values.is_finite() {
            return Err(Error::Data("series contains non-finite values".into()));
        }
        Ok(Self { values, names })
    }

    /// Names `x0, x1, ...`.
    pub fn unnamed(values: Tensor) -> Result<Self> {
        let d = values.shape().first().copied().unwrap_or(0);
        Self::new(values, (0..d).map(|i| format!("x{i}")).collect())
    }

    pub fn n_vars(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn len(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, var: usize) -> &[f64] {
        let n = self.len();
        &self.values.data()[var * n..(var + 1) * n]
    }
}
