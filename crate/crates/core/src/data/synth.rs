use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::SeriesSet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sinusoid {
    /// Period in ticks, at least 2.
    pub period: f64,
    pub amplitude: f64,
    /// Phase offset in radians.
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthVariable {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub components: Vec<Sinusoid>,
    /// Linear trend per tick.
    #[serde(default)]
    pub slope: f64,
}

/// Multi-period generator:
/// `x_j(t) = sum_c A_c sin(2 pi t / P_c + phi_c) + slope_j t
///          + sum_i coupling[j][i] x_i(t - 1) + noise`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub variables: Vec<SynthVariable>,
    /// Standard deviation of i.i.d. Gaussian noise.
    #[serde(default)]
    pub noise_std: f64,
    /// `[D][D]` lag-1 coupling; omitted means none.
    #[serde(default)]
    pub coupling: Option<Vec<Vec<f64>>>,
}

impl SynthSpec {
    /// Four variables mixing periods 120, 48 and 12 with a ring of lag-1
    /// couplings.
    pub fn benchmark() -> Self {
        let mix: [[(f64, f64); 3]; 4] = [
            [(1.0, 0.0), (0.6, 1.0), (0.4, 2.0)],
            [(0.5, 0.5), (1.0, 2.5), (0.3, 0.2)],
            [(0.8, 1.5), (0.3, 0.3), (0.7, 4.0)],
            [(0.4, 3.0), (0.7, 1.2), (0.9, 5.0)],
        ];
        let variables = mix
            .iter()
            .enumerate()
            .map(|(j, comps)| SynthVariable {
                name: Some(format!("var{j}")),
                components: [120.0, 48.0, 12.0]
                    .iter()
                    .zip(comps)
                    .map(|(&period, &(amplitude, phase))| Sinusoid { period, amplitude, phase })
                    .collect(),
                slope: 0.0,
            })
            .collect();
        let mut coupling = vec![vec![0.0; 4]; 4];
        for (j, row) in coupling.iter_mut().enumerate() {
            row[j] = 0.3;
            row[(j + 3) % 4] = 0.3;
        }
        Self {
            variables,
            noise_std: 0.25,
            coupling: Some(coupling),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.n_vars();
        if d == 0 {
            return Err(Error::Config("synthetic spec needs at least one variable".into()));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::Config(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        for (j, v) in self.variables.iter().enumerate() {
            for c in &v.components {
                if !(c.period >= 2.0) {
                    return Err(Error::Config(format!("variable {j}: period {} is below 2 ticks", c.period)));
                }
                if !(c.amplitude.is_finite() && c.phase.is_finite()) {
                    return Err(Error::Config(format!("variable {j}: non-finite sinusoid")));
                }
            }
            if !v.slope.is_finite() {
                return Err(Error::Config(format!("variable {j}: non-finite slope")));
            }
        }
        if let Some(c) = &self.coupling {
            if c.len() != d || c.iter().any(|r| r.len() != d) {
                return Err(Error::Config(format!("coupling must be {d}x{d}")));
            }
            let rho = spectral_radius(c);
            if !(rho < 1.0) {
                return Err(Error::Config(format!(
                    "coupling is unstable: spectral radius {rho:.4} >= 1"
                )));
            }
        }
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.variables
            .iter()
            .enumerate()
            .map(|(j, v)| v.name.clone().unwrap_or_else(|| format!("x{j}")))
            .collect()
    }
}

pub fn spectral_radius(m: &[Vec<f64>]) -> f64 {
    let d = m.len();
    let mat = DMatrix::from_fn(d, d, |r, c| m[r][c]);
    mat.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn generate(spec: &SynthSpec, total_length: usize, seed: u64) -> Result<SeriesSet> {
    spec.validate()?;
    if total_length == 0 {
        return Err(Error::Config("total_length must be positive".into()));
    }
    let d = spec.n_vars();
    let mut rng = Rng::new(seed);
    let mut x = vec![0.0; d * total_length];
    let mut prev = vec![0.0; d];
    let mut cur = vec![0.0; d];
    for t in 0..total_length {
        let tf = t as f64;
        for (j, v) in spec.variables.iter().enumerate() {
            let mut s: f64 = v
                .components
                .iter()
                .map(|c| c.amplitude * (2.0 * PI * tf / c.period + c.phase).sin())
                .sum();
            s += v.slope * tf;
            if let (Some(c), true) = (&spec.coupling, t > 0) {
                s += c[j].iter().zip(&prev).map(|(a, b)| a * b).sum::<f64>();
            }
            if spec.noise_std > 0.0 {
                s += spec.noise_std * rng.normal();
            }
            cur[j] = s;
        }
        for j in 0..d {
            x[j * total_length + t] = cur[j];
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    SeriesSet::new(Tensor::new(&[d, total_length], x)?, spec.names())
}
