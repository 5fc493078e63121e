use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{kkr_residual, kkr_residual_about, KkrReport};

/// Test signals for the Kramers-Kronig check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KkrFamily {
    /// `e^{-a n}` for `n >= 0`.
    ExpDecay { a: f64 },
    /// `e^{-a n} cos(omega0 n)` for `n >= 0`.
    DampedCosine { a: f64, omega0: f64 },
    /// Gaussian of the given width centered on the time origin; violates
    /// causality by construction.
    NoncausalEven { width: f64 },
}

impl KkrFamily {
    pub fn label(&self) -> String {
        match self {
            KkrFamily::ExpDecay { a } => format!("exp_decay({a})"),
            KkrFamily::DampedCosine { a, omega0 } => format!("damped_cosine({a};{omega0})"),
            KkrFamily::NoncausalEven { width } => format!("noncausal_even({width})"),
        }
    }

    pub fn residual(&self, n: usize, padding: usize) -> Result<KkrReport> {
        match *self {
            KkrFamily::ExpDecay { a } => kkr_residual(&(0..n).map(|t| (-a * t as f64).exp()).collect::<Vec<_>>(), padding),
            KkrFamily::DampedCosine { a, omega0 } => {
                let x: Vec<f64> = (0..n).map(|t| (-a * t as f64).exp() * (omega0 * t as f64).cos()).collect();
                kkr_residual(&x, padding)
            }
            KkrFamily::NoncausalEven { width } => {
                // Symmetric support of 2 * half + 1 <= n samples around the origin.
                let half = (n - 1) / 2;
                let x: Vec<f64> = (0..=2 * half)
                    .map(|i| {
                        let t = (i as f64 - half as f64) / width;
                        (-0.5 * t * t).exp()
                    })
                    .collect();
                kkr_residual_about(&x, half, padding)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KkrConfig {
    #[serde(default = "default_families")]
    pub families: Vec<KkrFamily>,
    #[serde(default = "default_paddings")]
    pub paddings: Vec<usize>,
    /// Signal length before padding.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_families() -> Vec<KkrFamily> {
    vec![
        KkrFamily::ExpDecay { a: 0.5 },
        KkrFamily::ExpDecay { a: 0.1 },
        KkrFamily::ExpDecay { a: 2.0 },
        KkrFamily::DampedCosine { a: 0.3, omega0: PI / 4.0 },
        KkrFamily::NoncausalEven { width: 4.0 },
    ]
}

fn default_paddings() -> Vec<usize> {
    vec![1, 2, 4, 8]
}

fn default_samples() -> usize {
    256
}

impl Default for KkrConfig {
    fn default() -> Self {
        Self {
            families: default_families(),
            paddings: default_paddings(),
            samples: default_samples(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KkrRow {
    pub family: String,
    pub report: KkrReport,
}

pub fn verify_kkr(cfg: &KkrConfig) -> Result<Vec<KkrRow>> {
    if cfg.samples < 2 {
        return Err(Error::Config("kkr samples must be at least 2".into()));
    }
    let mut rows = Vec::new();
    for fam in &cfg.families {
        for &p in &cfg.paddings {
            rows.push(KkrRow { family: fam.label(), report: fam.residual(cfg.samples, p)? });
        }
    }
    Ok(rows)
}

pub fn write_kkr_csv<W: Write>(rows: &[KkrRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["family", "padding", "residual_re", "residual_im"]).map_err(err)?;
    for r in rows {
        w.write_record([
            r.family.clone(),
            r.report.padding_factor.to_string(),
            r.report.residual_re.to_string(),
            r.report.residual_im.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residuals(fam: KkrFamily) -> Vec<KkrReport> {
        [1, 2, 4, 8].iter().map(|&p| fam.residual(256, p).unwrap()).collect()
    }

    #[test]
    fn faster_decay_converges_faster() {
        let slow = residuals(KkrFamily::ExpDecay { a: 0.1 });
        let fast = residuals(KkrFamily::ExpDecay { a: 2.0 });
        for (s, f) in slow.iter().zip(&fast) {
            assert!(f.residual_re < s.residual_re, "{f:?} vs {s:?}");
        }
    }

    #[test]
    fn damped_cosine_is_causal() {
        let r = residuals(KkrFamily::DampedCosine { a: 0.3, omega0: PI / 4.0 });
        assert!(r[3].residual_re < 0.05 && r[3].residual_im < 0.05, "{:?}", r[3]);
    }

    #[test]
    fn even_control_fails_everywhere() {
        assert!(residuals(KkrFamily::NoncausalEven { width: 4.0 }).iter().all(|r| r.residual_re > 0.5));
    }

    #[test]
    fn csv_has_one_row_per_family_and_padding() {
        let rows = verify_kkr(&KkrConfig::default()).unwrap();
        assert_eq!(rows.len(), 5 * 4);
        let mut buf = Vec::new();
        write_kkr_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("family,padding,residual_re,residual_im\n"));
        assert_eq!(text.lines().count(), 21);
    }

    #[test]
    fn config_json_is_tagged() {
        let cfg: KkrConfig =
            serde_json::from_str(r#"{"families": [{"family": "exp_decay", "a": 0.5}], "paddings": [1, 2]}"#).unwrap();
        assert_eq!(cfg.families, [KkrFamily::ExpDecay { a: 0.5 }]);
        assert_eq!(cfg.samples, 256);
    }
}
