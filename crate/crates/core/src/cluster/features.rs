//! Feature vectors for clustering and classification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PeakParams, OMEGA};

/// Floor applied to amplitudes, baselines and time constants before logs.
pub const LOG_FLOOR: f64 = 1e-3;

pub const PEAK_FEATURE_NAMES: [&str; 8] = [
    "log_a_minus",
    "log_a_plus",
    "log_tau_minus",
    "log_tau_plus",
    "log_b_minus",
    "log_b_plus",
    "alpha_c",
    "t_c",
];

pub fn floored_ln(v: f64) -> f64 {
    v.max(LOG_FLOOR).ln()
}

/// `(log a-, log a+, log tau-, log tau+, log b-, log b+, alpha_c, t_c)`.
/// With `circular_phase` the last entry is replaced by `cos`, `sin` of the
/// daily phase, giving nine entries.
pub fn build_features(p: &PeakParams, circular_phase: bool) -> Vec<f64> {
    let mut f = vec![
        floored_ln(p.a_minus),
        floored_ln(p.a_plus),
        floored_ln(p.tau_minus),
        floored_ln(p.tau_plus),
        floored_ln(p.b_minus),
        floored_ln(p.b_plus),
        p.alpha_c,
    ];
    if circular_phase {
        f.push((OMEGA * p.t_c).cos());
        f.push((OMEGA * p.t_c).sin());
    } else {
        f.push(p.t_c);
    }
    f
}

/// Shares of the window total before, at and after the peak hour.
pub fn fraction_features(series: &[f64], t_p: usize) -> Result<[f64; 3]> {
    if t_p >= series.len() {
        return Err(Error::InvalidParams(format!("peak {t_p} outside series of {}", series.len())));
    }
    let total: f64 = series.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("window has no views".into()));
    }
    let before: f64 = series[..t_p].iter().sum();
    let at = series[t_p];
    let after: f64 = series[t_p + 1..].iter().sum();
    Ok([before / total, at / total, after / total])
}

/// Per-dimension z-scoring; a dimension with zero spread keeps scale 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::InsufficientData("no rows to standardize".into()));
        };
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in rows {
            for j in 0..d {
                var[j] += (r[j] - mean[j]).powi(2) / n;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 })
            .collect();
        Ok(Standardizer { mean, scale })
    }

    /// Leaves rows unchanged.
    pub fn identity(d: usize) -> Self {
        Standardizer {
            mean: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn apply_all(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.apply(r)).collect()
    }

    pub fn invert(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| v * s + m)
            .collect()
    }
}
