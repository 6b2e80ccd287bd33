//! Power-law rise and relaxation on either side of the peak.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::r_squared;
use crate::ingest::{PeakLocation, TimeSeries};
use crate::optim::grid_then_golden;

/// Search range for the exponents.
pub const GAMMA_MIN: f64 = -5.0;
pub const GAMMA_MAX: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawParams {
    pub a_minus: f64,
    pub gamma_minus: f64,
    pub a_plus: f64,
    pub gamma_plus: f64,
    pub t_p: f64,
}

impl PowerLawParams {
    /// `a_- (t_p - t)^gamma_-` before the peak, `a_+ (t - t_p)^gamma_+`
    /// after; `None` at the peak itself.
    pub fn eval(&self, t: f64) -> Option<f64> {
        let dt = t - self.t_p;
        if dt < 0.0 {
            Some(self.a_minus * (-dt).powf(self.gamma_minus))
        } else if dt > 0.0 {
            Some(self.a_plus * dt.powf(self.gamma_plus))
        } else {
            None
        }
    }
}

/// Best `(a, gamma, rss)` for `y_k ~ a d_k^gamma` with `a >= 0`.
fn fit_branch(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let logs: Vec<f64> = points.iter().map(|(d, _)| d.ln()).collect();
    let solve = |gamma: f64| {
        let (mut gg, mut gy, mut yy) = (0.0, 0.0, 0.0);
        for ((_, y), ld) in points.iter().zip(&logs) {
            let g = (gamma * ld).exp();
            gg += g * g;
            gy += g * y;
            yy += y * y;
        }
        let a = if gg > 0.0 { (gy / gg).max(0.0) } else { 0.0 };
        (a, (yy - 2.0 * a * gy + a * a * gg).max(0.0))
    };
    let grid: Vec<f64> = (0..=160).map(|i| GAMMA_MIN + (GAMMA_MAX - GAMMA_MIN) * i as f64 / 160.0).collect();
    let (gamma, _) = grid_then_golden(|g| solve(g).1, &grid, 1e-12);
    let (a, rss) = solve(gamma);
    (a, gamma, rss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub params: PowerLawParams,
    pub r2: Option<f64>,
    pub rss: f64,
}

pub fn powerlaw_fit(series: &TimeSeries, peak: &PeakLocation) -> Result<PowerLawFit> {
    powerlaw_fit_values(&series.values(), peak.t_p)
}

/// Fits each branch separately by least squares; the peak hour is excluded.
pub fn powerlaw_fit_values(y: &[f64], t_p: usize) -> Result<PowerLawFit> {
    if t_p == 0 || t_p + 1 >= y.len() {
        return Err(Error::InsufficientData(format!(
            "peak at hour {t_p} leaves an empty side in {} hours",
            y.len()
        )));
    }
    let pre: Vec<(f64, f64)> = (0..t_p).map(|h| ((t_p - h) as f64, y[h])).collect();
    let post: Vec<(f64, f64)> = (t_p + 1..y.len()).map(|h| ((h - t_p) as f64, y[h])).collect();
    let (a_minus, gamma_minus, rss_minus) = fit_branch(&pre);
    let (a_plus, gamma_plus, rss_plus) = fit_branch(&post);
    let params = PowerLawParams {
        a_minus,
        gamma_minus,
        a_plus,
        gamma_plus,
        t_p: t_p as f64,
    };
    let model: Vec<Option<f64>> = (0..y.len()).map(|h| params.eval(h as f64)).collect();
    Ok(PowerLawFit {
        params,
        r2: r_squared(y, &model, Some(t_p)),
        rss: rss_minus + rss_plus,
    })
}

/// Post-peak branch at hours `t_p + first ..= t_p + last`.
pub fn powerlaw_predict(params: &PowerLawParams, first: usize, last: usize) -> Vec<f64> {
    (first.max(1)..=last)
        .map(|k| params.a_plus * (k as f64).powf(params.gamma_plus))
        .collect()
}

/// Fits on hours up to `t_p + t_obs` and predicts hours
/// `t_p + t_obs + 1 ..= t_p + horizon`.
pub fn powerlaw_forecast(y: &[f64], t_p: usize, t_obs: usize, horizon: usize) -> Result<(PowerLawFit, Vec<f64>)> {
    let observed = y.get(..=t_p + t_obs).ok_or_else(|| {
        Error::InsufficientData(format!("series ends before hour {}", t_p + t_obs))
    })?;
    let fit = powerlaw_fit_values(observed, t_p)?;
    let pred = powerlaw_predict(&fit.params, t_obs + 1, horizon);
    Ok((fit, pred))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn exact(p: &PowerLawParams, n: usize) -> Vec<f64> {
        (0..n).map(|h| p.eval(h as f64).unwrap_or(5000.0)).collect()
    }

    #[test]
    fn recovers_exact_power_law() {
        let p = PowerLawParams {
            a_minus: 300.0,
            gamma_minus: -0.7,
            a_plus: 2500.0,
            gamma_plus: -1.2,
            t_p: 260.0,
        };
        let fit = powerlaw_fit_values(&exact(&p, 504), 260).unwrap();
        let q = fit.params;
        for (got, want) in [
            (q.a_minus, p.a_minus),
            (q.gamma_minus, p.gamma_minus),
            (q.a_plus, p.a_plus),
            (q.gamma_plus, p.gamma_plus),
        ] {
            assert!((got - want).abs() < 1e-3 * want.abs(), "{q:?}");
        }
        assert!(fit.r2.unwrap() > 0.999_999);
    }

    #[test]
    fn flat_exponent_predicts_constant() {
        let p = PowerLawParams {
            a_minus: 1.0,
            gamma_minus: 0.0,
            a_plus: 42.0,
            gamma_plus: 0.0,
            t_p: 10.0,
        };
        assert!(powerlaw_predict(&p, 25, 168).iter().all(|&v| v == 42.0));
        assert_eq!(p.eval(10.0), None);
    }

    #[test]
    fn forecast_span_length() {
        let p = PowerLawParams {
            a_minus: 100.0,
            gamma_minus: -0.5,
            a_plus: 900.0,
            gamma_plus: -0.8,
            t_p: 250.0,
        };
        let (_, pred) = powerlaw_forecast(&exact(&p, 504), 250, 24, 168).unwrap();
        assert_eq!(pred.len(), 144);
        assert!((pred[0] - 900.0 * 25f64.powf(-0.8)).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn branches_are_monotone(a in 0.1f64..1e4, g in -5.0f64..3.0, tp in 10.0f64..400.0) {
            let p = PowerLawParams { a_minus: a, gamma_minus: g, a_plus: a, gamma_plus: g, t_p: tp };
            let post: Vec<f64> = (1..100).map(|k| p.eval(tp + k as f64).unwrap()).collect();
            let pre: Vec<f64> = (1..100).map(|k| p.eval(tp - k as f64).unwrap()).collect();
            for w in [post, pre] {
                for pair in w.windows(2) {
                    if g < 0.0 {
                        prop_assert!(pair[1] <= pair[0]);
                    } else {
                        prop_assert!(pair[1] >= pair[0]);
                    }
                }
            }
        }
    }
}
