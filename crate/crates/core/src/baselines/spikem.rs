//! SpikeM: susceptible population driven by a shock and a power-law
//! self-exciting kernel, modulated by a daily rhythm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{circadian_guess, logit, r_squared, sigmoid};
use crate::ingest::{PeakLocation, TimeSeries, WINDOW_HOURS};
use crate::model::{wrap_hour, OMEGA};
use crate::optim::{nelder_mead_restarted, NelderMeadOptions};

/// Longest lag kept in the power-law kernel.
pub const MAX_LAGS: usize = WINDOW_HOURS;
/// Shock hours searched before the peak.
pub const SHOCK_SEARCH_HOURS: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeMParams {
    pub u0: f64,
    pub beta: f64,
    pub t_b: usize,
    pub s_b: f64,
    pub eps0: f64,
    pub p_a: f64,
    pub p_s: f64,
}

impl SpikeMParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [self.u0, self.beta, self.s_b, self.eps0];
        if nonneg.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "u0, beta, s_b and eps0 must be finite and >= 0: {self:?}"
            )));
        }
        if !(0.0..=1.0).contains(&self.p_a) || !self.p_s.is_finite() {
            return Err(Error::InvalidParams(format!("p_a must lie in [0, 1]: {self:?}")));
        }
        Ok(())
    }

    /// Daily modulation `p(t) = 1 - p_a (1 + sin(omega (t + p_s))) / 2`.
    pub fn modulation(&self, t: f64) -> f64 {
        1.0 - 0.5 * self.p_a * (1.0 + (OMEGA * (t + self.p_s)).sin())
    }

    /// Feature vector in the order `u0, beta, t_b, s_b, eps0, p_a, p_s`.
    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.u0, self.beta, self.t_b as f64, self.s_b, self.eps0, self.p_a, self.p_s]
    }
}

/// `tau^{-1.5}` for lags `0..=len` (index 0 unused).
fn kernel(len: usize) -> Vec<f64> {
    let mut k = vec![0.0; len + 1];
    for (lag, v) in k.iter_mut().enumerate().skip(1) {
        *v = (lag as f64).powf(-1.5);
    }
    k
}

fn simulate_into(p: &SpikeMParams, kernel: &[f64], x: &mut [f64]) {
    let n = x.len();
    x.iter_mut().for_each(|v| *v = 0.0);
    let tb = p.t_b;
    let mut u = p.u0;
    for t in tb..n.saturating_sub(1) {
        let lo = (t + 1).saturating_sub(MAX_LAGS).max(tb);
        let mut acc = 0.0;
        for k in lo..=t {
            acc += x[k] * kernel[t + 1 - k];
        }
        if lo == tb {
            acc += p.s_b * kernel[t + 1 - tb];
        }
        let next = p.modulation((t + 1) as f64) * (u * p.beta * acc + p.eps0);
        x[t + 1] = next;
        u = (u - next).max(0.0);
    }
}

/// Hourly views `x(0..horizon)`. Views are zero up to and including `t_b`.
pub fn spikem_simulate(params: &SpikeMParams, horizon: usize) -> Result<Vec<f64>> {
    params.validate()?;
    if horizon < params.t_b {
        return Err(Error::InvalidParams(format!(
            "horizon {horizon} precedes the shock at {}",
            params.t_b
        )));
    }
    let mut x = vec![0.0; horizon];
    simulate_into(params, &kernel(MAX_LAGS), &mut x);
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeMFit {
    pub params: SpikeMParams,
    /// R² with the peak hour excluded, as for the proposed model.
    pub r2: Option<f64>,
    pub rss: f64,
    pub converged: bool,
}

fn decode(t_b: usize, z: &[f64]) -> SpikeMParams {
    SpikeMParams {
        u0: z[0].exp(),
        beta: z[1].exp(),
        t_b,
        s_b: z[2].exp(),
        eps0: z[3].exp(),
        p_a: sigmoid(z[4]),
        p_s: z[5],
    }
}

fn encode(p: &SpikeMParams) -> Vec<f64> {
    let ln = |v: f64| v.max(1e-12).ln();
    vec![ln(p.u0), ln(p.beta), ln(p.s_b), ln(p.eps0), logit(p.p_a), p.p_s]
}

struct Objective<'a> {
    y: &'a [f64],
    kernel: Vec<f64>,
    buf: Vec<f64>,
}

impl Objective<'_> {
    fn rss(&mut self, p: &SpikeMParams) -> f64 {
        simulate_into(p, &self.kernel, &mut self.buf);
        self.y.iter().zip(&self.buf).map(|(a, b)| (a - b).powi(2)).sum()
    }
}

/// Least squares over all hours of `y`, including the peak hour.
pub fn spikem_fit(series: &TimeSeries, peak: &PeakLocation) -> Result<SpikeMFit> {
    spikem_fit_values(&series.values(), peak.t_p)
}

pub fn spikem_fit_values(y: &[f64], t_p: usize) -> Result<SpikeMFit> {
    let n = y.len();
    if n < 48 || t_p + 1 >= n || t_p == 0 {
        return Err(Error::InsufficientData(format!(
            "series of {n} hours with peak at {t_p} is too short for SpikeM"
        )));
    }
    let mut obj = Objective {
        y,
        kernel: kernel(MAX_LAGS),
        buf: vec![0.0; n],
    };
    let tail = &y[n.saturating_sub(48).max(t_p + 1)..];
    let eps0 = crate::linalg::median(tail).unwrap_or(1.0).max(1.0);
    let total: f64 = y[t_p + 1..].iter().map(|v| (v - eps0).max(0.0)).sum::<f64>() + y[t_p];
    let u0 = 2.0 * total.max(1.0);
    let branching = 0.2;
    let beta = branching / u0;
    let (_, t_c) = circadian_guess(y, |h| h.abs_diff(t_p) <= 24);
    let p_s = wrap_hour(18.0 - t_c);

    let lo = t_p.saturating_sub(SHOCK_SEARCH_HOURS);
    let mut scanned: Vec<(usize, SpikeMParams, f64)> = (lo..t_p)
        .map(|t_b| {
            let first = (y[t_b + 1] - eps0).max(1.0);
            let p = SpikeMParams {
                u0,
                beta,
                t_b,
                s_b: first / branching,
                eps0,
                p_a: 0.3,
                p_s,
            };
            let f = obj.rss(&p);
            (t_b, p, f)
        })
        .collect();
    scanned.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));

    let opts = NelderMeadOptions {
        rel_tol: 1e-8,
        abs_tol: 1e-9,
        max_iter: 2000,
    };
    let step = [0.7, 0.7, 0.7, 0.5, 0.7, 2.0];
    let mut best: Option<(SpikeMParams, f64, bool)> = None;
    let consider = |p: SpikeMParams, f: f64, converged: bool, best: &mut Option<(SpikeMParams, f64, bool)>| {
        if best.as_ref().is_none_or(|b| f < b.1) {
            *best = Some((p, f, converged));
        }
    };
    for (t_b, p0, _) in scanned.iter().take(3) {
        let t_b = *t_b;
        let m = nelder_mead_restarted(|z| obj.rss(&decode(t_b, z)), &encode(p0), &step, opts, 2);
        consider(decode(t_b, &m.x), m.f, m.converged, &mut best);
    }
    // polish the shock hour around the incumbent
    let (incumbent, _, _) = best.unwrap();
    for t_b in incumbent.t_b.saturating_sub(2).max(lo)..=(incumbent.t_b + 2).min(t_p) {
        if t_b == incumbent.t_b {
            continue;
        }
        let start = SpikeMParams { t_b, ..incumbent };
        let m = nelder_mead_restarted(|z| obj.rss(&decode(t_b, z)), &encode(&start), &[0.2; 6], opts, 1);
        consider(decode(t_b, &m.x), m.f, m.converged, &mut best);
    }
    let (mut params, rss, converged) = best.unwrap();
    params.p_s = wrap_hour(params.p_s);
    let curve = spikem_simulate(&params, n)?;
    let model: Vec<Option<f64>> = curve.into_iter().map(Some).collect();
    Ok(SpikeMFit {
        params,
        r2: r_squared(y, &model, Some(t_p)),
        rss,
        converged,
    })
}

/// Fits on hours up to `t_p + t_obs` and simulates through `t_p + horizon`;
/// returns the values for hours `t_p + t_obs + 1 ..= t_p + horizon`.
pub fn spikem_forecast(y: &[f64], t_p: usize, t_obs: usize, horizon: usize) -> Result<(SpikeMFit, Vec<f64>)> {
    let observed = y.get(..=t_p + t_obs).ok_or_else(|| {
        Error::InsufficientData(format!("series ends before hour {}", t_p + t_obs))
    })?;
    let fit = spikem_fit_values(observed, t_p)?;
    let sim = spikem_simulate(&fit.params, t_p + horizon + 1)?;
    Ok((fit, sim[t_p + t_obs + 1..].to_vec()))
}
