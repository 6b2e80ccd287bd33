//! Least-squares fitting of the peak model to an event window.
//!
//! For fixed circadian parameters and time constants the model is linear in
//! the amplitudes and baselines of each side, so those four are solved
//! exactly (two-variable nonnegative least squares per side) inside the
//! objective. The simplex search then runs over the remaining parameters in
//! transformed coordinates: logit `alpha_c`, periodic `t_c`, log `tau`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{PeakLocation, TimeSeries};
use crate::model::{wrap_hour, PeakParams, OMEGA};
use crate::optim::{nelder_mead, nelder_mead_restarted, NelderMeadOptions};

/// Number of free model parameters (the peak time is not fitted).
pub const N_PARAMS: usize = 8;
/// Bounds on fitted time constants (hours).
pub const TAU_MIN: f64 = 0.05;
pub const TAU_MAX: f64 = 5000.0;
/// Minimum hours required on the pre-peak side for an anticipation fit.
pub const MIN_PREPEAK_HOURS: usize = 48;
/// Floor on the residual variance handed to the likelihood.
pub const NOISE_VARIANCE_FLOOR: f64 = 1.0;

const TAU_GRID: [f64; 3] = [1.5, 8.0, 40.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    pub params: PeakParams,
    /// `None` when the series has zero variance outside the peak hour.
    pub r2: Option<f64>,
    pub residual_variance: f64,
    pub converged: bool,
    pub n_points: usize,
}

/// Anticipation-only fit used as the starting point of forecasting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrepeakFit {
    pub alpha_c: f64,
    pub t_c: f64,
    pub a_minus: f64,
    pub b_minus: f64,
    pub tau_minus: f64,
    /// Residual variance of the pre-peak fit, floored at 1.
    pub noise_variance: f64,
    /// False when the anticipation amplitude vanished, leaving `tau_minus`
    /// without any influence on the fit.
    pub tau_identifiable: bool,
    pub converged: bool,
    pub n_points: usize,
}

/// Coefficient of determination over all hours except the peak hour, with the
/// mean also taken without the peak hour. Hours where `model` is `None` are
/// skipped. Returns `None` for a zero-variance series.
pub fn r_squared(observed: &[f64], model: &[Option<f64>], peak: Option<usize>) -> Option<f64> {
    let keep = |h: usize| Some(h) != peak && model.get(h).copied().flatten().is_some();
    let idx: Vec<usize> = (0..observed.len()).filter(|&h| keep(h)).collect();
    if idx.is_empty() {
        return None;
    }
    let mean = idx.iter().map(|&h| observed[h]).sum::<f64>() / idx.len() as f64;
    let ss_tot: f64 = idx.iter().map(|&h| (observed[h] - mean).powi(2)).sum();
    if ss_tot <= 0.0 {
        return None;
    }
    let ss_res: f64 = idx
        .iter()
        .map(|&h| (observed[h] - model[h].unwrap()).powi(2))
        .sum();
    Some(1.0 - ss_res / ss_tot)
}

/// Per-hour cosines and sines of the daily phase, shared by all evaluations.
#[derive(Debug, Clone)]
pub(crate) struct Phase {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Phase {
    pub(crate) fn new(len: usize) -> Self {
        let (cos, sin) = (0..len).map(|h| {
            let x = OMEGA * h as f64;
            (x.cos(), x.sin())
        }).unzip();
        Phase { cos, sin }
    }

    /// `C(h)` for all hours.
    pub(crate) fn circadian_into(&self, alpha: f64, t_c: f64, out: &mut Vec<f64>) {
        let (c, s) = ((OMEGA * t_c).cos(), (OMEGA * t_c).sin());
        out.clear();
        out.extend(
            self.cos
                .iter()
                .zip(&self.sin)
                .map(|(ch, sh)| 1.0 + alpha * (ch * c + sh * s)),
        );
    }
}

/// Sufficient statistics of one side for the basis `u = C r^k`, `v = C`.
#[derive(Debug, Clone, Copy, Default)]
struct SideSums {
    uu: f64,
    uv: f64,
    vv: f64,
    uy: f64,
    vy: f64,
    yy: f64,
}

impl SideSums {
    fn accumulate(y: &[f64], circ: &[f64], hours: impl Iterator<Item = usize>, tau: f64) -> Self {
        let r = (-1.0 / tau).exp();
        let mut rk = 1.0;
        let mut s = SideSums::default();
        for h in hours {
            rk *= r;
            let v = circ[h];
            let u = v * rk;
            let yh = y[h];
            s.uu += u * u;
            s.uv += u * v;
            s.vv += v * v;
            s.uy += u * yh;
            s.vy += v * yh;
            s.yy += yh * yh;
        }
        s
    }

    fn rss(&self, a: f64, b: f64) -> f64 {
        let v = self.yy - 2.0 * (a * self.uy + b * self.vy)
            + a * a * self.uu
            + 2.0 * a * b * self.uv
            + b * b * self.vv;
        v.max(0.0)
    }

    /// Nonnegative least squares for `(a, b)`, returning `(a, b, rss)`.
    fn solve(&self) -> (f64, f64, f64) {
        let mut cands: Vec<(f64, f64)> = Vec::with_capacity(4);
        let det = self.uu * self.vv - self.uv * self.uv;
        if det > 1e-12 * self.uu * self.vv && self.uu > 0.0 {
            let a = (self.uy * self.vv - self.vy * self.uv) / det;
            let b = (self.vy * self.uu - self.uy * self.uv) / det;
            if a >= 0.0 && b >= 0.0 {
                return (a, b, self.rss(a, b));
            }
        }
        if self.vv > 0.0 {
            cands.push((0.0, (self.vy / self.vv).max(0.0)));
        }
        if self.uu > 0.0 {
            cands.push(((self.uy / self.uu).max(0.0), 0.0));
        }
        cands.push((0.0, 0.0));
        cands
            .into_iter()
            .map(|(a, b)| (a, b, self.rss(a, b)))
            .min_by(|x, y| x.2.total_cmp(&y.2))
            .unwrap()
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub(crate) fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-6, 1.0 - 1e-6);
    (p / (1.0 - p)).ln()
}

pub(crate) fn tau_from_log(x: f64) -> f64 {
    x.exp().clamp(TAU_MIN, TAU_MAX)
}

/// Data-driven starting values.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Heuristics {
    pub alpha: f64,
    pub t_c: f64,
    pub tau_minus: f64,
    pub tau_plus: f64,
}

fn median_of(v: &[f64]) -> f64 {
    crate::linalg::median(v).unwrap_or(0.0)
}

/// Circadian amplitude and phase from the first daily harmonic of the series
/// divided by its centred 24-hour moving average.
pub(crate) fn circadian_guess(y: &[f64], skip: impl Fn(usize) -> bool) -> (f64, f64) {
    let n = y.len();
    if n < 48 {
        return (0.3, 12.0);
    }
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + y[i];
    }
    let (mut re, mut im, mut m) = (0.0, 0.0, 0.0);
    for h in 12..n - 12 {
        if skip(h) {
            continue;
        }
        let avg = (prefix[h + 12] - prefix[h - 12]) / 24.0;
        if avg <= 0.0 {
            continue;
        }
        let ratio = y[h] / avg - 1.0;
        let x = OMEGA * h as f64;
        re += ratio * x.cos();
        im += ratio * x.sin();
        m += 1.0;
    }
    if m < 24.0 {
        return (0.3, 12.0);
    }
    let alpha = (2.0 * re.hypot(im) / m).clamp(0.02, 0.9);
    let t_c = wrap_hour(im.atan2(re) / OMEGA);
    (alpha, t_c)
}

/// Hours for the envelope to fall to half its first-hour excess over the
/// baseline, converted to a time constant.
fn half_decay_tau(values: impl Iterator<Item = f64>, base: f64) -> f64 {
    let vals: Vec<f64> = values.collect();
    let Some(&first) = vals.first() else {
        return 8.0;
    };
    let excess = first - base;
    if excess <= 0.0 {
        return 8.0;
    }
    match vals.iter().position(|v| v - base <= 0.5 * excess) {
        Some(k) if k > 0 => (k as f64 / std::f64::consts::LN_2).clamp(0.5, 500.0),
        Some(_) => 0.5,
        None => 200.0,
    }
}

pub(crate) fn heuristics(y: &[f64], t_p: usize) -> Heuristics {
    let n = y.len();
    let (alpha, t_c) = circadian_guess(y, |h| h.abs_diff(t_p) <= 24);
    let edge = 48.min(t_p).max(1);
    let b_minus = median_of(&y[..edge.min(n)]);
    let tail = 48.min(n.saturating_sub(t_p + 1)).max(1);
    let b_plus = median_of(&y[n - tail..]);
    let tau_minus = half_decay_tau((0..t_p).rev().map(|h| y[h]), b_minus);
    let tau_plus = half_decay_tau((t_p + 1..n).map(|h| y[h]), b_plus);
    Heuristics {
        alpha,
        t_c,
        tau_minus,
        tau_plus,
    }
}

/// Shared state for evaluating the profiled objective.
pub(crate) struct Profile<'a> {
    y: &'a [f64],
    t_p: usize,
    phase: Phase,
    circ: Vec<f64>,
}

pub(crate) struct SideSolution {
    pub a: f64,
    pub b: f64,
    pub rss: f64,
}

impl<'a> Profile<'a> {
    pub(crate) fn new(y: &'a [f64], t_p: usize) -> Self {
        Profile {
            y,
            t_p,
            phase: Phase::new(y.len()),
            circ: Vec::with_capacity(y.len()),
        }
    }

    pub(crate) fn set_circadian(&mut self, alpha: f64, t_c: f64) {
        self.phase.circadian_into(alpha, t_c, &mut self.circ);
    }

    pub(crate) fn pre(&self, tau: f64) -> SideSolution {
        let s = SideSums::accumulate(self.y, &self.circ, (0..self.t_p).rev(), tau);
        let (a, b, rss) = s.solve();
        SideSolution { a, b, rss }
    }

    pub(crate) fn post(&self, tau: f64, end: usize) -> SideSolution {
        let s = SideSums::accumulate(self.y, &self.circ, self.t_p + 1..end, tau);
        let (a, b, rss) = s.solve();
        SideSolution { a, b, rss }
    }
}

struct Decoded {
    alpha: f64,
    t_c: f64,
    tau_minus: f64,
    tau_plus: f64,
}

fn decode(x: &[f64]) -> Decoded {
    Decoded {
        alpha: sigmoid(x[0]),
        t_c: x[1],
        tau_minus: tau_from_log(x[2]),
        tau_plus: tau_from_log(x.get(3).copied().unwrap_or(0.0)),
    }
}

/// Picks the best `keep` distinct results of a cheap first pass.
fn best_starts(mut results: Vec<(Vec<f64>, f64)>, keep: usize) -> Vec<Vec<f64>> {
    results.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut out: Vec<Vec<f64>> = Vec::new();
    for (x, _) in results {
        let dup = out.iter().any(|o| {
            o.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-3)
        });
        if !dup {
            out.push(x);
        }
        if out.len() == keep {
            break;
        }
    }
    out
}

const SCREEN: NelderMeadOptions = NelderMeadOptions {
    rel_tol: 1e-6,
    abs_tol: 1e-9,
    max_iter: 300,
};

/// Fits all eight parameters, excluding the peak hour from the objective.
pub fn fit_peak(series: &TimeSeries, peak: &PeakLocation) -> Result<PeakFit> {
    fit_peak_values(&series.values(), peak.t_p)
}

pub fn fit_peak_values(y: &[f64], t_p: usize) -> Result<PeakFit> {
    let n = y.len();
    if n < 48 {
        return Err(Error::InsufficientData(format!("series of {n} hours; need at least 48")));
    }
    if t_p == 0 || t_p + 1 >= n {
        return Err(Error::InsufficientData(format!(
            "peak at hour {t_p} leaves an empty side"
        )));
    }
    let n_points = n - 1;
    let h = heuristics(y, t_p);
    let mut prof = Profile::new(y, t_p);
    let mut objective = |x: &[f64]| {
        let d = decode(x);
        prof.set_circadian(d.alpha, d.t_c);
        prof.pre(d.tau_minus).rss + prof.post(d.tau_plus, n).rss
    };

    let taus_minus = [h.tau_minus, TAU_GRID[0], TAU_GRID[1], TAU_GRID[2]];
    let taus_plus = [h.tau_plus, TAU_GRID[0], TAU_GRID[1], TAU_GRID[2]];
    let step = [0.5, 1.5, 0.7, 0.7];
    let mut screened = Vec::with_capacity(16);
    for &tm in &taus_minus {
        for &tp in &taus_plus {
            let x0 = [logit(h.alpha), h.t_c, tm.ln(), tp.ln()];
            let m = nelder_mead(&mut objective, &x0, &step, SCREEN);
            screened.push((m.x, m.f));
        }
    }
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    for x0 in best_starts(screened, 3) {
        let m = nelder_mead_restarted(&mut objective, &x0, &[0.2, 0.5, 0.2, 0.2], NelderMeadOptions::default(), 4);
        if best.as_ref().is_none_or(|b| m.f < b.1) {
            best = Some((m.x, m.f, m.converged));
        }
    }
    let (x, rss, converged) = best.unwrap();
    let d = decode(&x);
    prof.set_circadian(d.alpha, d.t_c);
    let pre = prof.pre(d.tau_minus);
    let post = prof.post(d.tau_plus, n);
    let params = PeakParams {
        a_minus: pre.a,
        b_minus: pre.b,
        tau_minus: d.tau_minus,
        a_plus: post.a,
        b_plus: post.b,
        tau_plus: d.tau_plus,
        alpha_c: d.alpha,
        t_c: wrap_hour(d.t_c),
        t_p: t_p as f64,
    };
    let curve = params.eval_hours(n);
    let r2 = r_squared(y, &curve, Some(t_p));
    let dof = n_points.saturating_sub(N_PARAMS).max(1);
    Ok(PeakFit {
        params,
        r2,
        residual_variance: rss / dof as f64,
        converged: converged && rss.is_finite(),
        n_points,
    })
}

/// Fits the circadian pair and the anticipation triple on hours before the
/// peak only.
pub fn fit_prepeak(series: &TimeSeries, peak: &PeakLocation) -> Result<PrepeakFit> {
    fit_prepeak_values(&series.values(), peak.t_p)
}

pub fn fit_prepeak_values(y: &[f64], t_p: usize) -> Result<PrepeakFit> {
    if t_p < MIN_PREPEAK_HOURS || t_p > y.len() {
        return Err(Error::InsufficientData(format!(
            "{t_p} pre-peak hours; need at least {MIN_PREPEAK_HOURS}"
        )));
    }
    let pre_y = &y[..t_p];
    let (alpha0, tc0) = circadian_guess(pre_y, |_| false);
    let b0 = median_of(&pre_y[..48]);
    let tau0 = half_decay_tau((0..t_p).rev().map(|h| y[h]), b0);

    let mut prof = Profile::new(y, t_p);
    let mut objective = |x: &[f64]| {
        let d = decode(x);
        prof.set_circadian(d.alpha, d.t_c);
        prof.pre(d.tau_minus).rss
    };
    let step = [0.5, 1.5, 0.7];
    let mut screened = Vec::new();
    for &tm in &[tau0, TAU_GRID[0], TAU_GRID[1], TAU_GRID[2]] {
        for tc in [tc0, tc0 + 12.0] {
            let x0 = [logit(alpha0), tc, tm.ln()];
            let m = nelder_mead(&mut objective, &x0, &step, SCREEN);
            screened.push((m.x, m.f));
        }
    }
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    for x0 in best_starts(screened, 2) {
        let m = nelder_mead_restarted(&mut objective, &x0, &[0.2, 0.5, 0.2], NelderMeadOptions::default(), 4);
        if best.as_ref().is_none_or(|b| m.f < b.1) {
            best = Some((m.x, m.f, m.converged));
        }
    }
    let (x, rss, converged) = best.unwrap();
    let d = decode(&x);
    prof.set_circadian(d.alpha, d.t_c);
    let pre = prof.pre(d.tau_minus);
    let n_points = t_p;
    let dof = n_points.saturating_sub(5).max(1);
    let first_hour_amp = pre.a * (-1.0 / d.tau_minus).exp();
    let tau_identifiable = first_hour_amp > 1e-3 * pre.b.max(1.0)
        && d.tau_minus > TAU_MIN * 1.01
        && d.tau_minus < TAU_MAX * 0.99;
    Ok(PrepeakFit {
        alpha_c: d.alpha,
        t_c: wrap_hour(d.t_c),
        a_minus: pre.a,
        b_minus: pre.b,
        tau_minus: d.tau_minus,
        noise_variance: (rss / dof as f64).max(NOISE_VARIANCE_FLOOR),
        tau_identifiable,
        converged,
        n_points,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Poisson};

    pub(crate) fn truth() -> PeakParams {
        PeakParams {
            a_minus: 1500.0,
            b_minus: 80.0,
            tau_minus: 6.0,
            a_plus: 3000.0,
            b_plus: 120.0,
            tau_plus: 14.0,
            alpha_c: 0.4,
            t_c: 18.5,
            t_p: 260.0,
        }
    }

    fn noiseless(p: &PeakParams, n: usize) -> Vec<f64> {
        let tp = p.t_p as usize;
        (0..n)
            .map(|h| if h == tp { 2.0 * (p.a_plus + p.b_plus) } else { p.eval(h as f64).unwrap() })
            .collect()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn r_squared_examples() {
        let s = [1.0, 2.0, 3.0, 4.0];
        let exact: Vec<Option<f64>> = s.iter().map(|&v| Some(v)).collect();
        assert_eq!(r_squared(&s, &exact, None), Some(1.0));
        let mean = vec![Some(2.5); 4];
        assert_eq!(r_squared(&s, &mean, None), Some(0.0));
        let f = [Some(1.0), Some(2.0), Some(3.0), Some(5.0)];
        assert!((r_squared(&s, &f, None).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(r_squared(&[3.0; 5], &[Some(3.0); 5], None), None);
        // the peak hour is excluded from both sums and the mean
        let s = [1.0, 2.0, 100.0, 3.0, 4.0];
        let f = [Some(1.0), Some(2.0), None, Some(3.0), Some(5.0)];
        assert!((r_squared(&s, &f, Some(2)).unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn nnls_sides() {
        let s = SideSums { uu: 1.0, uv: 0.0, vv: 1.0, uy: -2.0, vy: 3.0, yy: 13.0 };
        let (a, b, rss) = s.solve();
        assert_eq!((a, b), (0.0, 3.0));
        assert!((rss - 4.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_recovery() {
        let p = truth();
        let y = noiseless(&p, 504);
        let fit = fit_peak_values(&y, 260).unwrap();
        let q = fit.params;
        for (got, want) in [
            (q.a_minus, p.a_minus),
            (q.b_minus, p.b_minus),
            (q.tau_minus, p.tau_minus),
            (q.a_plus, p.a_plus),
            (q.b_plus, p.b_plus),
            (q.tau_plus, p.tau_plus),
            (q.alpha_c, p.alpha_c),
            (q.t_c, p.t_c),
        ] {
            assert!(rel(got, want) < 1e-3, "{got} vs {want}: {q:?}");
        }
        assert!(fit.r2.unwrap() >= 0.999);
        assert_eq!(fit.n_points, 503);
        assert!(fit.converged);
    }

    #[test]
    fn objective_not_worse_than_truth() {
        let p = truth();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y: Vec<f64> = noiseless(&p, 504)
            .into_iter()
            .map(|m| Poisson::new(m).unwrap().sample(&mut rng))
            .collect();
        let fit = fit_peak_values(&y, 260).unwrap();
        let rss = |q: &PeakParams| -> f64 {
            (0..504)
                .filter(|&h| h != 260)
                .map(|h| (y[h] - q.eval(h as f64).unwrap()).powi(2))
                .sum()
        };
        assert!(rss(&fit.params) <= rss(&p) * (1.0 + 1e-9));
        assert!((fit.residual_variance - rss(&fit.params) / 495.0).abs() < 1e-6 * fit.residual_variance);
    }

    #[test]
    fn deterministic() {
        let p = truth();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y: Vec<f64> = noiseless(&p, 504)
            .into_iter()
            .map(|m| Poisson::new(m).unwrap().sample(&mut rng))
            .collect();
        assert_eq!(fit_peak_values(&y, 260).unwrap(), fit_peak_values(&y, 260).unwrap());
    }

    #[test]
    fn prepeak_recovery() {
        let p = truth();
        let y = noiseless(&p, 504);
        let pre = fit_prepeak_values(&y, 260).unwrap();
        assert!(rel(pre.a_minus, p.a_minus) < 0.1, "{pre:?}");
        assert!(rel(pre.b_minus, p.b_minus) < 0.1);
        assert!(rel(pre.tau_minus, p.tau_minus) < 0.1);
        assert!(pre.tau_identifiable);
        assert_eq!(pre.noise_variance, NOISE_VARIANCE_FLOOR);
    }

    #[test]
    fn prepeak_flat_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y: Vec<f64> = (0..300).map(|_| Poisson::new(200.0).unwrap().sample(&mut rng)).collect();
        let pre = fit_prepeak_values(&y, 280).unwrap();
        let mean = y[..280].iter().sum::<f64>() / 280.0;
        let level = pre.b_minus + pre.a_minus * (-1.0 / pre.tau_minus).exp();
        assert!(rel(pre.b_minus, mean) < 0.05, "{pre:?}");
        assert!(rel(level, mean) < 0.05);
        assert!(!pre.tau_identifiable || pre.a_minus < 0.05 * mean, "{pre:?}");
        assert!(pre.alpha_c < 0.05);
    }

    #[test]
    fn prepeak_without_rhythm() {
        let p = PeakParams { alpha_c: 0.0, ..truth() };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y: Vec<f64> = noiseless(&p, 504)
            .into_iter()
            .map(|m| Poisson::new(m).unwrap().sample(&mut rng))
            .collect();
        let pre = fit_prepeak_values(&y, 260).unwrap();
        assert!(pre.alpha_c < 0.05, "{pre:?}");
    }

    #[test]
    fn rejects_short_input() {
        assert!(fit_peak_values(&[1.0; 30], 10).is_err());
        assert!(fit_peak_values(&[1.0; 100], 0).is_err());
        assert!(fit_prepeak_values(&[1.0; 100], 20).is_err());
    }
}
