//! Forecasting the response after a peak from a short post-peak observation.
//!
//! Circadian and anticipation parameters come from a pre-peak fit. The three
//! response parameters are then fitted by maximum a posteriori estimation
//! with Gaussian observation noise and log-normal priors whose location is a
//! linear function of the matching anticipation parameter.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{PeakFit, PrepeakFit, Profile, TAU_MAX, TAU_MIN};
use crate::ingest::Category;
use crate::linalg::simple_regression;
use crate::model::{circadian, PeakParams};
use crate::optim::{grid_then_golden, nelder_mead_restarted, NelderMeadOptions};

/// Forecast horizon in hours after the peak.
pub const HORIZON_HOURS: usize = 168;
/// Categories with fewer converged fits use the pooled prior row.
pub const MIN_FITS_PER_CATEGORY: usize = 8;
pub const PRIOR_VARIANCE_FLOOR: f64 = 1e-6;
/// Parameters are floored here before taking logs.
pub const PARAM_FLOOR: f64 = 1e-3;

/// Scale of the anticipation regressor in the prior location.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressorScale {
    #[default]
    Log,
    Raw,
}

impl RegressorScale {
    fn transform(self, q_minus: f64) -> f64 {
        match self {
            RegressorScale::Log => q_minus.max(PARAM_FLOOR).ln(),
            RegressorScale::Raw => q_minus,
        }
    }
}

/// Which prior the MAP fit uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorMode {
    /// Flat prior: plain least squares.
    None,
    /// Hyperparameters shared by all categories.
    Anticipation,
    /// Per-category hyperparameters.
    AnticipationCategory,
}

impl PriorMode {
    pub const ALL: [PriorMode; 3] = [PriorMode::None, PriorMode::Anticipation, PriorMode::AnticipationCategory];

    pub fn as_str(self) -> &'static str {
        match self {
            PriorMode::None => "none",
            PriorMode::Anticipation => "anticipation",
            PriorMode::AnticipationCategory => "anticipation-category",
        }
    }
}

impl fmt::Display for PriorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PriorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PriorMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown prior mode {s:?}")))
    }
}

/// Log-space regression `log q_+ ~ N(c x + d, sigma2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub c: f64,
    pub d: f64,
    pub sigma2: f64,
    /// Regressor had no spread; `c` is 0 and `d` the mean response.
    pub singular: bool,
}

impl Hyper {
    fn learn(x: &[f64], y: &[f64]) -> Self {
        let n = x.len();
        let (c, d, singular) = match simple_regression(x, y) {
            Some((c, d)) => (c, d, false),
            None => (0.0, y.iter().sum::<f64>() / n.max(1) as f64, true),
        };
        let rss: f64 = x.iter().zip(y).map(|(xi, yi)| (yi - c * xi - d).powi(2)).sum();
        let dof = if singular {
            n.saturating_sub(1)
        } else {
            n.saturating_sub(2)
        };
        let sigma2 = if dof > 0 { rss / dof as f64 } else { 0.0 };
        Hyper {
            c,
            d,
            sigma2: sigma2.max(PRIOR_VARIANCE_FLOOR),
            singular,
        }
    }
}

/// Hyperparameters for `a_+`, `b_+` and `tau_+`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorRow {
    pub a_plus: Hyper,
    pub b_plus: Hyper,
    pub tau_plus: Hyper,
    pub n_fits: usize,
}

impl PriorRow {
    fn learn(pairs: &[&PeakParams], scale: RegressorScale) -> Self {
        let hyper = |minus: fn(&PeakParams) -> f64, plus: fn(&PeakParams) -> f64| {
            let x: Vec<f64> = pairs.iter().map(|p| scale.transform(minus(p))).collect();
            let y: Vec<f64> = pairs.iter().map(|p| plus(p).max(PARAM_FLOOR).ln()).collect();
            Hyper::learn(&x, &y)
        };
        PriorRow {
            a_plus: hyper(|p| p.a_minus, |p| p.a_plus),
            b_plus: hyper(|p| p.b_minus, |p| p.b_plus),
            tau_plus: hyper(|p| p.tau_minus, |p| p.tau_plus),
            n_fits: pairs.len(),
        }
    }

    fn hypers(&self) -> [&Hyper; 3] {
        [&self.a_plus, &self.b_plus, &self.tau_plus]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorTable {
    pub scale: RegressorScale,
    pub pooled: PriorRow,
    /// Only categories with at least `MIN_FITS_PER_CATEGORY` fits.
    pub categories: BTreeMap<String, PriorRow>,
}

/// Log-normal prior resolved for one event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedPrior {
    /// Log-space means for `a_+`, `b_+`, `tau_+`.
    pub mu: [f64; 3],
    pub sigma2: [f64; 3],
}

impl ResolvedPrior {
    /// Log-normal mode `exp(mu - sigma2)` of each parameter.
    pub fn mode(&self) -> [f64; 3] {
        [0, 1, 2].map(|i| (self.mu[i] - self.sigma2[i]).exp())
    }

    /// Sum of log-normal log densities at `q`.
    pub fn log_density(&self, q: [f64; 3]) -> f64 {
        (0..3)
            .map(|i| {
                let lq = q[i].ln();
                let s2 = self.sigma2[i];
                -(lq - self.mu[i]).powi(2) / (2.0 * s2) - lq - 0.5 * (2.0 * std::f64::consts::PI * s2).ln()
            })
            .sum()
    }
}

impl PriorTable {
    /// Row used for `category` under `mode`; `None` for the flat prior.
    pub fn row(&self, category: &Category, mode: PriorMode) -> Option<&PriorRow> {
        match mode {
            PriorMode::None => None,
            PriorMode::Anticipation => Some(&self.pooled),
            PriorMode::AnticipationCategory => {
                Some(self.categories.get(category.as_str()).unwrap_or(&self.pooled))
            }
        }
    }

    pub fn resolve(&self, category: &Category, mode: PriorMode, prepeak: &PrepeakFit) -> Option<ResolvedPrior> {
        let row = self.row(category, mode)?;
        let x = [prepeak.a_minus, prepeak.b_minus, prepeak.tau_minus].map(|q| self.scale.transform(q));
        let h = row.hypers();
        Some(ResolvedPrior {
            mu: [0, 1, 2].map(|i| h[i].c * x[i] + h[i].d),
            sigma2: [0, 1, 2].map(|i| h[i].sigma2),
        })
    }
}

/// Regresses each log response parameter on its anticipation counterpart,
/// per category and pooled. Non-converged fits are ignored.
pub fn learn_priors(fits: &[(Category, PeakFit)], scale: RegressorScale) -> Result<PriorTable> {
    let usable: Vec<(&Category, &PeakParams)> = fits
        .iter()
        .filter(|(_, f)| f.converged)
        .map(|(c, f)| (c, &f.params))
        .collect();
    if usable.is_empty() {
        return Err(Error::InsufficientData("no converged fits to learn priors from".into()));
    }
    let all: Vec<&PeakParams> = usable.iter().map(|(_, p)| *p).collect();
    let mut by_cat: BTreeMap<String, Vec<&PeakParams>> = BTreeMap::new();
    for (c, p) in &usable {
        by_cat.entry(c.as_str().to_string()).or_default().push(p);
    }
    let categories = by_cat
        .into_iter()
        .filter(|(_, v)| v.len() >= MIN_FITS_PER_CATEGORY)
        .map(|(k, v)| (k, PriorRow::learn(&v, scale)))
        .collect();
    Ok(PriorTable {
        scale,
        pooled: PriorRow::learn(&all, scale),
        categories,
    })
}

/// Inputs for forecasting one event.
#[derive(Debug, Clone)]
pub struct ForecastRequest<'a> {
    /// Hourly views from the window start; only hours up to
    /// `t_p + t_obs` are read.
    pub series: &'a [f64],
    pub t_p: usize,
    /// Observed hours after the peak.
    pub t_obs: usize,
    pub horizon: usize,
    pub prepeak: PrepeakFit,
}

impl ForecastRequest<'_> {
    pub fn validate(&self) -> Result<()> {
        if self.t_obs >= self.horizon {
            return Err(Error::Config(format!(
                "t_obs {} must be below the horizon {}",
                self.t_obs, self.horizon
            )));
        }
        if self.t_p + self.t_obs >= self.series.len() {
            return Err(Error::InsufficientData(format!(
                "series of {} hours ends before t_p + t_obs = {}",
                self.series.len(),
                self.t_p + self.t_obs
            )));
        }
        Ok(())
    }

    fn observed(&self) -> &[f64] {
        &self.series[..=self.t_p + self.t_obs]
    }

    /// Full parameter set from the pre-peak fit and a response triple.
    pub fn assemble(&self, response: [f64; 3]) -> PeakParams {
        let p = &self.prepeak;
        PeakParams {
            a_minus: p.a_minus,
            b_minus: p.b_minus,
            tau_minus: p.tau_minus,
            a_plus: response[0],
            b_plus: response[1],
            tau_plus: response[2],
            alpha_c: p.alpha_c,
            t_c: p.t_c,
            t_p: self.t_p as f64,
        }
    }

    /// Response mirrored from the anticipation parameters.
    fn mirrored(&self) -> [f64; 3] {
        let p = &self.prepeak;
        [p.a_minus, p.b_minus, p.tau_minus]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseFit {
    pub a_plus: f64,
    pub b_plus: f64,
    pub tau_plus: f64,
    /// No post-peak hours were observed.
    pub no_data: bool,
    /// Log posterior (up to a constant) at the returned point.
    pub objective: f64,
}

impl ResponseFit {
    pub fn triple(&self) -> [f64; 3] {
        [self.a_plus, self.b_plus, self.tau_plus]
    }
}

/// Gaussian log likelihood of the observed post-peak hours.
fn log_likelihood(req: &ForecastRequest, q: [f64; 3]) -> f64 {
    let p = &req.prepeak;
    let var = p.noise_variance;
    let rss: f64 = (1..=req.t_obs)
        .map(|k| {
            let t = (req.t_p + k) as f64;
            let f = circadian(p.alpha_c, p.t_c, t) * (q[0] * (-(k as f64) / q[2]).exp() + q[1]);
            (req.series[req.t_p + k] - f).powi(2)
        })
        .sum();
    -rss / (2.0 * var) - 0.5 * req.t_obs as f64 * (2.0 * std::f64::consts::PI * var).ln()
}

/// Log posterior up to a constant; equals the log likelihood for a flat prior.
pub fn log_posterior(req: &ForecastRequest, prior: Option<&ResolvedPrior>, q: [f64; 3]) -> f64 {
    log_likelihood(req, q) + prior.map_or(0.0, |p| p.log_density(q))
}

/// Least-squares response fit over the observed hours with the circadian
/// factor held at the pre-peak estimate. `a_+` and `b_+` are exact
/// nonnegative least squares for each `tau_+`; `tau_+` is found by a log grid
/// refined by golden section.
pub fn least_squares_response(req: &ForecastRequest) -> Result<[f64; 3]> {
    req.validate()?;
    if req.t_obs == 0 {
        return Err(Error::InsufficientData("no post-peak hours observed".into()));
    }
    let y = req.observed();
    let end = y.len();
    let mut prof = Profile::new(y, req.t_p);
    prof.set_circadian(req.prepeak.alpha_c, req.prepeak.t_c);
    let (lo, hi) = (TAU_MIN.ln(), TAU_MAX.ln());
    let grid: Vec<f64> = (0..=80).map(|i| lo + (hi - lo) * i as f64 / 80.0).collect();
    let (log_tau, _) = grid_then_golden(|lt| prof.post(lt.exp(), end).rss, &grid, 1e-10);
    let tau = log_tau.exp();
    let side = prof.post(tau, end);
    Ok([side.a, side.b, tau])
}

/// MAP estimate of the response parameters. A flat prior returns the least
/// squares solution; with no observed hours the prior mode is returned
/// (or the mirrored anticipation parameters under a flat prior).
pub fn map_fit_response(req: &ForecastRequest, prior: Option<&ResolvedPrior>) -> Result<ResponseFit> {
    req.validate()?;
    let finish = |q: [f64; 3], no_data: bool| ResponseFit {
        a_plus: q[0],
        b_plus: q[1],
        tau_plus: q[2],
        no_data,
        objective: log_posterior(req, prior, q),
    };
    if req.t_obs == 0 {
        let q = match prior {
            Some(p) => p.mode(),
            None => req.mirrored(),
        };
        return Ok(finish(q, true));
    }
    let ls = least_squares_response(req)?;
    let Some(prior) = prior else {
        return Ok(finish(ls, false));
    };

    let floor = |q: [f64; 3]| q.map(|v| v.max(PARAM_FLOOR));
    let clamp_tau = |mut q: [f64; 3]| {
        q[2] = q[2].clamp(TAU_MIN, TAU_MAX);
        q
    };
    let objective = |z: &[f64]| {
        let q = clamp_tau([z[0].exp(), z[1].exp(), z[2].exp()]);
        -log_posterior(req, Some(prior), q)
    };
    let starts = [prior.mode(), floor(ls), floor(req.mirrored())];
    let mut best: Option<([f64; 3], f64)> = None;
    for q0 in starts {
        let z0: Vec<f64> = clamp_tau(q0).iter().map(|v| v.ln()).collect();
        let m = nelder_mead_restarted(objective, &z0, &[0.5, 0.5, 0.5], NelderMeadOptions::default(), 3);
        let q = clamp_tau([m.x[0].exp(), m.x[1].exp(), m.x[2].exp()]);
        if best.is_none_or(|(_, f)| m.f < f) {
            best = Some((q, m.f));
        }
    }
    Ok(finish(best.unwrap().0, false))
}

/// Model values for hours `t_p + t_obs + 1 ..= t_p + horizon`.
pub fn forecast(params: &PeakParams, t_obs: usize, horizon: usize) -> Vec<f64> {
    let tp = params.t_p as usize;
    (tp + t_obs + 1..=tp + horizon)
        .map(|h| params.eval(h as f64).expect("forecast hours follow the peak"))
        .collect()
}

/// Hours `t_p + t_obs + 1 ..= t_p + horizon` of `series`.
pub fn prediction_span(series: &[f64], t_p: usize, t_obs: usize, horizon: usize) -> Result<&[f64]> {
    let (start, end) = (t_p + t_obs + 1, t_p + horizon + 1);
    series.get(start..end).ok_or_else(|| {
        Error::InsufficientData(format!(
            "series of {} hours does not cover the prediction span up to hour {}",
            series.len(),
            end - 1
        ))
    })
}

/// `sum |s - s_hat| / sum s` over aligned prediction spans; `None` if `sum s = 0`.
pub fn ape_timeseries(actual: &[f64], predicted: &[f64]) -> Option<f64> {
    assert_eq!(actual.len(), predicted.len(), "spans must align");
    let n: f64 = actual.iter().sum();
    if n <= 0.0 {
        return None;
    }
    let err: f64 = actual.iter().zip(predicted).map(|(s, p)| (s - p).abs()).sum();
    Some(err / n)
}

/// `|N - N_hat| / N` over aligned prediction spans; `None` if `N = 0`.
pub fn ape_cumulative(actual: &[f64], predicted: &[f64]) -> Option<f64> {
    assert_eq!(actual.len(), predicted.len(), "spans must align");
    let n: f64 = actual.iter().sum();
    if n <= 0.0 {
        return None;
    }
    let n_hat: f64 = predicted.iter().sum();
    Some((n - n_hat).abs() / n)
}

/// Corpus aggregate of a per-event metric. Events with an undefined metric
/// are left out of the mean and counted separately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub n: usize,
    pub undefined: usize,
}

impl MetricSummary {
    pub fn from_values(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let mut defined = Vec::new();
        let mut undefined = 0;
        for v in values {
            match v {
                Some(x) => defined.push(x),
                None => undefined += 1,
            }
        }
        MetricSummary {
            mean: crate::linalg::mean(&defined),
            median: crate::linalg::median(&defined),
            n: defined.len(),
            undefined,
        }
    }
}

/// Forecast of one event by the proposed method.
#[derive(Debug, Clone, PartialEq)]
pub struct EventForecast {
    pub params: PeakParams,
    pub response: ResponseFit,
    pub predicted: Vec<f64>,
}

/// MAP response fit followed by the model forecast over the prediction span.
pub fn forecast_event(req: &ForecastRequest, prior: Option<&ResolvedPrior>) -> Result<EventForecast> {
    let response = map_fit_response(req, prior)?;
    let params = req.assemble(response.triple());
    Ok(EventForecast {
        predicted: forecast(&params, req.t_obs, req.horizon),
        params,
        response,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::tests::truth;
    use crate::optim::nelder_mead;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn prepeak_of(p: &PeakParams, noise_variance: f64) -> PrepeakFit {
        PrepeakFit {
            alpha_c: p.alpha_c,
            t_c: p.t_c,
            a_minus: p.a_minus,
            b_minus: p.b_minus,
            tau_minus: p.tau_minus,
            noise_variance,
            tau_identifiable: true,
            converged: true,
            n_points: p.t_p as usize,
        }
    }

    fn noiseless(p: &PeakParams, n: usize) -> Vec<f64> {
        (0..n).map(|h| p.eval(h as f64).unwrap_or(0.0)).collect()
    }

    fn fit_with(p: PeakParams) -> PeakFit {
        PeakFit {
            params: p,
            r2: Some(1.0),
            residual_variance: 1.0,
            converged: true,
            n_points: 503,
        }
    }

    #[test]
    fn identity_relation_gives_unit_slope() {
        let fits: Vec<(Category, PeakFit)> = (0..10)
            .map(|i| {
                let mut p = truth();
                let s = 1.0 + i as f64;
                p.a_minus = 100.0 * s;
                p.a_plus = 100.0 * s;
                p.b_minus = 3.0 * s * s;
                p.b_plus = 3.0 * s * s;
                p.tau_minus = 0.5 * s;
                p.tau_plus = 0.5 * s;
                (Category::Film, fit_with(p))
            })
            .collect();
        let t = learn_priors(&fits, RegressorScale::Log).unwrap();
        for h in t.pooled.hypers() {
            assert!((h.c - 1.0).abs() < 1e-9 && h.d.abs() < 1e-8, "{h:?}");
            assert_eq!(h.sigma2, PRIOR_VARIANCE_FLOOR);
        }
        assert!(t.categories.contains_key("film"));
    }

    #[test]
    fn planted_regression_recovered() {
        // sampling error of d and sigma2 at n = 500 is comparable to 5%, so
        // the estimates are averaged over independent corpora
        let reps = 20;
        let mut sum = [0.0; 3];
        for rep in 0..reps {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + rep);
            let fits: Vec<(Category, PeakFit)> = (0..500)
                .map(|_| {
                    let mut p = truth();
                    let x: f64 = rng.gen_range(0.0..4.0);
                    let e: f64 = rng.sample(StandardNormal);
                    p.tau_minus = x.exp();
                    p.tau_plus = (0.8 * x + 0.5 + 0.2 * e).exp();
                    (Category::Election, fit_with(p))
                })
                .collect();
            let h = learn_priors(&fits, RegressorScale::Log).unwrap().pooled.tau_plus;
            sum[0] += h.c / reps as f64;
            sum[1] += h.d / reps as f64;
            sum[2] += h.sigma2 / reps as f64;
        }
        for (got, want) in sum.iter().zip([0.8, 0.5, 0.04]) {
            assert!((got - want).abs() < 0.05 * want, "{sum:?}");
        }
    }

    #[test]
    fn small_categories_fall_back_to_pool() {
        let mut fits: Vec<(Category, PeakFit)> = (0..10).map(|_| (Category::Film, fit_with(truth()))).collect();
        fits.extend((0..7).map(|_| (Category::Holiday, fit_with(truth()))));
        let t = learn_priors(&fits, RegressorScale::Log).unwrap();
        assert!(t.categories.contains_key("film"));
        assert!(!t.categories.contains_key("holiday"));
        assert_eq!(t.row(&Category::Holiday, PriorMode::AnticipationCategory), Some(&t.pooled));
        assert_eq!(t.row(&Category::Film, PriorMode::Anticipation), Some(&t.pooled));
        assert_eq!(t.row(&Category::Film, PriorMode::None), None);
        // constant regressor
        assert!(t.pooled.a_plus.singular);
        assert_eq!(t.pooled.a_plus.c, 0.0);
        assert!((t.pooled.a_plus.d - truth().a_plus.ln()).abs() < 1e-12);
        assert!(learn_priors(&[], RegressorScale::Log).is_err());
    }

    #[test]
    fn raw_scale_regresses_on_raw_values() {
        let fits: Vec<(Category, PeakFit)> = (1..=20)
            .map(|i| {
                let mut p = truth();
                p.tau_minus = i as f64;
                p.tau_plus = (0.1 * i as f64 + 1.0).exp();
                (Category::Sports, fit_with(p))
            })
            .collect();
        let h = learn_priors(&fits, RegressorScale::Raw).unwrap().pooled.tau_plus;
        assert!((h.c - 0.1).abs() < 1e-9 && (h.d - 1.0).abs() < 1e-9);
    }

    #[test]
    fn prior_mode_parse() {
        for m in PriorMode::ALL {
            assert_eq!(m.as_str().parse::<PriorMode>().unwrap(), m);
        }
        assert!("bogus".parse::<PriorMode>().is_err());
    }

    fn request<'a>(series: &'a [f64], p: &PeakParams, t_obs: usize) -> ForecastRequest<'a> {
        ForecastRequest {
            series,
            t_p: p.t_p as usize,
            t_obs,
            horizon: HORIZON_HOURS,
            prepeak: prepeak_of(p, 100.0),
        }
    }

    fn noisy(p: &PeakParams, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        noiseless(p, 504)
            .into_iter()
            .map(|v| (v + 10.0 * rng.sample::<f64, _>(StandardNormal)).max(0.0))
            .collect()
    }

    #[test]
    fn flat_prior_is_least_squares() {
        let p = truth();
        let y = noisy(&p, 3);
        let req = request(&y, &p, 120);
        let fit = map_fit_response(&req, None).unwrap();
        let rss = |q: [f64; 3]| -> f64 {
            (1..=req.t_obs)
                .map(|k| {
                    let t = (req.t_p + k) as f64;
                    let f = circadian(p.alpha_c, p.t_c, t) * (q[0] * (-(k as f64) / q[2]).exp() + q[1]);
                    (y[req.t_p + k] - f).powi(2)
                })
                .sum()
        };
        // independent check: direct simplex search on the raw parameters
        let opts = NelderMeadOptions {
            rel_tol: 1e-15,
            abs_tol: 1e-12,
            max_iter: 20_000,
        };
        let mut m = nelder_mead(|x| rss([x[0], x[1], x[2]]), &[2000.0, 100.0, 10.0], &[500.0, 50.0, 5.0], opts);
        for _ in 0..5 {
            m = nelder_mead(|x| rss([x[0], x[1], x[2]]), &m.x, &[5.0, 1.0, 0.1], opts);
        }
        let got = rss(fit.triple());
        assert!(got <= m.f * (1.0 + 1e-9), "{got} vs {}", m.f);
        for (a, b) in fit.triple().iter().zip(&m.x) {
            assert!((a - b).abs() / b < 1e-6, "{:?} vs {:?}", fit.triple(), m.x);
        }
        assert!(!fit.no_data);
    }

    #[test]
    fn no_observation_returns_prior_mode() {
        let p = truth();
        let y = noiseless(&p, 504);
        let req = request(&y, &p, 0);
        let prior = ResolvedPrior {
            mu: [7.0, 4.0, 2.0],
            sigma2: [0.3, 0.2, 0.1],
        };
        let fit = map_fit_response(&req, Some(&prior)).unwrap();
        assert!(fit.no_data);
        let want = [(7.0f64 - 0.3).exp(), (4.0f64 - 0.2).exp(), (2.0f64 - 0.1).exp()];
        for (a, b) in fit.triple().iter().zip(&want) {
            assert!((a - b).abs() < 1e-12 * b);
        }
        let flat = map_fit_response(&req, None).unwrap();
        assert_eq!(flat.triple(), [p.a_minus, p.b_minus, p.tau_minus]);
    }

    #[test]
    fn tight_prior_pins_mode() {
        let p = truth();
        let y = noisy(&p, 4);
        let req = request(&y, &p, 24);
        let prior = ResolvedPrior {
            mu: [5.0, 3.0, 3.5],
            sigma2: [1e-9; 3],
        };
        let fit = map_fit_response(&req, Some(&prior)).unwrap();
        for (a, b) in fit.triple().iter().zip(prior.mode()) {
            assert!((a - b).abs() / b < 1e-3, "{:?}", fit.triple());
        }
    }

    #[test]
    fn map_beats_its_starts() {
        let p = truth();
        for (seed, t_obs) in [(5u64, 24usize), (6, 48), (7, 72)] {
            let y = noisy(&p, seed);
            let req = request(&y, &p, t_obs);
            let prior = ResolvedPrior {
                mu: [7.5, 4.5, 2.3],
                sigma2: [0.5, 0.4, 0.3],
            };
            let fit = map_fit_response(&req, Some(&prior)).unwrap();
            let at = |q: [f64; 3]| log_posterior(&req, Some(&prior), q);
            let ls = least_squares_response(&req).unwrap().map(|v| v.max(PARAM_FLOOR));
            assert!(fit.objective >= at(prior.mode()));
            assert!(fit.objective >= at(ls));
        }
    }

    #[test]
    fn exact_forecast_has_zero_error() {
        let p = truth();
        let y = noiseless(&p, 504);
        let pred = forecast(&p, 24, HORIZON_HOURS);
        assert_eq!(pred.len(), HORIZON_HOURS - 24);
        let actual = prediction_span(&y, 260, 24, HORIZON_HOURS).unwrap();
        assert_eq!(ape_timeseries(actual, &pred), Some(0.0));
        assert_eq!(ape_cumulative(actual, &pred), Some(0.0));
        for (k, v) in pred.iter().enumerate() {
            assert_eq!(*v, p.eval((260 + 25 + k) as f64).unwrap());
        }
    }

    #[test]
    fn noiseless_forecast_recovers_response() {
        let p = truth();
        let y = noiseless(&p, 504);
        let req = request(&y, &p, 48);
        let f = forecast_event(&req, None).unwrap();
        let actual = prediction_span(&y, 260, 48, HORIZON_HOURS).unwrap();
        assert!(ape_timeseries(actual, &f.predicted).unwrap() < 1e-6);
    }

    #[test]
    fn ape_examples() {
        let s = [10.0, 20.0, 30.0];
        assert!((ape_timeseries(&s, &[12.0, 18.0, 33.0]).unwrap() - 7.0 / 60.0).abs() < 1e-15);
        assert_eq!(ape_timeseries(&s, &[0.0; 3]), Some(1.0));
        assert_eq!(ape_timeseries(&s, &s), Some(0.0));
        assert_eq!(ape_timeseries(&[0.0; 3], &s), None);
        assert!((ape_cumulative(&[50.0, 50.0], &[100.0, 44.0]).unwrap() - 0.44).abs() < 1e-15);
        assert_eq!(ape_cumulative(&s, &[30.0, 20.0, 10.0]), Some(0.0));
        assert_eq!(ape_cumulative(&[0.0], &[1.0]), None);
    }

    #[test]
    fn summary_counts_undefined() {
        let s = MetricSummary::from_values([Some(1.0), None, Some(3.0)]);
        assert_eq!(s.mean, Some(2.0));
        assert_eq!((s.n, s.undefined), (2, 1));
        assert_eq!(MetricSummary::from_values([None]).mean, None);
    }

    #[test]
    fn request_validation() {
        let p = truth();
        let y = noiseless(&p, 270);
        assert!(map_fit_response(&request(&y, &p, 24), None).is_err());
        let y = noiseless(&p, 504);
        let mut req = request(&y, &p, 24);
        req.horizon = 24;
        assert!(matches!(map_fit_response(&req, None), Err(Error::Config(_))));
    }
}
