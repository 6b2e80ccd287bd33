//! Synthetic event corpora with known generating parameters.
//!
//! Every event draws from its own ChaCha stream (`stream = event index`) of
//! the master seed, so corpora are reproducible and any prefix of a corpus
//! is identical regardless of its total size.

use std::ops::Range;

use chrono::{Duration, NaiveDate};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    Category, EventRecord, MatchResult, Outcome, Stage, TimeSeries, DAYS_BEFORE, PEAK_SEARCH_HOURS,
    WINDOW_HOURS,
};
use crate::model::{wrap_hour, PeakParams};

/// Log-normal distribution given by its median and log-space sd.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalSpec {
    pub median: f64,
    pub sigma: f64,
}

impl LogNormalSpec {
    pub const fn new(median: f64, sigma: f64) -> Self {
        LogNormalSpec { median, sigma }
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.median > 0.0) || !self.median.is_finite() || !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::Config(format!(
                "{what}: log-normal needs median > 0 and sigma >= 0, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        self.median * (self.sigma * z).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformSpec {
    pub lo: f64,
    pub hi: f64,
}

impl UniformSpec {
    pub const fn new(lo: f64, hi: f64) -> Self {
        UniformSpec { lo, hi }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.hi > self.lo {
            rng.gen_range(self.lo..self.hi)
        } else {
            self.lo
        }
    }
}

/// Sampling distributions for one category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryProfile {
    pub category: Category,
    /// Response amplitude `a_plus`.
    pub a_plus: LogNormalSpec,
    /// `a_minus / a_plus`.
    pub a_minus_ratio: LogNormalSpec,
    pub tau_minus: LogNormalSpec,
    pub tau_plus: LogNormalSpec,
    /// `b_plus / a_plus`.
    pub b_plus_ratio: LogNormalSpec,
    /// `b_minus / b_plus`.
    pub b_minus_ratio: LogNormalSpec,
    pub alpha_c: UniformSpec,
    /// Mean and sd (hours) of the circadian peak time.
    pub t_c_mean: f64,
    pub t_c_sd: f64,
    /// Peak-hour intensity relative to the busiest other hour in the search span.
    pub spike_factor: UniformSpec,
}

impl CategoryProfile {
    fn validate(&self) -> Result<()> {
        let name = self.category.as_str();
        self.a_plus.validate(&format!("{name}.a_plus"))?;
        self.a_minus_ratio.validate(&format!("{name}.a_minus_ratio"))?;
        self.tau_minus.validate(&format!("{name}.tau_minus"))?;
        self.tau_plus.validate(&format!("{name}.tau_plus"))?;
        self.b_plus_ratio.validate(&format!("{name}.b_plus_ratio"))?;
        self.b_minus_ratio.validate(&format!("{name}.b_minus_ratio"))?;
        if !(0.0 <= self.alpha_c.lo && self.alpha_c.lo <= self.alpha_c.hi && self.alpha_c.hi < 1.0) {
            return Err(Error::Config(format!("{name}.alpha_c must lie in [0, 1)")));
        }
        if !(self.t_c_sd >= 0.0) || !self.t_c_mean.is_finite() {
            return Err(Error::Config(format!("{name}.t_c needs a finite mean and sd >= 0")));
        }
        if !(self.spike_factor.lo >= 1.0 && self.spike_factor.hi >= self.spike_factor.lo) {
            return Err(Error::Config(format!("{name}.spike_factor must be >= 1")));
        }
        Ok(())
    }

    pub fn sample_params(&self, t_p: usize, rng: &mut impl Rng) -> PeakParams {
        let a_plus = self.a_plus.sample(rng);
        let b_plus = a_plus * self.b_plus_ratio.sample(rng);
        let t_c_noise: f64 = Normal::new(0.0, self.t_c_sd.max(1e-12)).unwrap().sample(rng);
        PeakParams {
            a_minus: a_plus * self.a_minus_ratio.sample(rng),
            b_minus: b_plus * self.b_minus_ratio.sample(rng),
            tau_minus: self.tau_minus.sample(rng),
            a_plus,
            b_plus,
            tau_plus: self.tau_plus.sample(rng),
            alpha_c: self.alpha_c.sample(rng),
            t_c: wrap_hour(self.t_c_mean + t_c_noise),
            t_p: t_p as f64,
        }
    }
}

/// Generator configuration: one profile per category plus the first event date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub profiles: Vec<CategoryProfile>,
    pub first_date: NaiveDate,
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.profiles.is_empty() {
            return Err(Error::Config("corpus spec has no category profiles".into()));
        }
        self.profiles.iter().try_for_each(CategoryProfile::validate)
    }

    /// Five categories with time constants set to typical values for
    /// elections, sports, football, films and holidays.
    pub fn five_categories() -> Self {
        let ln = LogNormalSpec::new;
        let un = UniformSpec::new;
        let profile = |category, a_plus, amr, tm, tp, bpr, bmr, alpha, tc: (f64, f64)| CategoryProfile {
            category,
            a_plus,
            a_minus_ratio: amr,
            tau_minus: tm,
            tau_plus: tp,
            b_plus_ratio: bpr,
            b_minus_ratio: bmr,
            alpha_c: alpha,
            t_c_mean: tc.0,
            t_c_sd: tc.1,
            spike_factor: un(1.3, 2.0),
        };
        CorpusSpec {
            profiles: vec![
                profile(Category::Election, ln(3000.0, 0.7), ln(0.3, 0.5), ln(6.2, 0.5), ln(19.0, 0.3),
                        ln(0.03, 0.4), ln(0.6, 0.3), un(0.2, 0.5), (18.0, 3.0)),
                profile(Category::Sports, ln(1500.0, 0.7), ln(0.4, 0.5), ln(7.0, 0.5), ln(14.0, 0.3),
                        ln(0.05, 0.4), ln(0.8, 0.3), un(0.4, 0.8), (20.6, 1.0)),
                profile(Category::Football, ln(1500.0, 0.7), ln(0.8, 0.4), ln(1.5, 0.4), ln(6.7, 0.4),
                        ln(0.05, 0.4), ln(1.0, 0.3), un(0.4, 0.8), (16.2, 1.0)),
                profile(Category::Film, ln(1500.0, 0.7), ln(0.5, 0.4), ln(34.0, 0.4), ln(87.0, 0.4),
                        ln(0.08, 0.4), ln(0.5, 0.3), un(0.3, 0.7), (20.6, 1.0)),
                profile(Category::Holiday, ln(2000.0, 0.7), ln(1.0, 0.4), ln(11.0, 0.4), ln(12.0, 0.3),
                        ln(0.05, 0.4), ln(1.2, 0.3), un(0.3, 0.8), (10.0, 3.0)),
            ],
            first_date: NaiveDate::from_ymd_opt(2018, 1, 15).unwrap(),
        }
    }

    /// One generic category whose peaks reach roughly 5,000 views/hour.
    pub fn high_volume() -> Self {
        let ln = LogNormalSpec::new;
        CorpusSpec {
            profiles: vec![CategoryProfile {
                category: Category::Other("synthetic".into()),
                a_plus: ln(3200.0, 0.2),
                a_minus_ratio: ln(0.6, 0.3),
                tau_minus: ln(6.0, 0.5),
                tau_plus: ln(14.0, 0.5),
                b_plus_ratio: ln(0.04, 0.3),
                b_minus_ratio: ln(0.8, 0.2),
                alpha_c: UniformSpec::new(0.2, 0.6),
                t_c_mean: 18.0,
                t_c_sd: 3.0,
                spike_factor: UniformSpec::new(1.3, 1.8),
            }],
            first_date: NaiveDate::from_ymd_opt(2018, 1, 15).unwrap(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SyntheticCorpus {
    pub events: Vec<EventRecord>,
    pub series: Vec<TimeSeries>,
    pub truth: Vec<PeakParams>,
}

impl SyntheticCorpus {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// RNG for item `index` derived from the master seed.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn poisson(lambda: f64, rng: &mut impl Rng) -> u64 {
    if lambda <= 0.0 {
        0
    } else {
        Poisson::new(lambda).unwrap().sample(rng) as u64
    }
}

/// Poisson counts around `params` over `len` hours. The peak hour gets
/// `spike_factor` times the busiest model hour within `span`.
pub fn sample_counts(
    params: &PeakParams,
    len: usize,
    span: Range<usize>,
    spike_factor: f64,
    rng: &mut impl Rng,
) -> Vec<u64> {
    let tp = params.t_p as usize;
    let busiest = span
        .filter(|&h| h != tp && h < len)
        .map(|h| params.eval(h as f64).unwrap())
        .fold(0.0, f64::max);
    (0..len)
        .map(|h| {
            let lambda = if h == tp {
                spike_factor * busiest
            } else {
                params.eval(h as f64).unwrap()
            };
            poisson(lambda, rng)
        })
        .collect()
}

fn event_date(spec: &CorpusSpec, index: usize) -> NaiveDate {
    spec.first_date + Duration::days((index % 700) as i64)
}

fn peak_span() -> Range<usize> {
    let start = DAYS_BEFORE as usize * 24;
    start..start + PEAK_SEARCH_HOURS
}

/// Generates `n_events` events cycling through the spec's categories.
pub fn generate_synthetic_corpus(spec: &CorpusSpec, n_events: usize, seed: u64) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut out = SyntheticCorpus::default();
    for i in 0..n_events {
        let profile = &spec.profiles[i % spec.profiles.len()];
        let mut rng = stream_rng(seed, i as u64);
        let span = peak_span();
        let t_p = rng.gen_range(span.clone());
        let params = profile.sample_params(t_p, &mut rng);
        let spike = profile.spike_factor.sample(&mut rng);
        let counts = sample_counts(&params, WINDOW_HOURS, span, spike, &mut rng);
        let date = event_date(spec, i);
        let ev = EventRecord::new(
            format!("Synthetic {} {i:05}", profile.category),
            profile.category.clone(),
            date,
        );
        out.series.push(TimeSeries::new(ev.window_start(), counts)?);
        out.events.push(ev);
        out.truth.push(params);
    }
    Ok(out)
}

/// Football matches whose response dynamics depend on the result: losing
/// teams fall into the short-lived "disappointed" regime (tau_plus < 2 h) 55%
/// of the time against 31% for winners, and attract a larger response
/// amplitude. Each match yields one event per team, with the opponent and
/// result recorded in the outcome.
pub fn generate_football_corpus(n_matches: usize, seed: u64) -> Result<SyntheticCorpus> {
    const DRAW_RATE: f64 = 0.42;
    let base = CorpusSpec::five_categories();
    let football = base
        .profiles
        .iter()
        .find(|p| p.category == Category::Football)
        .cloned()
        .expect("football profile");
    let mut out = SyntheticCorpus::default();
    for m in 0..n_matches {
        let mut rng = stream_rng(seed, m as u64);
        let u: f64 = rng.gen();
        let (home, away) = if u < DRAW_RATE {
            (MatchResult::Draw, MatchResult::Draw)
        } else if u < DRAW_RATE + (1.0 - DRAW_RATE) / 2.0 {
            (MatchResult::Win, MatchResult::Lose)
        } else {
            (MatchResult::Lose, MatchResult::Win)
        };
        let stage = if rng.gen_bool(0.75) { Stage::Group } else { Stage::Knockout };
        let popularity = match stage {
            Stage::Group => 580f64.ln(),
            _ => 2200f64.ln(),
        } + 0.3 * rng.sample::<f64, _>(rand_distr::StandardNormal);
        let span = peak_span();
        let t_p = rng.gen_range(span.clone());
        let date = event_date(&base, m);
        let names = [format!("Club {m:04} A"), format!("Club {m:04} B")];
        for (side, result) in [home, away].into_iter().enumerate() {
            let mut params = football.sample_params(t_p, &mut rng);
            let (median, disappointed) = match result {
                MatchResult::Win => (680.0, 0.31),
                MatchResult::Draw => (770.0, 0.40),
                MatchResult::Lose => (1400.0, 0.55),
            };
            let log_a = popularity + (median / 770.0f64).ln() + 0.3 * rng.sample::<f64, _>(rand_distr::StandardNormal);
            params.a_plus = log_a.exp();
            params.tau_plus = if rng.gen_bool(disappointed) {
                rng.gen_range(0.6f64.ln()..1.9f64.ln()).exp()
            } else {
                rng.gen_range(2.5f64.ln()..20f64.ln()).exp()
            };
            params.b_plus = params.a_plus * LogNormalSpec::new(0.05, 0.4).sample(&mut rng);
            params.a_minus = params.a_plus * LogNormalSpec::new(0.8, 0.5).sample(&mut rng);
            params.b_minus = params.b_plus * LogNormalSpec::new(1.0, 0.3).sample(&mut rng);
            let spike = football.spike_factor.sample(&mut rng);
            let counts = sample_counts(&params, WINDOW_HOURS, span.clone(), spike, &mut rng);
            let mut ev = EventRecord::new(names[side].clone(), Category::Football, date);
            ev.outcome = Some(Outcome {
                result: Some(result),
                stage: Some(stage),
                opponent: Some(names[1 - side].clone()),
            });
            out.series.push(TimeSeries::new(ev.window_start(), counts)?);
            out.events.push(ev);
            out.truth.push(params);
        }
    }
    Ok(out)
}
