//! Corpus-level experiments shared by the command line and the acceptance
//! suite: batch fitting, cross-fitted forecasting, clustering and outcome
//! classification.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    lr_forecast, lr_train, powerlaw_fit_values, powerlaw_forecast, spikem_fit_values, spikem_forecast,
    LrTable, PowerLawFit, SpikeMFit,
};
use crate::classify::{build_samples, crossvalidate_samples, CvSummary, EventFeatures, FeatureSet, Regularization};
use crate::cluster::{ami_detailed, ami_over_restarts, build_features, encode_labels, fraction_features, select_k};
use crate::cluster::{Ami, AmiDistribution, Standardizer};
use crate::cluster::features::floored_ln;
use crate::error::{Error, Result};
use crate::fit::{fit_peak_values, fit_prepeak_values, PeakFit};
use crate::ingest::{locate_peak, EventRecord, TimeSeries};
use crate::predict::{
    ape_cumulative, ape_timeseries, forecast_event, learn_priors, prediction_span, ForecastRequest, MetricSummary,
    PriorMode, PriorTable, RegressorScale,
};
use crate::synth::{stream_rng, SyntheticCorpus};

/// One event with its hourly window and located peak.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEvent {
    pub record: EventRecord,
    pub values: Vec<f64>,
    pub t_p: usize,
}

impl CorpusEvent {
    pub fn new(record: EventRecord, series: &TimeSeries) -> Result<Self> {
        let peak = locate_peak(series, record.event_date)?;
        Ok(CorpusEvent {
            record,
            values: series.values(),
            t_p: peak.t_p,
        })
    }

    pub fn id(&self) -> String {
        self.record.id()
    }
}

pub fn corpus_events(corpus: &SyntheticCorpus) -> Result<Vec<CorpusEvent>> {
    corpus
        .events
        .iter()
        .zip(&corpus.series)
        .map(|(e, s)| CorpusEvent::new(e.clone(), s))
        .collect()
}

/// Which models to fit on the full window of each event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FitSelection {
    pub proposed: bool,
    pub spikem: bool,
    pub powerlaw: bool,
}

impl FitSelection {
    pub const ALL: FitSelection = FitSelection {
        proposed: true,
        spikem: true,
        powerlaw: true,
    };
}

/// Full-window fits of one event. A failed fit is kept as its message.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EventFits {
    pub event: String,
    pub t_p: usize,
    pub proposed: Option<PeakFit>,
    pub spikem: Option<SpikeMFit>,
    pub powerlaw: Option<PowerLawFit>,
    pub fractions: Option<[f64; 3]>,
    pub errors: Vec<String>,
}

impl EventFits {
    pub fn features(&self) -> EventFeatures {
        EventFeatures {
            proposed: self.proposed.map(|f| f.params),
            spikem: self.spikem.as_ref().map(|f| f.params),
            powerlaw: self.powerlaw.as_ref().map(|f| f.params),
            fractions: self.fractions,
        }
    }
}

fn keep<T>(r: Result<T>, label: &str, errors: &mut Vec<String>) -> Option<T> {
    r.map_err(|e| errors.push(format!("{label}: {e}"))).ok()
}

pub fn fit_event(ev: &CorpusEvent, which: FitSelection) -> EventFits {
    let mut errors = Vec::new();
    let proposed = which
        .proposed
        .then(|| keep(fit_peak_values(&ev.values, ev.t_p), "proposed", &mut errors))
        .flatten();
    let spikem = which
        .spikem
        .then(|| keep(spikem_fit_values(&ev.values, ev.t_p), "spikem", &mut errors))
        .flatten();
    let powerlaw = which
        .powerlaw
        .then(|| keep(powerlaw_fit_values(&ev.values, ev.t_p), "powerlaw", &mut errors))
        .flatten();
    let fractions = keep(fraction_features(&ev.values, ev.t_p), "fraction", &mut errors);
    EventFits {
        event: ev.id(),
        t_p: ev.t_p,
        proposed,
        spikem,
        powerlaw,
        fractions,
        errors,
    }
}

/// Fits every event in parallel; output order follows the input.
pub fn fit_corpus(events: &[CorpusEvent], which: FitSelection) -> Vec<EventFits> {
    events.par_iter().map(|ev| fit_event(ev, which)).collect()
}

/// Forecasting methods compared on held-out hours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Proposed,
    Spikem,
    Powerlaw,
    Lr,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Proposed, Method::Spikem, Method::Powerlaw, Method::Lr];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Spikem => "spikem",
            Method::Powerlaw => "powerlaw",
            Method::Lr => "lr",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionConfig {
    pub t_obs: usize,
    pub horizon: usize,
    pub prior: PriorMode,
    pub scale: RegressorScale,
    pub methods: Vec<Method>,
    /// Folds for learning priors and LR coefficients on the other events.
    pub folds: usize,
    pub seed: u64,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        PredictionConfig {
            t_obs: 24,
            horizon: crate::predict::HORIZON_HOURS,
            prior: PriorMode::AnticipationCategory,
            scale: RegressorScale::Log,
            methods: Method::ALL.to_vec(),
            folds: 5,
            seed: 0,
        }
    }
}

/// One row of the metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub event: String,
    pub category: String,
    pub t_obs: usize,
    pub method: Method,
    pub ape_ts: Option<f64>,
    pub ape_cum: Option<f64>,
}

/// Forecast of one event by one method, aligned with `observed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventPrediction {
    pub event: String,
    pub method: Method,
    /// Window hour of the first predicted value.
    pub first_hour: usize,
    pub observed: Vec<f64>,
    pub predicted: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionFailure {
    pub event: String,
    pub method: Method,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PredictionRun {
    pub rows: Vec<MetricRow>,
    pub predictions: Vec<EventPrediction>,
    pub failures: Vec<PredictionFailure>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub ape_ts: MetricSummary,
    pub ape_cum: MetricSummary,
}

impl PredictionRun {
    pub fn summary(&self) -> BTreeMap<Method, MethodSummary> {
        let mut by: BTreeMap<Method, (Vec<Option<f64>>, Vec<Option<f64>>)> = BTreeMap::new();
        for r in &self.rows {
            let e = by.entry(r.method).or_default();
            e.0.push(r.ape_ts);
            e.1.push(r.ape_cum);
        }
        by.into_iter()
            .map(|(m, (ts, cum))| {
                (
                    m,
                    MethodSummary {
                        ape_ts: MetricSummary::from_values(ts),
                        ape_cum: MetricSummary::from_values(cum),
                    },
                )
            })
            .collect()
    }
}

/// Fold of each of `n` items: a seeded shuffle dealt round-robin.
pub fn cross_fit_folds(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    if n < folds {
        return Err(Error::InsufficientData(format!("{n} events cannot be split into {folds} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, u64::MAX - 1));
    let mut out = vec![0; n];
    for (pos, i) in order.into_iter().enumerate() {
        out[i] = pos % folds;
    }
    Ok(out)
}

struct FoldModels {
    priors: Option<PriorTable>,
    lr: Option<LrTable>,
}

fn train_fold(
    events: &[CorpusEvent],
    fits: &[EventFits],
    assignment: &[usize],
    fold: usize,
    cfg: &PredictionConfig,
) -> Result<FoldModels> {
    let others = || (0..events.len()).filter(move |&i| assignment[i] != fold);
    let priors = if cfg.methods.contains(&Method::Proposed) && cfg.prior != PriorMode::None {
        let training: Vec<_> = others()
            .filter_map(|i| fits[i].proposed.map(|f| (events[i].record.category.clone(), f)))
            .collect();
        Some(learn_priors(&training, cfg.scale)?)
    } else {
        None
    };
    let lr = if cfg.methods.contains(&Method::Lr) {
        let posts: Vec<&[f64]> = others()
            .filter_map(|i| {
                let ev = &events[i];
                ev.values.get(ev.t_p + 1..=ev.t_p + cfg.horizon)
            })
            .collect();
        Some(lr_train(&posts, cfg.t_obs, cfg.horizon)?)
    } else {
        None
    };
    Ok(FoldModels { priors, lr })
}

fn predict_one(ev: &CorpusEvent, method: Method, models: &FoldModels, cfg: &PredictionConfig) -> Result<Vec<f64>> {
    let (t_p, t_obs, horizon) = (ev.t_p, cfg.t_obs, cfg.horizon);
    match method {
        Method::Proposed => {
            let prepeak = fit_prepeak_values(&ev.values, t_p)?;
            let req = ForecastRequest {
                series: &ev.values,
                t_p,
                t_obs,
                horizon,
                prepeak,
            };
            req.validate()?;
            let prior = match &models.priors {
                Some(table) => table.resolve(&ev.record.category, cfg.prior, &prepeak),
                None => None,
            };
            Ok(forecast_event(&req, prior.as_ref())?.predicted)
        }
        Method::Spikem => Ok(spikem_forecast(&ev.values, t_p, t_obs, horizon)?.1),
        Method::Powerlaw => Ok(powerlaw_forecast(&ev.values, t_p, t_obs, horizon)?.1),
        Method::Lr => {
            let table = models.lr.as_ref().expect("LR table trained when requested");
            let observed = ev.values.get(t_p + 1..=t_p + t_obs).ok_or_else(|| {
                Error::InsufficientData(format!("{} ends before hour {}", ev.id(), t_p + t_obs))
            })?;
            lr_forecast(table, observed)
        }
    }
}

/// Forecasts every event with every configured method. Priors and LR
/// coefficients for an event are learned only from events in other folds.
pub fn run_prediction(events: &[CorpusEvent], fits: &[EventFits], cfg: &PredictionConfig) -> Result<PredictionRun> {
    if events.len() != fits.len() {
        return Err(Error::InvalidParams("events and fits must align".into()));
    }
    if cfg.t_obs >= cfg.horizon {
        return Err(Error::Config(format!("t_obs {} must be below the horizon {}", cfg.t_obs, cfg.horizon)));
    }
    let needs_training = cfg.methods.contains(&Method::Lr)
        || (cfg.methods.contains(&Method::Proposed) && cfg.prior != PriorMode::None);
    let assignment = if needs_training {
        cross_fit_folds(events.len(), cfg.folds, cfg.seed)?
    } else {
        vec![0; events.len()]
    };
    let n_folds = if needs_training { cfg.folds } else { 1 };
    let models: Vec<FoldModels> = (0..n_folds)
        .map(|f| {
            if needs_training {
                train_fold(events, fits, &assignment, f, cfg)
            } else {
                Ok(FoldModels { priors: None, lr: None })
            }
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, Method)> = (0..events.len())
        .flat_map(|i| cfg.methods.iter().map(move |&m| (i, m)))
        .collect();
    let outcomes: Vec<(usize, Method, Result<Vec<f64>>)> = jobs
        .into_par_iter()
        .map(|(i, m)| (i, m, predict_one(&events[i], m, &models[assignment[i]], cfg)))
        .collect();
    let mut run = PredictionRun::default();
    for (i, method, outcome) in outcomes {
        let ev = &events[i];
        let actual = prediction_span(&ev.values, ev.t_p, cfg.t_obs, cfg.horizon);
        let mut row = MetricRow {
            event: ev.id(),
            category: ev.record.category.to_string(),
            t_obs: cfg.t_obs,
            method,
            ape_ts: None,
            ape_cum: None,
        };
        match (outcome, actual) {
            (Ok(predicted), Ok(actual)) => {
                row.ape_ts = ape_timeseries(actual, &predicted);
                row.ape_cum = ape_cumulative(actual, &predicted);
                run.predictions.push(EventPrediction {
                    event: ev.id(),
                    method,
                    first_hour: ev.t_p + cfg.t_obs + 1,
                    observed: actual.to_vec(),
                    predicted,
                });
            }
            (Err(e), _) | (_, Err(e)) => run.failures.push(PredictionFailure {
                event: ev.id(),
                method,
                message: e.to_string(),
            }),
        }
        run.rows.push(row);
    }
    Ok(run)
}

/// Parameter sets used as clustering features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterSource {
    Proposed,
    Spikem,
    Powerlaw,
    Fraction,
}

impl ClusterSource {
    pub const ALL: [ClusterSource; 4] = [
        ClusterSource::Proposed,
        ClusterSource::Spikem,
        ClusterSource::Powerlaw,
        ClusterSource::Fraction,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClusterSource::Proposed => "proposed",
            ClusterSource::Spikem => "spikem",
            ClusterSource::Powerlaw => "powerlaw",
            ClusterSource::Fraction => "fraction",
        }
    }

    pub fn features(self, fits: &EventFits, circular_phase: bool) -> Option<Vec<f64>> {
        match self {
            ClusterSource::Proposed => fits.proposed.map(|f| build_features(&f.params, circular_phase)),
            ClusterSource::Spikem => fits.spikem.as_ref().map(|f| {
                let p = &f.params;
                vec![
                    floored_ln(p.u0),
                    floored_ln(p.beta),
                    p.t_b as f64 - fits.t_p as f64,
                    floored_ln(p.s_b),
                    floored_ln(p.eps0),
                    p.p_a,
                    p.p_s,
                ]
            }),
            ClusterSource::Powerlaw => fits.powerlaw.as_ref().map(|f| {
                let p = &f.params;
                vec![floored_ln(p.a_minus), p.gamma_minus, floored_ln(p.a_plus), p.gamma_plus]
            }),
            ClusterSource::Fraction => fits.fractions.map(|f| f.to_vec()),
        }
    }
}

impl fmt::Display for ClusterSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClusterSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClusterSource::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown feature source {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub k_min: usize,
    pub k_max: usize,
    /// Seeds per K when selecting K by BIC.
    pub selection_restarts: usize,
    /// Independent fits at the selected K scored against the categories.
    pub restarts: usize,
    pub seed: u64,
    pub circular_phase: bool,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            k_min: 1,
            k_max: 12,
            selection_restarts: 10,
            restarts: 20,
            seed: 0,
            circular_phase: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRun {
    pub source: ClusterSource,
    /// Event ids that had features, in input order.
    pub events: Vec<String>,
    pub categories: Vec<String>,
    pub assignments: Vec<usize>,
    pub k: usize,
    pub bic_by_k: Vec<(usize, f64)>,
    pub standardizer: Standardizer,
    /// Component means in the unstandardised feature space.
    pub centers: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub ami: f64,
    pub single_class: bool,
    /// AMI of independent fits at the selected K.
    pub restarts: AmiDistribution,
}

/// Standardises the features, picks K by BIC and scores the assignment and
/// `cfg.restarts` further fits at that K against the categories.
pub fn run_clustering(
    events: &[CorpusEvent],
    fits: &[EventFits],
    source: ClusterSource,
    cfg: &ClusterConfig,
) -> Result<ClusterRun> {
    let mut ids = Vec::new();
    let mut cats = Vec::new();
    let mut rows = Vec::new();
    for (ev, f) in events.iter().zip(fits) {
        if let Some(x) = source.features(f, cfg.circular_phase) {
            ids.push(ev.id());
            cats.push(ev.record.category.to_string());
            rows.push(x);
        }
    }
    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!("{} events with {source} features", rows.len())));
    }
    let standardizer = Standardizer::fit(&rows)?;
    let z = standardizer.apply_all(&rows);
    let selection = select_k(&z, cfg.k_min..=cfg.k_max, cfg.selection_restarts, cfg.seed)?;
    let model = &selection.model;
    let assignments = model.predict(&z)?;
    let labels = encode_labels(&cats);
    let Ami { value, single_class, .. } = ami_detailed(&labels, &assignments);
    let restarts = ami_over_restarts(&z, &labels, model.k, cfg.restarts, cfg.seed)?;
    Ok(ClusterRun {
        source,
        centers: model.means.iter().map(|m| standardizer.invert(m)).collect(),
        weights: model.weights.clone(),
        k: model.k,
        bic_by_k: selection.bic_by_k.clone(),
        events: ids,
        categories: cats,
        assignments,
        standardizer,
        ami: value,
        single_class,
        restarts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRun {
    pub feature_set: FeatureSet,
    pub n_samples: usize,
    pub cv: CvSummary,
}

/// Cross-validated match-result inference with one feature set.
pub fn run_classification(
    events: &[CorpusEvent],
    fits: &[EventFits],
    set: FeatureSet,
    folds: usize,
    regularization: &Regularization,
    seed: u64,
) -> Result<ClassificationRun> {
    let pairs: Vec<(EventRecord, EventFeatures)> = events
        .iter()
        .zip(fits)
        .map(|(e, f)| (e.record.clone(), f.features()))
        .collect();
    let samples = build_samples(&pairs, set);
    let cv = crossvalidate_samples(&samples, folds, regularization, seed)?;
    Ok(ClassificationRun {
        feature_set: set,
        n_samples: samples.len(),
        cv,
    })
}
