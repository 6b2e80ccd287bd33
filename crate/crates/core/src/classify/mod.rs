//! Inferring football match results from the attention dynamics of a team
//! and its opponent.

pub mod svm;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use svm::{train_linear_svm, LinearSvm};

use crate::baselines::{PowerLawParams, SpikeMParams};
use crate::cluster::features::{floored_ln, Standardizer};
use crate::error::{Error, Result};
use crate::ingest::{event_id, EventRecord, MatchResult};
use crate::model::PeakParams;
use crate::synth::stream_rng;

pub const N_CLASSES: usize = 3;
pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_C: f64 = 1.0;

/// Parameter sets compared for match-result inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSet {
    /// `log a+, log b+, log tau+` of the team and its opponent.
    ResponseOpponent,
    /// `log a+, log b+, log tau+` of the team only.
    Response,
    /// Seven SpikeM parameters of the team and its opponent.
    SpikemOpponent,
    /// `log a+, gamma+` of the power-law fit.
    Powerlaw,
    /// View shares before, at and after the peak.
    Fraction,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 5] = [
        FeatureSet::ResponseOpponent,
        FeatureSet::Response,
        FeatureSet::SpikemOpponent,
        FeatureSet::Powerlaw,
        FeatureSet::Fraction,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::ResponseOpponent => "response-opponent",
            FeatureSet::Response => "response",
            FeatureSet::SpikemOpponent => "spikem-opponent",
            FeatureSet::Powerlaw => "powerlaw",
            FeatureSet::Fraction => "fraction",
        }
    }

    pub fn with_opponent(self) -> bool {
        matches!(self, FeatureSet::ResponseOpponent | FeatureSet::SpikemOpponent)
    }

    fn own(self, f: &EventFeatures) -> Option<Vec<f64>> {
        match self {
            FeatureSet::Response | FeatureSet::ResponseOpponent => {
                let p = f.proposed.as_ref()?;
                Some(vec![floored_ln(p.a_plus), floored_ln(p.b_plus), floored_ln(p.tau_plus)])
            }
            FeatureSet::SpikemOpponent => {
                let p = f.spikem.as_ref()?;
                Some(vec![
                    floored_ln(p.u0),
                    floored_ln(p.beta),
                    p.t_b as f64,
                    floored_ln(p.s_b),
                    floored_ln(p.eps0),
                    p.p_a,
                    p.p_s,
                ])
            }
            FeatureSet::Powerlaw => {
                let p = f.powerlaw.as_ref()?;
                Some(vec![floored_ln(p.a_plus), p.gamma_plus])
            }
            FeatureSet::Fraction => f.fractions.map(|v| v.to_vec()),
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureSet::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown feature set {s:?}")))
    }
}

/// Per-event inputs from which any feature set can be built.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventFeatures {
    pub proposed: Option<PeakParams>,
    pub spikem: Option<SpikeMParams>,
    pub powerlaw: Option<PowerLawParams>,
    pub fractions: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSample {
    pub event: String,
    pub features: Vec<f64>,
    pub label: MatchResult,
    pub feature_set: FeatureSet,
}

/// One sample per event with a known result. Opponents are matched by
/// article title on the same event date; events whose opponent has no
/// features are skipped when the set needs them.
pub fn build_samples(events: &[(EventRecord, EventFeatures)], set: FeatureSet) -> Vec<MatchSample> {
    let by_id: HashMap<String, &EventFeatures> = events.iter().map(|(e, f)| (e.id(), f)).collect();
    events
        .iter()
        .filter_map(|(ev, f)| {
            let label = ev.result()?;
            let mut features = set.own(f)?;
            if set.with_opponent() {
                let opp = by_id.get(&event_id(ev.opponent()?, ev.event_date))?;
                features.extend(set.own(opp)?);
            }
            Some(MatchSample {
                event: ev.id(),
                features,
                label,
                feature_set: set,
            })
        })
        .collect()
}

/// Stratified fold index per sample: each class is shuffled with the seed
/// and dealt round-robin, continuing where the previous class stopped.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    if labels.len() < folds {
        return Err(Error::InsufficientData(format!(
            "{} samples cannot be split into {folds} folds",
            labels.len()
        )));
    }
    let mut rng = stream_rng(seed, u64::MAX);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    let max_label = labels.iter().copied().max().unwrap_or(0);
    for class in 0..=max_label {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    Ok(assignment)
}

/// Grid searched by inner cross-validation when C is not fixed.
pub const C_GRID: [f64; 5] = [0.001, 0.01, 0.1, 1.0, 10.0];

/// How the SVM regularisation constant is chosen for each outer fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regularization {
    Fixed(f64),
    /// Inner stratified CV on the training fold; ties go to the smaller C.
    Grid(Vec<f64>),
}

impl Default for Regularization {
    fn default() -> Self {
        Regularization::Fixed(DEFAULT_C)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_test: usize,
    pub c: f64,
    pub accuracy: f64,
    /// Accuracy of always predicting the training-fold majority class.
    pub baseline_accuracy: f64,
    pub standardizer: Standardizer,
    pub model: LinearSvm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub folds: Vec<FoldResult>,
    pub assignment: Vec<usize>,
    pub mean_accuracy: f64,
    pub mean_baseline_accuracy: f64,
}

fn majority(labels: impl Iterator<Item = usize>) -> usize {
    let mut counts = [0usize; N_CLASSES];
    for l in labels {
        counts[l] += 1;
    }
    (0..N_CLASSES).max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a))).unwrap()
}

struct Split {
    standardizer: Standardizer,
    model: LinearSvm,
    correct: usize,
    baseline: usize,
}

fn train_and_score(x: &[Vec<f64>], labels: &[usize], train: &[usize], test: &[usize], c: f64, seed: u64) -> Result<Split> {
    let train_x: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
    let standardizer = Standardizer::fit(&train_x)?;
    let train_z = standardizer.apply_all(&train_x);
    let train_y: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    let model = train_linear_svm(&train_z, &train_y, N_CLASSES, c, seed)?;
    let majority_class = majority(train_y.iter().copied());
    let correct = test
        .iter()
        .filter(|&&i| model.predict(&standardizer.apply(&x[i])) == labels[i])
        .count();
    let baseline = test.iter().filter(|&&i| labels[i] == majority_class).count();
    Ok(Split {
        standardizer,
        model,
        correct,
        baseline,
    })
}

fn select_c(x: &[Vec<f64>], labels: &[usize], rows: &[usize], grid: &[f64], folds: usize, seed: u64) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Config("empty C grid".into()));
    }
    let sub: Vec<usize> = rows.iter().map(|&i| labels[i]).collect();
    let inner = stratified_folds(&sub, folds, seed)?;
    let mut best = (grid[0], -1.0);
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    for c in sorted {
        let mut correct = 0;
        for fold in 0..folds {
            let train: Vec<usize> = (0..rows.len()).filter(|&j| inner[j] != fold).map(|j| rows[j]).collect();
            let test: Vec<usize> = (0..rows.len()).filter(|&j| inner[j] == fold).map(|j| rows[j]).collect();
            correct += train_and_score(x, labels, &train, &test, c, seed.wrapping_add(fold as u64))?.correct;
        }
        let acc = correct as f64 / rows.len() as f64;
        if acc > best.1 {
            best = (c, acc);
        }
    }
    Ok(best.0)
}

/// Stratified k-fold cross-validation. Standardisation is estimated on the
/// training folds and applied to the held-out fold.
pub fn crossvalidate(
    x: &[Vec<f64>],
    labels: &[usize],
    folds: usize,
    regularization: &Regularization,
    seed: u64,
) -> Result<CvSummary> {
    let assignment = stratified_folds(labels, folds, seed)?;
    let results: Vec<FoldResult> = (0..folds)
        .into_par_iter()
        .map(|fold| {
            let train: Vec<usize> = (0..x.len()).filter(|&i| assignment[i] != fold).collect();
            let test: Vec<usize> = (0..x.len()).filter(|&i| assignment[i] == fold).collect();
            let fold_seed = seed.wrapping_add(fold as u64);
            let c = match regularization {
                Regularization::Fixed(c) => *c,
                Regularization::Grid(grid) => select_c(x, labels, &train, grid, folds, fold_seed ^ 0x9e37_79b9)?,
            };
            let split = train_and_score(x, labels, &train, &test, c, fold_seed)?;
            let n_test = test.len();
            Ok(FoldResult {
                fold,
                n_test,
                c,
                accuracy: split.correct as f64 / n_test as f64,
                baseline_accuracy: split.baseline as f64 / n_test as f64,
                standardizer: split.standardizer,
                model: split.model,
            })
        })
        .collect::<Result<_>>()?;
    let mean = |f: fn(&FoldResult) -> f64| results.iter().map(f).sum::<f64>() / folds as f64;
    Ok(CvSummary {
        mean_accuracy: mean(|r| r.accuracy),
        mean_baseline_accuracy: mean(|r| r.baseline_accuracy),
        folds: results,
        assignment,
    })
}

/// Cross-validates a sample set built for one feature set.
pub fn crossvalidate_samples(
    samples: &[MatchSample],
    folds: usize,
    regularization: &Regularization,
    seed: u64,
) -> Result<CvSummary> {
    let x: Vec<Vec<f64>> = samples.iter().map(|s| s.features.clone()).collect();
    let y: Vec<usize> = samples.iter().map(|s| s.label.index()).collect();
    crossvalidate(&x, &y, folds, regularization, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Category, Outcome};
    use chrono::NaiveDate;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian_classes(n_per: usize, sep: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = stream_rng(seed, 0);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for class in 0..3 {
            for _ in 0..n_per {
                let z: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
                let center = [sep * (class as f64), sep * ((class * class) as f64)];
                x.push(vec![center[0] + z[0], center[1] + z[1]]);
                y.push(class);
            }
        }
        (x, y)
    }

    #[test]
    fn folds_partition_and_stratify() {
        let labels: Vec<usize> = (0..103).map(|i| (i * 7 % 11) % 3).collect();
        let a = stratified_folds(&labels, 5, 1).unwrap();
        assert_eq!(a, stratified_folds(&labels, 5, 1).unwrap());
        for f in 0..5 {
            let size = a.iter().filter(|&&v| v == f).count();
            assert!((20..=21).contains(&size));
            for class in 0..3 {
                let total = labels.iter().filter(|&&l| l == class).count();
                let here = (0..103).filter(|&i| a[i] == f && labels[i] == class).count();
                assert!(here.abs_diff(total / 5) <= 1);
            }
        }
        assert!(stratified_folds(&labels[..4], 5, 1).is_err());
    }

    #[test]
    fn perfect_on_separable_data() {
        let (x, y) = gaussian_classes(40, 20.0, 2);
        let cv = crossvalidate(&x, &y, 5, &Regularization::Fixed(1.0), 3).unwrap();
        assert!(cv.folds.iter().all(|f| f.accuracy == 1.0));
        assert_eq!(cv, crossvalidate(&x, &y, 5, &Regularization::Fixed(1.0), 3).unwrap());
    }

    #[test]
    fn held_out_rows_do_not_leak() {
        let (x, y) = gaussian_classes(30, 2.0, 4);
        let cv = crossvalidate(&x, &y, 5, &Regularization::Fixed(1.0), 5).unwrap();
        let mut poisoned = x.clone();
        for i in 0..x.len() {
            if cv.assignment[i] == 0 {
                poisoned[i] = vec![1e6, -1e6];
            }
        }
        let cv2 = crossvalidate(&poisoned, &y, 5, &Regularization::Fixed(1.0), 5).unwrap();
        assert_eq!(cv.folds[0].standardizer, cv2.folds[0].standardizer);
        assert_eq!(cv.folds[0].model, cv2.folds[0].model);
        let train: Vec<Vec<f64>> = (0..x.len()).filter(|&i| cv.assignment[i] != 0).map(|i| x[i].clone()).collect();
        assert_eq!(cv.folds[0].standardizer, Standardizer::fit(&train).unwrap());
    }

    #[test]
    fn affine_rescaling_leaves_decisions_unchanged() {
        let (x, y) = gaussian_classes(30, 1.5, 6);
        let scaled: Vec<Vec<f64>> = x.iter().map(|r| vec![4.0 * r[0] - 7.0, 0.5 * r[1] + 2.0]).collect();
        let a = crossvalidate(&x, &y, 5, &Regularization::Fixed(1.0), 7).unwrap();
        let b = crossvalidate(&scaled, &y, 5, &Regularization::Fixed(1.0), 7).unwrap();
        for (fa, fb) in a.folds.iter().zip(&b.folds) {
            assert_eq!(fa.accuracy, fb.accuracy);
        }
    }

    fn null_gap(reg: &Regularization) -> (f64, f64) {
        let mut rng = stream_rng(8, 0);
        let x: Vec<Vec<f64>> = (0..300)
            .map(|_| (0..6).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let base: Vec<usize> = (0..300).map(|i| if i < 87 { 0 } else if i < 213 { 1 } else { 2 }).collect();
        let (mut acc, mut maj) = (0.0, 0.0);
        let reps = 10;
        for r in 0..reps {
            let mut y = base.clone();
            y.shuffle(&mut stream_rng(9, r));
            let cv = crossvalidate(&x, &y, 5, reg, r).unwrap();
            acc += cv.mean_accuracy / reps as f64;
            maj += cv.mean_baseline_accuracy / reps as f64;
        }
        (acc, maj)
    }

    #[test]
    fn shuffled_labels_stay_near_majority() {
        let (acc, maj) = null_gap(&Regularization::Grid(C_GRID.to_vec()));
        assert!((acc - maj).abs() < 0.03, "{acc} vs {maj}");
        // a fixed C fits noise and falls below the majority rate, never above
        let (acc, maj) = null_gap(&Regularization::Fixed(1.0));
        assert!(acc < maj + 0.03, "{acc} vs {maj}");
    }

    #[test]
    fn samples_pair_opponents() {
        let date = NaiveDate::from_ymd_opt(2018, 5, 2).unwrap();
        let mk = |name: &str, opp: &str, r: MatchResult, tau: f64| {
            let mut ev = EventRecord::new(name, Category::Football, date);
            ev.outcome = Some(Outcome {
                result: Some(r),
                stage: None,
                opponent: Some(opp.into()),
            });
            let p = PeakParams {
                a_minus: 1.0,
                b_minus: 1.0,
                tau_minus: 1.0,
                a_plus: 100.0,
                b_plus: 5.0,
                tau_plus: tau,
                alpha_c: 0.1,
                t_c: 3.0,
                t_p: 250.0,
            };
            (
                ev,
                EventFeatures {
                    proposed: Some(p),
                    ..Default::default()
                },
            )
        };
        let events = vec![
            mk("Liverpool F.C.", "A.S. Roma", MatchResult::Win, 12.9),
            mk("A.S. Roma", "Liverpool F.C.", MatchResult::Lose, 0.7),
            mk("Lonely F.C.", "Missing F.C.", MatchResult::Draw, 3.0),
        ];
        let with = build_samples(&events, FeatureSet::ResponseOpponent);
        assert_eq!(with.len(), 2);
        assert_eq!(with[0].features.len(), 6);
        assert!((with[0].features[5] - 0.7f64.ln()).abs() < 1e-12);
        let without = build_samples(&events, FeatureSet::Response);
        assert_eq!(without.len(), 3);
        assert!(build_samples(&events, FeatureSet::Fraction).is_empty());
        for f in FeatureSet::ALL {
            assert_eq!(f.as_str().parse::<FeatureSet>().unwrap(), f);
        }
    }
}
