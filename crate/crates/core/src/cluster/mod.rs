//! Clustering of events by fitted parameters and agreement with categories.

pub mod ami;
pub mod features;
pub mod gmm;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ami::{adjusted_mutual_information, ami_detailed, Ami};
pub use features::{build_features, fraction_features, Standardizer};
pub use gmm::{fit_gmm, select_k, GmmModel, Selection};

use crate::error::Result;
use crate::linalg::{median, quantile};

/// AMI between category labels and GMM assignments across restarts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmiDistribution {
    pub k: usize,
    pub values: Vec<f64>,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Fits `restarts` mixtures with `k` components from derived seeds and
/// scores each assignment against `labels`.
pub fn ami_over_restarts(
    x: &[Vec<f64>],
    labels: &[usize],
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<AmiDistribution> {
    let values: Vec<f64> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let m = fit_gmm(x, k, gmm::restart_seed(seed ^ 0x5eed, k, r))?;
            Ok(adjusted_mutual_information(labels, &m.predict(x)?))
        })
        .collect::<Result<_>>()?;
    Ok(AmiDistribution {
        k,
        median: median(&values).unwrap_or(f64::NAN),
        q1: quantile(&values, 0.25).unwrap_or(f64::NAN),
        q3: quantile(&values, 0.75).unwrap_or(f64::NAN),
        values,
    })
}

/// Index of each label in sorted order of distinct values.
pub fn encode_labels<T: Ord + Clone>(labels: &[T]) -> Vec<usize> {
    let mut distinct: Vec<T> = labels.to_vec();
    distinct.sort();
    distinct.dedup();
    labels
        .iter()
        .map(|l| distinct.binary_search(l).unwrap())
        .collect()
}
