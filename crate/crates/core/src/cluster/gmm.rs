//! Full-covariance Gaussian mixtures fitted by EM, with BIC model selection.

use std::ops::RangeInclusive;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, forward_substitute};
use crate::synth::stream_rng;

/// Added to every covariance diagonal. EM treats it as a penalty
/// `-ridge / 2 * tr(inv(Sigma_k))` on each sample's complete-data log
/// likelihood, whose exact M step is the sample covariance plus the ridge.
pub const COVARIANCE_RIDGE: f64 = 1e-6;
/// EM stops when the mean per-sample log likelihood changes by less.
pub const EM_TOLERANCE: f64 = 1e-7;
pub const EM_MAX_ITER: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub k: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Row-major `dim x dim` covariance per component.
    pub covariances: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    pub bic: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
}

/// Free parameters of a `k`-component full-covariance mixture in `d` dims.
pub fn n_parameters(k: usize, d: usize) -> usize {
    (k - 1) + k * d + k * d * (d + 1) / 2
}

pub fn bic(log_likelihood: f64, k: usize, d: usize, n: usize) -> f64 {
    -2.0 * log_likelihood + n_parameters(k, d) as f64 * (n as f64).ln()
}

struct Component {
    log_weight: f64,
    mean: Vec<f64>,
    chol: Vec<f64>,
    log_norm: f64,
    penalty: f64,
}

impl Component {
    fn new(weight: f64, mean: Vec<f64>, cov: &[f64], d: usize) -> Option<Self> {
        let chol = cholesky(cov, d)?;
        let log_det: f64 = (0..d).map(|i| 2.0 * chol[i * d + i].ln()).sum();
        // tr(inv(Sigma)) is the squared Frobenius norm of inv(L)
        let trace_inv: f64 = (0..d)
            .map(|j| {
                let mut e = vec![0.0; d];
                e[j] = 1.0;
                forward_substitute(&chol, &e).iter().map(|v| v * v).sum::<f64>()
            })
            .sum();
        Some(Component {
            log_weight: weight.ln(),
            mean,
            chol,
            log_norm: -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det),
            penalty: 0.5 * COVARIANCE_RIDGE * trace_inv,
        })
    }

    /// Log of weight times Gaussian density.
    fn log_density(&self, x: &[f64]) -> f64 {
        let diff: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let z = forward_substitute(&self.chol, &diff);
        self.log_weight + self.log_norm - 0.5 * z.iter().map(|v| v * v).sum::<f64>()
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn components(weights: &[f64], means: &[Vec<f64>], covs: &[Vec<f64>], d: usize) -> Result<Vec<Component>> {
    weights
        .iter()
        .zip(means)
        .zip(covs)
        .map(|((w, m), c)| {
            Component::new(*w, m.clone(), c, d)
                .ok_or_else(|| Error::Degenerate("covariance lost positive definiteness".into()))
        })
        .collect()
}

/// E step under the penalised densities: responsibilities (row per sample),
/// the plain log likelihood and the penalised objective EM increases.
fn expectation(x: &[Vec<f64>], comps: &[Component]) -> (Vec<Vec<f64>>, f64, f64) {
    let mut ll = 0.0;
    let mut objective = 0.0;
    let resp = x
        .iter()
        .map(|xi| {
            let plain: Vec<f64> = comps.iter().map(|c| c.log_density(xi)).collect();
            ll += log_sum_exp(&plain);
            let logs: Vec<f64> = plain.iter().zip(comps).map(|(l, c)| l - c.penalty).collect();
            let lse = log_sum_exp(&logs);
            objective += lse;
            logs.into_iter().map(|l| (l - lse).exp()).collect()
        })
        .collect();
    (resp, ll, objective)
}

fn covariance(x: &[Vec<f64>], weights: impl Fn(usize) -> f64, mean: &[f64], total: f64) -> Vec<f64> {
    let d = mean.len();
    let mut cov = vec![0.0; d * d];
    for (i, xi) in x.iter().enumerate() {
        let w = weights(i);
        if w == 0.0 {
            continue;
        }
        for a in 0..d {
            let da = xi[a] - mean[a];
            for b in 0..=a {
                cov[a * d + b] += w * da * (xi[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..=a {
            let v = cov[a * d + b] / total;
            cov[a * d + b] = v;
            cov[b * d + a] = v;
        }
        cov[a * d + a] += COVARIANCE_RIDGE;
    }
    cov
}

/// Means chosen by D^2 sampling (k-means++ seeding).
fn seed_means(x: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = x.len();
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>();
    let mut means = vec![x[rng.gen_range(0..n)].clone()];
    let mut nearest: Vec<f64> = x.iter().map(|xi| dist2(xi, &means[0])).collect();
    while means.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut idx = n - 1;
            for (i, d) in nearest.iter().enumerate() {
                if r < *d {
                    idx = i;
                    break;
                }
                r -= d;
            }
            idx
        } else {
            rng.gen_range(0..n)
        };
        means.push(x[pick].clone());
        for (i, xi) in x.iter().enumerate() {
            nearest[i] = nearest[i].min(dist2(xi, &means[means.len() - 1]));
        }
    }
    means
}

/// EM from a seeded initialisation. Every step checks that the log
/// likelihood did not decrease beyond rounding.
pub fn fit_gmm(x: &[Vec<f64>], k: usize, seed: u64) -> Result<GmmModel> {
    let n = x.len();
    if k == 0 || k > n {
        return Err(Error::InvalidParams(format!("K = {k} must lie in 1..={n}")));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d || r.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidParams("feature rows must be finite and equally long".into()));
    }
    let mut rng = stream_rng(seed, k as u64);
    let mut means = seed_means(x, k, &mut rng);
    let global_mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let global_cov = covariance(x, |_| 1.0, &global_mean, n as f64);
    let mut covs = vec![global_cov; k];
    let mut weights = vec![1.0 / k as f64; k];

    let mut comps = components(&weights, &means, &covs, d)?;
    let (mut resp, mut ll, mut objective) = expectation(x, &comps);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < EM_MAX_ITER {
        iterations += 1;
        for c in 0..k {
            let nk: f64 = resp.iter().map(|r| r[c]).sum::<f64>().max(1e-12);
            weights[c] = nk / n as f64;
            means[c] = (0..d)
                .map(|j| x.iter().zip(&resp).map(|(xi, r)| r[c] * xi[j]).sum::<f64>() / nk)
                .collect();
            covs[c] = covariance(x, |i| resp[i][c], &means[c], nk);
        }
        let wsum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= wsum);
        comps = components(&weights, &means, &covs, d)?;
        let (next_resp, next_ll, next_objective) = expectation(x, &comps);
        assert!(
            next_objective >= objective - 1e-10 * (1.0 + objective.abs()),
            "EM objective decreased: {objective} -> {next_objective}"
        );
        let change = (next_objective - objective).abs() / n as f64;
        resp = next_resp;
        ll = next_ll;
        objective = next_objective;
        if change < EM_TOLERANCE {
            converged = true;
            break;
        }
    }
    Ok(GmmModel {
        k,
        dim: d,
        weights,
        means,
        covariances: covs,
        log_likelihood: ll,
        bic: bic(ll, k, d, n),
        n_samples: n,
        seed,
        iterations,
        converged,
    })
}

impl GmmModel {
    /// Most responsible component per row; ties go to the lower index.
    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<usize>> {
        let comps = components(&self.weights, &self.means, &self.covariances, self.dim)?;
        Ok(x.iter()
            .map(|xi| {
                let mut best = (0, f64::NEG_INFINITY);
                for (c, comp) in comps.iter().enumerate() {
                    let l = comp.log_density(xi) - comp.penalty;
                    if l > best.1 {
                        best = (c, l);
                    }
                }
                best.0
            })
            .collect())
    }
}

/// Seed for restart `r` at `k` components.
pub fn restart_seed(master: u64, k: usize, r: usize) -> u64 {
    stream_rng(master, ((k as u64) << 32) | r as u64).gen()
}

/// Best-likelihood model among `restarts` seeded fits at `k`.
pub fn best_of_restarts(x: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> Result<GmmModel> {
    let fits: Vec<Result<GmmModel>> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| fit_gmm(x, k, restart_seed(seed, k, r)))
        .collect();
    let mut best: Option<GmmModel> = None;
    let mut last_err = None;
    for f in fits {
        match f {
            Ok(m) => {
                if best.as_ref().is_none_or(|b| m.log_likelihood > b.log_likelihood) {
                    best = Some(m);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub model: GmmModel,
    /// `(K, BIC)` for every K tried.
    pub bic_by_k: Vec<(usize, f64)>,
}

/// Chooses K in `k_range` by minimum BIC; ties go to the smaller K.
pub fn select_k(x: &[Vec<f64>], k_range: RangeInclusive<usize>, restarts: usize, seed: u64) -> Result<Selection> {
    let (lo, hi) = (*k_range.start(), (*k_range.end()).min(x.len()));
    if lo == 0 || lo > hi {
        return Err(Error::InvalidParams(format!(
            "K range {k_range:?} is empty for {} samples",
            x.len()
        )));
    }
    let mut best: Option<GmmModel> = None;
    let mut bic_by_k = Vec::new();
    for k in lo..=hi {
        let m = best_of_restarts(x, k, restarts, seed)?;
        bic_by_k.push((k, m.bic));
        if best.as_ref().is_none_or(|b| m.bic < b.bic) {
            best = Some(m);
        }
    }
    Ok(Selection {
        model: best.unwrap(),
        bic_by_k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::ami::adjusted_mutual_information;
    use rand_distr::StandardNormal;

    fn blob(center: &[f64], n: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| center.iter().map(|c| c + rng.sample::<f64, _>(StandardNormal)).collect())
            .collect()
    }

    #[test]
    fn parameter_count() {
        assert_eq!(n_parameters(1, 1), 2);
        assert_eq!(n_parameters(3, 8), 2 + 24 + 108);
        // equal likelihood, larger K never wins
        for k in 1..12 {
            assert!(bic(-100.0, k + 1, 8, 500) > bic(-100.0, k, 8, 500));
        }
    }

    #[test]
    fn single_gaussian_selects_one() {
        let mut rng = stream_rng(1, 0);
        let x = blob(&[0.0, 0.0, 0.0], 300, &mut rng);
        let sel = select_k(&x, 1..=5, 3, 4).unwrap();
        assert_eq!(sel.model.k, 1, "{:?}", sel.bic_by_k);
    }

    #[test]
    fn planted_components_recovered() {
        let mut rng = stream_rng(2, 0);
        let centers = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0]];
        let mut x = Vec::new();
        let mut truth = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            x.extend(blob(center, 100, &mut rng));
            truth.extend(std::iter::repeat_n(c, 100));
        }
        let sel = select_k(&x, 1..=8, 3, 5).unwrap();
        assert_eq!(sel.model.k, 4, "{:?}", sel.bic_by_k);
        let labels = sel.model.predict(&x).unwrap();
        assert!(adjusted_mutual_information(&truth, &labels) >= 0.9);
        assert!((sel.model.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_and_rejects_bad_k() {
        let mut rng = stream_rng(3, 0);
        let x = blob(&[1.0, 2.0], 50, &mut rng);
        assert_eq!(fit_gmm(&x, 2, 9).unwrap(), fit_gmm(&x, 2, 9).unwrap());
        assert!(fit_gmm(&x, 51, 0).is_err());
        assert!(fit_gmm(&x, 0, 0).is_err());
    }
}
