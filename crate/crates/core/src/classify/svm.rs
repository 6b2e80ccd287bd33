//! One-vs-rest linear SVM (hinge loss) trained by dual coordinate descent.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::stream_rng;

/// Relative duality gap at which training stops.
pub const GAP_TOLERANCE: f64 = 1e-4;
pub const MAX_EPOCHS: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    /// Per class: feature weights followed by the bias.
    pub weights: Vec<Vec<f64>>,
    pub c: f64,
    /// Whether every binary problem reached the gap tolerance.
    pub converged: bool,
}

fn dot_aug(w: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    w[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[d]
}

/// Binary problem with labels `y_i in {-1, +1}`; the bias is a constant
/// feature of value 1 and is regularised like the other weights.
fn train_binary(x: &[Vec<f64>], y: &[f64], c: f64, seed: u64, stream: u64) -> (Vec<f64>, bool) {
    let n = x.len();
    let d = x[0].len();
    let mut w = vec![0.0; d + 1];
    let mut alpha = vec![0.0; n];
    let q: Vec<f64> = x.iter().map(|xi| xi.iter().map(|v| v * v).sum::<f64>() + 1.0).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = stream_rng(seed, stream);
    for _ in 0..MAX_EPOCHS {
        order.shuffle(&mut rng);
        for &i in &order {
            let g = y[i] * dot_aug(&w, &x[i]) - 1.0;
            let new = (alpha[i] - g / q[i]).clamp(0.0, c);
            let delta = new - alpha[i];
            if delta != 0.0 {
                alpha[i] = new;
                let s = delta * y[i];
                for (wj, xj) in w[..d].iter_mut().zip(&x[i]) {
                    *wj += s * xj;
                }
                w[d] += s;
            }
        }
        let norm2: f64 = w.iter().map(|v| v * v).sum();
        let hinge: f64 = x
            .iter()
            .zip(y)
            .map(|(xi, yi)| (1.0 - yi * dot_aug(&w, xi)).max(0.0))
            .sum();
        let primal = 0.5 * norm2 + c * hinge;
        let dual = alpha.iter().sum::<f64>() - 0.5 * norm2;
        if primal - dual <= GAP_TOLERANCE * primal.abs().max(1.0) {
            return (w, true);
        }
    }
    (w, false)
}

/// Trains one classifier per class in `0..n_classes`.
pub fn train_linear_svm(x: &[Vec<f64>], labels: &[usize], n_classes: usize, c: f64, seed: u64) -> Result<LinearSvm> {
    if x.is_empty() || x.len() != labels.len() {
        return Err(Error::InvalidParams("need equally many rows and labels".into()));
    }
    if !(c > 0.0) {
        return Err(Error::Config(format!("regularization C = {c} must be positive")));
    }
    let first = labels[0];
    if labels.iter().all(|&l| l == first) {
        return Err(Error::Degenerate("training set has a single class".into()));
    }
    let mut weights = Vec::with_capacity(n_classes);
    let mut converged = true;
    for class in 0..n_classes {
        let y: Vec<f64> = labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
        let (w, ok) = train_binary(x, &y, c, seed, class as u64);
        converged &= ok;
        weights.push(w);
    }
    Ok(LinearSvm { weights, c, converged })
}

impl LinearSvm {
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.weights.iter().map(|w| dot_aug(w, x)).collect()
    }

    /// Class with the largest margin; ties go to the lower class index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let s = self.scores(x);
        let mut best = 0;
        for (k, v) in s.iter().enumerate() {
            if *v > s[best] {
                best = k;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_two_classes() {
        let x: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                vec![s * (1.0 + (i % 7) as f64 * 0.1), (i % 5) as f64 * 0.3 - 0.6]
            })
            .collect();
        let y: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let m = train_linear_svm(&x, &y, 2, 1.0, 3).unwrap();
        assert!(m.converged);
        assert!(x.iter().zip(&y).all(|(xi, yi)| m.predict(xi) == *yi));
    }

    #[test]
    fn ties_go_to_first_class() {
        let m = LinearSvm {
            weights: vec![vec![0.0, 1.0]; 3],
            c: 1.0,
            converged: true,
        };
        assert_eq!(m.predict(&[5.0]), 0);
    }

    #[test]
    fn single_class_is_degenerate() {
        let x = vec![vec![1.0], vec![2.0]];
        assert!(matches!(train_linear_svm(&x, &[1, 1], 3, 1.0, 0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn deterministic() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64).sin(), (i as f64 * 0.7).cos()]).collect();
        let y: Vec<usize> = (0..30).map(|i| i % 3).collect();
        assert_eq!(train_linear_svm(&x, &y, 3, 1.0, 5).unwrap(), train_linear_svm(&x, &y, 3, 1.0, 5).unwrap());
    }
}
