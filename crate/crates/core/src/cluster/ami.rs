//! Adjusted mutual information under the hypergeometric null.

use std::collections::BTreeMap;

/// Natural-log AMI with arithmetic-mean normalisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ami {
    pub value: f64,
    pub mutual_information: f64,
    pub expected_mutual_information: f64,
    /// Both labelings have one class; the value is 1 by convention.
    pub single_class: bool,
}

fn relabel(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = BTreeMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `ln k!` for `k = 0..=n`.
fn log_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for k in 1..=n {
        out[k] = out[k - 1] + (k as f64).ln();
    }
    out
}

/// Expected mutual information of two labelings with the given class sizes
/// when one of them is permuted uniformly at random.
pub fn expected_mutual_information(a: &[usize], b: &[usize], n: usize) -> f64 {
    let lf = log_factorials(n);
    let nf = n as f64;
    let mut emi = 0.0;
    for &ai in a {
        for &bj in b {
            let lo = (ai + bj).saturating_sub(n).max(1);
            let hi = ai.min(bj);
            let fixed = lf[ai] + lf[bj] + lf[n - ai] + lf[n - bj] - lf[n];
            for nij in lo..=hi {
                let x = nij as f64;
                let term = x / nf * (nf * x / (ai as f64 * bj as f64)).ln();
                let log_p = fixed - lf[nij] - lf[ai - nij] - lf[bj - nij] - lf[n + nij - ai - bj];
                emi += term * log_p.exp();
            }
        }
    }
    emi
}

pub fn ami_detailed(labels_a: &[usize], labels_b: &[usize]) -> Ami {
    assert_eq!(labels_a.len(), labels_b.len(), "labelings must have equal length");
    let n = labels_a.len();
    let (a, ka) = relabel(labels_a);
    let (b, kb) = relabel(labels_b);
    if n == 0 || (ka <= 1 && kb <= 1) {
        return Ami {
            value: 1.0,
            mutual_information: 0.0,
            expected_mutual_information: 0.0,
            single_class: true,
        };
    }
    let mut table = vec![0usize; ka * kb];
    let mut ca = vec![0usize; ka];
    let mut cb = vec![0usize; kb];
    for (&i, &j) in a.iter().zip(&b) {
        table[i * kb + j] += 1;
        ca[i] += 1;
        cb[j] += 1;
    }
    let nf = n as f64;
    let mut mi = 0.0;
    for i in 0..ka {
        for j in 0..kb {
            let nij = table[i * kb + j];
            if nij > 0 {
                let x = nij as f64;
                mi += x / nf * (nf * x / (ca[i] as f64 * cb[j] as f64)).ln();
            }
        }
    }
    let emi = expected_mutual_information(&ca, &cb, n);
    let mean_h = 0.5 * (entropy(&ca, nf) + entropy(&cb, nf));
    let denom = mean_h - emi;
    let value = if denom.abs() < 1e-15 {
        if a == b {
            1.0
        } else {
            0.0
        }
    } else {
        (mi - emi) / denom
    };
    Ami {
        value,
        mutual_information: mi,
        expected_mutual_information: emi,
        single_class: false,
    }
}

pub fn adjusted_mutual_information(labels_a: &[usize], labels_b: &[usize]) -> f64 {
    ami_detailed(labels_a, labels_b).value
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_partitions() {
        assert_eq!(adjusted_mutual_information(&[0, 0, 1, 1, 2], &[5, 5, 3, 3, 9]), 1.0);
    }

    #[test]
    fn singletons_against_one_block() {
        let a: Vec<usize> = (0..6).collect();
        let b = vec![0; 6];
        assert_eq!(adjusted_mutual_information(&a, &b), 0.0);
    }

    #[test]
    fn single_class_both_sides() {
        let r = ami_detailed(&[1, 1, 1], &[4, 4, 4]);
        assert!(r.single_class);
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn hand_enumerated_four_points() {
        // cell (0,0) holds 2, 1 or 0 items with probabilities 1/6, 4/6, 1/6,
        // so E[MI] = 2/6 ln 2; MI = 0 and both entropies are ln 2
        let r = ami_detailed(&[0, 0, 1, 1], &[0, 1, 0, 1]);
        let ln2 = 2f64.ln();
        assert!(r.mutual_information.abs() < 1e-15);
        assert!((r.expected_mutual_information - ln2 / 3.0).abs() < 1e-15);
        assert!((r.value + 0.5).abs() < 1e-12);
    }

    fn labels(max_n: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
        (2..max_n).prop_flat_map(|n| (proptest::collection::vec(0usize..4, n), proptest::collection::vec(0usize..5, n)))
    }

    proptest! {
        #[test]
        fn symmetric((a, b) in labels(40)) {
            let x = adjusted_mutual_information(&a, &b);
            let y = adjusted_mutual_information(&b, &a);
            prop_assert!((x - y).abs() < 1e-12);
            prop_assert!(x <= 1.0 + 1e-12);
        }

        #[test]
        fn label_permutation_invariant((a, b) in labels(40), shift in 1usize..7) {
            let renamed: Vec<usize> = a.iter().map(|l| (l * 3 + shift) % 11).collect();
            let x = adjusted_mutual_information(&a, &b);
            let y = adjusted_mutual_information(&renamed, &b);
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
