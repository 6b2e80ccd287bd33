//! Linear regression on log cumulative views after the peak.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrRow {
    /// Hours after the peak.
    pub offset: usize,
    pub alpha: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrTable {
    pub t_obs: usize,
    pub horizon: usize,
    /// One row per offset in `t_obs + 1 ..= horizon`.
    pub rows: Vec<LrRow>,
    pub n_train: usize,
    /// Training events dropped because `R(t_obs) = 0`.
    pub n_excluded: usize,
}

/// `R(t) = sum_{k=1}^{t} x(t_p + k)` for `t = 0..=post.len()`, where `post`
/// holds the views after the peak.
pub fn cumulative(post: &[f64]) -> Vec<f64> {
    let mut r = Vec::with_capacity(post.len() + 1);
    let mut acc = 0.0;
    r.push(0.0);
    for v in post {
        acc += v;
        r.push(acc);
    }
    r
}

/// Fits `log R(t) - log R(t_obs) ~ N(alpha_t, sigma2_t)` by maximum
/// likelihood. Each training entry holds the post-peak views of one event
/// and must cover `horizon` hours.
pub fn lr_train(training: &[&[f64]], t_obs: usize, horizon: usize) -> Result<LrTable> {
    if t_obs == 0 || t_obs >= horizon {
        return Err(Error::Config(format!("need 0 < t_obs ({t_obs}) < horizon ({horizon})")));
    }
    let mut logs: Vec<Vec<f64>> = Vec::new();
    let mut excluded = 0;
    for post in training {
        if post.len() < horizon {
            return Err(Error::InsufficientData(format!(
                "training event observed for {} hours after the peak; need {horizon}",
                post.len()
            )));
        }
        let r = cumulative(&post[..horizon]);
        if r[t_obs] <= 0.0 {
            excluded += 1;
            continue;
        }
        let base = r[t_obs].ln();
        logs.push((t_obs + 1..=horizon).map(|t| r[t].ln() - base).collect());
    }
    if logs.is_empty() {
        return Err(Error::InsufficientData("no training event with R(t_obs) > 0".into()));
    }
    let n = logs.len() as f64;
    let rows = (t_obs + 1..=horizon)
        .enumerate()
        .map(|(j, offset)| {
            let alpha = logs.iter().map(|l| l[j]).sum::<f64>() / n;
            let sigma2 = logs.iter().map(|l| (l[j] - alpha).powi(2)).sum::<f64>() / n;
            LrRow { offset, alpha, sigma2 }
        })
        .collect();
    Ok(LrTable {
        t_obs,
        horizon,
        rows,
        n_train: logs.len(),
        n_excluded: excluded,
    })
}

/// `R_hat(t) = R(t_obs) exp(alpha_t + sigma2_t / 2)`; `None` outside the table.
pub fn lr_predict(table: &LrTable, r_obs: f64, t: usize) -> Option<f64> {
    if t == table.t_obs {
        return Some(r_obs);
    }
    let row = table.rows.get(t.checked_sub(table.t_obs + 1)?)?;
    Some(r_obs * (row.alpha + 0.5 * row.sigma2).exp())
}

/// Hourly forecast for offsets `t_obs + 1 ..= horizon` by differencing the
/// predicted cumulative counts. `observed_post` holds at least `t_obs` hours
/// after the peak.
pub fn lr_forecast(table: &LrTable, observed_post: &[f64]) -> Result<Vec<f64>> {
    if observed_post.len() < table.t_obs {
        return Err(Error::InsufficientData(format!(
            "{} post-peak hours observed; table needs {}",
            observed_post.len(),
            table.t_obs
        )));
    }
    let r_obs: f64 = observed_post[..table.t_obs].iter().sum();
    let mut prev = r_obs;
    Ok((table.t_obs + 1..=table.horizon)
        .map(|t| {
            let r = lr_predict(table, r_obs, t).expect("offset within table");
            let v = r - prev;
            prev = r;
            v
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Post-peak series whose cumulative count is `r_obs` at `t_obs` and
    /// `r_obs * ratio` at `horizon`, spread evenly in between.
    fn series_with_ratio(r_obs: f64, ratio: f64, t_obs: usize, horizon: usize) -> Vec<f64> {
        let mut x = vec![r_obs / t_obs as f64; t_obs];
        let later = r_obs * (ratio - 1.0) / (horizon - t_obs) as f64;
        x.extend(std::iter::repeat_n(later, horizon - t_obs));
        x
    }

    #[test]
    fn doubling_corpus() {
        let events: Vec<Vec<f64>> = [10.0, 50.0, 400.0].iter().map(|&r| series_with_ratio(r, 2.0, 24, 48)).collect();
        let refs: Vec<&[f64]> = events.iter().map(|v| v.as_slice()).collect();
        let table = lr_train(&refs, 24, 48).unwrap();
        let last = table.rows.last().unwrap();
        assert_eq!(last.offset, 48);
        assert!((last.alpha - 2f64.ln()).abs() < 1e-12);
        assert!(last.sigma2 < 1e-24);
        assert!((lr_predict(&table, 7.0, 48).unwrap() - 14.0).abs() < 1e-9);
        assert_eq!(table.rows.len(), 24);
    }

    #[test]
    fn single_event_has_zero_variance() {
        let e = series_with_ratio(30.0, 3.0, 24, 168);
        let table = lr_train(&[&e], 24, 168).unwrap();
        assert!(table.rows.iter().all(|r| r.sigma2 == 0.0));
    }

    #[test]
    fn zero_observed_events_are_excluded() {
        let zero = vec![0.0; 168];
        let e = series_with_ratio(30.0, 3.0, 24, 168);
        let table = lr_train(&[&zero, &e], 24, 168).unwrap();
        assert_eq!((table.n_train, table.n_excluded), (1, 1));
        assert!(lr_train(&[&zero], 24, 168).is_err());
    }

    #[test]
    fn lognormal_ratios_recovered() {
        let (alpha, sigma) = (0.7f64, 0.3f64);
        // averaged over corpora: at n = 500 the sampling sd of sigma2 alone is ~6%
        let reps = 20;
        let (mut a_hat, mut s_hat) = (0.0, 0.0);
        for rep in 0..reps {
            let mut rng = ChaCha8Rng::seed_from_u64(rep);
            let events: Vec<Vec<f64>> = (0..500)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    let r_obs = rng.gen_range(100.0..10_000.0);
                    series_with_ratio(r_obs, (alpha + sigma * z).exp(), 24, 168)
                })
                .collect();
            let refs: Vec<&[f64]> = events.iter().map(|v| v.as_slice()).collect();
            let row = *lr_train(&refs, 24, 168).unwrap().rows.last().unwrap();
            a_hat += row.alpha / reps as f64;
            s_hat += row.sigma2 / reps as f64;
        }
        assert!((a_hat - alpha).abs() < 0.05 * alpha, "{a_hat}");
        assert!((s_hat - sigma * sigma).abs() < 0.05 * sigma * sigma, "{s_hat}");
    }

    #[test]
    fn hourly_forecast_differences_cumulative() {
        let e = series_with_ratio(24.0, 2.0, 24, 48);
        let table = lr_train(&[&e], 24, 48).unwrap();
        let pred = lr_forecast(&table, &e[..24]).unwrap();
        assert_eq!(pred.len(), 24);
        for v in pred {
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn scale_equivariant(r in 1.0f64..1e6, k in 0.1f64..10.0, t in 25usize..=168) {
            let events: Vec<Vec<f64>> = [1.5, 2.0, 4.0].iter().map(|&q| series_with_ratio(100.0, q, 24, 168)).collect();
            let refs: Vec<&[f64]> = events.iter().map(|v| v.as_slice()).collect();
            let table = lr_train(&refs, 24, 168).unwrap();
            let base = lr_predict(&table, r, t).unwrap();
            let scaled = lr_predict(&table, k * r, t).unwrap();
            prop_assert!((scaled - k * base).abs() <= 1e-12 * scaled.abs());
        }
    }
}
