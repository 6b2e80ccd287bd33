//! The anticipation/response peak model with a multiplicative circadian rhythm.
//!
//! ```text
//! f(t) = C(t) D(t)
//! C(t) = 1 + alpha_c cos(2 pi (t - t_c) / 24)
//! D(t) = a_minus exp((t - t_p) / tau_minus) + b_minus     t < t_p
//!        a_plus  exp(-(t - t_p) / tau_plus) + b_plus      t > t_p
//! ```
//!
//! Time is measured in hours from the start of the series, which is always
//! aligned to 0:00 UTC, so `t mod 24` is the UTC hour of day. The model is
//! undefined at the peak hour itself.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Period of the circadian rhythm in hours.
pub const DAY_HOURS: f64 = 24.0;
/// Angular frequency of the circadian rhythm (radians per hour).
pub const OMEGA: f64 = 2.0 * std::f64::consts::PI / DAY_HOURS;
/// Default half-width of the window used for the anticipation-response ratio.
pub const RATIO_WINDOW_HOURS: f64 = 168.0;

/// Parameters of a single fitted peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakParams {
    pub a_minus: f64,
    pub b_minus: f64,
    pub tau_minus: f64,
    pub a_plus: f64,
    pub b_plus: f64,
    pub tau_plus: f64,
    pub alpha_c: f64,
    pub t_c: f64,
    pub t_p: f64,
}

impl PeakParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("a_minus", self.a_minus),
            ("b_minus", self.b_minus),
            ("tau_minus", self.tau_minus),
            ("a_plus", self.a_plus),
            ("b_plus", self.b_plus),
            ("tau_plus", self.tau_plus),
            ("alpha_c", self.alpha_c),
            ("t_c", self.t_c),
            ("t_p", self.t_p),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidParams(format!("{name} is not finite")));
        }
        for (name, v) in &fields[..6] {
            if *v < 0.0 {
                return Err(Error::InvalidParams(format!("{name} = {v} is negative")));
            }
        }
        if self.tau_minus <= 0.0 || self.tau_plus <= 0.0 {
            return Err(Error::InvalidParams(
                "time constants must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.alpha_c) {
            return Err(Error::InvalidParams(format!(
                "alpha_c = {} outside [0, 1)",
                self.alpha_c
            )));
        }
        Ok(())
    }

    /// Copy with `t_c` reduced to `[0, 24)`.
    pub fn normalized(mut self) -> Self {
        self.t_c = wrap_hour(self.t_c);
        self
    }

    /// Circadian factor `C(t)`.
    pub fn circadian(&self, t: f64) -> f64 {
        circadian(self.alpha_c, self.t_c, t)
    }

    /// Envelope `D(t)`; the peak hour itself is a contract violation.
    pub fn envelope(&self, t: f64) -> Result<f64> {
        let dt = t - self.t_p;
        if dt < 0.0 {
            Ok(self.a_minus * (dt / self.tau_minus).exp() + self.b_minus)
        } else if dt > 0.0 {
            Ok(self.a_plus * (-dt / self.tau_plus).exp() + self.b_plus)
        } else {
            Err(Error::PeakHour(t))
        }
    }

    /// Full model `f(t) = C(t) D(t)`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        Ok(self.circadian(t) * self.envelope(t)?)
    }

    /// Model values on the integer hours `0..len`, with `None` at the peak hour.
    pub fn eval_hours(&self, len: usize) -> Vec<Option<f64>> {
        (0..len).map(|h| self.eval(h as f64).ok()).collect()
    }

    /// Area under the anticipation envelope over `[-window, 0]` divided by the
    /// area under the response envelope over `[0, window]`.
    pub fn anticipation_response_ratio(&self, window: f64) -> Result<f64> {
        if !(window > 0.0) {
            return Err(Error::InvalidParams(format!("window {window} must be positive")));
        }
        let s_minus = envelope_area(self.a_minus, self.tau_minus, self.b_minus, window);
        let s_plus = envelope_area(self.a_plus, self.tau_plus, self.b_plus, window);
        if s_plus <= 0.0 {
            return Err(Error::UndefinedRatio);
        }
        Ok(s_minus / s_plus)
    }
}

/// `integral_0^M (a e^{-s/tau} + b) ds`
fn envelope_area(a: f64, tau: f64, b: f64, window: f64) -> f64 {
    a * tau * -(-window / tau).exp_m1() + b * window
}

/// `1 + alpha cos(omega (t - t_c))`
pub fn circadian(alpha: f64, t_c: f64, t: f64) -> f64 {
    1.0 + alpha * (OMEGA * (t - t_c)).cos()
}

/// Reduces an hour of day to `[0, 24)`.
pub fn wrap_hour(h: f64) -> f64 {
    let r = h.rem_euclid(DAY_HOURS);
    // rem_euclid can round up to exactly 24.0 for tiny negative inputs
    if r >= DAY_HOURS {
        0.0
    } else {
        r
    }
}

/// Viewer shares in three reference time zones plus the template waves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionMix {
    pub p_us: f64,
    pub p_uk: f64,
    pub p_au: f64,
    /// Reference peak hours (UTC) for the US, UK and AU waves.
    pub t_ref: [f64; 3],
    /// Common amplitude of the reference waves.
    pub alpha_bar: f64,
}

impl Default for RegionMix {
    fn default() -> Self {
        RegionMix {
            p_us: 1.0 / 3.0,
            p_uk: 1.0 / 3.0,
            p_au: 1.0 / 3.0,
            t_ref: [20.6, 16.2, 5.9],
            alpha_bar: 0.9,
        }
    }
}

impl RegionMix {
    pub fn weights(&self) -> [f64; 3] {
        [self.p_us, self.p_uk, self.p_au]
    }

    pub fn with_weights(mut self, w: [f64; 3]) -> Self {
        self.p_us = w[0];
        self.p_uk = w[1];
        self.p_au = w[2];
        self
    }

    /// Mixed circadian factor `sum_X p_X C_X(t)`.
    pub fn circadian(&self, t: f64) -> f64 {
        self.weights()
            .iter()
            .zip(self.t_ref)
            .map(|(p, tx)| p * circadian(self.alpha_bar, tx, t))
            .sum()
    }

    /// Collapses the mixture into a single `(alpha_c, t_c)` wave. A sum of
    /// equal-period cosines is again a cosine, so this is exact.
    pub fn as_single_wave(&self) -> (f64, f64) {
        let (mut re, mut im) = (0.0, 0.0);
        for (p, tx) in self.weights().iter().zip(self.t_ref) {
            re += p * self.alpha_bar * (OMEGA * tx).cos();
            im += p * self.alpha_bar * (OMEGA * tx).sin();
        }
        let amp = re.hypot(im);
        let phase = if amp > 0.0 { wrap_hour(im.atan2(re) / OMEGA) } else { 0.0 };
        (amp, phase)
    }
}

/// Splits a fitted circadian wave into nonnegative US/UK/AU shares.
///
/// Least squares between `C(t)` and the template mixture over one day sampled
/// hourly, constrained to the probability simplex. Every face of the simplex
/// is solved exactly and the best feasible point kept; ties go to the
/// minimum-norm weights.
pub fn decompose_circadian(alpha_c: f64, t_c: f64, template: &RegionMix) -> RegionMix {
    let hours: Vec<f64> = (0..24).map(f64::from).collect();
    // With sum(p) = 1 the constant parts cancel, so only the oscillating
    // parts enter the residual.
    let target: Vec<f64> = hours.iter().map(|&t| circadian(alpha_c, t_c, t) - 1.0).collect();
    let cols: Vec<Vec<f64>> = template
        .t_ref
        .iter()
        .map(|&tx| {
            hours
                .iter()
                .map(|&t| circadian(template.alpha_bar, tx, t) - 1.0)
                .collect()
        })
        .collect();
    let objective = |p: &[f64; 3]| -> f64 {
        (0..24)
            .map(|h| {
                let m: f64 = (0..3).map(|k| p[k] * cols[k][h]).sum();
                (m - target[h]).powi(2)
            })
            .sum()
    };

    let mut best: Option<([f64; 3], f64)> = None;
    for mask in 1u8..8 {
        let active: Vec<usize> = (0..3).filter(|k| mask & (1 << k) != 0).collect();
        let Some(p) = solve_face(&active, &cols, &target) else {
            continue;
        };
        if p.iter().any(|&v| v < -1e-12) {
            continue;
        }
        let p = p.map(|v| v.max(0.0));
        let s: f64 = p.iter().sum();
        let p = p.map(|v| v / s);
        let f = objective(&p);
        let norm = p.iter().map(|v| v * v).sum::<f64>();
        best = match best {
            None => Some((p, f)),
            Some((bp, bf)) => {
                let tol = 1e-12 * (1.0 + bf.abs());
                let bnorm = bp.iter().map(|v| v * v).sum::<f64>();
                if f < bf - tol || ((f - bf).abs() <= tol && norm < bnorm) {
                    Some((p, f))
                } else {
                    Some((bp, bf))
                }
            }
        };
    }
    // vertices are always solvable, so a candidate exists
    let (p, _) = best.expect("simplex vertices always feasible");
    template.with_weights(p)
}

/// Equality-constrained least squares on one face: minimise `||A_S p - y||^2`
/// subject to `sum(p) = 1` via the KKT system.
fn solve_face(active: &[usize], cols: &[Vec<f64>], y: &[f64]) -> Option<[f64; 3]> {
    let m = active.len();
    let n = m + 1;
    let mut kkt = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    for (i, &ci) in active.iter().enumerate() {
        for (j, &cj) in active.iter().enumerate() {
            kkt[i * n + j] = 2.0 * dot(&cols[ci], &cols[cj]);
        }
        kkt[i * n + m] = 1.0;
        kkt[m * n + i] = 1.0;
        rhs[i] = 2.0 * dot(&cols[ci], y);
    }
    rhs[m] = 1.0;
    let sol = linalg::solve(&kkt, &rhs)?;
    let mut p = [0.0; 3];
    for (i, &ci) in active.iter().enumerate() {
        p[ci] = sol[i];
    }
    Some(p)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params() -> PeakParams {
        PeakParams {
            a_minus: 100.0,
            b_minus: 5.0,
            tau_minus: 10.0,
            a_plus: 100.0,
            b_plus: 5.0,
            tau_plus: 10.0,
            alpha_c: 0.5,
            t_c: 20.0,
            t_p: 100.0,
        }
    }

    #[test]
    fn circadian_examples() {
        let p = params();
        assert!((p.circadian(20.0) - 1.5).abs() < 1e-15);
        assert!((p.circadian(32.0) - 0.5).abs() < 1e-15);
        let flat = PeakParams { alpha_c: 0.0, ..p };
        for t in [0.0, 3.3, 17.0, 250.5] {
            assert_eq!(flat.circadian(t), 1.0);
        }
    }

    #[test]
    fn envelope_examples() {
        let p = params();
        let v = p.envelope(110.0).unwrap();
        assert!((v - (100.0 * (-1.0f64).exp() + 5.0)).abs() < 1e-12);
        assert!((v - 41.788).abs() < 1e-3);

        let q = PeakParams { a_minus: 0.0, b_minus: 7.0, ..p };
        assert_eq!(q.envelope(50.0).unwrap(), 7.0);
        assert!((p.envelope(100.0 + 1e4).unwrap() - p.b_plus).abs() < 1e-12);
        assert!(matches!(p.envelope(100.0), Err(Error::PeakHour(_))));
        assert!(p.eval(100.0).is_err());
    }

    #[test]
    fn model_examples() {
        let p = PeakParams { alpha_c: 0.0, ..params() };
        for t in [0.0, 99.0, 101.0, 300.0] {
            assert_eq!(p.eval(t).unwrap(), p.envelope(t).unwrap());
        }
        let q = PeakParams {
            a_minus: 0.0,
            a_plus: 0.0,
            b_minus: 3.0,
            b_plus: 3.0,
            ..params()
        };
        for t in [0.0, 7.0, 150.0] {
            assert!((q.eval(t).unwrap() - 3.0 * q.circadian(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn ratio_examples() {
        let p = params();
        assert!((p.anticipation_response_ratio(168.0).unwrap() - 1.0).abs() < 1e-15);
        let q = PeakParams {
            a_minus: 0.0,
            a_plus: 0.0,
            b_minus: 2.0,
            b_plus: 1.0,
            ..p
        };
        assert!((q.anticipation_response_ratio(168.0).unwrap() - 2.0).abs() < 1e-15);
        let z = PeakParams { a_plus: 0.0, b_plus: 0.0, ..p };
        assert!(matches!(z.anticipation_response_ratio(168.0), Err(Error::UndefinedRatio)));
        assert!(p.anticipation_response_ratio(0.0).is_err());
    }

    #[test]
    fn validation() {
        assert!(params().validate().is_ok());
        assert!(PeakParams { alpha_c: 1.0, ..params() }.validate().is_err());
        assert!(PeakParams { tau_plus: 0.0, ..params() }.validate().is_err());
        assert!(PeakParams { b_minus: -1.0, ..params() }.validate().is_err());
        assert!(PeakParams { t_c: f64::NAN, ..params() }.validate().is_err());
    }

    #[test]
    fn json_is_flat_with_field_names() {
        let v = serde_json::to_value(params()).unwrap();
        let obj = v.as_object().unwrap();
        assert_eq!(obj.len(), 9);
        for k in [
            "a_minus", "b_minus", "tau_minus", "a_plus", "b_plus", "tau_plus", "alpha_c", "t_c",
            "t_p",
        ] {
            assert!(obj[k].is_number(), "{k}");
        }
        let back: PeakParams = serde_json::from_value(v).unwrap();
        assert_eq!(back, params());
    }

    #[test]
    fn wrap_hour_range() {
        assert_eq!(wrap_hour(25.0), 1.0);
        assert_eq!(wrap_hour(-1.0), 23.0);
        let r = wrap_hour(-1e-18);
        assert!((0.0..24.0).contains(&r));
    }

    #[test]
    fn decompose_identity() {
        let tmpl = RegionMix::default();
        let mix = decompose_circadian(0.9, 20.6, &tmpl);
        assert!((mix.p_us - 1.0).abs() < 1e-6, "{mix:?}");
        assert!(mix.p_uk.abs() < 1e-6 && mix.p_au.abs() < 1e-6);
    }

    #[test]
    fn decompose_planted_mix() {
        let tmpl = RegionMix::default();
        let planted = tmpl.with_weights([0.6, 0.3, 0.1]);
        let (a, tc) = planted.as_single_wave();
        for h in 0..24 {
            let t = h as f64;
            assert!((circadian(a, tc, t) - planted.circadian(t)).abs() < 1e-12);
        }
        let w = decompose_circadian(a, tc, &tmpl).weights();
        for (x, y) in w.iter().zip([0.6, 0.3, 0.1]) {
            assert!((x - y).abs() < 0.05);
        }
    }

    #[test]
    fn decompose_flat_rhythm_is_interior() {
        // the three reference phases surround the origin, so a flat rhythm
        // has an exact interior representation
        let mix = decompose_circadian(0.0, 0.0, &RegionMix::default());
        let s: f64 = mix.weights().iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
        assert!(mix.weights().iter().all(|&p| p > 0.0));
        let (amp, _) = mix.as_single_wave();
        assert!(amp < 1e-9);
    }

    /// Straight-line reference evaluation, written independently of `eval`.
    fn reference(p: &PeakParams, t: f64) -> f64 {
        let c = 1.0 + p.alpha_c * (2.0 * std::f64::consts::PI * (t - p.t_c) / 24.0).cos();
        let d = if t < p.t_p {
            p.a_minus * ((t - p.t_p) / p.tau_minus).exp() + p.b_minus
        } else {
            p.a_plus * (-(t - p.t_p) / p.tau_plus).exp() + p.b_plus
        };
        c * d
    }

    fn arb_params() -> impl Strategy<Value = PeakParams> {
        (
            (0.0..1e4f64, 0.0..500f64, 0.1..200f64),
            (0.0..1e4f64, 0.0..500f64, 0.1..200f64),
            (0.0..0.99f64, 0.0..24f64, 0u32..480),
        )
            .prop_map(|((am, bm, tm), (ap, bp, tp_), (ac, tc, peak))| PeakParams {
                a_minus: am,
                b_minus: bm,
                tau_minus: tm,
                a_plus: ap,
                b_plus: bp,
                tau_plus: tp_,
                alpha_c: ac,
                t_c: tc,
                t_p: peak as f64,
            })
    }

    proptest! {
        #[test]
        fn eval_matches_reference(p in arb_params()) {
            for h in 0..480 {
                let t = h as f64;
                if t == p.t_p { continue; }
                let a = p.eval(t).unwrap();
                let b = reference(&p, t);
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
            }
        }

        #[test]
        fn positive_with_positive_baselines(mut p in arb_params(), t in 0.0..480f64) {
            p.b_minus += 1e-3;
            p.b_plus += 1e-3;
            if t != p.t_p {
                prop_assert!(p.eval(t).unwrap() > 0.0);
            }
        }

        #[test]
        fn envelope_monotone_on_each_side(p in arb_params(), t in 0.0..479f64) {
            let t2 = t + 0.5;
            if t2 < p.t_p {
                prop_assert!(p.envelope(t).unwrap() <= p.envelope(t2).unwrap());
            } else if t > p.t_p {
                prop_assert!(p.envelope(t).unwrap() >= p.envelope(t2).unwrap());
            }
        }

        #[test]
        fn ratio_matches_trapezoid(mut p in arb_params(), taus in (4.0..200f64, 4.0..200f64)) {
            // trapezoid error at 0.01 h steps is about h^2 / (12 tau^2) relative
            p.b_plus += 1e-3;
            (p.tau_minus, p.tau_plus) = taus;
            let (m, h) = (168.0, 0.01);
            let steps = (m / h) as usize;
            let side = |a: f64, b: f64, tau: f64| {
                let g = |s: f64| a * (-s / tau).exp() + b;
                h * ((1..steps).map(|i| g(i as f64 * h)).sum::<f64>() + 0.5 * (g(0.0) + g(m)))
            };
            let numeric = side(p.a_minus, p.b_minus, p.tau_minus) / side(p.a_plus, p.b_plus, p.tau_plus);
            let closed = p.anticipation_response_ratio(m).unwrap();
            prop_assert!((closed - numeric).abs() <= 1e-6 * numeric.abs().max(1e-12));
        }

        #[test]
        fn decomposition_on_simplex(alpha in 0.0..0.99f64, tc in 0.0..24f64) {
            let w = decompose_circadian(alpha, tc, &RegionMix::default()).weights();
            prop_assert!(w.iter().all(|&p| p >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
