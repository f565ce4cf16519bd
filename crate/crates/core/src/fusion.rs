//! Confidence of per-leg RSSI differentials and the confidence-weighted
//! Kalman fusion of per-leg position estimates.
//!
//! Shadow fading on each reading is `N(0, σ²)`, so the difference of two
//! readings deviates from its model value by `N(0, 2σ²)`. The z-score of that
//! deviation yields a per-pair confidence; the leg confidence `l` is their
//! mean and scales the measurement noise of the fusion step as `p0 / l`.
//! All filter matrices are scalar multiples of the identity, so the state
//! covariance is carried as a single variance per axis.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::channel::RssiSample;
use crate::error::{Error, Result};
use crate::geometry::{distance, Position};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceMode {
    /// Two-sided tail mass `2·(1 - Φ(|z|))`: 1 at perfect agreement.
    #[default]
    Symmetric,
    /// `Φ(z)` exactly as the one-sided formula reads.
    Verbatim,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceConfig {
    pub mode: ConfidenceMode,
    /// Shadow-fading standard deviation assumed by the z-score, in dB.
    pub sigma: f64,
}

impl ConfidenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("fusion.sigma", "must be finite and > 0"));
        }
        Ok(())
    }
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn pair_confidence(delta_measured: f64, delta_predicted: f64, sigma: f64, mode: ConfidenceMode) -> f64 {
    let z = (delta_measured - delta_predicted) / (std::f64::consts::SQRT_2 * sigma);
    match mode {
        ConfidenceMode::Verbatim => std_normal_cdf(z),
        // erfc keeps precision in the far tail where 1 - Φ would cancel
        ConfidenceMode::Symmetric => libm::erfc(z.abs() / std::f64::consts::SQRT_2),
    }
}

/// Model RSSI difference `R_i - R_j = -κ·log10(d_i/d_j)` for a source at
/// `estimate`, distances clamped to `d_min`.
pub fn predicted_delta(p_i: &Position, p_j: &Position, estimate: &Position, kappa: f64, d_min: f64) -> f64 {
    let d_i = distance(p_i, estimate).max(d_min);
    let d_j = distance(p_j, estimate).max(d_min);
    -kappa * (d_i / d_j).log10()
}

/// Mean pair confidence of one leg, pairing the first sample with each of
/// the others (the same pairing as the ratio array).
pub fn segment_confidence(
    samples: &[RssiSample],
    estimate: &Position,
    kappa: f64,
    d_min: f64,
    cfg: &ConfidenceConfig,
) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: samples.len(),
        });
    }
    let anchor = &samples[0];
    let total: f64 = samples[1..]
        .iter()
        .map(|s| {
            let measured = anchor.rssi - s.rssi;
            let predicted = predicted_delta(&anchor.position, &s.position, estimate, kappa, d_min);
            pair_confidence(measured, predicted, cfg.sigma, cfg.mode)
        })
        .sum();
    Ok(total / (samples.len() - 1) as f64)
}

/// Kalman posterior over the source position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionState {
    pub mean: Position,
    /// Per-axis variance; the covariance is `variance · I`.
    pub variance: f64,
    /// Reference measurement variance, m².
    pub p0: f64,
    /// Process noise added per step, m².
    pub q: f64,
}

impl FusionState {
    pub fn covariance(&self) -> Matrix3<f64> {
        Matrix3::identity() * self.variance
    }

    pub fn covariance_trace(&self) -> f64 {
        3.0 * self.variance
    }
}

fn check_confidence(l: f64) -> Result<()> {
    if !(l > 0.0 && l <= 1.0) {
        return Err(Error::ContractViolation(format!(
            "confidence must lie in (0, 1], got {l}"
        )));
    }
    Ok(())
}

pub fn kf_init(first_estimate: Position, l: f64, p0: f64, q: f64) -> Result<FusionState> {
    check_confidence(l)?;
    if !(p0 > 0.0) || !(q >= 0.0) {
        return Err(Error::ContractViolation("p0 must be > 0 and q >= 0".into()));
    }
    Ok(FusionState {
        mean: first_estimate,
        variance: p0 / l,
        p0,
        q,
    })
}

/// Identity-dynamics predict (`P + qI`) followed by an update with
/// measurement noise `(p0 / l)·I`.
pub fn kf_update(state: &FusionState, measurement: &Position, l: f64) -> Result<FusionState> {
    check_confidence(l)?;
    let predicted = state.variance + state.q;
    let noise = state.p0 / l;
    let gain = predicted / (predicted + noise);
    let m = state.mean;
    Ok(FusionState {
        mean: Position::new(
            m.x + gain * (measurement.x - m.x),
            m.y + gain * (measurement.y - m.y),
            m.z + gain * (measurement.z - m.z),
        ),
        variance: (1.0 - gain) * predicted,
        ..*state
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{kappa, synth_rssi, ChannelParams};
    use crate::rng::RngStream;
    use proptest::prelude::*;

    /// Composite Simpson quadrature of the normal density from -12 to x.
    fn cdf_oracle(x: f64) -> f64 {
        let lo = -12.0;
        let n = 20_000;
        let h = (x - lo) / n as f64;
        let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = pdf(lo) + pdf(x);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * pdf(lo + k as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert!(std_normal_cdf(8.0) > 1.0 - 1e-14);
        let want = cdf_oracle(1.96);
        assert!((std_normal_cdf(1.96) - want).abs() < 1e-10);
        assert!((want - 0.975).abs() < 1e-4);
        for x in [-3.0, -0.7, 0.25, 2.5] {
            assert!((std_normal_cdf(x) - cdf_oracle(x)).abs() < 1e-10);
        }
    }

    #[test]
    fn pair_confidence_examples() {
        assert_eq!(pair_confidence(3.0, 3.0, 2.0, ConfidenceMode::Symmetric), 1.0);
        assert_eq!(pair_confidence(3.0, 3.0, 2.0, ConfidenceMode::Verbatim), 0.5);
        // |z| = 1.96 via a deviation of 1.96·√2·σ
        let sigma = 1.5;
        let dev = 1.96 * std::f64::consts::SQRT_2 * sigma;
        let c = pair_confidence(dev, 0.0, sigma, ConfidenceMode::Symmetric);
        let want = 2.0 * (1.0 - cdf_oracle(1.96));
        assert!((c - want).abs() < 1e-9);
        assert!((c - 0.05).abs() < 1e-3);
    }

    #[test]
    fn predicted_delta_examples() {
        let est = Position::new(0.0, 0.0, 0.0);
        let a = Position::new(10.0, 0.0, 0.0);
        let b = Position::new(0.0, -10.0, 0.0);
        assert!(predicted_delta(&a, &b, &est, 22.3, 1.0).abs() < 1e-15);
        let far = Position::new(100.0, 0.0, 0.0);
        assert!((predicted_delta(&far, &a, &est, 22.3, 1.0) + 22.3).abs() < 1e-12);

        let p = ChannelParams {
            sigma_db: 0.0,
            ..Default::default()
        };
        let src = Position::new(40.0, 70.0, 0.0);
        let mut rng = RngStream::new(0);
        let s1 = synth_rssi(&p, &src, &Position::new(0.0, 0.0, 100.0), &mut rng);
        let s2 = synth_rssi(&p, &src, &Position::new(90.0, 10.0, 100.0), &mut rng);
        let pred = predicted_delta(&s1.position, &s2.position, &src, kappa(&p), p.d_min);
        assert!((pred - (s1.rssi - s2.rssi)).abs() < 1e-12);
    }

    fn leg(source: Position, sigma: f64) -> Vec<RssiSample> {
        let p = ChannelParams {
            sigma_db: sigma,
            ..Default::default()
        };
        let mut rng = RngStream::new(1);
        (0..=10)
            .map(|i| synth_rssi(&p, &source, &Position::new(10.0 * i as f64, 50.0, 100.0), &mut rng))
            .collect()
    }

    #[test]
    fn segment_confidence_examples() {
        let src = Position::new(300.0, 200.0, 0.0);
        let samples = leg(src, 0.0);
        let k = kappa(&ChannelParams::default());
        let sym = ConfidenceConfig {
            mode: ConfidenceMode::Symmetric,
            sigma: 2.0,
        };
        let verb = ConfidenceConfig {
            mode: ConfidenceMode::Verbatim,
            sigma: 2.0,
        };
        assert!((segment_confidence(&samples, &src, k, 1.0, &sym).unwrap() - 1.0).abs() < 1e-12);
        assert!((segment_confidence(&samples, &src, k, 1.0, &verb).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(
            segment_confidence(&samples[..1], &src, k, 1.0, &sym),
            Err(Error::InsufficientData { .. })
        ));
        // mean of (1.0, 0.5, 0.3)
        assert!(((1.0 + 0.5 + 0.3) / 3.0f64 - 0.6).abs() < 1e-15);
    }

    #[test]
    fn segment_confidence_ignores_order_after_anchor() {
        let src = Position::new(300.0, 200.0, 0.0);
        let mut samples = leg(src, 3.0);
        let k = kappa(&ChannelParams::default());
        let cfg = ConfidenceConfig {
            mode: ConfidenceMode::Symmetric,
            sigma: 3.0,
        };
        let est = Position::new(280.0, 230.0, 0.0);
        let a = segment_confidence(&samples, &est, k, 1.0, &cfg).unwrap();
        samples[1..].reverse();
        let b = segment_confidence(&samples, &est, k, 1.0, &cfg).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(a > 0.0 && a <= 1.0);
    }

    #[test]
    fn kf_examples() {
        // scalar analogue: prior 0 var 1, measurement 2 with R = 1
        let s = FusionState {
            mean: Position::default(),
            variance: 1.0,
            p0: 1.0,
            q: 0.0,
        };
        let post = kf_update(&s, &Position::new(2.0, 2.0, 2.0), 1.0).unwrap();
        assert_eq!(post.mean, Position::new(1.0, 1.0, 1.0));
        assert_eq!(post.variance, 0.5);

        let s = FusionState {
            mean: Position::new(5.0, 5.0, 0.0),
            variance: 100.0,
            p0: 2500.0,
            q: 0.0,
        };
        let post = kf_update(&s, &Position::new(1000.0, -1000.0, 0.0), 1e-9).unwrap();
        assert!(crate::distance(&post.mean, &s.mean) < 1e-3);

        // p0 equal to the prior variance: midpoint
        let s = FusionState {
            mean: Position::new(10.0, 20.0, 0.0),
            variance: 400.0,
            p0: 400.0,
            q: 0.0,
        };
        let post = kf_update(&s, &Position::new(30.0, 0.0, 0.0), 1.0).unwrap();
        assert_eq!(post.mean, Position::new(20.0, 10.0, 0.0));

        assert!(kf_update(&s, &Position::default(), 0.0).is_err());
        assert!(kf_update(&s, &Position::default(), 1.5).is_err());
    }

    #[test]
    fn kf_init_examples() {
        let x = Position::new(1.0, 2.0, 3.0);
        let s = kf_init(x, 1.0, 2500.0, 25.0).unwrap();
        assert_eq!(s.covariance(), Matrix3::identity() * 2500.0);
        let s = kf_init(x, 0.5, 2500.0, 25.0).unwrap();
        assert_eq!(s.variance, 5000.0);
        assert_eq!(s.mean, x);
        assert!(kf_init(x, 0.0, 2500.0, 25.0).is_err());
    }

    #[test]
    fn repeated_fusion_converges() {
        // with q = 0 and equal confidences the error after k updates is e0/(1 + k)
        let target = Position::new(400.0, -300.0, 0.0);
        let e0 = 500.0;
        let mut s = kf_init(Position::default(), 0.7, 2500.0, 0.0).unwrap();
        let mut last_trace = s.covariance_trace();
        for k in 1..=10_000 {
            s = kf_update(&s, &target, 0.7).unwrap();
            assert!(s.covariance_trace() <= last_trace);
            last_trace = s.covariance_trace();
            let want = e0 / (1.0 + k as f64);
            assert!((crate::distance(&s.mean, &target) - want).abs() < 1e-9 * e0);
        }
        assert!(s.covariance_trace() < 3.0 * 2500.0 / 0.7 / 10_000.0);
    }

    proptest! {
        #[test]
        fn symmetric_confidence_decreasing(a in 0.0..6.0f64, b in 0.0..6.0f64) {
            prop_assume!((a - b).abs() > 1e-9);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let c = |z: f64| pair_confidence(z * std::f64::consts::SQRT_2, 0.0, 1.0, ConfidenceMode::Symmetric);
            prop_assert!(c(hi) < c(lo));
            prop_assert!(c(hi) < 1.0);
        }

        #[test]
        fn cdf_symmetry(x in -10.0..10.0f64) {
            prop_assert!((std_normal_cdf(-x) - (1.0 - std_normal_cdf(x))).abs() < 1e-12);
        }

        #[test]
        fn posterior_between_prior_and_measurement(
            var in 1.0..1e4f64, q in 0.0..100.0f64, l in 1e-3..1.0f64,
            mx in -500.0..500.0f64, zx in -500.0..500.0f64,
        ) {
            let s = FusionState { mean: Position::new(mx, 0.0, 0.0), variance: var, p0: 2500.0, q };
            let post = kf_update(&s, &Position::new(zx, 0.0, 0.0), l).unwrap();
            prop_assert!(post.variance <= var + q);
            let (lo, hi) = if mx < zx { (mx, zx) } else { (zx, mx) };
            prop_assert!(post.mean.x >= lo - 1e-9 && post.mean.x <= hi + 1e-9);
        }
    }
}
