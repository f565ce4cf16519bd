//! Altitude-dependent close-in path loss, RSSI synthesis and the
//! RSSI-difference to distance-ratio transform.
//!
//! Received power follows `R = P - κ·log10(d) - χ` with `κ = 10·A·h^B` and
//! `χ ~ N(0, σ²)` shadow fading. Differencing two readings cancels the unknown
//! transmit term `P`, which is what makes the ratio formulation work without
//! knowing the emitter power.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance, Position};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelParams {
    /// Carrier frequency in GHz.
    pub carrier_ghz: f64,
    /// Environment constant multiplying the altitude term of the PLE.
    pub a: f64,
    /// Altitude exponent of the PLE.
    pub b: f64,
    /// UAV flight altitude in meters.
    pub h_uav: f64,
    /// Lumped transmit-side constant in dBm.
    pub tx_power_dbm: f64,
    /// Shadow-fading standard deviation in dB.
    pub sigma_db: f64,
    /// Distances below this are clamped before taking logs.
    pub d_min: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            carrier_ghz: 2.45,
            a: 2.772,
            b: -0.04724,
            h_uav: 100.0,
            tx_power_dbm: -30.0,
            sigma_db: 4.0,
            d_min: 1.0,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_ghz > 0.0 && self.carrier_ghz.is_finite()) {
            return Err(Error::invalid("channel.carrier_ghz", "must be > 0"));
        }
        if !(self.h_uav > 0.0 && self.h_uav.is_finite()) {
            return Err(Error::invalid("channel.h_uav", "must be > 0"));
        }
        if !(self.sigma_db >= 0.0 && self.sigma_db.is_finite()) {
            return Err(Error::invalid("channel.sigma_db", "must be finite and >= 0"));
        }
        if !(self.d_min > 0.0 && self.d_min.is_finite()) {
            return Err(Error::invalid("channel.d_min", "must be > 0"));
        }
        if !self.tx_power_dbm.is_finite() || !self.a.is_finite() || !self.b.is_finite() {
            return Err(Error::invalid("channel", "a, b and tx_power_dbm must be finite"));
        }
        let k = kappa(self);
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::invalid(
                "channel.a",
                format!("derived path-loss slope 10·A·h^B = {k} must be finite and > 0"),
            ));
        }
        Ok(())
    }

    pub fn with_sigma(self, sigma_db: f64) -> Self {
        Self { sigma_db, ..self }
    }
}

/// Path-loss slope in dB per decade: `10·A·h_uav^B`.
pub fn kappa(params: &ChannelParams) -> f64 {
    10.0 * params.a * params.h_uav.powf(params.b)
}

/// Deterministic part of the path loss at distance `d`, in dB.
pub fn path_loss(params: &ChannelParams, d: f64) -> f64 {
    let d = d.max(params.d_min);
    32.4 + 20.0 * params.carrier_ghz.log10() + kappa(params) * d.log10()
}

/// One RSSI reading taken at a UAV position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RssiSample {
    pub position: Position,
    /// Received power in dBm.
    pub rssi: f64,
}

/// Noise-free received power at `at` for a source at `source`.
pub fn mean_rssi(params: &ChannelParams, source: &Position, at: &Position) -> f64 {
    let d = distance(source, at).max(params.d_min);
    params.tx_power_dbm - kappa(params) * d.log10()
}

/// Draw one shadow-faded reading. Consumes exactly one normal variate.
pub fn synth_rssi(params: &ChannelParams, source: &Position, at: &Position, rng: &mut RngStream) -> RssiSample {
    let fading = params.sigma_db * rng.standard_normal();
    RssiSample {
        position: *at,
        rssi: mean_rssi(params, source, at) - fading,
    }
}

/// Shadowing standard deviation for a given SNR: `sigma_ref·10^(-snr/20)`.
pub fn sigma_for_snr(snr_db: f64, sigma_ref: f64) -> f64 {
    sigma_ref * 10f64.powf(-snr_db / 20.0)
}

/// `d_i / d_j` implied by two readings: `10^((r_j - r_i)/κ)`.
pub fn distance_ratio(r_i: f64, r_j: f64, kappa: f64) -> f64 {
    10f64.powf((r_j - r_i) / kappa)
}

/// Distance ratios of every sample against the anchor (first) sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioArray {
    pub anchor_index: usize,
    /// `ratios[j - 1] = d_anchor / d_j` for `j = 1..n`.
    pub ratios: Vec<f64>,
}

impl RatioArray {
    pub fn len(&self) -> usize {
        self.ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratios.is_empty()
    }
}

pub fn ratio_array(samples: &[RssiSample], kappa: f64) -> Result<RatioArray> {
    if samples.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: samples.len(),
        });
    }
    if !(kappa > 0.0) {
        return Err(Error::ContractViolation(format!("kappa must be > 0, got {kappa}")));
    }
    let anchor = samples[0].rssi;
    let ratios = samples[1..]
        .iter()
        .map(|s| distance_ratio(anchor, s.rssi, kappa))
        .collect();
    Ok(RatioArray {
        anchor_index: 0,
        ratios,
    })
}
