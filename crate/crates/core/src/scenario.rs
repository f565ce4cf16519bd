//! Scenario and mission descriptions.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::geometry::{Position, Roi};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MissionConfig {
    /// Departure point `A_0`; its altitude is replaced by the flight altitude.
    pub start: Position,
    /// Distance flown per iteration, meters.
    pub leg_length: f64,
    /// Distance between consecutive RSSI readings, meters.
    pub sample_spacing: f64,
    pub max_iterations: usize,
    /// Fused-estimate movement below which two consecutive iterations stop
    /// the mission, meters.
    pub termination_epsilon: f64,
    /// Iterations flown before the step and arrival rules may end the
    /// mission. The iteration cap always applies.
    pub min_iterations: usize,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            start: Position::new(100.0, 100.0, 100.0),
            leg_length: 100.0,
            sample_spacing: 10.0,
            max_iterations: 15,
            termination_epsilon: 2.0,
            min_iterations: 1,
        }
    }
}

impl MissionConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.start.is_finite() {
            return Err(Error::invalid("mission.start", "must be finite"));
        }
        if !(self.leg_length > 0.0 && self.leg_length.is_finite()) {
            return Err(Error::invalid("mission.leg_length", "must be > 0"));
        }
        if !(self.sample_spacing > 0.0 && self.sample_spacing <= self.leg_length) {
            return Err(Error::invalid(
                "mission.sample_spacing",
                "must satisfy 0 < sample_spacing <= leg_length",
            ));
        }
        let intervals = self.leg_length / self.sample_spacing;
        if (intervals - intervals.round()).abs() > 1e-6 {
            return Err(Error::invalid(
                "mission.sample_spacing",
                format!(
                    "leg_length {} is not an integer multiple of sample_spacing {}",
                    self.leg_length, self.sample_spacing
                ),
            ));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("mission.max_iterations", "must be >= 1"));
        }
        if !(self.termination_epsilon >= 0.0) {
            return Err(Error::invalid("mission.termination_epsilon", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub id: String,
    /// Search region; the source must lie inside it.
    pub roi: Roi,
    /// Ground-truth source position.
    pub source: Position,
    pub channel: ChannelParams,
    pub mission: MissionConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            id: "default".into(),
            roi: Roi::default(),
            source: Position::new(900.0, 800.0, 0.0),
            channel: ChannelParams::default(),
            mission: MissionConfig::default(),
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.roi.validate()?;
        self.channel.validate()?;
        self.mission.validate()?;
        if !self.roi.contains(&self.source) {
            return Err(Error::invalid("source", "must lie inside the roi"));
        }
        Ok(())
    }
}
