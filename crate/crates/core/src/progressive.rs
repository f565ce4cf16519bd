//! The solve / fuse / fly loop.
//!
//! Each iteration flies one leg and samples it, solves the ratio problem for
//! a preliminary estimate, scores that leg's RSSI differentials for
//! confidence, fuses the estimate into the running Kalman state, and plans
//! the next leg toward the fused estimate.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::channel::{kappa, synth_rssi, ChannelParams, RssiSample};
use crate::error::{Error, Result};
use crate::fusion::{kf_init, kf_update, segment_confidence, ConfidenceConfig, ConfidenceMode, FusionState};
use crate::geometry::{distance, Position, Roi};
use crate::rng::RngStream;
use crate::scenario::{MissionConfig, Scenario};
use crate::solver::{pso_lm_localize_seeded, LmConfig, PsoConfig, RatioObjective};

/// Which position stands in for the unknown source when predicting the
/// model RSSI differences of a leg.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceReference {
    /// The leg's own preliminary estimate.
    #[default]
    Preliminary,
    /// The fused estimate from the previous iteration (the preliminary one on
    /// the first iteration).
    PriorFused,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    pub mode: ConfidenceMode,
    pub reference: ConfidenceReference,
    /// Reference measurement variance `p0`, m².
    pub p0: f64,
    /// Process noise added per iteration, m².
    pub q: f64,
    /// Lower bound applied to each leg confidence.
    pub confidence_floor: f64,
    /// Lower bound on the shadowing sigma used by the z-score, dB.
    pub sigma_floor_db: f64,
    /// Number of most recent legs pooled into each iteration's ratio problem.
    pub window_legs: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            mode: ConfidenceMode::Symmetric,
            reference: ConfidenceReference::Preliminary,
            p0: 2500.0,
            q: 2500.0,
            confidence_floor: 1e-3,
            sigma_floor_db: 0.1,
            window_legs: 8,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p0 > 0.0 && self.p0.is_finite()) {
            return Err(Error::invalid("fusion.p0", "must be > 0"));
        }
        if !(self.q >= 0.0 && self.q.is_finite()) {
            return Err(Error::invalid("fusion.q", "must be >= 0"));
        }
        if !(self.confidence_floor > 0.0 && self.confidence_floor <= 1.0) {
            return Err(Error::invalid("fusion.confidence_floor", "must lie in (0, 1]"));
        }
        if !(self.sigma_floor_db > 0.0) {
            return Err(Error::invalid("fusion.sigma_floor_db", "must be > 0"));
        }
        if self.window_legs == 0 {
            return Err(Error::invalid("fusion.window_legs", "must be >= 1"));
        }
        Ok(())
    }

    pub fn confidence_config(&self, channel: &ChannelParams) -> ConfidenceConfig {
        ConfidenceConfig {
            mode: self.mode,
            sigma: channel.sigma_db.max(self.sigma_floor_db),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalizerConfig {
    pub pso: PsoConfig,
    pub lm: LmConfig,
    pub fusion: FusionConfig,
}

impl LocalizerConfig {
    pub fn validate(&self) -> Result<()> {
        self.pso.validate()?;
        self.lm.validate()?;
        self.fusion.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based iteration number.
    pub index: usize,
    pub leg_start: Position,
    pub leg_end: Position,
    pub samples: Vec<RssiSample>,
    pub preliminary: Position,
    pub objective_value: f64,
    pub solver_converged: bool,
    pub confidence: f64,
    pub fused: Position,
    pub covariance_trace: f64,
    /// Distance from the fused estimate to the true source.
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MaxIters,
    StepConverged,
    ReachedEstimate,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::MaxIters => "max_iters",
            Termination::StepConverged => "step_converged",
            Termination::ReachedEstimate => "reached_estimate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationTrace {
    pub scenario_id: String,
    pub source: Position,
    pub iterations: Vec<IterationRecord>,
    pub final_estimate: Position,
    pub final_error: f64,
    pub terminated_by: Termination,
}

impl LocalizationTrace {
    /// Fused-estimate error after iteration `k` (1-based). Once the mission
    /// has stopped the estimate no longer moves, so later iterations report
    /// the final error.
    pub fn error_at(&self, k: usize) -> f64 {
        self.iterations
            .get(k.saturating_sub(1))
            .map_or(self.final_error, |r| r.error)
    }

    /// Total RSSI readings taken over the first `k` iterations.
    pub fn samples_through(&self, k: usize) -> usize {
        self.iterations.iter().take(k).map(|r| r.samples.len()).sum()
    }

    /// `A_0, A_1, …`: the UAV's position before the first leg and at the end
    /// of every leg.
    pub fn waypoints(&self) -> Vec<Position> {
        let mut out = Vec::with_capacity(self.iterations.len() + 1);
        if let Some(first) = self.iterations.first() {
            out.push(first.leg_start);
        }
        out.extend(self.iterations.iter().map(|r| r.leg_end));
        out
    }

    /// One row per iteration: index, leg endpoints, preliminary estimate,
    /// confidence, fused estimate, covariance trace and error.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "iteration,leg_start_x,leg_start_y,leg_start_z,leg_end_x,leg_end_y,leg_end_z,\
             preliminary_x,preliminary_y,preliminary_z,confidence,fused_x,fused_y,fused_z,\
             covariance_trace,error_m\n",
        );
        for r in &self.iterations {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.index,
                r.leg_start.x,
                r.leg_start.y,
                r.leg_start.z,
                r.leg_end.x,
                r.leg_end.y,
                r.leg_end.z,
                r.preliminary.x,
                r.preliminary.y,
                r.preliminary.z,
                r.confidence,
                r.fused.x,
                r.fused.y,
                r.fused.z,
                r.covariance_trace,
                r.error
            );
        }
        s
    }
}

/// First leg endpoint: `L` meters from `start` on a uniformly random heading,
/// mirrored back into the roi footprint if it would leave it. A leg that
/// folds back on itself near a wall (endpoint closer than `L/2`) is flown
/// on the opposite heading instead.
pub fn initial_leg(start: &Position, leg_length: f64, altitude: f64, roi: &Roi, rng: &mut RngStream) -> Position {
    let heading = rng.heading();
    leg_on_heading(start, heading, leg_length, altitude, roi)
}

fn leg_on_heading(start: &Position, heading: f64, leg_length: f64, altitude: f64, roi: &Roi) -> Position {
    let leg = |sign: f64| {
        roi.reflect_footprint(&Position::new(
            start.x + sign * leg_length * heading.cos(),
            start.y + sign * leg_length * heading.sin(),
            altitude,
        ))
    };
    let end = leg(1.0);
    if start.horizontal_distance(&end) < 0.5 * leg_length {
        leg(-1.0)
    } else {
        end
    }
}

/// Endpoint of a horizontal leg of length `L` from `current` toward the
/// footprint of `fused_estimate`, stopping above the estimate if it is
/// closer than `L`.
///
/// When the footprint is within `min_leg` (too close to sample a leg toward
/// it) a full leg is flown on a random heading instead. Headings within 45°
/// of the line of the leg just flown (`came_from → current`) are turned by
/// 90°, so the pooled legs never collapse onto one line.
pub fn next_leg(
    current: &Position,
    came_from: &Position,
    fused_estimate: &Position,
    leg_length: f64,
    min_leg: f64,
    roi: &Roi,
    rng: &mut RngStream,
) -> Position {
    let dx = fused_estimate.x - current.x;
    let dy = fused_estimate.y - current.y;
    let horizontal = dx.hypot(dy);
    if horizontal < min_leg.max(1e-9) {
        let mut heading = rng.heading();
        let (px, py) = (current.x - came_from.x, current.y - came_from.y);
        if px.hypot(py) > 1e-9 {
            let off_line = (heading - py.atan2(px)).sin().abs();
            if off_line < std::f64::consts::FRAC_1_SQRT_2 {
                heading += std::f64::consts::FRAC_PI_2;
            }
        }
        return leg_on_heading(current, heading, leg_length, current.z, roi);
    }
    if horizontal <= leg_length {
        return Position::new(fused_estimate.x, fused_estimate.y, current.z);
    }
    let scale = leg_length / horizontal;
    Position::new(current.x + dx * scale, current.y + dy * scale, current.z)
}

/// Readings at evenly spaced points from `from` to `to`, both endpoints
/// included. A leg that is a whole multiple of `spacing` gets exactly that
/// spacing; shorter approach legs are split into `ceil(len/spacing)` equal
/// intervals, never fewer than two.
pub fn sample_leg(
    from: &Position,
    to: &Position,
    spacing: f64,
    channel: &ChannelParams,
    source: &Position,
    rng: &mut RngStream,
) -> Result<Vec<RssiSample>> {
    let len = distance(from, to);
    if !(spacing > 0.0) || len + 1e-6 < spacing {
        return Err(Error::InsufficientData {
            needed: 2,
            got: usize::from(len > 0.0),
        });
    }
    let intervals = ((len / spacing - 1e-6).ceil() as usize).max(2);
    Ok((0..=intervals)
        .map(|k| {
            let at = from.lerp(to, k as f64 / intervals as f64);
            synth_rssi(channel, source, &at, rng)
        })
        .collect())
}

/// Stop rule after the latest iteration, if any fires.
pub fn check_termination(iterations: &[IterationRecord], mission: &MissionConfig) -> Option<Termination> {
    let last = iterations.last()?;
    if iterations.len() >= mission.max_iterations {
        return Some(Termination::MaxIters);
    }
    if iterations.len() < mission.min_iterations {
        return None;
    }
    if last.leg_end.horizontal_distance(&last.fused) < mission.sample_spacing {
        return Some(Termination::ReachedEstimate);
    }
    if iterations.len() >= 3 {
        let n = iterations.len();
        let step = |a: usize, b: usize| distance(&iterations[a].fused, &iterations[b].fused);
        if step(n - 1, n - 2) < mission.termination_epsilon && step(n - 2, n - 3) < mission.termination_epsilon {
            return Some(Termination::StepConverged);
        }
    }
    None
}

/// Run the full progressive localization for one scenario.
///
/// Random draws happen in a fixed order (initial heading, then per
/// iteration: leg readings, solver, and any fallback heading) so a seed
/// fully determines the trace.
pub fn run_localization(scenario: &Scenario, cfg: &LocalizerConfig, rng: &mut RngStream) -> Result<LocalizationTrace> {
    scenario.validate()?;
    cfg.validate()?;
    let channel = &scenario.channel;
    let mission = &scenario.mission;
    let k = kappa(channel);
    let altitude = channel.h_uav;
    let confidence_cfg = cfg.fusion.confidence_config(channel);

    let mut uav = mission.start.with_z(altitude);
    let mut leg_end = initial_leg(&uav, mission.leg_length, altitude, &scenario.roi, rng);
    let mut iterations: Vec<IterationRecord> = Vec::new();
    let mut state: Option<FusionState> = None;

    let terminated_by = loop {
        let samples = sample_leg(&uav, &leg_end, mission.sample_spacing, channel, &scenario.source, rng)?;

        let first_leg = iterations.len() + 1 - cfg.fusion.window_legs.min(iterations.len() + 1);
        let mut pooled: Vec<RssiSample> = iterations[first_leg..]
            .iter()
            .flat_map(|r| r.samples.iter().copied())
            .collect();
        pooled.extend_from_slice(&samples);

        let objective = RatioObjective::from_samples(&pooled, k, channel.d_min)?;
        // earlier estimates join the swarm so a narrow basin found once is not lost
        let seeds: Vec<Position> = match (&state, iterations.last()) {
            (Some(s), Some(last)) => vec![s.mean, last.preliminary],
            _ => Vec::new(),
        };
        let solution = pso_lm_localize_seeded(&objective, &scenario.roi, &cfg.pso, &cfg.lm, &seeds, rng);

        let reference = match (cfg.fusion.reference, &state) {
            (ConfidenceReference::PriorFused, Some(s)) => s.mean,
            _ => solution.estimate,
        };
        let confidence = segment_confidence(&samples, &reference, k, channel.d_min, &confidence_cfg)?
            .clamp(cfg.fusion.confidence_floor, 1.0);

        let next_state = match &state {
            None => kf_init(solution.estimate, confidence, cfg.fusion.p0, cfg.fusion.q)?,
            Some(s) => kf_update(s, &solution.estimate, confidence)?,
        };

        iterations.push(IterationRecord {
            index: iterations.len() + 1,
            leg_start: uav,
            leg_end,
            samples,
            preliminary: solution.estimate,
            objective_value: solution.objective_value,
            solver_converged: solution.converged,
            confidence,
            fused: next_state.mean,
            covariance_trace: next_state.covariance_trace(),
            error: distance(&next_state.mean, &scenario.source),
        });
        state = Some(next_state);
        uav = leg_end;

        if let Some(reason) = check_termination(&iterations, mission) {
            break reason;
        }
        leg_end = next_leg(
            &uav,
            &iterations.last().expect("just pushed").leg_start,
            &next_state.mean,
            mission.leg_length,
            mission.sample_spacing,
            &scenario.roi,
            rng,
        );
    };

    let last = iterations.last().expect("at least one iteration");
    Ok(LocalizationTrace {
        scenario_id: scenario.id.clone(),
        source: scenario.source,
        final_estimate: last.fused,
        final_error: last.error,
        terminated_by,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(index: usize, leg_end: Position, fused: Position) -> IterationRecord {
        IterationRecord {
            index,
            leg_start: Position::default(),
            leg_end,
            samples: Vec::new(),
            preliminary: fused,
            objective_value: 0.0,
            solver_converged: true,
            confidence: 1.0,
            fused,
            covariance_trace: 1.0,
            error: 0.0,
        }
    }

    #[test]
    fn initial_leg_geometry() {
        let roi = Roi {
            x_min: -1000.0,
            y_min: -1000.0,
            ..Roi::default()
        };
        let start = Position::new(0.0, 0.0, 100.0);
        for seed in 0..20 {
            let end = initial_leg(&start, 100.0, 100.0, &roi, &mut RngStream::new(seed));
            assert!((start.horizontal_distance(&end) - 100.0).abs() < 1e-9);
            assert_eq!(end.z, 100.0);
        }
        let a = initial_leg(&start, 100.0, 100.0, &roi, &mut RngStream::new(3));
        let b = initial_leg(&start, 100.0, 100.0, &roi, &mut RngStream::new(3));
        assert_eq!(a, b);
    }

    #[test]
    fn initial_leg_reflects_at_corner() {
        let roi = Roi::default();
        let corner = Position::new(0.0, 0.0, 100.0);
        for seed in 0..50 {
            let mut rng = RngStream::new(seed);
            let heading = rng.clone().heading();
            let end = initial_leg(&corner, 100.0, 100.0, &roi, &mut rng);
            assert!(roi.contains_footprint(&end));
            // mirrored raw endpoint: |cos|, |sin| components
            assert!((end.x - 100.0 * heading.cos().abs()).abs() < 1e-9);
            assert!((end.y - 100.0 * heading.sin().abs()).abs() < 1e-9);
        }
    }

    #[test]
    fn initial_leg_never_folds_onto_start() {
        let roi = Roi::default();
        let wall = Position::new(0.0, 600.0, 100.0);
        for seed in 0..500 {
            let end = initial_leg(&wall, 100.0, 100.0, &roi, &mut RngStream::new(seed));
            assert!(wall.horizontal_distance(&end) >= 50.0);
            assert!(roi.contains_footprint(&end));
        }
    }

    #[test]
    fn next_leg_examples() {
        let roi = Roi {
            x_min: -1000.0,
            y_min: -1000.0,
            ..Roi::default()
        };
        let mut rng = RngStream::new(0);
        let cur = Position::new(0.0, 0.0, 100.0);
        let end = next_leg(
            &cur,
            &cur,
            &Position::new(300.0, 400.0, 0.0),
            100.0,
            10.0,
            &roi,
            &mut rng,
        );
        assert!(distance(&end, &Position::new(60.0, 80.0, 100.0)) < 1e-12);

        let end = next_leg(&cur, &cur, &Position::new(24.0, 32.0, 0.0), 100.0, 10.0, &roi, &mut rng);
        assert_eq!(end, Position::new(24.0, 32.0, 100.0));

        let below = Position::new(0.0, 0.0, 0.0);
        let a = next_leg(&cur, &cur, &below, 100.0, 10.0, &roi, &mut RngStream::new(4));
        let b = next_leg(&cur, &cur, &below, 100.0, 10.0, &roi, &mut RngStream::new(4));
        assert_eq!(a, b);
        assert!((cur.horizontal_distance(&a) - 100.0).abs() < 1e-9);
        let near = Position::new(3.0, -4.0, 0.0);
        let c = next_leg(&cur, &cur, &near, 100.0, 10.0, &roi, &mut RngStream::new(4));
        assert!((cur.horizontal_distance(&c) - 100.0).abs() < 1e-9);

        // exploration never retraces the line just flown
        let came_from = Position::new(-100.0, 0.0, 100.0);
        for seed in 0..200 {
            let e = next_leg(&cur, &came_from, &near, 100.0, 10.0, &roi, &mut RngStream::new(seed));
            let angle = (e.y - cur.y).atan2(e.x - cur.x);
            assert!(
                angle.sin().abs() >= std::f64::consts::FRAC_1_SQRT_2 - 1e-12,
                "seed {seed}"
            );
        }
    }

    #[test]
    fn sample_leg_counts_and_endpoints() {
        let ch = ChannelParams {
            sigma_db: 0.0,
            ..Default::default()
        };
        let src = Position::new(500.0, 500.0, 0.0);
        let from = Position::new(0.0, 0.0, 100.0);
        let to = Position::new(60.0, 80.0, 100.0);
        let s = sample_leg(&from, &to, 10.0, &ch, &src, &mut RngStream::new(0)).unwrap();
        assert_eq!(s.len(), 11);
        assert_eq!(s[0].position, from);
        assert!(distance(&s[10].position, &to) < 1e-12);
        for w in s.windows(2) {
            assert!((distance(&w[0].position, &w[1].position) - 10.0).abs() < 1e-9);
        }
        for r in &s {
            assert_eq!(r.rssi, crate::channel::mean_rssi(&ch, &src, &r.position));
        }
        // short approach leg: equal intervals no longer than the spacing
        let s = sample_leg(
            &from,
            &Position::new(25.0, 0.0, 100.0),
            10.0,
            &ch,
            &src,
            &mut RngStream::new(0),
        )
        .unwrap();
        assert_eq!(s.len(), 4);
        let s = sample_leg(
            &from,
            &Position::new(10.0, 0.0, 100.0),
            10.0,
            &ch,
            &src,
            &mut RngStream::new(0),
        )
        .unwrap();
        assert_eq!(s.len(), 3);
        assert!(matches!(
            sample_leg(
                &from,
                &Position::new(5.0, 0.0, 100.0),
                10.0,
                &ch,
                &src,
                &mut RngStream::new(0)
            ),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn termination_rules() {
        let mission = MissionConfig {
            max_iterations: 1,
            ..Default::default()
        };
        let far = Position::new(500.0, 500.0, 0.0);
        let uav = Position::new(0.0, 0.0, 100.0);
        assert_eq!(
            check_termination(&[record(1, uav, far)], &mission),
            Some(Termination::MaxIters)
        );

        let mission = MissionConfig {
            min_iterations: 1,
            ..Default::default()
        };
        assert_eq!(check_termination(&[record(1, uav, far)], &mission), None);
        let recs = [record(1, uav, far), record(2, uav, far), record(3, uav, far)];
        assert_eq!(check_termination(&recs, &mission), Some(Termination::StepConverged));
        assert_eq!(check_termination(&recs[..2], &mission), None);

        let hover = Position::new(503.0, 496.0, 100.0);
        assert_eq!(
            check_termination(&[record(1, hover, far)], &mission),
            Some(Termination::ReachedEstimate)
        );
        assert_eq!(check_termination(&[], &mission), None);

        let gated = MissionConfig {
            min_iterations: 4,
            ..Default::default()
        };
        assert_eq!(check_termination(&recs, &gated), None);
        assert_eq!(check_termination(&[record(1, hover, far)], &gated), None);
    }

    #[test]
    fn single_iteration_trace() {
        let scenario = Scenario {
            mission: MissionConfig {
                max_iterations: 1,
                ..Default::default()
            },
            ..Default::default()
        };
        let trace = run_localization(&scenario, &LocalizerConfig::default(), &mut RngStream::new(1)).unwrap();
        assert_eq!(trace.iterations.len(), 1);
        assert_eq!(trace.terminated_by, Termination::MaxIters);
        assert_eq!(trace.final_estimate, trace.iterations[0].preliminary);
        assert_eq!(trace.iterations[0].samples.len(), 11);
        assert_eq!(trace.waypoints().len(), 2);
    }

    #[test]
    fn trace_round_trips_through_json() {
        let trace = run_localization(
            &Scenario::default(),
            &LocalizerConfig::default(),
            &mut RngStream::new(2),
        )
        .unwrap();
        let text = serde_json::to_string(&trace).unwrap();
        let back: LocalizationTrace = serde_json::from_str(&text).unwrap();
        assert_eq!(back, trace);
        let again = run_localization(
            &Scenario::default(),
            &LocalizerConfig::default(),
            &mut RngStream::new(2),
        )
        .unwrap();
        assert_eq!(again.to_csv(), trace.to_csv());
        assert_eq!(trace.to_csv().lines().count(), trace.iterations.len() + 1);
    }

    #[test]
    fn covariance_trace_non_increasing_without_process_noise() {
        let cfg = LocalizerConfig {
            fusion: FusionConfig {
                q: 0.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let scenario = Scenario {
            channel: ChannelParams {
                sigma_db: 2.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let trace = run_localization(&scenario, &cfg, &mut RngStream::new(6)).unwrap();
        assert!(trace
            .iterations
            .windows(2)
            .all(|w| w[1].covariance_trace <= w[0].covariance_trace));
    }

    #[test]
    fn legs_have_nominal_length_except_approach() {
        let scenario = Scenario {
            channel: ChannelParams {
                sigma_db: 1.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let trace = run_localization(&scenario, &LocalizerConfig::default(), &mut RngStream::new(8)).unwrap();
        for (i, r) in trace.iterations.iter().enumerate() {
            let len = r.leg_start.horizontal_distance(&r.leg_end);
            if i > 0 {
                let prev = &trace.iterations[i - 1];
                let approach = r.leg_end.horizontal_distance(&prev.fused) < 1e-9;
                assert!(approach || (len - 100.0).abs() < 1e-9, "leg {i} length {len}");
            }
        }
    }
}
