//! Monte Carlo runner: every (SNR, trial) pair is an independent work item.

use std::collections::BTreeMap;

use rayon::prelude::*;
use rfseeker_core::baselines::{
    fixed_path_samples, single_shot_pso_lm, trilateration, weighted_centroid, BaselineMethod,
};
use rfseeker_core::channel::{kappa, sigma_for_snr, RssiSample};
use rfseeker_core::progressive::{run_localization, LocalizationTrace};
use rfseeker_core::rng::label_key;
use rfseeker_core::scenario::Scenario;
use rfseeker_core::{distance, rmse, Position, RngStream};

use crate::config::{ExperimentConfig, Method};
use crate::error::Result;

/// One final or per-iteration error of one method in one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub method: String,
    pub snr_db: f64,
    pub iteration: usize,
    pub trial: usize,
    pub error_m: f64,
}

/// RMSE over the trials present for one (method, SNR, iteration) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RmseRow {
    pub method: String,
    pub snr_db: f64,
    pub iteration: usize,
    pub rmse_m: f64,
    pub trials: usize,
}

/// A method that produced no estimate for one trial; its cells are missing.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub method: String,
    pub snr_db: f64,
    pub trial: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentReport {
    pub raw: Vec<RawRow>,
    pub rmse: Vec<RmseRow>,
    pub failures: Vec<TrialFailure>,
}

impl ExperimentReport {
    /// Build the aggregated rows from raw rows listed in
    /// (method, snr, iteration, trial) order.
    pub fn from_raw(raw: Vec<RawRow>, failures: Vec<TrialFailure>) -> Self {
        let mut rmse_rows = Vec::new();
        let mut start = 0;
        while start < raw.len() {
            let head = &raw[start];
            let end = start
                + raw[start..]
                    .iter()
                    .take_while(|r| {
                        r.method == head.method
                            && r.snr_db.to_bits() == head.snr_db.to_bits()
                            && r.iteration == head.iteration
                    })
                    .count();
            let errors: Vec<f64> = raw[start..end].iter().map(|r| r.error_m).collect();
            rmse_rows.push(RmseRow {
                method: head.method.clone(),
                snr_db: head.snr_db,
                iteration: head.iteration,
                rmse_m: rmse(&errors).expect("errors are distances"),
                trials: errors.len(),
            });
            start = end;
        }
        Self {
            raw,
            rmse: rmse_rows,
            failures,
        }
    }

    pub fn rmse_of(&self, method: &str, snr_db: f64, iteration: usize) -> Option<&RmseRow> {
        self.rmse
            .iter()
            .find(|r| r.method == method && r.snr_db.to_bits() == snr_db.to_bits() && r.iteration == iteration)
    }
}

/// Ground truth for one trial: the configured source, or a uniform draw over
/// the roi footprint at ground level. The draw depends only on the seed and
/// the trial so every SNR point sees the same geometry.
pub fn trial_scenario(cfg: &ExperimentConfig, trial: usize, sigma_db: f64) -> Scenario {
    let mut scenario = cfg.scenario.clone();
    scenario.channel.sigma_db = sigma_db;
    if cfg.randomize_source {
        let roi = &scenario.roi;
        let mut rng = RngStream::derive(cfg.master_seed, &[label_key("source"), trial as u64]);
        let x = rng.uniform_in(roi.x_min, roi.x_max);
        let y = rng.uniform_in(roi.y_min, roi.y_max);
        scenario.source = roi.clamp(&Position::new(x, y, 0.0));
    }
    scenario
}

fn stream(cfg: &ExperimentConfig, snr_index: usize, label: &str, trial: usize, extra: &[u64]) -> RngStream {
    let mut keys = vec![snr_index as u64, label_key(label), trial as u64];
    keys.extend_from_slice(extra);
    RngStream::derive(cfg.master_seed, &keys)
}

struct TrialOutcome {
    /// ((method slot, iteration), error)
    errors: Vec<((usize, usize), f64)>,
    failures: Vec<TrialFailure>,
}

fn run_trial(cfg: &ExperimentConfig, snr_index: usize, trial: usize) -> TrialOutcome {
    let snr_db = cfg.snr_sweep[snr_index];
    let sigma = sigma_for_snr(snr_db, cfg.sigma_ref_db);
    let mut scenario = trial_scenario(cfg, trial, sigma);
    if cfg.fly_full_cap {
        scenario.mission.min_iterations = scenario.mission.max_iterations;
    }
    let mut out = TrialOutcome {
        errors: Vec::new(),
        failures: Vec::new(),
    };
    let fail = |method: &str, message: String| TrialFailure {
        method: method.to_string(),
        snr_db,
        trial,
        message,
    };

    let localizer = cfg.localizer();
    let mut rng = stream(cfg, snr_index, Method::Progressive.id(), trial, &[]);
    let trace = match run_localization(&scenario, &localizer, &mut rng) {
        Ok(t) => t,
        Err(e) => {
            // without a mission there is no sampling budget for anyone
            for m in &cfg.methods {
                out.failures
                    .push(fail(m.id(), format!("progressive mission failed: {e}")));
            }
            return out;
        }
    };
    let slot = |m: Method| cfg.methods.iter().position(|x| *x == m).expect("configured method");
    let progressive = slot(Method::Progressive);
    for k in 1..=scenario.mission.max_iterations {
        out.errors.push(((progressive, k), trace.error_at(k)));
    }

    let baselines: Vec<BaselineMethod> = cfg
        .methods
        .iter()
        .filter_map(|m| match m {
            Method::Baseline(b) => Some(*b),
            Method::Progressive => None,
        })
        .collect();
    if baselines.is_empty() {
        return out;
    }
    let caps = cfg.caps();
    let max_budget = caps.iter().map(|&c| trace.samples_through(c)).max().unwrap_or(0);
    let first = &trace.iterations[0];
    let mut path_rng = stream(cfg, snr_index, "fixed_path", trial, &[]);
    let samples = match fixed_path_samples(
        &first.leg_start,
        &first.leg_end,
        scenario.mission.sample_spacing,
        &scenario.roi,
        &scenario.channel,
        &scenario.source,
        max_budget,
        &mut path_rng,
    ) {
        Ok(s) => s,
        Err(e) => {
            for b in &baselines {
                out.failures.push(fail(b.id(), format!("fixed path: {e}")));
            }
            return out;
        }
    };

    for &cap in &caps {
        let budget = &samples[..trace.samples_through(cap)];
        for &b in &baselines {
            let mut rng = stream(cfg, snr_index, b.id(), trial, &[cap as u64]);
            match run_baseline(b, cfg, &scenario, budget, &mut rng) {
                Ok(est) => out
                    .errors
                    .push(((slot(Method::Baseline(b)), cap), distance(&est, &scenario.source))),
                Err(e) => out.failures.push(fail(b.id(), format!("iteration cap {cap}: {e}"))),
            }
        }
    }
    out
}

fn run_baseline(
    method: BaselineMethod,
    cfg: &ExperimentConfig,
    scenario: &Scenario,
    samples: &[RssiSample],
    rng: &mut RngStream,
) -> rfseeker_core::Result<Position> {
    let roi = &scenario.roi;
    let channel = &scenario.channel;
    match method {
        BaselineMethod::SingleShotPsoLm => {
            single_shot_pso_lm(samples, channel, roi, &cfg.pso, &cfg.lm, rng).map(|r| r.estimate)
        }
        BaselineMethod::Trilateration => trilateration(samples, kappa(channel), roi, cfg.baselines.triple_cap, rng),
        BaselineMethod::WeightedCentroid => weighted_centroid(
            samples,
            kappa(channel),
            cfg.baselines.centroid_iters,
            roi,
            channel.d_min,
        ),
    }
}

/// Run every configured method over the SNR sweep. Trials run in parallel;
/// results are collected by cell so the report does not depend on
/// scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let items: Vec<(usize, usize)> = (0..cfg.snr_sweep.len())
        .flat_map(|s| (0..cfg.trials).map(move |t| (s, t)))
        .collect();
    let outcomes: Vec<((usize, usize), TrialOutcome)> =
        items.par_iter().map(|&(s, t)| ((s, t), run_trial(cfg, s, t))).collect();

    // (method slot, snr index, iteration, trial) -> error
    let mut cells: BTreeMap<(usize, usize, usize, usize), f64> = BTreeMap::new();
    let mut failures = Vec::new();
    for ((s, t), outcome) in outcomes {
        for ((m, k), e) in outcome.errors {
            cells.insert((m, s, k, t), e);
        }
        failures.extend(outcome.failures);
    }
    let raw = cells
        .into_iter()
        .map(|((m, s, k, t), e)| RawRow {
            method: cfg.methods[m].id().to_string(),
            snr_db: cfg.snr_sweep[s],
            iteration: k,
            trial: t,
            error_m: e,
        })
        .collect();
    Ok(ExperimentReport::from_raw(raw, failures))
}

/// The single Fig.-4-style mission: configured source, mission stopping
/// rules as configured, sigma from `snr_db`.
pub fn trajectory_run(cfg: &ExperimentConfig, snr_db: f64) -> Result<LocalizationTrace> {
    cfg.validate()?;
    let mut scenario = cfg.scenario.clone();
    scenario.channel.sigma_db = sigma_for_snr(snr_db, cfg.sigma_ref_db);
    let mut rng = RngStream::derive(cfg.master_seed, &[label_key("trajectory")]);
    Ok(run_localization(&scenario, &cfg.localizer(), &mut rng)?)
}
