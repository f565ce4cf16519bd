//! Experiment configuration: one TOML document, every key optional.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use rfseeker_core::baselines::{BaselineConfig, BaselineMethod};
use rfseeker_core::progressive::{FusionConfig, LocalizerConfig};
use rfseeker_core::scenario::Scenario;
use rfseeker_core::solver::{LmConfig, PsoConfig};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// A localization method the harness can benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Progressive,
    Baseline(BaselineMethod),
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Progressive,
        Method::Baseline(BaselineMethod::SingleShotPsoLm),
        Method::Baseline(BaselineMethod::Trilateration),
        Method::Baseline(BaselineMethod::WeightedCentroid),
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Method::Progressive => "progressive",
            Method::Baseline(b) => b.id(),
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.id() == id)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl TryFrom<String> for Method {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        Method::from_id(&s).ok_or_else(|| {
            let known: Vec<&str> = Method::ALL.iter().map(|m| m.id()).collect();
            format!("unknown method `{s}` (expected one of {})", known.join(", "))
        })
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.id().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub trials: usize,
    pub methods: Vec<Method>,
    /// SNR points in dB; `inf` means noiseless.
    pub snr_sweep: Vec<f64>,
    /// Iteration counts at which the baselines are evaluated on the sampling
    /// budget the progressive mission had used by then. Empty means
    /// `[scenario.mission.max_iterations]`.
    pub iteration_caps: Vec<usize>,
    pub output_dir: PathBuf,
    /// Redraw the source uniformly over the roi footprint (z = 0) for every
    /// trial instead of using `scenario.source`.
    pub randomize_source: bool,
    /// Shadowing sigma at 0 dB SNR.
    pub sigma_ref_db: f64,
    /// Monte Carlo missions fly every iteration up to the cap; only the cap
    /// ends them. The single trajectory run always uses the mission's own
    /// stopping rules.
    pub fly_full_cap: bool,
    /// SNR of the single trajectory run written to `trajectory.csv`.
    pub trajectory_snr_db: f64,
    /// Geometry, channel and mission. `scenario.channel.sigma_db` is replaced
    /// by the sigma of each SNR point.
    pub scenario: Scenario,
    pub pso: PsoConfig,
    pub lm: LmConfig,
    pub fusion: FusionConfig,
    pub baselines: BaselineConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 1,
            trials: 100,
            methods: Method::ALL.to_vec(),
            snr_sweep: vec![0.0, 10.0, 20.0, f64::INFINITY],
            iteration_caps: Vec::new(),
            output_dir: PathBuf::from("out"),
            randomize_source: true,
            sigma_ref_db: 4.0,
            fly_full_cap: true,
            trajectory_snr_db: 20.0,
            scenario: Scenario::default(),
            pso: PsoConfig::default(),
            lm: LmConfig::default(),
            fusion: FusionConfig::default(),
            baselines: BaselineConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub master_seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub trials: Option<usize>,
    pub snr_sweep: Option<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn localizer(&self) -> LocalizerConfig {
        LocalizerConfig {
            pso: self.pso,
            lm: self.lm,
            fusion: self.fusion,
        }
    }

    /// Iteration caps with the empty default resolved.
    pub fn caps(&self) -> Vec<usize> {
        if self.iteration_caps.is_empty() {
            vec![self.scenario.mission.max_iterations]
        } else {
            self.iteration_caps.clone()
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.master_seed {
            self.master_seed = seed;
        }
        if let Some(dir) = &o.output_dir {
            self.output_dir = dir.clone();
        }
        if let Some(trials) = o.trials {
            self.trials = trials;
        }
        if let Some(snr) = &o.snr_sweep {
            self.snr_sweep = snr.clone();
        }
    }

    /// Fill in derived defaults and check every invariant. Errors name the
    /// offending key.
    pub fn resolve(mut self) -> Result<Self> {
        self.iteration_caps = self.caps();
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: String| Err(HarnessError::Config(format!("invalid `{key}`: {reason}")));
        if self.trials == 0 {
            return bad("trials", "must be >= 1".into());
        }
        if !self.methods.contains(&Method::Progressive) {
            return bad("methods", "must include `progressive`".into());
        }
        if self.methods.iter().collect::<BTreeSet<_>>().len() != self.methods.len() {
            return bad("methods", "contains duplicates".into());
        }
        if self.snr_sweep.is_empty() {
            return bad("snr_sweep", "must not be empty".into());
        }
        for &snr in &self.snr_sweep {
            if snr.is_nan() || snr == f64::NEG_INFINITY {
                return bad("snr_sweep", format!("{snr} is not a usable SNR"));
            }
        }
        if self
            .snr_sweep
            .iter()
            .map(|s| s.to_bits())
            .collect::<BTreeSet<_>>()
            .len()
            != self.snr_sweep.len()
        {
            return bad("snr_sweep", "contains duplicates".into());
        }
        if self.trajectory_snr_db.is_nan() || self.trajectory_snr_db == f64::NEG_INFINITY {
            return bad("trajectory_snr_db", "is not a usable SNR".into());
        }
        if !(self.sigma_ref_db > 0.0 && self.sigma_ref_db.is_finite()) {
            return bad("sigma_ref_db", "must be finite and > 0".into());
        }
        let max = self.scenario.mission.max_iterations;
        let caps = self.caps();
        for &cap in &caps {
            if cap == 0 || cap > max {
                return bad(
                    "iteration_caps",
                    format!("cap {cap} is outside 1..={max} (scenario.mission.max_iterations)"),
                );
            }
        }
        if caps.iter().collect::<BTreeSet<_>>().len() != caps.len() {
            return bad("iteration_caps", "contains duplicates".into());
        }
        self.scenario.validate().map_err(|e| prefixed("scenario", e))?;
        self.localizer().validate().map_err(|e| prefixed("", e))?;
        self.baselines.validate().map_err(|e| prefixed("", e))?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config is always representable as TOML")
    }
}

fn prefixed(prefix: &str, e: rfseeker_core::Error) -> HarnessError {
    match e {
        rfseeker_core::Error::InvalidParameter { key, reason } if !prefix.is_empty() => {
            HarnessError::Config(format!("invalid `{prefix}.{key}`: {reason}"))
        }
        rfseeker_core::Error::InvalidParameter { key, reason } => {
            HarnessError::Config(format!("invalid `{key}`: {reason}"))
        }
        other => HarnessError::Config(other.to_string()),
    }
}

/// Parse a TOML document, apply overrides, resolve defaults and validate.
/// Syntax and unknown-key errors carry the line and column.
pub fn parse_config(text: &str, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
    cfg.apply(overrides);
    cfg.resolve()
}

/// [`parse_config`] on a file; `None` means an empty document.
pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    parse_config(&text, overrides).map_err(|e| match (e, path) {
        (HarnessError::Config(msg), Some(p)) => HarnessError::Config(format!("{}: {msg}", p.display())),
        (e, _) => e,
    })
}
