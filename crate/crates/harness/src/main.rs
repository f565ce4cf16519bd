use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rfseeker::output::{RESOLVED_CONFIG_FILE, TRACE_FILE, TRAJECTORY_FILE};
use rfseeker::{emit_csv, emit_trajectory, load_config, run_experiment, trajectory_run};
use rfseeker::{ExperimentConfig, HarnessError, Overrides, Result};

/// Progressive RSSI interference-source localization experiments.
#[derive(Debug, Parser)]
#[command(name = "rfseeker", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the Monte Carlo sweep and write raw.csv, rmse.csv and trajectory.csv.
    Run(Common),
    /// Fly one seeded mission and write its trajectory.
    Trace(Common),
    /// Check a config file and print the resolved configuration.
    Validate(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// TOML experiment config; all keys are optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, env = "RFSEEKER_SEED")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trials per SNR point.
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated SNR points in dB (`inf` for noiseless). `trace` uses
    /// the first one.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<f64>>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let overrides = Overrides {
            master_seed: self.seed,
            output_dir: self.out.clone(),
            trials: self.trials,
            snr_sweep: self.snr.clone(),
        };
        load_config(self.config.as_deref(), &overrides)
    }
}

fn write_resolved(cfg: &ExperimentConfig) -> Result<()> {
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io {
        path: dir.clone(),
        source: e,
    })?;
    let path = dir.join(RESOLVED_CONFIG_FILE);
    std::fs::write(&path, cfg.to_toml()).map_err(|e| HarnessError::Io { path, source: e })
}

fn run(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    write_resolved(&cfg)?;
    let started = Instant::now();
    let report = run_experiment(&cfg)?;
    let (raw, rmse) = emit_csv(&report, &cfg.output_dir)?;
    let trace = trajectory_run(&cfg, cfg.trajectory_snr_db)?;
    let trajectory = cfg.output_dir.join(TRAJECTORY_FILE);
    emit_trajectory(&trace, &trajectory)?;

    let caps = cfg.caps();
    let last = *caps.iter().max().expect("resolved caps are non-empty");
    println!("rmse at iteration {last} (m):");
    for &snr in &cfg.snr_sweep {
        let cells: Vec<String> = cfg
            .methods
            .iter()
            .map(|m| match report.rmse_of(m.id(), snr, last) {
                Some(r) => format!("{m}={:.2}", r.rmse_m),
                None => format!("{m}=n/a"),
            })
            .collect();
        println!("  snr {snr:>5} dB  {}", cells.join("  "));
    }
    if !report.failures.is_empty() {
        eprintln!("{} method runs produced no estimate:", report.failures.len());
        for f in report.failures.iter().take(10) {
            eprintln!("  {} snr={} trial={}: {}", f.method, f.snr_db, f.trial, f.message);
        }
    }
    for p in [raw.as_path(), rmse.as_path(), trajectory.as_path()] {
        println!("wrote {}", p.display());
    }
    println!("finished in {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}

fn trace(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    write_resolved(&cfg)?;
    let snr = common
        .snr
        .as_ref()
        .and_then(|s| s.first().copied())
        .unwrap_or(cfg.trajectory_snr_db);
    let trace = trajectory_run(&cfg, snr)?;
    let trajectory = cfg.output_dir.join(TRAJECTORY_FILE);
    emit_trajectory(&trace, &trajectory)?;
    let full = cfg.output_dir.join(TRACE_FILE);
    std::fs::write(&full, trace.to_csv()).map_err(|e| HarnessError::Io {
        path: full.clone(),
        source: e,
    })?;
    println!(
        "{} iterations, stopped by {}, final error {:.3} m",
        trace.iterations.len(),
        trace.terminated_by.as_str(),
        trace.final_error
    );
    for p in [trajectory.as_path(), full.as_path()] {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn validate(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let source = common.config.as_deref().unwrap_or(Path::new("<defaults>"));
    println!("# {} is valid; resolved configuration:", source.display());
    print!("{}", cfg.to_toml());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Run(c) => run(c),
        Command::Trace(c) => trace(c),
        Command::Validate(c) => validate(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
