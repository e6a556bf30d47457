use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use num_complex::Complex64;

use polarlock::harness::experiment::write_outputs;
use polarlock::harness::identity::{all_passed, identity_suite};
use polarlock::harness::{oracle_best, run_experiment, summarize, ExperimentConfig};
use polarlock::jones::JonesVector;
use polarlock::Error;

#[derive(Parser)]
#[command(
    name = "polarlock",
    version,
    about = "Polarization-lock simulator and experiment runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML config; all keys optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV (overrides `output_path`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    /// Base seed (overrides `base_seed`).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment and write CSV, aggregates and summary.
    Run(Common),
    /// Best reachable x-port intensity for one input SOP on a noiseless device.
    Oracle {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Input SOP as `ex_re,ex_im,ey_re,ey_im`; normalized before use.
        #[arg(long, allow_hyphen_values = true)]
        sop: String,
    },
    /// Repeat `run` once per value of one config key.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Key to vary, bare (`noise_sigma`) or dotted (`device.noise_sigma`).
        #[arg(long)]
        key: String,
        /// Comma-separated values.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
    },
    /// Check the Jones algebra and actuator arithmetic.
    Validate {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
}

/// Exit code for a failed `validate`.
const EXIT_CHECK_FAILED: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.output_path = out.clone();
    }
    if let Some(t) = common.trials {
        cfg.trials = t;
    }
    if let Some(s) = common.seed {
        cfg.base_seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_one(cfg: &ExperimentConfig) -> Result<(), Error> {
    let table = run_experiment(cfg)?;
    let summary = summarize(&table)?;
    let paths = write_outputs(&table, &cfg.output_path, &summary)?;
    print!("{summary}");
    eprintln!("wrote {}", paths.rows.display());
    Ok(())
}

fn sweep_path(base: &Path, key: &str, value: &str) -> PathBuf {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep");
    let clean: String = format!("{key}_{value}")
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    base.with_file_name(format!("{stem}_{clean}.csv"))
}

fn parse_sop(raw: &str) -> Result<JonesVector, Error> {
    let parts: Vec<f64> = raw
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| Error::InvalidParam {
            key: "sop".into(),
            reason: e.to_string(),
        })?;
    let [a, b, c, d] = parts[..] else {
        return Err(Error::InvalidParam {
            key: "sop".into(),
            reason: format!("expected 4 numbers, got {}", parts.len()),
        });
    };
    JonesVector::new(Complex64::new(a, b), Complex64::new(c, d)).normalized()
}

fn dispatch(cmd: Command) -> Result<ExitCode, Error> {
    match cmd {
        Command::Run(common) => {
            run_one(&load(&common)?)?;
        }
        Command::Oracle { config, sop } => {
            let cfg = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::default(),
            };
            let sop = parse_sop(&sop)?;
            let r = oracle_best(&sop, &cfg.device.noiseless())?;
            println!("intensity: {:.12}", r.intensity);
            println!("grid_intensity: {:.12}", r.grid_intensity);
            let [t1, t2, t3, t4] = r.phases.0;
            println!("phases: {t1:.6},{t2:.6},{t3:.6},{t4:.6}");
        }
        Command::Sweep {
            common,
            key,
            values,
        } => {
            let base = load(&common)?;
            for value in values.split(',').map(str::trim).filter(|v| !v.is_empty()) {
                let mut cfg = base.with_override(&key, value)?;
                cfg.output_path = sweep_path(&base.output_path, &key, value);
                println!("# {key} = {value}");
                run_one(&cfg)?;
            }
        }
        Command::Validate { samples } => {
            let checks = identity_suite(samples, 0);
            for c in &checks {
                println!("{c}");
            }
            if !all_passed(&checks) {
                return Ok(ExitCode::from(EXIT_CHECK_FAILED));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
