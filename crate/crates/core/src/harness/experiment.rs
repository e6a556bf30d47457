//! Seeded trial ensembles, the per-iteration results table and its CSV forms.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::anneal::run_lock;
use crate::device::noiseless_reading;
use crate::disturbance::{
    recovery_after, Disturbance, DisturbanceKind, DisturbedObjective, TrialRngs,
};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, Variant};
use crate::jones::{random_sop_with, JonesVector};

/// Column order of the per-iteration CSV.
pub const CSV_HEADER: &str =
    "variant,trial,iteration,temperature,step_rad,i_px,i_py,er_db,accepted";
/// Column order of the aggregate CSV.
pub const AGG_HEADER: &str = "variant,iteration,er_p10,er_median,er_p90";

/// Env var capping the worker threads of an experiment.
pub const THREADS_ENV: &str = "POLARLOCK_THREADS";

/// Float rendering used in every output file: 9 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.8e}")
}

/// Rounds `x` to the value its CSV rendering parses back to.
pub fn quantize(x: f64) -> f64 {
    fmt_float(x).parse().unwrap_or(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    Serial,
    Threads(usize),
    /// Rayon's default pool.
    #[default]
    Auto,
}

impl Parallelism {
    /// Reads [`THREADS_ENV`]; unset or unparsable means [`Parallelism::Auto`].
    pub fn from_env() -> Self {
        match std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
        {
            Some(0) | None => Parallelism::Auto,
            Some(1) => Parallelism::Serial,
            Some(n) => Parallelism::Threads(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    /// Index into [`ResultsTable::variants`].
    pub variant: usize,
    pub trial: usize,
    pub iteration: usize,
    pub temperature: f64,
    pub step_rad: f64,
    pub i_px: f64,
    pub i_py: f64,
    pub er_db: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialInfo {
    pub variant: usize,
    pub trial: usize,
    pub seed: u64,
    pub sop: JonesVector,
    pub best_i_px: f64,
    /// Noiseless ER at the final setpoint for the final input SOP.
    pub locked_er_db: f64,
    pub relocks: Vec<usize>,
    pub recovery_iterations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub variant: usize,
    pub iteration: usize,
    pub er_p10: f64,
    pub er_median: f64,
    pub er_p90: f64,
}

/// Every iteration of every trial, sorted by (variant, trial, iteration).
///
/// Float fields are stored already rounded to their CSV rendering, so
/// statistics recomputed from a written file match the in-memory ones.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultsTable {
    pub variants: Vec<String>,
    pub trials: usize,
    pub iterations: usize,
    pub rows: Vec<ResultRow>,
    pub trial_info: Vec<TrialInfo>,
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 1].
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Percentile bands of ER per (variant, iteration) from raw rows.
pub fn aggregate_rows(variant_count: usize, rows: &[ResultRow]) -> Vec<AggregateRow> {
    let mut groups: std::collections::BTreeMap<(usize, usize), Vec<f64>> = Default::default();
    for r in rows.iter().filter(|r| r.variant < variant_count) {
        groups
            .entry((r.variant, r.iteration))
            .or_default()
            .push(r.er_db);
    }
    groups
        .into_iter()
        .map(|((variant, iteration), mut ers)| {
            ers.sort_by(f64::total_cmp);
            AggregateRow {
                variant,
                iteration,
                er_p10: percentile_sorted(&ers, 0.1),
                er_median: percentile_sorted(&ers, 0.5),
                er_p90: percentile_sorted(&ers, 0.9),
            }
        })
        .collect()
}

impl ResultsTable {
    pub fn aggregates(&self) -> Vec<AggregateRow> {
        aggregate_rows(self.variants.len(), &self.rows)
    }

    pub fn variant_index(&self, label: &str) -> Option<usize> {
        self.variants.iter().position(|v| v == label)
    }

    pub fn rows_for(&self, variant: usize) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(move |r| r.variant == variant)
    }

    /// Median ER across trials at each iteration (index 0 = iteration 1).
    pub fn median_curve(&self, variant: usize) -> Vec<f64> {
        self.aggregates()
            .into_iter()
            .filter(|a| a.variant == variant)
            .map(|a| a.er_median)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                self.variants[r.variant],
                r.trial,
                r.iteration,
                fmt_float(r.temperature),
                fmt_float(r.step_rad),
                fmt_float(r.i_px),
                fmt_float(r.i_py),
                fmt_float(r.er_db),
                u8::from(r.accepted),
            )?;
        }
        Ok(())
    }

    pub fn write_aggregates_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{AGG_HEADER}")?;
        for a in self.aggregates() {
            writeln!(
                w,
                "{},{},{},{},{}",
                self.variants[a.variant],
                a.iteration,
                fmt_float(a.er_p10),
                fmt_float(a.er_median),
                fmt_float(a.er_p90),
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

/// Where the three output files of a run go.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputPaths {
    pub rows: PathBuf,
    pub aggregates: PathBuf,
    pub summary: PathBuf,
}

impl OutputPaths {
    /// `out.csv` → `out.csv`, `out.agg.csv`, `out.summary.txt`.
    pub fn for_csv(path: &Path) -> Self {
        let stem = path.with_extension("");
        let with = |suffix: &str| {
            let mut s = stem.clone().into_os_string();
            s.push(suffix);
            PathBuf::from(s)
        };
        Self {
            rows: path.to_path_buf(),
            aggregates: with(".agg.csv"),
            summary: with(".summary.txt"),
        }
    }
}

/// Writes rows, aggregates and `summary` next to each other.
pub fn write_outputs(table: &ResultsTable, path: &Path, summary: &str) -> Result<OutputPaths> {
    let paths = OutputPaths::for_csv(path);
    let create = |p: &Path| {
        File::create(p)
            .map(BufWriter::new)
            .map_err(|e| Error::io(p, e))
    };

    let mut w = create(&paths.rows)?;
    table
        .write_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&paths.rows, e))?;

    let mut w = create(&paths.aggregates)?;
    table
        .write_aggregates_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&paths.aggregates, e))?;

    std::fs::write(&paths.summary, summary).map_err(|e| Error::io(&paths.summary, e))?;
    Ok(paths)
}

struct TrialOutput {
    rows: Vec<ResultRow>,
    info: TrialInfo,
}

fn run_trial(
    cfg: &ExperimentConfig,
    variant_idx: usize,
    variant: Variant,
    trial: usize,
) -> Result<TrialOutput> {
    let seed = cfg.base_seed.wrapping_add(trial as u64);
    let mut rngs = TrialRngs::new(seed);
    let sop = random_sop_with(&mut rngs.sop);
    let anneal = variant.anneal_config(&cfg.anneal, &cfg.device.tps);
    let mut objective = DisturbedObjective {
        sop,
        params: cfg.device,
        noise: rngs.noise,
        disturbance: Disturbance::new(cfg.disturbance, rngs.disturbance),
    };
    let trace = run_lock(
        &mut objective,
        &anneal,
        &cfg.device.tps,
        &mut rngs.controller,
    )?;

    let locked_er_db = noiseless_reading(&objective.sop, &trace.best_phases, &cfg.device).er_db();
    let recovery_iterations = (cfg.disturbance.kind == DisturbanceKind::Jump)
        .then(|| {
            recovery_after(
                &trace,
                cfg.disturbance.jump_at,
                cfg.disturbance.recovery_threshold_db,
            )
        })
        .flatten();
    let rows = trace
        .steps
        .iter()
        .map(|s| ResultRow {
            variant: variant_idx,
            trial,
            iteration: s.iteration,
            temperature: quantize(s.temperature),
            step_rad: quantize(s.step_rad),
            i_px: quantize(s.sample.i_px),
            i_py: quantize(s.sample.i_py),
            er_db: quantize(s.er_db),
            accepted: s.accepted,
        })
        .collect();
    Ok(TrialOutput {
        rows,
        info: TrialInfo {
            variant: variant_idx,
            trial,
            seed,
            sop,
            best_i_px: trace.best_i_px,
            locked_er_db: quantize(locked_er_db),
            relocks: trace.relocks,
            recovery_iterations,
        },
    })
}

/// Runs every (variant, trial) pair. Trial `t` uses seed `base_seed + t` for
/// every variant, so variants see the same input SOPs and noise streams.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultsTable> {
    run_experiment_with(cfg, Parallelism::from_env())
}

pub fn run_experiment_with(cfg: &ExperimentConfig, par: Parallelism) -> Result<ResultsTable> {
    cfg.validate()?;
    let jobs: Vec<(usize, Variant, usize)> = cfg
        .variants
        .iter()
        .enumerate()
        .flat_map(|(vi, v)| (0..cfg.trials).map(move |t| (vi, *v, t)))
        .collect();

    let outputs: Vec<TrialOutput> = match par {
        Parallelism::Serial => jobs
            .iter()
            .map(|&(vi, v, t)| run_trial(cfg, vi, v, t))
            .collect::<Result<_>>()?,
        Parallelism::Auto => jobs
            .par_iter()
            .map(|&(vi, v, t)| run_trial(cfg, vi, v, t))
            .collect::<Result<_>>()?,
        Parallelism::Threads(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid(THREADS_ENV, e.to_string()))?;
            pool.install(|| {
                jobs.par_iter()
                    .map(|&(vi, v, t)| run_trial(cfg, vi, v, t))
                    .collect::<Result<_>>()
            })?
        }
    };

    let mut rows = Vec::with_capacity(jobs.len() * cfg.anneal.total_iterations());
    let mut trial_info = Vec::with_capacity(jobs.len());
    for out in outputs {
        rows.extend(out.rows);
        trial_info.push(out.info);
    }
    Ok(ResultsTable {
        variants: cfg.variants.iter().map(Variant::to_string).collect(),
        trials: cfg.trials,
        iterations: cfg.anneal.total_iterations(),
        rows,
        trial_info,
    })
}
