//! Per-variant statistics as `key: value` lines.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::error::{Error, Result};
use crate::harness::experiment::{percentile_sorted, ResultsTable};

/// ER threshold for the crossing statistic, dB.
pub const CROSSING_DB: f64 = 25.0;

#[derive(Debug, Clone, PartialEq)]
pub struct VariantSummary {
    pub label: String,
    pub trials: usize,
    pub median_final_er_db: f64,
    pub median_er_db_at_100: Option<f64>,
    /// Median over trials of the noiseless ER at the final setpoint.
    pub median_locked_er_db: f64,
    /// First iteration at which the median ER reaches [`CROSSING_DB`].
    pub crossing_25db: Option<usize>,
    pub acceptance_rate: f64,
    /// Trials that recovered after a jump, out of `trials`; `None` without a jump.
    pub recovered: Option<usize>,
    pub median_recovery_iterations: Option<f64>,
}

pub fn variant_summaries(table: &ResultsTable) -> Result<Vec<VariantSummary>> {
    let has_jump = table
        .trial_info
        .iter()
        .any(|t| t.recovery_iterations.is_some());
    let aggregates = table.aggregates();

    table
        .variants
        .iter()
        .enumerate()
        .map(|(vi, label)| {
            let rows: Vec<_> = table.rows_for(vi).collect();
            if rows.is_empty() {
                return Err(Error::EmptyVariant(label.clone()));
            }
            let median: BTreeMap<usize, f64> = aggregates
                .iter()
                .filter(|a| a.variant == vi)
                .map(|a| (a.iteration, a.er_median))
                .collect();
            let last = *median.keys().next_back().expect("rows exist");
            let accepted = rows.iter().filter(|r| r.accepted).count();
            let infos: Vec<_> = table
                .trial_info
                .iter()
                .filter(|t| t.variant == vi)
                .collect();
            let mut recoveries: Vec<f64> = infos
                .iter()
                .filter_map(|t| t.recovery_iterations.map(|r| r as f64))
                .collect();
            recoveries.sort_by(f64::total_cmp);
            let mut locked: Vec<f64> = infos.iter().map(|t| t.locked_er_db).collect();
            locked.sort_by(f64::total_cmp);

            Ok(VariantSummary {
                label: label.clone(),
                trials: infos.len(),
                median_final_er_db: median[&last],
                median_er_db_at_100: median.get(&100).copied(),
                median_locked_er_db: percentile_sorted(&locked, 0.5),
                crossing_25db: median
                    .iter()
                    .find(|(_, &er)| er >= CROSSING_DB)
                    .map(|(&it, _)| it),
                acceptance_rate: accepted as f64 / rows.len() as f64,
                recovered: has_jump.then_some(recoveries.len()),
                median_recovery_iterations: (!recoveries.is_empty())
                    .then(|| percentile_sorted(&recoveries, 0.5)),
            })
        })
        .collect()
}

/// Renders one block of `label.key: value` lines per variant.
pub fn summarize(table: &ResultsTable) -> Result<String> {
    let mut out = String::new();
    let opt = |v: Option<String>| v.unwrap_or_else(|| "none".to_owned());
    for s in variant_summaries(table)? {
        let l = &s.label;
        let mut line = |k: &str, v: String| writeln!(out, "{l}.{k}: {v}").expect("string write");
        line("trials", s.trials.to_string());
        line("median_final_er_db", format!("{:.4}", s.median_final_er_db));
        line(
            "median_er_db_at_100",
            opt(s.median_er_db_at_100.map(|x| format!("{x:.4}"))),
        );
        line(
            "median_locked_er_db",
            format!("{:.4}", s.median_locked_er_db),
        );
        line("crossing_25db", opt(s.crossing_25db.map(|x| x.to_string())));
        line("acceptance_rate", format!("{:.4}", s.acceptance_rate));
        if let Some(r) = s.recovered {
            line("recovered", r.to_string());
            line(
                "median_recovery_iterations",
                opt(s.median_recovery_iterations.map(|x| format!("{x:.1}"))),
            );
        }
    }
    Ok(out)
}

/// Parses `key: value` lines back into a map.
pub fn parse_summary(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once(": "))
        .map(|(k, v)| (k.trim().to_owned(), v.trim().to_owned()))
        .collect()
}
