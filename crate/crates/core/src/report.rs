//! Report emission: delimiter-separated tables plus a structured summary.
//!
//! Tables carry stable headers and column order, fixed-point numeric cells
//! (two decimals for USD, three for ratios), and no wall-clock content, so a
//! re-run with the same seed produces byte-identical files.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::lifecycle::{SimOutcome, SimulationResult};
use crate::money::Usd;
use crate::search::{CandidateResult, OptimizeResult, RegimeMatrix, TcoDistribution};
use crate::tco::TcoBreakdown;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Option<OutputFormat> {
        match s {
            "csv" => Some(OutputFormat::Csv),
            "json" => Some(OutputFormat::Json),
            _ => None,
        }
    }

    fn extension(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

/// Run provenance stamped into the summary document.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub tool_version: String,
    pub scenario_path: String,
    pub schema_version: u32,
    pub trials: Option<u32>,
    pub defaults_applied: Vec<String>,
    /// Optional wall-clock stamp; omitted by default so outputs stay
    /// byte-reproducible.
    pub timestamp_unix: Option<u64>,
}

impl RunMetadata {
    pub fn new(seed: u64, scenario_path: impl Into<String>) -> RunMetadata {
        RunMetadata {
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            scenario_path: scenario_path.into(),
            schema_version: crate::scenario::SCHEMA_VERSION,
            trials: None,
            defaults_applied: Vec::new(),
            timestamp_unix: None,
        }
    }
}

/// An in-memory table with pre-formatted cells.
pub struct Table {
    pub name: &'static str,
    pub headers: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn write(&self, out_dir: &Path, format: OutputFormat) -> io::Result<PathBuf> {
        let path = out_dir.join(format!("{}.{}", self.name, format.extension()));
        let mut body = String::new();
        match format {
            OutputFormat::Csv => {
                body.push_str(&self.headers.join(","));
                body.push('\n');
                for row in &self.rows {
                    debug_assert!(row.iter().all(|c| !c.contains(',') && !c.contains('\n')));
                    body.push_str(&row.join(","));
                    body.push('\n');
                }
            }
            OutputFormat::Json => {
                let objects: Vec<serde_json::Map<String, serde_json::Value>> = self
                    .rows
                    .iter()
                    .map(|row| {
                        self.headers
                            .iter()
                            .zip(row)
                            .map(|(h, c)| (h.to_string(), serde_json::Value::String(c.clone())))
                            .collect()
                    })
                    .collect();
                body = serde_json::to_string_pretty(&objects).expect("string-only table");
                body.push('\n');
            }
        }
        fs::write(&path, body)?;
        Ok(path)
    }
}

fn usd(value: Usd) -> String {
    value.format_fixed()
}

fn ratio(value: f64) -> String {
    if value.is_finite() {
        format!("{value:.3}")
    } else {
        "inf".to_string()
    }
}

fn annual_tco_rows(annual: &[(i32, TcoBreakdown)]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (year, breakdown) in annual {
        for (name, value) in
            TcoBreakdown::COMPONENT_NAMES.iter().zip(breakdown.components())
        {
            rows.push(vec![year.to_string(), name.to_string(), usd(value)]);
        }
        rows.push(vec![year.to_string(), "total".to_string(), usd(breakdown.total)]);
    }
    rows
}

pub fn simulation_tables(result: &SimulationResult) -> Vec<Table> {
    let mut fleet_rows = Vec::new();
    for state in &result.fleet_timeline {
        for (sku, servers) in state.servers_by_sku() {
            fleet_rows.push(vec![state.month.to_string(), sku, servers.to_string()]);
        }
    }
    let event_rows = result
        .events
        .iter()
        .map(|e| {
            vec![
                e.month.to_string(),
                match e.kind {
                    crate::lifecycle::EventKind::Purchase => "purchase",
                    crate::lifecycle::EventKind::Decommission => "decommission",
                    crate::lifecycle::EventKind::ModelRelease => "model-release",
                    crate::lifecycle::EventKind::SkuAvailable => "sku-available",
                    crate::lifecycle::EventKind::CapacityExhausted => "capacity-exhausted",
                }
                .to_string(),
                e.subject.clone(),
                e.count.to_string(),
            ]
        })
        .collect();
    vec![
        Table {
            name: "fleet_timeline",
            headers: vec!["month", "sku", "servers"],
            rows: fleet_rows,
        },
        Table {
            name: "annual_tco",
            headers: vec!["year", "component", "usd"],
            rows: annual_tco_rows(&result.annual_tco),
        },
        Table {
            name: "events",
            headers: vec!["month", "event", "subject", "count"],
            rows: event_rows,
        },
    ]
}

fn distribution_rows(candidate: &str, dist: &TcoDistribution, ratio_value: f64) -> Vec<Vec<String>> {
    let mut rows = vec![
        vec![candidate.to_string(), "trials".into(), dist.trials.to_string()],
        vec![candidate.to_string(), "exhausted_trials".into(), dist.exhausted_trials.to_string()],
        vec![candidate.to_string(), "mean_usd".into(), usd(dist.mean)],
        vec![candidate.to_string(), "std_dev_usd".into(), usd(dist.std_dev)],
        vec![candidate.to_string(), "p5_usd".into(), usd(dist.p5)],
        vec![candidate.to_string(), "p25_usd".into(), usd(dist.p25)],
        vec![candidate.to_string(), "p50_usd".into(), usd(dist.p50)],
        vec![candidate.to_string(), "p75_usd".into(), usd(dist.p75)],
        vec![candidate.to_string(), "p95_usd".into(), usd(dist.p95)],
    ];
    rows.push(vec![candidate.to_string(), "ratio_to_baseline".into(), ratio(ratio_value)]);
    rows
}

fn trial_rows(candidate: &str, dist: &TcoDistribution) -> Vec<Vec<String>> {
    dist.per_trial
        .iter()
        .enumerate()
        .map(|(i, t)| {
            vec![
                candidate.to_string(),
                i.to_string(),
                usd(t.lifetime_tco),
                if t.exhausted { "1".into() } else { "0".into() },
            ]
        })
        .collect()
}

/// Sweep/optimize tables: per-candidate statistics and per-trial values.
pub fn evaluation_tables(
    baseline_label: &str,
    baseline: &TcoDistribution,
    evaluations: &[CandidateResult],
) -> Vec<Table> {
    let mut stat_rows = distribution_rows(baseline_label, baseline, 1.0);
    let mut per_trial = trial_rows(baseline_label, baseline);
    for eval in evaluations {
        stat_rows.extend(distribution_rows(&eval.label, &eval.distribution, eval.ratio_to_baseline));
        per_trial.extend(trial_rows(&eval.label, &eval.distribution));
    }
    vec![
        Table {
            name: "distribution",
            headers: vec!["candidate", "statistic", "value"],
            rows: stat_rows,
        },
        Table {
            name: "trials",
            headers: vec!["candidate", "trial", "lifetime_tco_usd", "exhausted"],
            rows: per_trial,
        },
    ]
}

pub fn matrix_table(matrix: &RegimeMatrix) -> Table {
    let mut rows = Vec::new();
    for cell in &matrix.cells {
        let model = growth_label(cell.model_growth);
        let hardware = growth_label(cell.hardware_growth);
        let refresh = &cell.best.refresh;
        let skips: Vec<&str> = refresh
            .lifetime_months_by_generation
            .iter()
            .filter(|(_, &v)| v == 0)
            .map(|(k, _)| k.as_str())
            .collect();
        let refresh_desc = if skips.is_empty() {
            format!("{}mo buy-new", refresh.default_lifetime_months)
        } else {
            format!("{}mo skip:{}", refresh.default_lifetime_months, skips.join("+"))
        };
        let ops = cell.best.op.enabled_flags();
        let op_desc = if ops.len() == crate::lifecycle::OPERATION_FLAG_NAMES.len() {
            "all".to_string()
        } else if ops.is_empty() {
            "none".to_string()
        } else {
            ops.join("+")
        };
        for (stage, choice) in [
            ("build", cell.best.design.label()),
            ("refresh", refresh_desc),
            ("operate", op_desc),
        ] {
            rows.push(vec![
                model.to_string(),
                hardware.to_string(),
                stage.to_string(),
                choice,
                ratio(cell.baseline_ratio),
            ]);
        }
    }
    Table {
        name: "regime_matrix",
        headers: vec!["model_growth", "hardware_growth", "stage", "choice", "ratio_to_baseline"],
        rows,
    }
}

fn growth_label(shape: crate::catalog::GrowthShape) -> &'static str {
    match shape {
        crate::catalog::GrowthShape::SlowSublinear => "slow",
        crate::catalog::GrowthShape::MediumLinear => "medium",
        crate::catalog::GrowthShape::FastExponential => "fast",
    }
}

#[derive(Serialize)]
struct SimulationSummary<'a> {
    metadata: &'a RunMetadata,
    outcome: String,
    lifetime_tco_usd: String,
    final_servers: u64,
    peak_servers: u64,
    years: usize,
}

#[derive(Serialize)]
struct SearchSummary<'a> {
    metadata: &'a RunMetadata,
    candidates: usize,
    best_candidate: Option<String>,
    baseline_ratio: Option<String>,
}

fn write_summary<T: Serialize>(
    out_dir: &Path,
    summary: &T,
) -> io::Result<PathBuf> {
    let path = out_dir.join("summary.json");
    let mut body = serde_json::to_string_pretty(summary).expect("serializable summary");
    body.push('\n');
    fs::write(&path, body)?;
    Ok(path)
}

fn write_tables(
    tables: &[Table],
    out_dir: &Path,
    format: OutputFormat,
) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    tables.iter().map(|t| t.write(out_dir, format)).collect()
}

/// Writes fleet-timeline, annual-TCO, and event tables plus a summary.
pub fn emit_simulation_reports(
    result: &SimulationResult,
    meta: &RunMetadata,
    out_dir: &Path,
    format: OutputFormat,
) -> io::Result<Vec<PathBuf>> {
    let mut files = write_tables(&simulation_tables(result), out_dir, format)?;
    let summary = SimulationSummary {
        metadata: meta,
        outcome: match result.outcome {
            SimOutcome::Completed => "completed".to_string(),
            SimOutcome::CapacityExhausted { month } => format!("capacity-exhausted:{month}"),
        },
        lifetime_tco_usd: result.lifetime_tco.format_fixed(),
        final_servers: result.final_state().map_or(0, |s| s.total_servers()),
        peak_servers: result.peak_servers(),
        years: result.annual_tco.len(),
    };
    files.push(write_summary(out_dir, &summary)?);
    Ok(files)
}

/// Writes distribution and per-trial tables for a sweep.
pub fn emit_sweep_reports(
    baseline_label: &str,
    baseline: &TcoDistribution,
    evaluations: &[CandidateResult],
    meta: &RunMetadata,
    out_dir: &Path,
    format: OutputFormat,
) -> io::Result<Vec<PathBuf>> {
    let tables = evaluation_tables(baseline_label, baseline, evaluations);
    let mut files = write_tables(&tables, out_dir, format)?;
    let best = evaluations
        .iter()
        .min_by(|a, b| a.objective_value.partial_cmp(&b.objective_value).unwrap());
    let summary = SearchSummary {
        metadata: meta,
        candidates: evaluations.len(),
        best_candidate: best.map(|c| c.label.clone()),
        baseline_ratio: best.map(|c| ratio(c.ratio_to_baseline)),
    };
    files.push(write_summary(out_dir, &summary)?);
    Ok(files)
}

/// Writes optimize outputs: candidate tables plus the chosen bundle.
pub fn emit_optimize_reports(
    result: &OptimizeResult,
    meta: &RunMetadata,
    out_dir: &Path,
    format: OutputFormat,
) -> io::Result<Vec<PathBuf>> {
    let tables =
        evaluation_tables("baseline", &result.baseline_distribution, &result.evaluations);
    let mut files = write_tables(&tables, out_dir, format)?;
    #[derive(Serialize)]
    struct OptimizeSummary<'a> {
        metadata: &'a RunMetadata,
        candidates: usize,
        best_candidate: String,
        baseline_ratio: String,
        best_mean_usd: String,
        baseline_mean_usd: String,
    }
    let summary = OptimizeSummary {
        metadata: meta,
        candidates: result.evaluations.len(),
        best_candidate: result.best.label(),
        baseline_ratio: ratio(result.baseline_ratio),
        best_mean_usd: result.best_distribution.mean.format_fixed(),
        baseline_mean_usd: result.baseline_distribution.mean.format_fixed(),
    };
    files.push(write_summary(out_dir, &summary)?);
    Ok(files)
}

/// Writes the 3x3 regime matrix table.
pub fn emit_matrix_reports(
    matrix: &RegimeMatrix,
    meta: &RunMetadata,
    out_dir: &Path,
    format: OutputFormat,
) -> io::Result<Vec<PathBuf>> {
    let mut files = write_tables(&[matrix_table(matrix)], out_dir, format)?;
    #[derive(Serialize)]
    struct MatrixSummary<'a> {
        metadata: &'a RunMetadata,
        cells: usize,
    }
    files.push(write_summary(out_dir, &MatrixSummary { metadata: meta, cells: matrix.cells.len() })?);
    Ok(files)
}
