//! `dclc` — lifecycle TCO simulation and policy search from scenario files.
//!
//! Exit codes: 0 success, 1 usage error, 2 scenario validation error,
//! 3 capacity-exhausted simulation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dclc_core::lifecycle::{simulate, OperationPolicy, PurchaseMode, RefreshPolicy, SimOutcome};
use dclc_core::report::{
    emit_matrix_reports, emit_optimize_reports, emit_simulation_reports, emit_sweep_reports,
    OutputFormat, RunMetadata,
};
use dclc_core::scenario::{load_scenario, LoadedScenario};
use dclc_core::search::{
    design_with, enumerate_refresh_policies, monte_carlo, optimize, regime_matrix,
    CandidateResult, EnumerationMode, Objective, PolicyBundle, PolicySpace,
};
use dclc_core::tco::{CoolingKind, NetworkTier, PowerTopology};

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_CAPACITY: u8 = 3;

#[derive(Parser)]
#[command(name = "dclc", version, about = "AI datacenter lifecycle TCO simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,

    /// Master random seed; falls back to DCLC_SEED, then 42.
    #[arg(long)]
    seed: Option<u64>,

    /// Monte Carlo trials per candidate.
    #[arg(long, default_value_t = 200)]
    trials: u32,

    /// Output directory for report tables.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Table format.
    #[arg(long, default_value = "csv")]
    format: String,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepStage {
    Refresh,
    Build,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ObjectiveArg {
    Mean,
    P95,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario under one policy bundle and write report tables.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Default per-generation service lifetime in months.
        #[arg(long, default_value_t = 60)]
        lifetime_months: u32,
        /// Generations to skip entirely (repeatable).
        #[arg(long)]
        skip: Vec<String>,
        /// Purchase mode: newest on the market vs best value.
        #[arg(long, value_enum, default_value_t = PurchaseModeArg::OnAvailability)]
        purchase_mode: PurchaseModeArg,
        /// Enable every operation-stage optimization.
        #[arg(long)]
        all_optimizations: bool,
    },
    /// Enumerate refresh policies or build designs and tabulate TCO distributions.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        stage: SweepStage,
    },
    /// Search the cross-stage policy space for the lowest-TCO bundle.
    Optimize {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value_t = ObjectiveArg::Mean)]
        objective: ObjectiveArg,
    },
    /// Optimal strategies per (model growth x hardware growth) regime cell.
    Matrix {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value_t = ObjectiveArg::Mean)]
        objective: ObjectiveArg,
    },
    /// Parse and validate a scenario file without running anything.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PurchaseModeArg {
    OnAvailability,
    OnDemand,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own help/error text; map every parse failure,
            // including --help, onto the usage exit code unless it is help.
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if is_help { ExitCode::from(EXIT_OK) } else { ExitCode::from(EXIT_USAGE) };
        }
    };
    ExitCode::from(run(cli))
}

fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.or_else(|| std::env::var("DCLC_SEED").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(42)
}

fn load(scenario: &PathBuf) -> Result<LoadedScenario, u8> {
    match load_scenario(scenario) {
        Ok(loaded) => Ok(loaded),
        Err(e) => {
            eprintln!("error: {e}");
            Err(EXIT_VALIDATION)
        }
    }
}

fn parse_format(s: &str) -> Result<OutputFormat, u8> {
    OutputFormat::parse(s).ok_or_else(|| {
        eprintln!("error: unknown format {s:?}; use csv or json");
        EXIT_USAGE
    })
}

fn baseline_bundle(loaded: &LoadedScenario) -> PolicyBundle {
    PolicyBundle {
        design: loaded.scenario.design.clone(),
        refresh: RefreshPolicy::default(),
        op: OperationPolicy::default(),
    }
}

fn metadata(loaded: &LoadedScenario, common: &CommonArgs, seed: u64) -> RunMetadata {
    let mut meta = RunMetadata::new(seed, common.scenario.display().to_string());
    meta.trials = Some(common.trials);
    meta.defaults_applied = loaded.defaults_applied.clone();
    meta
}

/// GPU generations from the scenario's seed catalog, in release order.
fn seed_generations(loaded: &LoadedScenario) -> Vec<String> {
    loaded
        .template
        .hardware_seeds
        .iter()
        .filter(|s| s.kind == dclc_core::catalog::SkuKind::GpuServer)
        .map(|s| s.id.clone())
        .collect()
}

/// The cross-stage search space used by `optimize` and `matrix`.
fn cross_stage_space(loaded: &LoadedScenario, baseline: &PolicyBundle) -> PolicySpace {
    let mut refreshes = vec![baseline.refresh.clone()];
    refreshes.push(RefreshPolicy { default_lifetime_months: 96, ..baseline.refresh.clone() });
    for skip in ["b100", "b200"] {
        if loaded.template.hardware_seeds.iter().any(|s| s.id == skip) {
            refreshes.push(baseline.refresh.with_generation(skip, 0));
        }
    }
    let mut on_demand = baseline.refresh.clone();
    on_demand.purchase_mode = PurchaseMode::OnDemand;
    refreshes.push(on_demand);
    PolicySpace {
        designs: PolicySpace::all_designs(&loaded.scenario.design),
        refreshes,
        ops: vec![baseline.op.clone()],
        greedy_operations: true,
    }
}

fn run(cli: Cli) -> u8 {
    match cli.command {
        Command::Validate { scenario } => match load_scenario(&scenario) {
            Ok(loaded) => {
                println!(
                    "ok: {} models, {} hardware generations, horizon {} months",
                    loaded.scenario.models.len(),
                    loaded.scenario.hardware.len(),
                    loaded.scenario.horizon_months
                );
                EXIT_OK
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_VALIDATION
            }
        },
        Command::Simulate {
            common,
            lifetime_months,
            skip,
            purchase_mode,
            all_optimizations,
        } => {
            let format = match parse_format(&common.format) {
                Ok(f) => f,
                Err(code) => return code,
            };
            let loaded = match load(&common.scenario) {
                Ok(l) => l,
                Err(code) => return code,
            };
            let seed = resolve_seed(common.seed);
            let mut refresh = RefreshPolicy {
                default_lifetime_months: lifetime_months,
                purchase_mode: match purchase_mode {
                    PurchaseModeArg::OnAvailability => PurchaseMode::OnAvailability,
                    PurchaseModeArg::OnDemand => PurchaseMode::OnDemand,
                },
                ..RefreshPolicy::default()
            };
            for sku in &skip {
                refresh = refresh.with_generation(sku, 0);
            }
            let op = if all_optimizations {
                OperationPolicy::all_enabled()
            } else {
                OperationPolicy::default()
            };
            let result = match simulate(&loaded.scenario, &refresh, &op) {
                Ok(result) => result,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_VALIDATION;
                }
            };
            let meta = metadata(&loaded, &common, seed);
            if let Err(e) = emit_simulation_reports(&result, &meta, &common.out, format) {
                eprintln!("error: cannot write reports: {e}");
                return EXIT_VALIDATION;
            }
            println!(
                "simulated {} months: {} servers at end, lifetime TCO {}",
                result.fleet_timeline.len(),
                result.final_state().map_or(0, |s| s.total_servers()),
                result.lifetime_tco
            );
            match result.outcome {
                SimOutcome::Completed => EXIT_OK,
                SimOutcome::CapacityExhausted { month } => {
                    eprintln!("capacity exhausted at {month}");
                    EXIT_CAPACITY
                }
            }
        }
        Command::Sweep { common, stage } => {
            let format = match parse_format(&common.format) {
                Ok(f) => f,
                Err(code) => return code,
            };
            let loaded = match load(&common.scenario) {
                Ok(l) => l,
                Err(code) => return code,
            };
            let seed = resolve_seed(common.seed);
            let baseline = baseline_bundle(&loaded);
            let baseline_dist =
                match monte_carlo(&loaded.distribution, &baseline, common.trials, seed) {
                    Ok(d) => d,
                    Err(e) => {
                        eprintln!("error: {e}");
                        return EXIT_VALIDATION;
                    }
                };
            let baseline_obj = baseline_dist.objective(Objective::Mean);

            let candidates: Vec<PolicyBundle> = match stage {
                SweepStage::Refresh => {
                    let generations = seed_generations(&loaded);
                    let lifetimes: Vec<u32> = (0..=10).map(|y| y * 12).collect();
                    match enumerate_refresh_policies(
                        &generations,
                        &lifetimes,
                        &baseline.refresh,
                        EnumerationMode::OneAtATime,
                    ) {
                        Ok(policies) => policies
                            .into_iter()
                            .map(|refresh| PolicyBundle { refresh, ..baseline.clone() })
                            .collect(),
                        Err(e) => {
                            eprintln!("error: {e}");
                            return EXIT_VALIDATION;
                        }
                    }
                }
                SweepStage::Build => {
                    let mut bundles = Vec::new();
                    for power in PowerTopology::ALL {
                        for cooling in CoolingKind::ALL {
                            for network in NetworkTier::ALL {
                                bundles.push(PolicyBundle {
                                    design: design_with(
                                        &loaded.scenario.design,
                                        power,
                                        cooling,
                                        network,
                                    ),
                                    ..baseline.clone()
                                });
                            }
                        }
                    }
                    bundles
                }
            };

            let mut evaluations = Vec::with_capacity(candidates.len());
            for bundle in candidates {
                let distribution =
                    match monte_carlo(&loaded.distribution, &bundle, common.trials, seed) {
                        Ok(d) => d,
                        Err(e) => {
                            eprintln!("error: {e}");
                            return EXIT_VALIDATION;
                        }
                    };
                let objective_value = distribution.objective(Objective::Mean);
                evaluations.push(CandidateResult {
                    label: bundle.label(),
                    bundle,
                    distribution,
                    objective_value,
                    ratio_to_baseline: objective_value / baseline_obj,
                });
            }
            let meta = metadata(&loaded, &common, seed);
            if let Err(e) = emit_sweep_reports(
                "baseline",
                &baseline_dist,
                &evaluations,
                &meta,
                &common.out,
                format,
            ) {
                eprintln!("error: cannot write reports: {e}");
                return EXIT_VALIDATION;
            }
            let best = evaluations
                .iter()
                .filter(|c| c.objective_value.is_finite())
                .min_by(|a, b| a.objective_value.partial_cmp(&b.objective_value).unwrap());
            if let Some(best) = best {
                println!(
                    "swept {} policies: best {} at {:.3} of baseline",
                    evaluations.len(),
                    best.label,
                    best.ratio_to_baseline
                );
            }
            EXIT_OK
        }
        Command::Optimize { common, objective } => {
            let format = match parse_format(&common.format) {
                Ok(f) => f,
                Err(code) => return code,
            };
            let loaded = match load(&common.scenario) {
                Ok(l) => l,
                Err(code) => return code,
            };
            let seed = resolve_seed(common.seed);
            let baseline = baseline_bundle(&loaded);
            let space = cross_stage_space(&loaded, &baseline);
            let objective = match objective {
                ObjectiveArg::Mean => Objective::Mean,
                ObjectiveArg::P95 => Objective::P95,
            };
            let result = match optimize(
                &loaded.distribution,
                &space,
                &baseline,
                objective,
                common.trials,
                seed,
            ) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_VALIDATION;
                }
            };
            let meta = metadata(&loaded, &common, seed);
            if let Err(e) = emit_optimize_reports(&result, &meta, &common.out, format) {
                eprintln!("error: cannot write reports: {e}");
                return EXIT_VALIDATION;
            }
            println!(
                "best bundle {} at {:.3} of baseline ({} candidates)",
                result.best.label(),
                result.baseline_ratio,
                result.evaluations.len()
            );
            EXIT_OK
        }
        Command::Matrix { common, objective } => {
            let format = match parse_format(&common.format) {
                Ok(f) => f,
                Err(code) => return code,
            };
            let loaded = match load(&common.scenario) {
                Ok(l) => l,
                Err(code) => return code,
            };
            let seed = resolve_seed(common.seed);
            let baseline = baseline_bundle(&loaded);
            let space = cross_stage_space(&loaded, &baseline);
            let objective = match objective {
                ObjectiveArg::Mean => Objective::Mean,
                ObjectiveArg::P95 => Objective::P95,
            };
            let matrix = match regime_matrix(
                &loaded.distribution,
                &space,
                &baseline,
                objective,
                common.trials,
                seed,
            ) {
                Ok(m) => m,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_VALIDATION;
                }
            };
            let meta = metadata(&loaded, &common, seed);
            if let Err(e) = emit_matrix_reports(&matrix, &meta, &common.out, format) {
                eprintln!("error: cannot write reports: {e}");
                return EXIT_VALIDATION;
            }
            println!("computed {} regime cells", matrix.cells.len());
            EXIT_OK
        }
    }
}
