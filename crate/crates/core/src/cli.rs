//! Batch front end behind the `swarmplan` binary.
//!
//! Every command returns an exit code: 0 on success, 2 when the run finished
//! but the outcome is infeasible or unproven, 1 on errors.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::dca::{plan_dca, write_iteration_log_csv, AnchorPolicy, DcaConfig, InitPolicy, PlanStatus};
use crate::dynamics::{read_trajectory_csv, write_trajectory_csv, Trajectory};
use crate::error::{PlanError, Result};
use crate::micp::{branch_and_bound, build_cubic_micp, write_binary_dump_csv, write_node_log_csv, BnbSettings, BnbStatus};
use crate::scenario::{generate_benchmark, load_scenario, BenchmarkBase, BenchmarkPattern, Scenario};
use crate::verify::{check_feasibility, evaluate_objective, min_pairwise_distance, write_distance_csv, DEFAULT_TOL};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;

/// Environment variable that caps the worker pool size.
pub const THREADS_ENV: &str = "PLANNER_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dca,
    Micp,
}

#[derive(Debug, Parser)]
#[command(name = "swarmplan", version, about = "Collision-free trajectory planning for vehicle swarms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan trajectories and write them with logs and a summary.
    Plan {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "dca")]
        method: Method,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        overrides: DcaOverrides,
        #[command(flatten)]
        bnb: BnbOverrides,
    },
    /// Check a trajectory CSV against a scenario and print the report.
    Check {
        scenario: PathBuf,
        trajectory: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Run both planners and write a side-by-side summary.
    Compare {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        overrides: DcaOverrides,
        #[command(flatten)]
        bnb: BnbOverrides,
    },
    /// Write a generated benchmark scenario as JSON.
    Bench {
        #[arg(long, default_value_t = 5)]
        vehicles: usize,
        #[arg(long, default_value = "circle_swap")]
        pattern: BenchmarkPattern,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 30)]
        horizon: usize,
        #[arg(long)]
        safety_distance: Option<f64>,
        /// Add an arena box padded by this distance around starts and goals.
        #[arg(long)]
        arena_padding: Option<f64>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl clap::builder::ValueParserFactory for BenchmarkPattern {
    type Parser = clap::builder::ValueParser;

    fn value_parser() -> Self::Parser {
        clap::builder::ValueParser::new(|s: &str| s.parse::<BenchmarkPattern>())
    }
}

/// Flags that take precedence over the scenario's `dca` section.
#[derive(Debug, Clone, Default, Args)]
pub struct DcaOverrides {
    #[arg(long)]
    pub tau0: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub tau_max: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// `accumulate_all`, `keep_last_m` or `keep_last_m:<count>`.
    #[arg(long, value_parser = |s: &str| s.parse::<AnchorPolicy>())]
    pub anchor_policy: Option<AnchorPolicy>,
    /// `straight_line`, `hover_then_jump` or `lateral_bypass`.
    #[arg(long, value_parser = |s: &str| s.parse::<InitPolicy>())]
    pub init_policy: Option<InitPolicy>,
}

impl DcaOverrides {
    pub fn apply(&self, mut config: DcaConfig) -> DcaConfig {
        if let Some(v) = self.tau0 {
            config.tau0 = v;
        }
        if let Some(v) = self.mu {
            config.mu = v;
        }
        if let Some(v) = self.tau_max {
            config.tau_max = v;
        }
        if let Some(v) = self.epsilon {
            config.epsilon = v;
        }
        if let Some(v) = self.max_iters {
            config.max_iters = v;
        }
        if let Some(v) = self.anchor_policy {
            config.anchor_policy = v;
        }
        if let Some(v) = self.init_policy {
            config.init_policy = v;
        }
        config
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct BnbOverrides {
    #[arg(long)]
    pub max_nodes: Option<usize>,
    #[arg(long)]
    pub max_binaries: Option<usize>,
}

impl BnbOverrides {
    pub fn apply(&self, mut settings: BnbSettings) -> BnbSettings {
        if let Some(v) = self.max_nodes {
            settings.max_nodes = v;
        }
        if let Some(v) = self.max_binaries {
            settings.max_binaries = v;
        }
        settings
    }
}

/// Outcome of one planning run as written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: Method,
    pub status: String,
    /// DC iterations, for `dca`.
    pub iterations: Option<usize>,
    /// Branch-and-bound nodes, for `micp`.
    pub nodes: Option<usize>,
    pub wall_time: f64,
    pub fuel: Option<f64>,
    pub goal_cost: Option<f64>,
    pub min_separation: Option<f64>,
    /// Verified at the default tolerance.
    pub feasible: bool,
    pub exit_code: i32,
}

/// Side-by-side result written by `compare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub dca: RunSummary,
    pub micp: RunSummary,
    /// MICP fuel minus DCA fuel.
    pub fuel_delta: Option<f64>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn read_scenario(path: &Path) -> Result<Scenario> {
    let file = File::open(path).map_err(|e| PlanError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    load_scenario(std::io::BufReader::new(file))
}

/// Writes the trajectory and pairwise distances, and fills the cost fields.
fn write_trajectory_outputs(
    scenario: &Scenario,
    traj: &Trajectory,
    out: &Path,
    summary: &mut RunSummary,
) -> Result<()> {
    write_trajectory_csv(traj, create(&out.join("trajectory.csv"))?)?;
    write_distance_csv(traj, create(&out.join("distances.csv"))?)?;
    let cost = evaluate_objective(scenario, traj)?;
    summary.fuel = Some(cost.fuel);
    summary.goal_cost = Some(cost.goal);
    summary.min_separation = min_pairwise_distance(traj).ok().map(|p| p.distance);
    summary.feasible = check_feasibility(scenario, traj, DEFAULT_TOL)?.feasible;
    Ok(())
}

fn run_dca(scenario: &Scenario, overrides: &DcaOverrides, out: &Path) -> Result<RunSummary> {
    let config = overrides.apply(scenario.dca.clone().unwrap_or_default());
    let result = plan_dca(scenario, &config)?;
    write_iteration_log_csv(&result.log, create(&out.join("iterations.csv"))?)?;
    let mut summary = RunSummary {
        method: Method::Dca,
        status: result.status.as_str().to_string(),
        iterations: Some(result.iterations()),
        nodes: None,
        wall_time: result.wall_time,
        fuel: None,
        goal_cost: None,
        min_separation: None,
        feasible: false,
        exit_code: EXIT_INFEASIBLE,
    };
    write_trajectory_outputs(scenario, &result.trajectory, out, &mut summary)?;
    summary.exit_code = match result.status {
        PlanStatus::ConvergedFeasible if summary.feasible => EXIT_OK,
        PlanStatus::SubproblemFailure => EXIT_ERROR,
        _ => EXIT_INFEASIBLE,
    };
    Ok(summary)
}

fn run_micp(scenario: &Scenario, bnb: &BnbOverrides, out: &Path) -> Result<RunSummary> {
    let settings = bnb.apply(BnbSettings::default());
    let micp = build_cubic_micp(scenario)?;
    let result = branch_and_bound(&micp, &settings)?;
    write_node_log_csv(&result.log, create(&out.join("nodes.csv"))?)?;
    let mut summary = RunSummary {
        method: Method::Micp,
        status: result.status.as_str().to_string(),
        iterations: None,
        nodes: Some(result.nodes),
        wall_time: result.wall_time,
        fuel: None,
        goal_cost: None,
        min_separation: None,
        feasible: false,
        exit_code: EXIT_INFEASIBLE,
    };
    if let Some(traj) = &result.trajectory {
        write_binary_dump_csv(&micp, &result.assignment, create(&out.join("binaries.csv"))?)?;
        write_trajectory_outputs(scenario, traj, out, &mut summary)?;
    }
    if result.status == BnbStatus::Optimal && summary.feasible {
        summary.exit_code = EXIT_OK;
    }
    Ok(summary)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    serde_json::to_writer_pretty(create(path)?, value)?;
    Ok(())
}

fn print_summary(s: &RunSummary) {
    let num = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6}"));
    let count = s.iterations.or(s.nodes).map_or("-".to_string(), |c| c.to_string());
    println!(
        "{:?}: status {} after {count} {}, fuel {}, goal {}, min separation {}, {:.2} s",
        s.method,
        s.status,
        if s.iterations.is_some() { "iterations" } else { "nodes" },
        num(s.fuel),
        num(s.goal_cost),
        num(s.min_separation),
        s.wall_time
    );
}

/// Plans with one method and writes `trajectory.csv`, `distances.csv`,
/// `summary.json`, plus `iterations.csv` (DCA) or `nodes.csv` and
/// `binaries.csv` (MICP) into `out`.
pub fn cmd_plan(scenario: &Path, method: Method, overrides: &DcaOverrides, bnb: &BnbOverrides, out: &Path) -> Result<i32> {
    let scenario = read_scenario(scenario)?;
    fs::create_dir_all(out)?;
    let summary = match method {
        Method::Dca => run_dca(&scenario, overrides, out)?,
        Method::Micp => run_micp(&scenario, bnb, out)?,
    };
    write_json(&summary, &out.join("summary.json"))?;
    print_summary(&summary);
    Ok(summary.exit_code)
}

/// Prints the feasibility report as JSON; exit 0 iff feasible.
pub fn cmd_check(scenario: &Path, trajectory: &Path, tol: f64) -> Result<i32> {
    let scenario = read_scenario(scenario)?;
    let traj = read_trajectory_csv(File::open(trajectory)?)?;
    let report = check_feasibility(&scenario, &traj, tol)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(if report.feasible { EXIT_OK } else { EXIT_INFEASIBLE })
}

/// Runs both planners into `out/dca` and `out/micp` and writes
/// `out/compare.json`.
pub fn cmd_compare(scenario: &Path, overrides: &DcaOverrides, bnb: &BnbOverrides, out: &Path) -> Result<(i32, Comparison)> {
    let scenario = read_scenario(scenario)?;
    let (dca_dir, micp_dir) = (out.join("dca"), out.join("micp"));
    fs::create_dir_all(&dca_dir)?;
    fs::create_dir_all(&micp_dir)?;
    let dca = run_dca(&scenario, overrides, &dca_dir)?;
    write_json(&dca, &dca_dir.join("summary.json"))?;
    let micp = run_micp(&scenario, bnb, &micp_dir)?;
    write_json(&micp, &micp_dir.join("summary.json"))?;
    let fuel_delta = micp.fuel.zip(dca.fuel).map(|(m, d)| m - d);
    let comparison = Comparison { dca, micp, fuel_delta };
    write_json(&comparison, &out.join("compare.json"))?;
    print_summary(&comparison.dca);
    print_summary(&comparison.micp);
    if let Some(delta) = fuel_delta {
        println!("fuel difference (micp - dca): {delta:.6}");
    }
    Ok((comparison.dca.exit_code.max(comparison.micp.exit_code), comparison))
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_bench(
    vehicles: usize,
    pattern: BenchmarkPattern,
    seed: u64,
    horizon: usize,
    safety_distance: Option<f64>,
    arena_padding: Option<f64>,
    out: Option<&Path>,
) -> Result<i32> {
    let defaults = BenchmarkBase::default();
    let base = BenchmarkBase {
        horizon,
        safety_distance: safety_distance.unwrap_or(defaults.safety_distance),
        arena_padding,
        ..defaults
    };
    let scenario = generate_benchmark(vehicles, pattern, seed, &base)?;
    match out {
        Some(path) => scenario.write_json(create(path)?)?,
        None => scenario.write_json(std::io::stdout().lock())?,
    }
    Ok(EXIT_OK)
}

/// Sizes the global worker pool from `PLANNER_THREADS`, if set.
pub fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .map_err(|_| PlanError::Parse(format!("{THREADS_ENV} must be a positive integer, got `{value}`")))?;
    if threads == 0 {
        return Err(PlanError::Parse(format!("{THREADS_ENV} must be at least 1")));
    }
    // A pool that is already built keeps its size.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

/// Dispatches a parsed command line and maps errors to exit code 1.
pub fn run(cli: Cli) -> i32 {
    let outcome = configure_threads().and_then(|()| match cli.command {
        Command::Plan {
            scenario,
            method,
            out,
            overrides,
            bnb,
        } => cmd_plan(&scenario, method, &overrides, &bnb, &out),
        Command::Check { scenario, trajectory, tol } => cmd_check(&scenario, &trajectory, tol),
        Command::Compare {
            scenario,
            out,
            overrides,
            bnb,
        } => cmd_compare(&scenario, &overrides, &bnb, &out).map(|(code, _)| code),
        Command::Bench {
            vehicles,
            pattern,
            seed,
            horizon,
            safety_distance,
            arena_padding,
            out,
        } => cmd_bench(vehicles, pattern, seed, horizon, safety_distance, arena_padding, out.as_deref()),
    });
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
