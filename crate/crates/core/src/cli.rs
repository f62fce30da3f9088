//! Command-line front end: `gen-catalog`, `train`, `sweep`, `oracle` and `report`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use crate::agents::{train, Algorithm, DIAGNOSTICS_HEADER};
use crate::catalog::{generate_synthetic_catalog, load_catalog, save_catalog, ItemCatalog};
use crate::config::{load_config_with, parse_scalar, RunConfig, StreamFactory};
use crate::experiment::{delta_csv, delta_report, report_errors, run_sweep, SweepConfig, SweepOptions, SweepResult};
use crate::format::sig9;
use crate::knapsack::{solve_bruteforce, solve_dp_capped, KnapsackInstance, MAX_BRUTEFORCE_ITEMS};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "budget-slate",
    version,
    about = "Time-budgeted slate recommendation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic item catalog CSV.
    GenCatalog(Common),
    /// Fit one policy and write the model and per-iteration diagnostics.
    Train(TrainArgs),
    /// Run the (algorithm x gamma x budget x seed) grid and write a results CSV.
    Sweep(SweepArgs),
    /// Solve a knapsack instance file.
    Oracle(OracleArgs),
    /// Paired gamma deltas and sign tests from a results CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Config file (JSON object or `key: value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides `master_seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override any config key, e.g. `--set slate_size=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    num_users: Option<usize>,
    #[arg(long)]
    num_items: Option<usize>,
    #[arg(long)]
    slate_size: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    eval_episodes: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Catalog CSV; a synthetic catalog is generated when omitted.
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long, default_value = "qlearning")]
    algorithm: String,
    /// Discount factor; defaults to the first value of the gamma grid.
    #[arg(long)]
    gamma: Option<f64>,
    /// Budget location; defaults to the first value of `user_budget`.
    #[arg(long)]
    budget_loc: Option<f64>,
    /// Per-iteration diagnostics CSV.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Worker threads for cell execution (output does not depend on it).
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Directory for one JSON-lines episode dump per cell.
    #[arg(long)]
    dump_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[command(flatten)]
    common: Common,
    /// Knapsack instance JSON: {"utilities": [...], "costs": [...], "budget": u}.
    #[arg(long)]
    instance: PathBuf,
    /// `auto` uses brute force up to 25 items and the DP beyond.
    #[arg(long, default_value = "auto", value_parser = ["auto", "bruteforce", "dp"])]
    method: String,
    /// DP cost resolution in seconds (overrides `resolution`).
    #[arg(long)]
    resolution: Option<f64>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
    /// Results CSV written by `sweep`.
    #[arg(long)]
    results: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    gamma_a: f64,
    #[arg(long, default_value_t = 0.8)]
    gamma_b: f64,
}

impl Common {
    fn overrides(&self) -> Result<Map<String, Value>> {
        let mut map = Map::new();
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::config(kv.clone(), "expected KEY=VALUE"))?;
            map.insert(k.trim().to_string(), parse_scalar(v.trim()));
        }
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                map.insert(k.to_string(), v);
            }
        };
        put("master_seed", self.seed.map(Value::from));
        put("num_users", self.num_users.map(Value::from));
        put("num_items", self.num_items.map(Value::from));
        put("slate_size", self.slate_size.map(Value::from));
        put("epsilon", self.epsilon.map(Value::from));
        put("iterations", self.iterations.map(Value::from));
        put("eval_episodes", self.eval_episodes.map(Value::from));
        Ok(map)
    }

    fn load(&self) -> Result<RunConfig> {
        load_config_with(self.config.as_deref(), &self.overrides()?, true)
    }

    fn out(&self, command: &str) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::config("out", format!("`{command}` needs --out")))
    }
}

fn synthetic_catalog(cfg: &RunConfig) -> Result<ItemCatalog> {
    generate_synthetic_catalog(
        cfg.num_items,
        &cfg.relevance_params(),
        &cfg.cost_distribution()?,
        &mut StreamFactory::new(cfg.master_seed).stream("catalog", 0),
    )
}

fn catalog_from(path: Option<&Path>, cfg: &RunConfig) -> Result<ItemCatalog> {
    match path {
        Some(p) => load_catalog(p),
        None => synthetic_catalog(cfg),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn execute(cmd: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let io = |e: std::io::Error| Error::Resource(e.to_string());
    match cmd {
        Command::GenCatalog(common) => {
            let cfg = common.load()?;
            let out = common.out("gen-catalog")?;
            let catalog = synthetic_catalog(&cfg)?;
            save_catalog(&catalog, out)?;
            writeln!(stdout, "wrote {} items to {}", catalog.n_items(), out.display()).map_err(io)?;
        }
        Command::Train(args) => {
            let cfg = args.common.load()?;
            let out = args.common.out("train")?;
            let algorithm: Algorithm = args.algorithm.parse()?;
            let gamma = args.gamma.unwrap_or(cfg.gamma_grid()[0]);
            let budget_loc = args.budget_loc.unwrap_or(cfg.user_budget.0[0]);
            let catalog = catalog_from(args.catalog.as_deref(), &cfg)?;
            let train_cfg = cfg.train_config(algorithm, gamma)?;
            let output = train(
                &catalog,
                &cfg.budget_distribution(budget_loc)?,
                &train_cfg,
                &StreamFactory::new(cfg.master_seed).scoped("train"),
            )?;
            output.policy.save(out)?;
            if let Some(path) = &args.diagnostics {
                let mut text = String::from(DIAGNOSTICS_HEADER);
                text.push('\n');
                for d in &output.diagnostics {
                    text.push_str(&d.csv_row());
                    text.push('\n');
                }
                write_text(path, &text)?;
            }
            if let Some(last) = output.diagnostics.last() {
                writeln!(
                    stdout,
                    "{algorithm} gamma={} budget_loc={}: {} iterations, final eval play rate {}",
                    sig9(gamma),
                    sig9(budget_loc),
                    output.diagnostics.len(),
                    sig9(last.eval_play_rate)
                )
                .map_err(io)?;
            }
        }
        Command::Sweep(args) => {
            let cfg = args.common.load()?;
            let out = args.common.out("sweep")?;
            let catalog = args.catalog.as_deref().map(load_catalog).transpose()?;
            let sweep = SweepConfig::from_run(&cfg);
            let options = SweepOptions {
                workers: args.workers,
                dump_dir: args.dump_dir.clone(),
            };
            let result = run_sweep(&sweep, catalog.as_ref(), &options)?;
            result.write_csv(out)?;
            let failed = report_errors(&result, &mut *stderr).map_err(io)?;
            writeln!(
                stdout,
                "wrote {} rows ({failed} failed) to {}",
                result.rows.len(),
                out.display()
            )
            .map_err(io)?;
        }
        Command::Oracle(args) => {
            let cfg = args.common.load()?;
            let instance = KnapsackInstance::load(&args.instance)?;
            let resolution = args.resolution.unwrap_or(cfg.resolution);
            let solution = match args.method.as_str() {
                "bruteforce" => solve_bruteforce(&instance)?,
                "dp" => solve_dp_capped(&instance, resolution, cfg.dp_max_cells)?,
                _ if instance.len() <= MAX_BRUTEFORCE_ITEMS => solve_bruteforce(&instance)?,
                _ => solve_dp_capped(&instance, resolution, cfg.dp_max_cells)?,
            };
            let ids: Vec<String> = solution.selected.iter().map(|i| i.to_string()).collect();
            writeln!(
                stdout,
                "S={{{}}}, utility {}, cost {}",
                ids.join(","),
                sig9(solution.total_utility),
                sig9(solution.total_cost)
            )
            .map_err(io)?;
            if let Some(out) = &args.common.out {
                write_text(out, &serde_json::to_string_pretty(&solution)?)?;
            }
        }
        Command::Report(args) => {
            let cfg = args.common.load()?;
            let result = SweepResult::read_csv(&args.results)?;
            let rows = delta_report(
                &result,
                args.gamma_a,
                args.gamma_b,
                cfg.bootstrap_resamples,
                &StreamFactory::new(cfg.master_seed).scoped("report"),
            )?;
            let text = delta_csv(&rows);
            match &args.common.out {
                Some(out) => write_text(out, &text)?,
                None => write!(stdout, "{text}").map_err(io)?,
            }
        }
    }
    Ok(())
}

/// Parses `argv` (program name first) and runs the command. Returns the exit
/// status: 0 on success, 2 on usage errors, 1 on runtime failures.
pub fn run_command_with<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}

pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_command_with(argv, &mut std::io::stdout(), &mut std::io::stderr())
}
