use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{abandon_rate, mean_effective_slate_size, play_rate};
use crate::agents::{evaluate_greedy, train, Algorithm};
use crate::catalog::{generate_synthetic_catalog, ItemCatalog};
use crate::config::{RunConfig, StreamFactory};
use crate::env::{write_episodes_jsonl, EpisodeLog};
use crate::format::sig9;
use crate::{Error, Result};

pub const RESULTS_HEADER: &str =
    "algorithm,gamma,budget_loc,seed,play_rate,effective_slate_size,abandon_rate,episodes,wall_time_s";

/// The grid of one sweep plus every other run parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub algorithms: Vec<Algorithm>,
    pub gammas: Vec<f64>,
    pub budget_locs: Vec<f64>,
    pub seeds: Vec<u64>,
    pub run: RunConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub budget_loc: f64,
    pub seed: u64,
}

impl SweepConfig {
    pub fn from_run(run: &RunConfig) -> Self {
        SweepConfig {
            algorithms: run.algorithms.clone(),
            gammas: run.gamma_grid(),
            budget_locs: run.user_budget.0.clone(),
            seeds: run.seeds.clone(),
            run: run.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.run.validate()?;
        let empty = |key: &str| Err(Error::config(key, "grid is empty"));
        if self.algorithms.is_empty() {
            return empty("algorithms");
        }
        if self.gammas.is_empty() {
            return empty("discount_factor");
        }
        if self.budget_locs.is_empty() {
            return empty("user_budget");
        }
        if self.seeds.is_empty() {
            return empty("seeds");
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::config("seeds", "seeds must be unique"));
        }
        Ok(())
    }

    /// Cells in export order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut algorithms = self.algorithms.clone();
        algorithms.sort();
        algorithms.dedup();
        let sorted = |v: &[f64]| {
            let mut v = v.to_vec();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let (gammas, budgets) = (sorted(&self.gammas), sorted(&self.budget_locs));
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        let mut cells = Vec::new();
        for &algorithm in &algorithms {
            for &gamma in &gammas {
                for &budget_loc in &budgets {
                    for &seed in &seeds {
                        cells.push(Cell {
                            algorithm,
                            gamma,
                            budget_loc,
                            seed,
                        });
                    }
                }
            }
        }
        cells
    }

    /// Streams of one replication. Every cell sharing a seed draws the same
    /// catalog, users and evaluation noise.
    pub fn seed_streams(&self, seed: u64) -> StreamFactory {
        StreamFactory::new(self.run.master_seed).scoped(&format!("seed={seed}"))
    }

    pub fn catalog_for_seed(&self, seed: u64) -> Result<ItemCatalog> {
        generate_synthetic_catalog(
            self.run.num_items,
            &self.run.relevance_params(),
            &self.run.cost_distribution()?,
            &mut self.seed_streams(seed).stream("catalog", 0),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub budget_loc: f64,
    pub seed: u64,
    pub play_rate: f64,
    pub effective_slate_size: f64,
    pub abandon_rate: f64,
    pub episodes: usize,
    pub wall_time_s: f64,
    /// Failure message of an error row (not exported to CSV).
    #[serde(skip)]
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(cell: &Cell, message: String) -> Self {
        SweepRow {
            algorithm: cell.algorithm,
            gamma: cell.gamma,
            budget_loc: cell.budget_loc,
            seed: cell.seed,
            play_rate: f64::NAN,
            effective_slate_size: f64::NAN,
            abandon_rate: f64::NAN,
            episodes: 0,
            wall_time_s: 0.0,
            error: Some(message),
        }
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.algorithm,
            sig9(self.gamma),
            sig9(self.budget_loc),
            self.seed,
            sig9(self.play_rate),
            sig9(self.effective_slate_size),
            sig9(self.abandon_rate),
            self.episodes,
            sig9(self.wall_time_s)
        )
    }

    pub fn is_error(&self) -> bool {
        self.episodes == 0
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(RESULTS_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.csv_line());
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Row {
                path: path.to_path_buf(),
                row: 0,
                message: e.to_string(),
            })?;
        let header = reader.headers().map_err(|e| Error::Row {
            path: path.to_path_buf(),
            row: 0,
            message: e.to_string(),
        })?;
        if header.iter().collect::<Vec<_>>().join(",") != RESULTS_HEADER {
            return Err(Error::Row {
                path: path.to_path_buf(),
                row: 0,
                message: format!("expected header `{RESULTS_HEADER}`"),
            });
        }
        let mut rows = Vec::new();
        for (i, record) in reader.deserialize::<SweepRow>().enumerate() {
            let row = record.map_err(|e| Error::Row {
                path: path.to_path_buf(),
                row: i + 1,
                message: e.to_string(),
            })?;
            rows.push(row);
        }
        Ok(SweepResult { rows })
    }

    /// Rows grouped by (algorithm, budget location) and then keyed by seed, for one gamma.
    pub fn by_seed(&self, algorithm: Algorithm, gamma: f64, budget_loc: f64) -> BTreeMap<u64, &SweepRow> {
        self.rows
            .iter()
            .filter(|r| {
                r.algorithm == algorithm && same(r.gamma, gamma) && same(r.budget_loc, budget_loc) && !r.is_error()
            })
            .map(|r| (r.seed, r))
            .collect()
    }
}

pub(crate) fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    pub workers: usize,
    /// Writes one JSON-lines episode file per cell into this directory.
    pub dump_dir: Option<PathBuf>,
}

pub fn episode_dump_name(cell: &Cell) -> String {
    format!(
        "{}_g{}_b{}_s{}.jsonl",
        cell.algorithm,
        sig9(cell.gamma),
        sig9(cell.budget_loc),
        cell.seed
    )
}

/// Trains a fresh policy for the cell and evaluates it greedily.
pub fn run_cell(config: &SweepConfig, cell: &Cell, catalog: &ItemCatalog) -> Result<(SweepRow, Vec<EpisodeLog>)> {
    let start = Instant::now();
    let run = &config.run;
    let streams = config.seed_streams(cell.seed);
    let budget = run.budget_distribution(cell.budget_loc)?;
    let mut train_cfg = run.train_config(cell.algorithm, cell.gamma)?;
    // Per-iteration diagnostics are not part of a sweep row and draw from
    // their own streams, so skipping them leaves the row unchanged.
    train_cfg.diagnostic_episodes = 0;
    let trained = train(catalog, &budget, &train_cfg, &streams.scoped("train"))?;
    let logs = evaluate_greedy(
        &trained.policy,
        catalog,
        &budget,
        &train_cfg,
        run.eval_episodes,
        &streams.scoped("eval"),
        cell.seed,
    )?;
    let row = SweepRow {
        algorithm: cell.algorithm,
        gamma: cell.gamma,
        budget_loc: cell.budget_loc,
        seed: cell.seed,
        play_rate: play_rate(&logs)?,
        effective_slate_size: mean_effective_slate_size(&logs)?,
        abandon_rate: abandon_rate(&logs)?,
        episodes: logs.len(),
        wall_time_s: if run.record_wall_time {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        },
        error: None,
    };
    Ok((row, logs))
}

/// Runs every cell. `catalog` replaces the per-seed synthetic catalogs when given.
/// Failed cells become error rows; the output does not depend on `workers`.
pub fn run_sweep(config: &SweepConfig, catalog: Option<&ItemCatalog>, options: &SweepOptions) -> Result<SweepResult> {
    config.validate()?;
    if let Some(dir) = &options.dump_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| Error::Resource(e.to_string()))?;
    let cells = config.cells();
    pool.install(|| {
        let catalogs: BTreeMap<u64, ItemCatalog> = match catalog {
            Some(_) => BTreeMap::new(),
            None => config
                .seeds
                .par_iter()
                .map(|&s| config.catalog_for_seed(s).map(|c| (s, c)))
                .collect::<Result<_>>()?,
        };
        let rows = cells
            .par_iter()
            .map(|cell| {
                let cat = catalog.unwrap_or_else(|| &catalogs[&cell.seed]);
                let outcome = run_cell(config, cell, cat).and_then(|(row, logs)| {
                    if let Some(dir) = &options.dump_dir {
                        let path = dir.join(episode_dump_name(cell));
                        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                        write_episodes_jsonl(&logs, std::io::BufWriter::new(file))?;
                    }
                    Ok(row)
                });
                outcome.unwrap_or_else(|e| SweepRow::failed(cell, e.to_string()))
            })
            .collect();
        Ok(SweepResult { rows })
    })
}

/// Writes a progress-free summary of failed cells to `out`.
pub fn report_errors<W: Write>(result: &SweepResult, mut out: W) -> std::io::Result<usize> {
    let mut n = 0;
    for row in &result.rows {
        if let Some(msg) = &row.error {
            writeln!(
                out,
                "cell {} gamma={} budget_loc={} seed={} failed: {msg}",
                row.algorithm,
                sig9(row.gamma),
                sig9(row.budget_loc),
                row.seed
            )?;
            n += 1;
        }
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Grid;

    fn tiny_run() -> RunConfig {
        RunConfig {
            num_users: 10,
            num_items: 200,
            slate_size: 5,
            user_budget: Grid(vec![100.0]),
            discount_factor: Grid(vec![0.8]),
            include_bandit: false,
            algorithms: vec![Algorithm::Sarsa],
            seeds: vec![0],
            iterations: 2,
            eval_episodes: 20,
            diagnostic_episodes: 0,
            top_m: 5,
            random_r: 5,
            gbrt_rounds: 10,
            ..RunConfig::default()
        }
    }

    #[test]
    fn single_cell_grid() {
        let cfg = SweepConfig::from_run(&tiny_run());
        let res = run_sweep(&cfg, None, &SweepOptions::default()).unwrap();
        assert_eq!(res.rows.len(), 1);
        let r = &res.rows[0];
        assert_eq!(r.episodes, 20);
        assert!(r.play_rate >= 0.0 && r.play_rate <= 5.0);
        assert!((0.0..=1.0).contains(&r.abandon_rate));
    }

    #[test]
    fn default_cardinality() {
        let cfg = SweepConfig::from_run(&RunConfig::default());
        assert_eq!(cfg.cells().len(), 3 * 6 * 9 * 20);
    }

    #[test]
    fn csv_round_trip() {
        let mut run = tiny_run();
        run.seeds = vec![3, 1];
        let cfg = SweepConfig::from_run(&run);
        let res = run_sweep(
            &cfg,
            None,
            &SweepOptions {
                workers: 2,
                dump_dir: None,
            },
        )
        .unwrap();
        assert_eq!(res.rows.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![1, 3]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        res.write_csv(&p).unwrap();
        let back = SweepResult::read_csv(&p).unwrap();
        assert_eq!(back.to_csv(), res.to_csv());
    }

    #[test]
    fn failed_cells_become_error_rows() {
        // A catalog where nothing is ever affordable yields no transitions.
        let cat = ItemCatalog::from_parts(&[0.5], &[1e6]).unwrap();
        let cfg = SweepConfig::from_run(&tiny_run());
        let res = run_sweep(&cfg, Some(&cat), &SweepOptions::default()).unwrap();
        assert!(res.rows[0].is_error());
        assert!(res.rows[0].play_rate.is_nan());
        let mut buf = Vec::new();
        assert_eq!(report_errors(&res, &mut buf).unwrap(), 1);
    }

    #[test]
    fn duplicate_seeds_rejected() {
        let mut cfg = SweepConfig::from_run(&tiny_run());
        cfg.seeds = vec![1, 1];
        assert!(cfg.validate().is_err());
    }
}
