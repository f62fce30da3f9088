//! Run configuration and deterministic random-stream derivation.
//!
//! Every random draw in a run comes from a stream derived from
//! `(master_seed, label, index)`; streams never depend on the order in which
//! work is scheduled, so parallel and sequential runs agree bit for bit.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::agents::{Algorithm, CandidateParams, RegressorKind, TrainConfig};
use crate::catalog::{BudgetDistribution, CostAssignment, CostDistribution, RelevanceParams};
use crate::env::{ChargeMode, EnvConfig, NoChoiceWeight, ResponseMode};
use crate::{Error, Result};

/// Prefix of environment variables that override config keys,
/// e.g. `BUDGET_SLATE_EPSILON=0.2`.
pub const ENV_PREFIX: &str = "BUDGET_SLATE_";

/// A reproducible random stream (ChaCha8 keyed by a stable hash).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream(ChaCha8Rng);

impl RngStream {
    pub fn from_seed_bytes(seed: [u8; 32]) -> Self {
        RngStream(ChaCha8Rng::from_seed(seed))
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

/// Derives the stream for `(master_seed, label, index)`.
///
/// The key is SHA-256 over a length-prefixed encoding, so `("ab", 1)` and
/// `("a", ...)` can never collide by concatenation.
pub fn derive_stream(master_seed: u64, label: &str, index: u64) -> RngStream {
    let mut hasher = Sha256::new();
    hasher.update(b"budget-slate/stream/v1");
    hasher.update(master_seed.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest[..32]);
    RngStream::from_seed_bytes(seed)
}

/// Hands out streams under a hierarchical label scope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamFactory {
    master_seed: u64,
    scope: String,
}

impl StreamFactory {
    pub fn new(master_seed: u64) -> Self {
        StreamFactory {
            master_seed,
            scope: String::new(),
        }
    }

    pub fn scoped(&self, name: &str) -> Self {
        let scope = if self.scope.is_empty() {
            name.to_string()
        } else {
            format!("{}/{}", self.scope, name)
        };
        StreamFactory {
            master_seed: self.master_seed,
            scope,
        }
    }

    pub fn stream(&self, label: &str, index: u64) -> RngStream {
        if self.scope.is_empty() {
            derive_stream(self.master_seed, label, index)
        } else {
            derive_stream(self.master_seed, &format!("{}/{}", self.scope, label), index)
        }
    }
}

/// A scalar or a list in the config file; always a list in memory.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Grid(pub Vec<f64>);

impl<'de> Deserialize<'de> for Grid {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum OneOrMany {
            One(f64),
            Many(Vec<f64>),
        }
        Ok(match OneOrMany::deserialize(d)? {
            OneOrMany::One(x) => Grid(vec![x]),
            OneOrMany::Many(v) => Grid(v),
        })
    }
}

/// Every knob of a run. Keys are the serialized field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub slate_size: usize,
    pub cost_low: f64,
    pub cost_high: f64,
    /// Budget location grid (median of the log-normal, seconds).
    pub user_budget: Grid,
    pub user_budget_scale: f64,
    pub epsilon: f64,
    pub discount_factor: Grid,

    /// Adds the gamma = 0 contextual-bandit baseline to the gamma grid.
    pub include_bandit: bool,
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    pub master_seed: u64,
    pub episodes_per_user: usize,
    pub iterations: usize,
    pub eval_episodes: usize,
    pub diagnostic_episodes: usize,
    pub response_mode: ResponseMode,
    pub charge_mode: ChargeMode,
    pub cost_assignment: CostAssignment,
    pub top_m: usize,
    pub random_r: usize,
    pub regressor: String,
    pub gbrt_rounds: usize,
    pub gbrt_max_depth: usize,
    pub gbrt_learning_rate: f64,
    pub gbrt_max_bins: usize,
    pub gbrt_min_samples_leaf: usize,
    pub gbrt_l2: f64,
    pub ridge_lambda: f64,
    /// Cap on transitions used per refit (uniform subsample); `null` = all.
    pub max_fit_samples: Option<usize>,
    pub cost_floor: f64,
    pub resolution: f64,
    pub dp_max_cells: usize,
    pub relevance_alpha: f64,
    pub relevance_beta: f64,
    /// Fixed no-choice mass; `null` uses the cascade abandon probability.
    pub no_choice_weight: Option<f64>,
    pub bootstrap_resamples: usize,
    pub record_wall_time: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            num_users: 150,
            num_items: 142_998,
            slate_size: 30,
            cost_low: 0.0,
            cost_high: 100.0,
            user_budget: Grid((0..9).map(|i| 100.0 + 50.0 * i as f64).collect()),
            user_budget_scale: 0.5,
            epsilon: 0.1,
            discount_factor: Grid(vec![0.2, 0.4, 0.6, 0.8, 1.0]),
            include_bandit: true,
            algorithms: vec![Algorithm::Sarsa, Algorithm::QLearning, Algorithm::MonteCarlo],
            seeds: (0..20).collect(),
            master_seed: 0,
            episodes_per_user: 1,
            iterations: 20,
            eval_episodes: 500,
            diagnostic_episodes: 50,
            response_mode: ResponseMode::BernoulliPerSlot,
            charge_mode: ChargeMode::ChargeOnClick,
            cost_assignment: CostAssignment::PerItem,
            top_m: CandidateParams::default().top_m,
            random_r: CandidateParams::default().random_r,
            regressor: "gbrt".to_string(),
            gbrt_rounds: 100,
            gbrt_max_depth: 3,
            gbrt_learning_rate: 0.1,
            gbrt_max_bins: 64,
            gbrt_min_samples_leaf: 5,
            gbrt_l2: 1.0,
            ridge_lambda: 1e-6,
            max_fit_samples: None,
            cost_floor: crate::catalog::DEFAULT_COST_FLOOR,
            resolution: 0.1,
            dp_max_cells: 50_000_000,
            relevance_alpha: 2.0,
            relevance_beta: 8.0,
            no_choice_weight: None,
            bootstrap_resamples: 2000,
            record_wall_time: false,
        }
    }
}

impl RunConfig {
    /// Builds a config from a flat key/value map (after defaults), then validates.
    pub fn from_map(map: Map<String, Value>) -> Result<Self> {
        let defaults = serde_json::to_value(RunConfig::default())?;
        let Value::Object(mut merged) = defaults else {
            unreachable!("config serializes to an object")
        };
        let known: Vec<String> = merged.keys().cloned().collect();
        for (key, value) in map {
            if !known.contains(&key) {
                return Err(Error::config(key, "unknown key"));
            }
            merged.insert(key, value);
        }
        // Deserialize key by key so type errors name the key.
        for (key, value) in &merged {
            let mut probe = Map::new();
            probe.insert(key.clone(), value.clone());
            if let Err(e) = serde_json::from_value::<RunConfig>(Value::Object(probe)) {
                return Err(Error::config(key.clone(), e.to_string()));
            }
        }
        let config: RunConfig = serde_json::from_value(Value::Object(merged))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_map(&self) -> Map<String, Value> {
        match serde_json::to_value(self).expect("config serializes") {
            Value::Object(m) => m,
            _ => unreachable!(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, key: &str, msg: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::config(key, msg))
            }
        }
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        check(self.num_users >= 1, "num_users", "must be >= 1")?;
        check(self.num_items >= 1, "num_items", "must be >= 1")?;
        check(self.slate_size >= 1, "slate_size", "must be >= 1")?;
        check(
            self.cost_low.is_finite() && self.cost_low >= 0.0,
            "cost_low",
            "must be finite and >= 0",
        )?;
        check(
            self.cost_high.is_finite() && self.cost_high > self.cost_low,
            "cost_high",
            "must be finite and > cost_low",
        )?;
        check(!self.user_budget.0.is_empty(), "user_budget", "grid is empty")?;
        check(
            self.user_budget.0.iter().all(|&x| x.is_finite() && x > 0.0),
            "user_budget",
            "every location must be finite and > 0",
        )?;
        check(
            self.user_budget_scale.is_finite() && self.user_budget_scale >= 0.0,
            "user_budget_scale",
            "must be finite and >= 0",
        )?;
        check(unit(self.epsilon), "epsilon", "must lie in [0, 1]")?;
        check(!self.discount_factor.0.is_empty(), "discount_factor", "grid is empty")?;
        check(
            self.discount_factor.0.iter().all(|&g| unit(g)),
            "discount_factor",
            "every gamma must lie in [0, 1]",
        )?;
        check(!self.algorithms.is_empty(), "algorithms", "must be nonempty")?;
        check(!self.seeds.is_empty(), "seeds", "must be nonempty")?;
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        check(seeds.len() == self.seeds.len(), "seeds", "seeds must be unique")?;
        check(self.episodes_per_user >= 1, "episodes_per_user", "must be >= 1")?;
        check(self.iterations >= 1, "iterations", "must be >= 1")?;
        check(self.eval_episodes >= 1, "eval_episodes", "must be >= 1")?;
        check(
            self.top_m + self.random_r >= 1,
            "top_m",
            "top_m + random_r must be >= 1",
        )?;
        self.regressor_kind()?;
        check(self.gbrt_rounds >= 1, "gbrt_rounds", "must be >= 1")?;
        check(
            (1..=8).contains(&self.gbrt_max_depth),
            "gbrt_max_depth",
            "must lie in 1..=8",
        )?;
        check(
            self.gbrt_learning_rate > 0.0 && self.gbrt_learning_rate <= 1.0,
            "gbrt_learning_rate",
            "must lie in (0, 1]",
        )?;
        check(
            (2..=256).contains(&self.gbrt_max_bins),
            "gbrt_max_bins",
            "must lie in 2..=256",
        )?;
        check(self.gbrt_min_samples_leaf >= 1, "gbrt_min_samples_leaf", "must be >= 1")?;
        check(self.gbrt_l2 >= 0.0, "gbrt_l2", "must be >= 0")?;
        check(self.ridge_lambda >= 0.0, "ridge_lambda", "must be >= 0")?;
        check(
            self.max_fit_samples.is_none_or(|n| n >= 1),
            "max_fit_samples",
            "must be >= 1 or null",
        )?;
        check(
            self.cost_floor.is_finite() && self.cost_floor > 0.0,
            "cost_floor",
            "must be finite and > 0",
        )?;
        check(
            self.resolution.is_finite() && self.resolution > 0.0,
            "resolution",
            "must be finite and > 0",
        )?;
        check(self.dp_max_cells >= 1, "dp_max_cells", "must be >= 1")?;
        check(
            self.relevance_alpha > 0.0 && self.relevance_alpha.is_finite(),
            "relevance_alpha",
            "must be finite and > 0",
        )?;
        check(
            self.relevance_beta >= 0.0 && self.relevance_beta.is_finite(),
            "relevance_beta",
            "must be finite and >= 0",
        )?;
        check(
            self.no_choice_weight.is_none_or(|w| w.is_finite() && w >= 0.0),
            "no_choice_weight",
            "must be finite and >= 0 or null",
        )?;
        check(self.bootstrap_resamples >= 1, "bootstrap_resamples", "must be >= 1")?;
        Ok(())
    }

    /// Gamma grid including the bandit baseline when enabled, ascending, deduplicated.
    pub fn gamma_grid(&self) -> Vec<f64> {
        let mut gammas = self.discount_factor.0.clone();
        if self.include_bandit {
            gammas.push(0.0);
        }
        gammas.sort_by(f64::total_cmp);
        gammas.dedup();
        gammas
    }

    pub fn regressor_kind(&self) -> Result<RegressorKind> {
        match self.regressor.as_str() {
            "gbrt" => Ok(RegressorKind::Gbrt(crate::agents::GbrtParams {
                rounds: self.gbrt_rounds,
                max_depth: self.gbrt_max_depth,
                learning_rate: self.gbrt_learning_rate,
                max_bins: self.gbrt_max_bins,
                min_samples_leaf: self.gbrt_min_samples_leaf,
                l2: self.gbrt_l2,
            })),
            "ridge" => Ok(RegressorKind::Ridge {
                lambda: self.ridge_lambda,
            }),
            "table" => Ok(RegressorKind::Table),
            other => Err(Error::config(
                "regressor",
                format!("unknown regressor `{other}` (expected gbrt, ridge or table)"),
            )),
        }
    }

    pub fn cost_distribution(&self) -> Result<CostDistribution> {
        CostDistribution::new(self.cost_low, self.cost_high)
    }

    pub fn budget_distribution(&self, loc: f64) -> Result<BudgetDistribution> {
        BudgetDistribution::new(loc, self.user_budget_scale)
    }

    pub fn relevance_params(&self) -> RelevanceParams {
        RelevanceParams {
            alpha: self.relevance_alpha,
            beta: self.relevance_beta,
        }
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            slate_size: self.slate_size,
            response_mode: self.response_mode,
            charge_mode: self.charge_mode,
            no_choice: match self.no_choice_weight {
                Some(w) => NoChoiceWeight::Fixed(w),
                None => NoChoiceWeight::Abandon,
            },
        }
    }

    pub fn train_config(&self, algorithm: Algorithm, gamma: f64) -> Result<TrainConfig> {
        Ok(TrainConfig {
            algorithm,
            gamma,
            epsilon: self.epsilon,
            iterations: self.iterations,
            num_users: self.num_users,
            episodes_per_user: self.episodes_per_user,
            env: self.env_config(),
            candidates: CandidateParams {
                top_m: self.top_m,
                random_r: self.random_r,
            },
            regressor: self.regressor_kind()?,
            max_fit_samples: self.max_fit_samples,
            diagnostic_episodes: self.diagnostic_episodes,
            cost_floor: self.cost_floor,
            cost_resample: match self.cost_assignment {
                CostAssignment::PerItem => None,
                CostAssignment::PerUser => Some(self.cost_distribution()?),
            },
        })
    }

    /// Writes the config as pretty JSON.
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Parses a flat key/value document: JSON object, or `key: value` /
/// `key = value` lines whose values are JSON literals (bare words are strings).
pub fn parse_document(text: &str) -> Result<Map<String, Value>> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Ok(Map::new());
    }
    if trimmed.starts_with('{') {
        return match serde_json::from_str::<Value>(trimmed)? {
            Value::Object(m) => Ok(m),
            _ => Err(Error::config("<document>", "expected a JSON object")),
        };
    }
    let mut map = Map::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once(':').or_else(|| line.split_once('=')) else {
            return Err(Error::config(format!("<line {}>", lineno + 1), "expected `key: value`"));
        };
        let key = key.trim().trim_matches('"').to_string();
        map.insert(key, parse_scalar(value.trim()));
    }
    Ok(map)
}

/// Interprets a raw string value as JSON, falling back to a plain string.
pub fn parse_scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Collects `BUDGET_SLATE_<KEY>` overrides from the process environment.
pub fn env_overrides() -> Map<String, Value> {
    let known = RunConfig::default().to_map();
    let mut out = Map::new();
    for key in known.keys() {
        let var = format!("{ENV_PREFIX}{}", key.to_ascii_uppercase());
        if let Ok(raw) = std::env::var(&var) {
            out.insert(key.clone(), parse_scalar(&raw));
        }
    }
    out
}

/// Loads a config file; unspecified keys take their defaults.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    load_config_with(Some(path), &Map::new(), false)
}

/// Layers defaults < file < environment (when `use_env`) < explicit overrides.
pub fn load_config_with(path: Option<&Path>, overrides: &Map<String, Value>, use_env: bool) -> Result<RunConfig> {
    let mut layered: BTreeMap<String, Value> = BTreeMap::new();
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        layered.extend(parse_document(&text)?);
    }
    if use_env {
        layered.extend(env_overrides());
    }
    layered.extend(overrides.clone());
    RunConfig::from_map(layered.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn draws(mut s: RngStream, n: usize) -> Vec<u64> {
        (0..n).map(|_| s.next_u64()).collect()
    }

    #[test]
    fn defaults_carry_simulation_table() {
        let c = RunConfig::default();
        assert_eq!(c.num_users, 150);
        assert_eq!(c.num_items, 142_998);
        assert_eq!(c.slate_size, 30);
        assert_eq!((c.cost_low, c.cost_high), (0.0, 100.0));
        assert_eq!(
            c.user_budget.0,
            vec![100.0, 150.0, 200.0, 250.0, 300.0, 350.0, 400.0, 450.0, 500.0]
        );
        assert_eq!(c.user_budget_scale, 0.5);
        assert_eq!(c.epsilon, 0.1);
        assert_eq!(c.discount_factor.0, vec![0.2, 0.4, 0.6, 0.8, 1.0]);
        assert_eq!(c.gamma_grid(), vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
    }

    #[test]
    fn empty_document_is_defaults() {
        let c = RunConfig::from_map(parse_document("").unwrap()).unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn out_of_range_epsilon_names_key() {
        let err = RunConfig::from_map(parse_document("epsilon: 1.5").unwrap()).unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "epsilon"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn unknown_key_rejected() {
        let err = RunConfig::from_map(parse_document("{\"epsilonn\": 0.1}").unwrap()).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "epsilonn"));
    }

    #[test]
    fn wrong_type_names_key() {
        let err = RunConfig::from_map(parse_document("slate_size: \"many\"").unwrap()).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "slate_size"));
    }

    #[test]
    fn scalar_grid_accepted() {
        let c = RunConfig::from_map(parse_document("user_budget: 250\ndiscount_factor = 0.8").unwrap()).unwrap();
        assert_eq!(c.user_budget.0, vec![250.0]);
        assert_eq!(c.discount_factor.0, vec![0.8]);
    }

    #[test]
    fn duplicate_seeds_rejected() {
        let err = RunConfig::from_map(parse_document("seeds: [1, 2, 1]").unwrap()).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "seeds"));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let c = RunConfig {
            epsilon: 0.25,
            seeds: vec![3, 9],
            no_choice_weight: Some(0.1),
            charge_mode: ChargeMode::ChargeOnExamination,
            ..RunConfig::default()
        };
        c.save(&path).unwrap();
        assert_eq!(load_config(&path).unwrap(), c);
    }

    #[test]
    fn streams_are_reproducible_and_separated() {
        let a = draws(derive_stream(7, "episode", 7), 1000);
        assert_eq!(a, draws(derive_stream(7, "episode", 7), 1000));
        assert_ne!(a, draws(derive_stream(7, "episode", 8), 1000));
        assert_ne!(a, draws(derive_stream(7, "costs", 7), 1000));
        assert_ne!(a, draws(derive_stream(8, "episode", 7), 1000));
    }

    #[test]
    fn scoped_factory_matches_joined_label() {
        let f = StreamFactory::new(11).scoped("seed=3");
        assert_eq!(
            draws(f.stream("train", 2), 10),
            draws(derive_stream(11, "seed=3/train", 2), 10)
        );
    }

    #[test]
    fn stream_uniformity_chi_squared() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let bins = 100usize;
        let n = 100_000usize;
        let crit = ChiSquared::new((bins - 1) as f64).unwrap().inverse_cdf(0.999);
        for (label, index) in [("episode", 0u64), ("costs", 1), ("catalog", 99)] {
            let mut s = derive_stream(2024, label, index);
            let mut counts = vec![0usize; bins];
            for _ in 0..n {
                let u: f64 = s.random();
                counts[((u * bins as f64) as usize).min(bins - 1)] += 1;
            }
            let expected = n as f64 / bins as f64;
            let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
            assert!(chi2 < crit, "{label}/{index}: chi2 {chi2} >= {crit}");
        }
    }
}
