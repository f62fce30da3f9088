//! Fitted Q iteration over simulated slates.
//!
//! Iteration 0 rolls out a uniform-random policy; each later iteration rolls
//! out the epsilon-greedy policy of the previous fit. After every rollout
//! batch the targets of all retained transitions are recomputed with the
//! previous model and a fresh regressor is fitted on them.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::candidates::{CandidateIndex, CandidateParams};
use super::features::{featurize, featurize_summary, QFeatures, StateSummary};
use super::policy::{QPolicy, StepRecord};
use super::regressor::{QRegressor, RegressorKind};
use super::scorer::{ItemScorer, Scratch};
use super::targets::{monte_carlo_returns, qlearning_target, sarsa_target};
use crate::catalog::{sample_costs, sample_initial_budget, BudgetDistribution, CostDistribution, Item, ItemCatalog};
use crate::config::{RngStream, StreamFactory};
use crate::env::{EnvConfig, EpisodeLog, SlateEnv, SlateState};
use crate::{Error, Result};

pub const MODEL_FORMAT: &str = "budget-slate-policy";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "sarsa")]
    Sarsa,
    #[serde(rename = "qlearning")]
    QLearning,
    #[serde(rename = "montecarlo")]
    MonteCarlo,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Sarsa, Algorithm::QLearning, Algorithm::MonteCarlo];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Sarsa => "sarsa",
            Algorithm::QLearning => "qlearning",
            Algorithm::MonteCarlo => "montecarlo",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "sarsa" => Ok(Algorithm::Sarsa),
            "qlearning" => Ok(Algorithm::QLearning),
            "montecarlo" | "mc" => Ok(Algorithm::MonteCarlo),
            _ => Err(Error::config("algorithms", format!("unknown algorithm `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub epsilon: f64,
    pub iterations: usize,
    pub num_users: usize,
    pub episodes_per_user: usize,
    pub env: EnvConfig,
    pub candidates: CandidateParams,
    pub regressor: RegressorKind,
    /// Uniform subsample of retained transitions used per refit.
    pub max_fit_samples: Option<usize>,
    pub diagnostic_episodes: usize,
    pub cost_floor: f64,
    /// `Some` redraws item costs for every user from this distribution.
    pub cost_resample: Option<CostDistribution>,
}

impl TrainConfig {
    pub fn new(algorithm: Algorithm, gamma: f64, slate_size: usize) -> Self {
        TrainConfig {
            algorithm,
            gamma,
            epsilon: 0.1,
            iterations: 20,
            num_users: 150,
            episodes_per_user: 1,
            env: EnvConfig::new(slate_size),
            candidates: CandidateParams::default(),
            regressor: RegressorKind::default(),
            max_fit_samples: None,
            diagnostic_episodes: 50,
            cost_floor: crate::catalog::DEFAULT_COST_FLOOR,
            cost_resample: None,
        }
    }

    fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.gamma) {
            return Err(Error::config(
                "discount_factor",
                format!("gamma {} outside [0, 1]", self.gamma),
            ));
        }
        if !unit(self.epsilon) {
            return Err(Error::config("epsilon", format!("{} outside [0, 1]", self.epsilon)));
        }
        if self.iterations == 0 {
            return Err(Error::config("iterations", "must be >= 1"));
        }
        if self.num_users == 0 || self.episodes_per_user == 0 {
            return Err(Error::config("num_users", "need at least one episode per iteration"));
        }
        if self.candidates.top_m + self.candidates.random_r == 0 {
            return Err(Error::config("top_m", "top_m + random_r must be >= 1"));
        }
        Ok(())
    }
}

/// A fitted (or not yet fitted) controller. Serializes to a self-describing
/// JSON model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPolicy {
    pub format: String,
    pub version: u32,
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub epsilon: f64,
    pub candidate_params: CandidateParams,
    pub cost_floor: f64,
    pub regressor: Option<QRegressor>,
}

impl TrainedPolicy {
    pub fn unfitted(config: &TrainConfig) -> Self {
        TrainedPolicy {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_FORMAT_VERSION,
            algorithm: config.algorithm,
            gamma: config.gamma,
            epsilon: config.epsilon,
            candidate_params: config.candidates,
            cost_floor: config.cost_floor,
            regressor: None,
        }
    }

    pub fn regressor(&self) -> Result<&QRegressor> {
        self.regressor.as_ref().ok_or(Error::NotFitted)
    }

    pub fn predict_q(&self, state: &SlateState, item: &Item) -> Result<f64> {
        let q = self.regressor()?.predict_one(&featurize(state, item, self.cost_floor));
        if q.is_finite() {
            Ok(q)
        } else {
            Err(Error::Training(format!("non-finite prediction {q}")))
        }
    }

    /// Batch scorer specialised to `catalog`.
    pub fn scorer<'a>(&'a self, catalog: &'a ItemCatalog) -> Result<ItemScorer<'a>> {
        Ok(ItemScorer::for_catalog(self.regressor()?, catalog, self.cost_floor))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let policy: TrainedPolicy = serde_json::from_str(&text)?;
        if policy.format != MODEL_FORMAT || policy.version != MODEL_FORMAT_VERSION {
            return Err(Error::Domain(format!(
                "unsupported model format {} v{}",
                policy.format, policy.version
            )));
        }
        Ok(policy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationDiagnostics {
    pub iteration: usize,
    pub mean_target: f64,
    /// Mean squared gap between the fitted targets and the previous model.
    pub td_mse: f64,
    /// Greedy play rate of the newly fitted model (NaN when disabled).
    pub eval_play_rate: f64,
    pub samples: usize,
}

pub const DIAGNOSTICS_HEADER: &str = "iteration,mean_target,td_mse,eval_play_rate";

impl IterationDiagnostics {
    pub fn csv_row(&self) -> String {
        use crate::format::sig9;
        format!(
            "{},{},{},{}",
            self.iteration,
            sig9(self.mean_target),
            sig9(self.td_mse),
            sig9(self.eval_play_rate)
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub policy: TrainedPolicy,
    pub diagnostics: Vec<IterationDiagnostics>,
}

/// Catalog(s) the users see: one shared catalog or one per user.
enum World<'a> {
    Shared(&'a ItemCatalog, CandidateIndex),
    PerUser(Vec<(ItemCatalog, CandidateIndex)>),
}

impl World<'_> {
    fn get(&self, user: usize) -> (&ItemCatalog, &CandidateIndex) {
        match self {
            World::Shared(c, i) => (c, i),
            World::PerUser(v) => (&v[user].0, &v[user].1),
        }
    }

    fn scorer<'m>(&'m self, model: &'m QRegressor, cost_floor: f64) -> ItemScorer<'m> {
        match self {
            World::Shared(c, _) => ItemScorer::for_catalog(model, c, cost_floor),
            World::PerUser(_) => ItemScorer::new(model, cost_floor),
        }
    }
}

fn resampled_catalog(
    catalog: &ItemCatalog,
    dist: &CostDistribution,
    cost_floor: f64,
    rng: &mut RngStream,
) -> Result<(ItemCatalog, CandidateIndex)> {
    let costs = sample_costs(catalog.n_items(), &dist.with_floor(cost_floor)?, rng)?;
    let cat = catalog.with_costs(&costs)?;
    let idx = CandidateIndex::new(&cat, cost_floor);
    Ok((cat, idx))
}

#[derive(Debug, Clone)]
enum Next {
    Terminal,
    Taken(QFeatures),
    Candidates {
        user: u32,
        state: StateSummary,
        start: usize,
        len: usize,
    },
}

#[derive(Debug, Default)]
struct Replay {
    features: Vec<QFeatures>,
    reward: Vec<f64>,
    mc_return: Vec<f64>,
    next: Vec<Next>,
    pool: Vec<u32>,
}

impl Replay {
    fn len(&self) -> usize {
        self.features.len()
    }

    fn push_episode(
        &mut self,
        log: &EpisodeLog,
        records: &[StepRecord],
        catalog: &ItemCatalog,
        config: &TrainConfig,
        user: usize,
    ) {
        let n = log.actions.len();
        let rewards: Vec<f64> = log.rewards.iter().map(|&r| r as f64).collect();
        let returns = monte_carlo_returns(&rewards, config.gamma);
        for k in 0..n {
            let item = catalog.item(log.actions[k]);
            self.features
                .push(featurize_summary(&records[k].state, item, config.cost_floor));
            self.reward.push(rewards[k]);
            self.mc_return.push(returns[k]);
            let next = if k + 1 >= n {
                Next::Terminal
            } else {
                let rec = &records[k + 1];
                match config.algorithm {
                    Algorithm::Sarsa => {
                        let a = catalog.item(log.actions[k + 1]);
                        Next::Taken(featurize_summary(&rec.state, a, config.cost_floor))
                    }
                    Algorithm::QLearning => {
                        let start = self.pool.len();
                        self.pool.extend(rec.candidates.iter().map(|&id| id as u32));
                        Next::Candidates {
                            user: user as u32,
                            state: rec.state,
                            start,
                            len: rec.candidates.len(),
                        }
                    }
                    Algorithm::MonteCarlo => Next::Terminal,
                }
            };
            self.next.push(next);
        }
    }
}

/// Runs the fitted iteration and returns the final policy and a per-iteration trace.
pub fn train(
    catalog: &ItemCatalog,
    budget_dist: &BudgetDistribution,
    config: &TrainConfig,
    streams: &StreamFactory,
) -> Result<TrainOutput> {
    config.validate()?;
    let world = match &config.cost_resample {
        None => World::Shared(catalog, CandidateIndex::new(catalog, config.cost_floor)),
        Some(dist) => World::PerUser(
            (0..config.num_users)
                .map(|u| {
                    resampled_catalog(
                        catalog,
                        dist,
                        config.cost_floor,
                        &mut streams.stream("user-costs", u as u64),
                    )
                })
                .collect::<Result<_>>()?,
        ),
    };
    let budgets: Vec<f64> = (0..config.num_users)
        .map(|u| sample_initial_budget(budget_dist, &mut streams.stream("user-budget", u as u64)))
        .collect();

    let per_iter = config.num_users * config.episodes_per_user;
    let mut policy = TrainedPolicy::unfitted(config);
    let mut replay = Replay::default();
    let mut diagnostics = Vec::with_capacity(config.iterations);
    let mut ids_buf: Vec<usize> = Vec::new();
    let mut q_buf: Vec<f64> = Vec::new();
    let mut scratch = Scratch::default();

    for it in 0..config.iterations {
        let prev = policy.regressor.take();
        let scorer = prev.as_ref().map(|m| world.scorer(m, config.cost_floor));
        for e in 0..per_iter {
            let user = e / config.episodes_per_user;
            let (cat, idx) = world.get(user);
            let env = SlateEnv::new(cat, config.env)?;
            let ep = (it * per_iter + e) as u64;
            let rng = streams.stream("train-policy", ep);
            let mut slate_policy = match &scorer {
                None => QPolicy::uniform(idx, config.candidates, rng),
                Some(sc) => QPolicy::new(Some(sc), idx, config.candidates, config.epsilon, rng),
            }
            .recording();
            let log = env.rollout_slate(
                &mut slate_policy,
                budgets[user],
                user as u64,
                ep,
                &mut streams.stream("train-env", ep),
            )?;
            let records = slate_policy.take_records();
            replay.push_episode(&log, &records, cat, config, user);
        }
        if replay.len() == 0 {
            return Err(Error::Training("no transitions collected (nothing affordable?)".into()));
        }

        let selected: Vec<usize> = match config.max_fit_samples {
            Some(cap) if replay.len() > cap => {
                let mut v = index::sample(&mut streams.stream("fit-sample", it as u64), replay.len(), cap).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..replay.len()).collect(),
        };

        let mut targets = Vec::with_capacity(selected.len());
        for &i in &selected {
            let r = replay.reward[i];
            let target = match (config.algorithm, &replay.next[i], &scorer) {
                (Algorithm::MonteCarlo, _, _) => replay.mc_return[i],
                // With gamma = 0 both bootstrapped targets reduce to the reward.
                (_, Next::Terminal, _) | (_, _, None) => r,
                _ if config.gamma == 0.0 => r,
                (_, Next::Taken(f), Some(sc)) => sarsa_target(r, config.gamma, sc.model().predict_one(f), false),
                (
                    _,
                    Next::Candidates {
                        user,
                        state,
                        start,
                        len,
                    },
                    Some(sc),
                ) => {
                    let (cat, _) = world.get(*user as usize);
                    ids_buf.clear();
                    ids_buf.extend(replay.pool[*start..*start + *len].iter().map(|&id| id as usize));
                    sc.score(state, cat, &ids_buf, &mut scratch, &mut q_buf);
                    let max = q_buf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    qlearning_target(r, config.gamma, (*len > 0).then_some(max), false)
                }
            };
            targets.push(target);
        }

        let x: Vec<QFeatures> = selected.iter().map(|&i| replay.features[i]).collect();
        drop(scorer);
        let td_mse = match &prev {
            None => targets.iter().map(|t| t * t).sum::<f64>() / targets.len() as f64,
            Some(m) => {
                m.predict_batch(&x, &mut q_buf);
                targets.iter().zip(&q_buf).map(|(t, q)| (t - q).powi(2)).sum::<f64>() / targets.len() as f64
            }
        };
        let mean_target = targets.iter().sum::<f64>() / targets.len() as f64;
        let fitted = QRegressor::fit(&config.regressor, &x, &targets)?;
        policy.regressor = Some(fitted);

        let eval_play_rate = if config.diagnostic_episodes > 0 {
            let logs = evaluate_inner(
                &policy,
                &world,
                budget_dist,
                config,
                config.diagnostic_episodes,
                &streams.scoped("diagnostic"),
                0,
            )?;
            logs.iter().map(|l| l.clicks() as f64).sum::<f64>() / logs.len() as f64
        } else {
            f64::NAN
        };
        diagnostics.push(IterationDiagnostics {
            iteration: it,
            mean_target,
            td_mse,
            eval_play_rate,
            samples: selected.len(),
        });
    }
    Ok(TrainOutput { policy, diagnostics })
}

fn evaluate_inner(
    policy: &TrainedPolicy,
    world: &World<'_>,
    budget_dist: &BudgetDistribution,
    config: &TrainConfig,
    episodes: usize,
    streams: &StreamFactory,
    seed_tag: u64,
) -> Result<Vec<EpisodeLog>> {
    let model = policy.regressor()?;
    let scorer = world.scorer(model, policy.cost_floor);
    let mut logs = Vec::with_capacity(episodes);
    for e in 0..episodes as u64 {
        let budget = sample_initial_budget(budget_dist, &mut streams.stream("budget", e));
        let owned;
        let (cat, idx) = match (world, &config.cost_resample) {
            (World::PerUser(_), Some(dist)) => {
                let (base, _) = world.get(0);
                owned = resampled_catalog(base, dist, config.cost_floor, &mut streams.stream("costs", e))?;
                (&owned.0, &owned.1)
            }
            _ => world.get(0),
        };
        let env = SlateEnv::new(cat, config.env)?;
        let mut p = QPolicy::new(
            Some(&scorer),
            idx,
            policy.candidate_params,
            0.0,
            streams.stream("policy", e),
        );
        logs.push(env.rollout_slate(&mut p, budget, e, seed_tag, &mut streams.stream("env", e))?);
    }
    Ok(logs)
}

/// Rolls out `episodes` fresh users under the greedy (epsilon = 0) policy.
pub fn evaluate_greedy(
    policy: &TrainedPolicy,
    catalog: &ItemCatalog,
    budget_dist: &BudgetDistribution,
    config: &TrainConfig,
    episodes: usize,
    streams: &StreamFactory,
    seed_tag: u64,
) -> Result<Vec<EpisodeLog>> {
    policy.regressor()?;
    let world = match &config.cost_resample {
        None => World::Shared(catalog, CandidateIndex::new(catalog, config.cost_floor)),
        Some(_) => World::PerUser(vec![(catalog.clone(), CandidateIndex::new(catalog, config.cost_floor))]),
    };
    evaluate_inner(policy, &world, budget_dist, config, episodes, streams, seed_tag)
}
