//! The slate MDP: one episode fills the `K` slots of a slate for one user.
//!
//! State is the remaining time budget plus the slate prefix. Placing an item
//! the user can afford yields a click with probability `sigma * survival`;
//! an unaffordable item yields nothing. Budget is charged either on click
//! (`u' = u - c * r`) or on examination of every affordable item.

use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{ItemCatalog, ItemId};
use crate::choice::{self, ChoiceWeights, ResponseKind};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResponseMode {
    /// Reward drawn slot by slot along the cascade: slot `k` pays with
    /// probability `beta_k` and a slate pays at most once.
    #[default]
    BernoulliPerSlot,
    /// One categorical observation (a slot or no-choice) per slate.
    CategoricalPerSlate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChargeMode {
    #[default]
    ChargeOnClick,
    ChargeOnExamination,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoChoiceWeight {
    /// Cascade abandon probability of the built slate.
    #[default]
    Abandon,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub slate_size: usize,
    pub response_mode: ResponseMode,
    pub charge_mode: ChargeMode,
    pub no_choice: NoChoiceWeight,
}

impl EnvConfig {
    pub fn new(slate_size: usize) -> Self {
        EnvConfig {
            slate_size,
            response_mode: ResponseMode::default(),
            charge_mode: ChargeMode::default(),
            no_choice: NoChoiceWeight::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlateState {
    pub budget_remaining: f64,
    pub prefix: Vec<ItemId>,
    /// Next slot to fill; always `prefix.len()`.
    pub slot: usize,
    /// Probability the user reaches `slot`: `prod (1 - sigma)` over the prefix.
    pub survival: f64,
    /// Total evaluation cost of the prefix.
    pub prefix_cost: f64,
    /// Probability that no earlier slot was clicked: `1 - sum beta` over the prefix.
    pub open_mass: f64,
    /// A slot of this slate was already clicked.
    pub engaged: bool,
}

impl SlateState {
    pub fn contains(&self, item: ItemId) -> bool {
        self.prefix.contains(&item)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: SlateState,
    pub reward: u8,
    pub clicked: bool,
    pub affordable: bool,
}

pub fn reset(initial_budget: f64) -> Result<SlateState> {
    if !(initial_budget.is_finite() && initial_budget > 0.0) {
        return Err(Error::Domain(format!(
            "initial budget {initial_budget} must be finite and > 0"
        )));
    }
    Ok(SlateState {
        budget_remaining: initial_budget,
        prefix: Vec::new(),
        slot: 0,
        survival: 1.0,
        prefix_cost: 0.0,
        open_mass: 1.0,
        engaged: false,
    })
}

/// Items the user can still afford that are not already on the slate, by id.
pub fn affordable_items(state: &SlateState, catalog: &ItemCatalog) -> Vec<ItemId> {
    let mut ids: Vec<ItemId> = catalog
        .items()
        .iter()
        .filter(|it| it.cost <= state.budget_remaining && !state.contains(it.id))
        .map(|it| it.id)
        .collect();
    ids.sort_unstable();
    ids
}

/// Chooses the next item for a slate, or `None` to stop early.
pub trait SlatePolicy {
    fn choose(&mut self, state: &SlateState, catalog: &ItemCatalog) -> Option<ItemId>;
}

impl<F> SlatePolicy for F
where
    F: FnMut(&SlateState, &ItemCatalog) -> Option<ItemId>,
{
    fn choose(&mut self, state: &SlateState, catalog: &ItemCatalog) -> Option<ItemId> {
        self(state, catalog)
    }
}

/// One slate impression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub user_id: u64,
    pub initial_budget: f64,
    pub actions: Vec<ItemId>,
    pub sigmas: Vec<f64>,
    pub costs: Vec<f64>,
    pub rewards: Vec<u8>,
    pub click_vector: Vec<u8>,
    /// `u_0 .. u_n` for the `n` placed items.
    pub budget_path: Vec<f64>,
    pub response_mode: ResponseMode,
    pub charge_mode: ChargeMode,
    pub seed: u64,
}

impl EpisodeLog {
    pub fn clicks(&self) -> u32 {
        self.rewards.iter().map(|&r| r as u32).sum()
    }

    /// Checks budget conservation, affordability gating, prefix uniqueness and
    /// the click-count bounds.
    pub fn check_invariants(&self, slate_size: usize) -> Result<()> {
        let n = self.actions.len();
        let fail = |m: String| Err(Error::Contract(m));
        if self.sigmas.len() != n
            || self.costs.len() != n
            || self.rewards.len() != n
            || self.click_vector.len() != n
            || self.budget_path.len() != n + 1
        {
            return fail("episode log field lengths disagree".into());
        }
        if n > slate_size {
            return fail(format!("{n} actions exceed slate size {slate_size}"));
        }
        if self.budget_path[0] != self.initial_budget {
            return fail("budget path does not start at the initial budget".into());
        }
        for i in 0..n {
            if self.actions[..i].contains(&self.actions[i]) {
                return fail(format!("item {} repeats at slot {i}", self.actions[i]));
            }
            let before = self.budget_path[i];
            let affordable = self.costs[i] <= before;
            if self.rewards[i] > 1 {
                return fail(format!("reward {} at slot {i} is not binary", self.rewards[i]));
            }
            if self.rewards[i] == 1 && !affordable {
                return fail(format!("reward at slot {i} without affordability"));
            }
            let charge = match self.charge_mode {
                ChargeMode::ChargeOnClick => self.costs[i] * self.rewards[i] as f64,
                ChargeMode::ChargeOnExamination => {
                    if affordable {
                        self.costs[i]
                    } else {
                        0.0
                    }
                }
            };
            if self.budget_path[i + 1] != before - charge {
                return fail(format!("budget transition broken at slot {i}"));
            }
            if self.budget_path[i + 1] > before || self.budget_path[i + 1] < 0.0 {
                return fail(format!("budget path out of bounds at slot {i}"));
            }
        }
        if self.clicks() > 1 {
            return fail("more than one click on a slate".into());
        }
        Ok(())
    }
}

/// The MDP bound to a catalog.
#[derive(Debug, Clone, Copy)]
pub struct SlateEnv<'a> {
    pub catalog: &'a ItemCatalog,
    pub config: EnvConfig,
}

impl<'a> SlateEnv<'a> {
    pub fn new(catalog: &'a ItemCatalog, config: EnvConfig) -> Result<Self> {
        if config.slate_size == 0 {
            return Err(Error::config("slate_size", "must be >= 1"));
        }
        if let NoChoiceWeight::Fixed(w) = config.no_choice {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::config("no_choice_weight", "must be finite and >= 0"));
            }
        }
        Ok(SlateEnv { catalog, config })
    }

    fn place(&self, state: &SlateState, item: ItemId) -> Result<(SlateState, bool, f64)> {
        if state.slot >= self.config.slate_size {
            return Err(Error::Contract(format!(
                "slot {} overflows slate size {}",
                state.slot, self.config.slate_size
            )));
        }
        if state.contains(item) {
            return Err(Error::Contract(format!("item {item} already on the slate")));
        }
        let it = self
            .catalog
            .get(item)
            .ok_or_else(|| Error::Contract(format!("unknown item {item}")))?;
        let affordable = it.cost <= state.budget_remaining;
        let beta = if affordable { it.sigma * state.survival } else { 0.0 };
        let mut next = state.clone();
        next.prefix.push(item);
        next.slot += 1;
        next.survival *= 1.0 - it.sigma;
        next.prefix_cost += it.cost;
        next.open_mass = (state.open_mass - beta).max(0.0);
        Ok((next, affordable, beta))
    }

    fn charge(&self, cost: f64, affordable: bool, reward: u8) -> f64 {
        match self.config.charge_mode {
            ChargeMode::ChargeOnClick => cost * reward as f64,
            ChargeMode::ChargeOnExamination => {
                if affordable {
                    cost
                } else {
                    0.0
                }
            }
        }
    }

    /// Places `item` in the next slot.
    ///
    /// In per-slot mode the reward is drawn here. In per-slate mode the reward
    /// is deferred to the slate-level response and reported as 0.
    pub fn step<R: Rng + ?Sized>(&self, state: &SlateState, item: ItemId, rng: &mut R) -> Result<StepOutcome> {
        let (mut next, affordable, beta) = self.place(state, item)?;
        let reward = match self.config.response_mode {
            // Conditioning on no earlier click keeps P(r_k = 1) = beta_k.
            ResponseMode::BernoulliPerSlot if affordable && !state.engaged && beta > 0.0 => {
                choice::bernoulli_click((beta / state.open_mass).min(1.0), rng)?
            }
            _ => 0,
        };
        next.engaged |= reward == 1;
        let cost = self.catalog.item(item).cost;
        next.budget_remaining = state.budget_remaining - self.charge(cost, affordable, reward);
        Ok(StepOutcome {
            next_state: next,
            reward,
            clicked: reward == 1,
            affordable,
        })
    }

    /// Runs one slate of up to `K` slots for a user with budget `u0`.
    pub fn rollout_slate<P, R>(
        &self,
        policy: &mut P,
        initial_budget: f64,
        user_id: u64,
        seed: u64,
        rng: &mut R,
    ) -> Result<EpisodeLog>
    where
        P: SlatePolicy + ?Sized,
        R: Rng + ?Sized,
    {
        let mut state = reset(initial_budget)?;
        let mut log = EpisodeLog {
            user_id,
            initial_budget,
            actions: Vec::new(),
            sigmas: Vec::new(),
            costs: Vec::new(),
            rewards: Vec::new(),
            click_vector: Vec::new(),
            budget_path: vec![initial_budget],
            response_mode: self.config.response_mode,
            charge_mode: self.config.charge_mode,
            seed,
        };
        let mut betas = Vec::new();
        while state.slot < self.config.slate_size {
            let Some(item) = policy.choose(&state, self.catalog) else {
                break;
            };
            let it = *self
                .catalog
                .get(item)
                .ok_or_else(|| Error::Contract(format!("policy chose unknown item {item}")))?;
            let beta = if it.cost <= state.budget_remaining {
                it.sigma * state.survival
            } else {
                0.0
            };
            let outcome = self.step(&state, item, rng)?;
            log.actions.push(item);
            log.sigmas.push(it.sigma);
            log.costs.push(it.cost);
            log.rewards.push(outcome.reward);
            log.budget_path.push(outcome.next_state.budget_remaining);
            betas.push(beta);
            state = outcome.next_state;
        }

        if self.config.response_mode == ResponseMode::CategoricalPerSlate {
            let no_choice = match self.config.no_choice {
                NoChoiceWeight::Abandon => state.survival,
                NoChoiceWeight::Fixed(w) => w,
            };
            // Mass held only by unaffordable slots cannot be taken, so a slate
            // with no other weight left gets no click.
            let no_choice = if no_choice == 0.0 && betas.iter().all(|&b| b == 0.0) {
                1.0
            } else {
                no_choice
            };
            let response = choice::sample_user_choice(&ChoiceWeights::Probabilities { betas, no_choice }, rng)?;
            if let ResponseKind::Click(k) = response.kind {
                log.rewards[k] = 1;
            }
            // Replay the budget with the realized response.
            for k in 0..log.actions.len() {
                let before = log.budget_path[k];
                let affordable = log.costs[k] <= before;
                log.budget_path[k + 1] = before - self.charge(log.costs[k], affordable, log.rewards[k]);
            }
            log.click_vector = response.click_vector;
        } else {
            log.click_vector = log.rewards.clone();
        }
        Ok(log)
    }
}

pub fn write_episodes_jsonl<W: Write>(logs: &[EpisodeLog], mut w: W) -> Result<()> {
    for log in logs {
        serde_json::to_writer(&mut w, log)?;
        w.write_all(b"\n").map_err(|e| Error::io("<jsonl>", e))?;
    }
    Ok(())
}

pub fn read_episodes_jsonl<R: BufRead>(r: R) -> Result<Vec<EpisodeLog>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line.map_err(|e| Error::io("<jsonl>", e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
