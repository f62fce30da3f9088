//! Seedable simulation and value-based control for slate recommendation under
//! finite user time budgets.
//!
//! Users scan a slate of `K` items top to bottom. Each item has a relevance
//! `sigma` and an evaluation cost in seconds; the user can only engage with an
//! item that fits the time they have left. The crate provides:
//!
//! - [`catalog`]: item universes (synthetic or loaded from CSV) and budget/cost samplers.
//! - [`choice`]: cascade selection probabilities and user-response sampling.
//! - [`env`]: the per-slot slate MDP with budget-gated rewards and episode rollouts.
//! - [`agents`]: featurization, tree-ensemble Q regression, epsilon-greedy control and
//!   the fitted SARSA / Q-Learning / Monte-Carlo training loop.
//! - [`knapsack`]: exact 0/1 knapsack solvers used as a static reference.
//! - [`experiment`]: metrics, seeded sweeps, delta reports and sign tests.
//! - [`config`]: run configuration and deterministic random streams.
//! - [`cli`]: the `budget-slate` command-line front end.

pub mod agents;
pub mod catalog;
pub mod choice;
pub mod cli;
pub mod config;
pub mod env;
mod error;
pub mod experiment;
pub mod format;
pub mod knapsack;

pub use error::{Error, Result};
