//! Value-based slate controllers.
//!
//! A controller scores `(state, item)` pairs with a regression model of the
//! action value and fills each slot epsilon-greedily over a small candidate
//! set. Training alternates rollouts with batch refits of the model
//! (fitted Q iteration) using SARSA, Q-Learning or Monte-Carlo targets.

mod candidates;
mod features;
mod gbrt;
mod policy;
mod regressor;
mod scorer;
mod targets;
mod train;

pub use candidates::{candidate_actions, CandidateIndex, CandidateParams};
pub use features::{featurize, featurize_summary, QFeatures, StateSummary, FEATURE_DIM, FEATURE_NAMES};
pub use gbrt::{GbrtModel, GbrtParams};
pub use policy::{argmax_lowest_id, epsilon_greedy_select, QPolicy};
pub use regressor::{LookupTable, QRegressor, RegressorKind, RidgeModel};
pub use scorer::{ItemScorer, Scratch};
pub use targets::{monte_carlo_returns, qlearning_target, sarsa_target};
pub use train::{
    evaluate_greedy, train, Algorithm, IterationDiagnostics, TrainConfig, TrainOutput, TrainedPolicy,
    DIAGNOSTICS_HEADER, MODEL_FORMAT, MODEL_FORMAT_VERSION,
};
