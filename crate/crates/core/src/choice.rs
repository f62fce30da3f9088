//! Cascade selection probabilities and user-response sampling.
//!
//! A user scans slots in order and takes slot `k` with probability `sigma_k`
//! if they reached it, so `beta_k = sigma_k * prod_{m<k}(1 - sigma_m)` and the
//! user abandons with probability `prod_m (1 - sigma_m)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionProfile {
    pub betas: Vec<f64>,
    pub abandon: f64,
    pub slate_prob: f64,
}

fn check_probability(x: f64, what: &str) -> Result<()> {
    if x.is_finite() && (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} {x} outside [0, 1]")))
    }
}

/// Cascade `beta_k` and the abandon probability for a slate's sigmas.
pub fn selection_probabilities(sigmas: &[f64]) -> Result<SelectionProfile> {
    let mut betas = Vec::with_capacity(sigmas.len());
    let mut survival = 1.0;
    for &s in sigmas {
        check_probability(s, "sigma")?;
        betas.push(s * survival);
        survival *= 1.0 - s;
    }
    let slate_prob = betas.iter().sum::<f64>();
    Ok(SelectionProfile {
        betas,
        abandon: survival,
        slate_prob,
    })
}

/// Outcome of one slate impression in the one-observation model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResponseKind {
    Click(usize),
    NoChoice,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserResponse {
    pub kind: ResponseKind,
    pub click_vector: Vec<u8>,
}

impl UserResponse {
    fn new(kind: ResponseKind, slots: usize) -> Self {
        let mut click_vector = vec![0u8; slots];
        if let ResponseKind::Click(k) = kind {
            click_vector[k] = 1;
        }
        UserResponse { kind, click_vector }
    }
}

/// Inputs to the slate-level categorical choice.
#[derive(Debug, Clone, PartialEq)]
pub enum ChoiceWeights {
    /// Nonnegative per-slot masses and the no-choice mass (need not sum to 1).
    Probabilities { betas: Vec<f64>, no_choice: f64 },
    /// Log-relevances; `-inf` means the outcome is impossible.
    LogRelevances { logits: Vec<f64>, no_choice: f64 },
}

impl ChoiceWeights {
    /// Cascade-consistent weights: no-choice mass is the abandon probability.
    pub fn from_profile(profile: &SelectionProfile) -> Self {
        ChoiceWeights::Probabilities {
            betas: profile.betas.clone(),
            no_choice: profile.abandon,
        }
    }

    fn slots(&self) -> usize {
        match self {
            ChoiceWeights::Probabilities { betas, .. } => betas.len(),
            ChoiceWeights::LogRelevances { logits, .. } => logits.len(),
        }
    }
}

/// Exact categorical probabilities over `[slot 0, .., slot K-1, no-choice]`,
/// i.e. softmax of the log weights.
pub fn categorical_probabilities(weights: &ChoiceWeights) -> Result<Vec<f64>> {
    let raw: Vec<f64> = match weights {
        ChoiceWeights::Probabilities { betas, no_choice } => {
            let mut w = betas.clone();
            w.push(*no_choice);
            if let Some(bad) = w.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                return Err(Error::Domain(format!("choice weight {bad} must be finite and >= 0")));
            }
            w
        }
        ChoiceWeights::LogRelevances { logits, no_choice } => {
            let mut l = logits.clone();
            l.push(*no_choice);
            if l.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
                return Err(Error::Domain("logits must be finite or -inf".into()));
            }
            let max = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(Error::DegenerateDistribution("all logits are -inf".into()));
            }
            l.iter().map(|x| (x - max).exp()).collect()
        }
    };
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateDistribution("all choice weights are zero".into()));
    }
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Samples exactly one outcome for the slate.
pub fn sample_user_choice<R: Rng + ?Sized>(weights: &ChoiceWeights, rng: &mut R) -> Result<UserResponse> {
    let probs = categorical_probabilities(weights)?;
    let slots = weights.slots();
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut chosen = None;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if p > 0.0 && u < acc {
            chosen = Some(i);
            break;
        }
    }
    // Rounding can leave `acc` a hair below 1; fall back to the last outcome
    // with positive mass.
    let idx = chosen.unwrap_or_else(|| probs.iter().rposition(|&p| p > 0.0).expect("positive mass"));
    let kind = if idx == slots {
        ResponseKind::NoChoice
    } else {
        ResponseKind::Click(idx)
    };
    Ok(UserResponse::new(kind, slots))
}

pub fn bernoulli_click<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> Result<u8> {
    check_probability(beta, "beta")?;
    let u: f64 = rng.random();
    Ok(u8::from(u < beta))
}
