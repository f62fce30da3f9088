//! Bootstrap targets for the fitted Q iteration.

/// On-policy backup `r + gamma * Q(s', a')` with the next action actually taken.
pub fn sarsa_target(reward: f64, gamma: f64, q_next_taken: f64, terminal: bool) -> f64 {
    if terminal {
        reward
    } else {
        reward + gamma * q_next_taken
    }
}

/// Off-policy backup `r + gamma * max_a Q(s', a)`. `None` (no candidate at the
/// next state) is terminal.
pub fn qlearning_target(reward: f64, gamma: f64, q_next_max: Option<f64>, terminal: bool) -> f64 {
    match q_next_max {
        Some(q) if !terminal => reward + gamma * q,
        _ => reward,
    }
}

/// Discounted returns `G_k = r_k + gamma * G_{k+1}`, computed backwards.
pub fn monte_carlo_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for k in (0..rewards.len()).rev() {
        acc = rewards[k] + gamma * acc;
        out[k] = acc;
    }
    out
}
