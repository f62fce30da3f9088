use serde::{Deserialize, Serialize};

use crate::catalog::Item;
use crate::env::SlateState;

pub const FEATURE_DIM: usize = 8;

pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "budget_remaining",
    "slot",
    "survival",
    "prefix_cost",
    "sigma",
    "cost",
    "conditional_beta",
    "sigma_per_second",
];

/// Joint state/action input of the Q regressor, in [`FEATURE_NAMES`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QFeatures(pub [f64; FEATURE_DIM]);

/// The state components the features read; cheaper to store than a full state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    pub budget_remaining: f64,
    pub slot: usize,
    pub survival: f64,
    pub prefix_cost: f64,
}

impl From<&SlateState> for StateSummary {
    fn from(s: &SlateState) -> Self {
        StateSummary {
            budget_remaining: s.budget_remaining,
            slot: s.slot,
            survival: s.survival,
            prefix_cost: s.prefix_cost,
        }
    }
}

pub fn featurize(state: &SlateState, item: &Item, cost_floor: f64) -> QFeatures {
    featurize_summary(&StateSummary::from(state), item, cost_floor)
}

pub fn featurize_summary(s: &StateSummary, item: &Item, cost_floor: f64) -> QFeatures {
    QFeatures([
        s.budget_remaining,
        s.slot as f64,
        s.survival,
        s.prefix_cost,
        item.sigma,
        item.cost,
        item.sigma * s.survival,
        item.ratio(cost_floor),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::DEFAULT_COST_FLOOR;
    use crate::env::reset;

    #[test]
    fn initial_state_vector() {
        let s = reset(100.0).unwrap();
        let item = Item {
            id: 0,
            sigma: 0.3,
            cost: 20.0,
        };
        let f = featurize(&s, &item, DEFAULT_COST_FLOOR);
        assert_eq!(f.0, [100.0, 0.0, 1.0, 0.0, 0.3, 20.0, 0.3, 0.015]);
    }

    #[test]
    fn zero_survival_zeroes_conditional_beta() {
        let mut s = reset(100.0).unwrap();
        s.survival = 0.0;
        let f = featurize(
            &s,
            &Item {
                id: 0,
                sigma: 0.9,
                cost: 5.0,
            },
            DEFAULT_COST_FLOOR,
        );
        assert_eq!(f.0[6], 0.0);
    }

    #[test]
    fn budget_only_touches_first_component() {
        let item = Item {
            id: 1,
            sigma: 0.4,
            cost: 7.0,
        };
        let a = featurize(&reset(100.0).unwrap(), &item, DEFAULT_COST_FLOOR);
        let b = featurize(&reset(60.0).unwrap(), &item, DEFAULT_COST_FLOOR);
        for i in 0..FEATURE_DIM {
            assert_eq!(a.0[i] == b.0[i], i != 0, "component {i}");
        }
    }
}
