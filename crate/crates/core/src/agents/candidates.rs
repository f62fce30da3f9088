//! Per-step candidate sets: the best few items by relevance per second plus a
//! uniform sample of the remaining affordable items.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{ItemCatalog, ItemId};
use crate::env::SlateState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateParams {
    pub top_m: usize,
    pub random_r: usize,
}

impl Default for CandidateParams {
    fn default() -> Self {
        CandidateParams {
            top_m: 50,
            random_r: 10,
        }
    }
}

/// Catalog orderings reused across every step of a run.
#[derive(Debug, Clone)]
pub struct CandidateIndex {
    /// Ids by `sigma / cost` descending, ties by id.
    by_ratio: Vec<ItemId>,
    /// Ids by cost ascending, ties by id.
    by_cost: Vec<ItemId>,
    sorted_costs: Vec<f64>,
}

impl CandidateIndex {
    pub fn new(catalog: &ItemCatalog, cost_floor: f64) -> Self {
        let items = catalog.items();
        let mut by_ratio: Vec<ItemId> = items.iter().map(|it| it.id).collect();
        by_ratio.sort_by(|&a, &b| {
            let (ra, rb) = (catalog.item(a).ratio(cost_floor), catalog.item(b).ratio(cost_floor));
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let mut by_cost: Vec<ItemId> = items.iter().map(|it| it.id).collect();
        by_cost.sort_by(|&a, &b| catalog.item(a).cost.total_cmp(&catalog.item(b).cost).then(a.cmp(&b)));
        let sorted_costs = by_cost.iter().map(|&id| catalog.item(id).cost).collect();
        CandidateIndex {
            by_ratio,
            by_cost,
            sorted_costs,
        }
    }

    /// Candidate ids for `state`: top-ratio items first, then random draws.
    /// Empty when nothing is affordable.
    pub fn candidates<R: Rng + ?Sized>(
        &self,
        state: &SlateState,
        catalog: &ItemCatalog,
        params: CandidateParams,
        rng: &mut R,
    ) -> Vec<ItemId> {
        let mut out = Vec::with_capacity(params.top_m + params.random_r);
        self.candidates_into(state, catalog, params, rng, &mut out);
        out
    }

    pub fn candidates_into<R: Rng + ?Sized>(
        &self,
        state: &SlateState,
        catalog: &ItemCatalog,
        params: CandidateParams,
        rng: &mut R,
        out: &mut Vec<ItemId>,
    ) {
        out.clear();
        let budget = state.budget_remaining;
        let n_affordable = self.sorted_costs.partition_point(|&c| c <= budget);
        if n_affordable == 0 {
            return;
        }
        if params.top_m > 0 {
            for &id in &self.by_ratio {
                if out.len() == params.top_m {
                    break;
                }
                if catalog.item(id).cost <= budget && !state.contains(id) {
                    out.push(id);
                }
            }
        }
        if params.random_r == 0 {
            return;
        }
        let n_top = out.len();
        let excluded_affordable = state
            .prefix
            .iter()
            .filter(|&&id| catalog.item(id).cost <= budget)
            .count()
            + n_top;
        let available = n_affordable.saturating_sub(excluded_affordable);
        if available == 0 {
            return;
        }
        let taken = |id: ItemId, out: &[ItemId]| state.contains(id) || out.contains(&id);
        if available <= params.random_r || n_affordable <= 4 * (excluded_affordable + params.random_r) {
            // Small pool: sample positions from the explicit remainder.
            let pool: Vec<ItemId> = self.by_cost[..n_affordable]
                .iter()
                .copied()
                .filter(|&id| !taken(id, &out[..n_top]))
                .collect();
            let k = params.random_r.min(pool.len());
            for i in index::sample(rng, pool.len(), k) {
                out.push(pool[i]);
            }
        } else {
            // Large pool: rejection sampling over the affordable prefix.
            while out.len() < n_top + params.random_r {
                let id = self.by_cost[rng.random_range(0..n_affordable)];
                if !taken(id, out) {
                    out.push(id);
                }
            }
        }
    }
}

/// Convenience wrapper that indexes the catalog on every call.
pub fn candidate_actions<R: Rng + ?Sized>(
    state: &SlateState,
    catalog: &ItemCatalog,
    top_m: usize,
    random_r: usize,
    cost_floor: f64,
    rng: &mut R,
) -> Vec<ItemId> {
    CandidateIndex::new(catalog, cost_floor).candidates(state, catalog, CandidateParams { top_m, random_r }, rng)
}
