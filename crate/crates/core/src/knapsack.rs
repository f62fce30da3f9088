//! Exact 0/1 knapsack solvers for the static slate relaxation: pick the item
//! subset with the largest summed utility whose summed cost fits the budget.
//!
//! Both solvers share one preference order: higher utility, then lower total
//! cost, then the lexicographically smallest index set.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::{ItemCatalog, ItemId};
use crate::{Error, Result};

pub const MAX_BRUTEFORCE_ITEMS: usize = 25;
pub const DEFAULT_DP_MAX_CELLS: usize = 50_000_000;
pub const DEFAULT_RESOLUTION: f64 = 0.1;

/// Relative tolerance under which two utility sums count as tied.
const UTILITY_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnapsackInstance {
    pub utilities: Vec<f64>,
    pub costs: Vec<f64>,
    pub budget: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnapsackSolution {
    pub selected: Vec<usize>,
    pub total_utility: f64,
    pub total_cost: f64,
}

impl KnapsackInstance {
    pub fn new(utilities: Vec<f64>, costs: Vec<f64>, budget: f64) -> Result<Self> {
        let inst = KnapsackInstance {
            utilities,
            costs,
            budget,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Utilities are the first-slot selection probabilities (sigma).
    pub fn from_catalog(catalog: &ItemCatalog, budget: f64) -> Result<Self> {
        let (utilities, costs) = catalog.items().iter().map(|it| (it.sigma, it.cost)).unzip();
        Self::new(utilities, costs, budget)
    }

    pub fn validate(&self) -> Result<()> {
        if self.utilities.len() != self.costs.len() {
            return Err(Error::Domain(format!(
                "{} utilities but {} costs",
                self.utilities.len(),
                self.costs.len()
            )));
        }
        if !(self.budget.is_finite() && self.budget >= 0.0) {
            return Err(Error::Domain(format!("budget {} must be finite and >= 0", self.budget)));
        }
        for (i, (&u, &c)) in self.utilities.iter().zip(&self.costs).enumerate() {
            if !(u.is_finite() && u >= 0.0) {
                return Err(Error::Domain(format!(
                    "utility {u} of item {i} must be finite and >= 0"
                )));
            }
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Domain(format!("cost {c} of item {i} must be finite and > 0")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.utilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utilities.is_empty()
    }

    /// Builds the solution record for `selected` (ascending indices), summing in index order.
    pub fn solution(&self, mut selected: Vec<usize>) -> KnapsackSolution {
        selected.sort_unstable();
        let total_utility = selected.iter().map(|&i| self.utilities[i]).sum();
        let total_cost = selected.iter().map(|&i| self.costs[i]).sum();
        KnapsackSolution {
            selected,
            total_utility,
            total_cost,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let inst: KnapsackInstance = serde_json::from_str(&text)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

fn utility_cmp(a: f64, b: f64) -> Ordering {
    if (a - b).abs() <= UTILITY_TIE_TOL * a.abs().max(b.abs()).max(1.0) {
        Ordering::Equal
    } else {
        a.partial_cmp(&b).unwrap_or(Ordering::Equal)
    }
}

/// Lexicographic comparison of two index sets given as bit masks.
fn mask_lex_cmp(a: u32, b: u32) -> Ordering {
    let diff = a ^ b;
    if diff == 0 {
        return Ordering::Equal;
    }
    let i = diff.trailing_zeros();
    let above = (!((2u64 << i) - 1)) as u32;
    // The set holding index i wins unless the other one ends before i.
    if a & (1 << i) != 0 {
        if b & above != 0 {
            Ordering::Less
        } else {
            Ordering::Greater
        }
    } else if a & above != 0 {
        Ordering::Greater
    } else {
        Ordering::Less
    }
}

/// Exhaustive search over all 2^n subsets.
pub fn solve_bruteforce(instance: &KnapsackInstance) -> Result<KnapsackSolution> {
    instance.validate()?;
    let n = instance.len();
    if n > MAX_BRUTEFORCE_ITEMS {
        return Err(Error::Size(format!(
            "brute force supports at most {MAX_BRUTEFORCE_ITEMS} items, got {n}"
        )));
    }
    let mut best_mask = 0u32;
    let (mut best_u, mut best_c) = (0.0, 0.0);
    for mask in 1u32..(1u32 << n) {
        let (mut u, mut c) = (0.0, 0.0);
        for i in 0..n {
            if mask & (1 << i) != 0 {
                u += instance.utilities[i];
                c += instance.costs[i];
            }
        }
        if c > instance.budget {
            continue;
        }
        let better = utility_cmp(u, best_u)
            .then_with(|| best_c.partial_cmp(&c).unwrap_or(Ordering::Equal))
            .then_with(|| mask_lex_cmp(best_mask, mask))
            == Ordering::Greater;
        if better {
            best_mask = mask;
            best_u = u;
            best_c = c;
        }
    }
    Ok(instance.solution((0..n).filter(|&i| best_mask & (1 << i) != 0).collect()))
}

/// Number of `resolution` units in `x`; values within 1e-9 of a whole unit snap to it.
fn units(x: f64, resolution: f64, round_up: bool) -> f64 {
    let q = x / resolution;
    let r = q.round();
    if (q - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else if round_up {
        q.ceil()
    } else {
        q.floor()
    }
}

pub fn solve_dp(instance: &KnapsackInstance, resolution: f64) -> Result<KnapsackSolution> {
    solve_dp_capped(instance, resolution, DEFAULT_DP_MAX_CELLS)
}

/// Dynamic program over discretized costs. Costs round up and the capacity
/// rounds down, so the result never exceeds the true budget.
pub fn solve_dp_capped(instance: &KnapsackInstance, resolution: f64, max_cells: usize) -> Result<KnapsackSolution> {
    instance.validate()?;
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(Error::Domain(format!("resolution {resolution} must be finite and > 0")));
    }
    let n = instance.len();
    let cap_units = units(instance.budget, resolution, false);
    let cells = (n as f64 + 1.0) * (cap_units + 1.0);
    if cells > max_cells as f64 {
        return Err(Error::Resource(format!(
            "DP table would need {cells:.0} cells (cap {max_cells}); use a coarser resolution"
        )));
    }
    let cap = cap_units as usize;
    let weights: Vec<usize> = instance
        .costs
        .iter()
        .map(|&c| units(c, resolution, true).max(1.0))
        .map(|w| if w > cap as f64 { usize::MAX } else { w as usize })
        .collect();

    // Suffix tables: value[w] is the best (utility, cost) using items i.. within w units.
    let width = cap + 1;
    let mut util = vec![0.0f64; width];
    let mut cost = vec![0usize; width];
    let mut take = vec![false; n * width];
    for i in (0..n).rev() {
        let wi = weights[i];
        if wi == usize::MAX {
            continue;
        }
        let ui = instance.utilities[i];
        // Iterate downward so util/cost still hold the i+1 suffix values at w - wi.
        for w in (wi..width).rev() {
            let (cu, cc) = (util[w - wi] + ui, cost[w - wi] + wi);
            // Ties in utility and cost go to inclusion: a set starting at i
            // precedes any set of later indices, and the empty set costs less.
            let include = match utility_cmp(cu, util[w]) {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => cc <= cost[w],
            };
            if include {
                util[w] = cu;
                cost[w] = cc;
                take[i * width + w] = true;
            }
        }
    }
    let mut selected = Vec::new();
    let mut w = cap;
    for i in 0..n {
        if take[i * width + w] {
            selected.push(i);
            w -= weights[i];
        }
    }
    Ok(instance.solution(selected))
}

/// Ratio-ordered slate: items by sigma / max(cost, floor) descending (lower id
/// on ties), appended until the next one would overrun the budget or K is reached.
pub fn greedy_ratio_slate(catalog: &ItemCatalog, budget: f64, k: usize, cost_floor: f64) -> Result<Vec<ItemId>> {
    if k == 0 {
        return Err(Error::Domain("slate size K must be >= 1".into()));
    }
    let mut order: Vec<&crate::catalog::Item> = catalog.items().iter().collect();
    order.sort_by(|a, b| {
        b.ratio(cost_floor)
            .partial_cmp(&a.ratio(cost_floor))
            .unwrap_or(Ordering::Equal)
            .then(a.id.cmp(&b.id))
    });
    let mut slate = Vec::with_capacity(k);
    let mut spent = 0.0;
    for item in order {
        if slate.len() == k || spent + item.cost > budget {
            break;
        }
        spent += item.cost;
        slate.push(item.id);
    }
    Ok(slate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::derive_stream;
    use proptest::prelude::*;
    use rand::Rng;

    fn inst(u: &[f64], c: &[f64], b: f64) -> KnapsackInstance {
        KnapsackInstance::new(u.to_vec(), c.to_vec(), b).unwrap()
    }

    #[test]
    fn three_item_example() {
        let i = inst(&[0.4, 0.5, 0.6], &[3.0, 4.0, 5.0], 7.0);
        for s in [solve_bruteforce(&i).unwrap(), solve_dp(&i, 1.0).unwrap()] {
            assert_eq!(s.selected, vec![0, 1]);
            assert!((s.total_utility - 0.9).abs() < 1e-12);
            assert_eq!(s.total_cost, 7.0);
        }
    }

    #[test]
    fn empty_solutions() {
        let zero = inst(&[0.4, 0.5], &[3.0, 4.0], 0.0);
        let tight = inst(&[0.4, 0.5], &[3.0, 4.0], 2.0);
        for i in [zero, tight] {
            assert!(solve_bruteforce(&i).unwrap().selected.is_empty());
            assert!(solve_dp(&i, 0.1).unwrap().selected.is_empty());
            assert_eq!(solve_bruteforce(&i).unwrap().total_utility, 0.0);
        }
    }

    #[test]
    fn single_item_fits() {
        let i = inst(&[0.3], &[2.5], 3.0);
        assert_eq!(solve_dp(&i, 0.1).unwrap().selected, vec![0]);
    }

    #[test]
    fn duplicates_pick_smallest_indices() {
        let i = inst(&[0.5, 0.5, 0.5], &[2.0, 2.0, 2.0], 4.0);
        assert_eq!(solve_bruteforce(&i).unwrap().selected, vec![0, 1]);
        assert_eq!(solve_dp(&i, 1.0).unwrap().selected, vec![0, 1]);
    }

    #[test]
    fn cost_breaks_utility_ties() {
        // {0} and {1,2} both earn 0.6; {1,2} is cheaper.
        let i = inst(&[0.6, 0.3, 0.3], &[5.0, 1.0, 1.0], 5.0);
        assert_eq!(solve_bruteforce(&i).unwrap().selected, vec![1, 2]);
        assert_eq!(solve_dp(&i, 1.0).unwrap().selected, vec![1, 2]);
    }

    #[test]
    fn zero_utility_items_are_left_out() {
        let i = inst(&[0.0, 0.0], &[1.0, 1.0], 5.0);
        assert!(solve_bruteforce(&i).unwrap().selected.is_empty());
        assert!(solve_dp(&i, 1.0).unwrap().selected.is_empty());
    }

    #[test]
    fn size_and_resource_errors() {
        let big = inst(&vec![0.1; 26], &vec![1.0; 26], 10.0);
        assert!(matches!(solve_bruteforce(&big), Err(Error::Size(_))));
        let wide = inst(&[0.1], &[1.0], 1e6);
        assert!(matches!(solve_dp_capped(&wide, 1e-3, 1000), Err(Error::Resource(_))));
        assert!(solve_dp(&wide, 0.0).is_err());
    }

    #[test]
    fn invalid_instances() {
        assert!(KnapsackInstance::new(vec![0.1], vec![], 1.0).is_err());
        assert!(KnapsackInstance::new(vec![-0.1], vec![1.0], 1.0).is_err());
        assert!(KnapsackInstance::new(vec![0.1], vec![0.0], 1.0).is_err());
        assert!(KnapsackInstance::new(vec![f64::NAN], vec![1.0], 1.0).is_err());
    }

    #[test]
    fn mask_lex_order() {
        // {0} < {0,1} < {0,2} < {1}
        let sets = [0b001u32, 0b011, 0b101, 0b010];
        for w in sets.windows(2) {
            assert_eq!(mask_lex_cmp(w[0], w[1]), Ordering::Less, "{:b} vs {:b}", w[0], w[1]);
            assert_eq!(mask_lex_cmp(w[1], w[0]), Ordering::Greater);
        }
        assert_eq!(mask_lex_cmp(0, 0b1), Ordering::Less);
    }

    #[test]
    fn real_costs_stay_feasible() {
        let mut rng = derive_stream(9, "knap-real", 0);
        for _ in 0..100 {
            let n = rng.random_range(1..=12);
            let u: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            let c: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..100.0)).collect();
            let i = inst(&u, &c, rng.random_range(0.0..300.0));
            let dp = solve_dp(&i, 0.1).unwrap();
            let bf = solve_bruteforce(&i).unwrap();
            assert!(dp.total_cost <= i.budget);
            assert!(dp.total_utility <= bf.total_utility + 1e-12);
        }
    }

    #[test]
    fn greedy_examples() {
        let cat = ItemCatalog::from_parts(&[0.6, 0.5], &[10.0, 100.0]).unwrap();
        assert_eq!(greedy_ratio_slate(&cat, 50.0, 5, 0.01).unwrap(), vec![0]);
        let cat = ItemCatalog::from_parts(&[0.1, 0.9, 0.5, 0.3], &[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(greedy_ratio_slate(&cat, f64::INFINITY, 2, 0.01).unwrap(), vec![1, 2]);
        assert!(greedy_ratio_slate(&cat, 10.0, 0, 0.01).is_err());
    }

    proptest! {
        #[test]
        fn dp_matches_bruteforce_on_integer_costs(
            items in proptest::collection::vec((0.0f64..1.0, 1u32..30), 0..12),
            budget in 0u32..120,
        ) {
            let (u, c): (Vec<f64>, Vec<f64>) = items.iter().map(|&(u, c)| (u, c as f64)).unzip();
            let i = inst(&u, &c, budget as f64);
            let bf = solve_bruteforce(&i).unwrap();
            let dp = solve_dp(&i, 1.0).unwrap();
            prop_assert_eq!(&dp.selected, &bf.selected);
            prop_assert_eq!(dp.total_utility, bf.total_utility);
            prop_assert!(bf.total_cost <= i.budget);
        }

        #[test]
        fn budget_monotone(
            items in proptest::collection::vec((0.0f64..1.0, 1u32..30), 1..10),
            budget in 0u32..100,
            extra in 0u32..50,
        ) {
            let (u, c): (Vec<f64>, Vec<f64>) = items.iter().map(|&(u, c)| (u, c as f64)).unzip();
            let lo = solve_bruteforce(&inst(&u, &c, budget as f64)).unwrap();
            let hi = solve_bruteforce(&inst(&u, &c, (budget + extra) as f64)).unwrap();
            prop_assert!(hi.total_utility >= lo.total_utility - 1e-12);
        }

        #[test]
        fn greedy_never_beats_optimum(
            items in proptest::collection::vec((0.0f64..1.0, 0.5f64..50.0), 1..15),
            budget in 0.0f64..200.0,
        ) {
            let (u, c): (Vec<f64>, Vec<f64>) = items.iter().copied().unzip();
            let cat = ItemCatalog::from_parts(&u, &c).unwrap();
            let slate = greedy_ratio_slate(&cat, budget, items.len(), 0.01).unwrap();
            let i = inst(&u, &c, budget);
            let g = i.solution(slate);
            prop_assert!(g.total_cost <= budget);
            prop_assert!(g.total_utility <= solve_bruteforce(&i).unwrap().total_utility + 1e-12);
        }
    }
}
