//! Batch Q scoring of candidate items in one state.
//!
//! For a depth-3 tree ensemble and a fixed catalog, every split on an
//! item-only feature (sigma, cost, ratio) has the same outcome whatever the
//! state, so those comparison bits are computed once per item. Scoring a state
//! then only evaluates the state splits (once per tree) and the splits on the
//! sigma-survival interaction (per row). Leaves and summation order match
//! [`GbrtModel::predict_batch`], so scores are bit-identical.

use super::features::{featurize_summary, QFeatures, StateSummary};
use super::gbrt::{GbrtModel, DEPTH3_LEAF};
use super::regressor::QRegressor;
use crate::catalog::{ItemCatalog, ItemId};

const STATE_FEATURES: usize = 4;
const INTERACTION: usize = 6;

struct Depth3Cache<'a> {
    gbrt: &'a GbrtModel,
    catalog: &'a ItemCatalog,
    n_trees: usize,
    /// `[item * n_trees + tree]`: bits of the item-only splits.
    item_bits: Vec<u8>,
    /// (tree, bit, feature, threshold) of every split on a state feature.
    state_nodes: Vec<(u32, u8, u8, f64)>,
    /// Interaction splits of tree `t` live in `mixed[mixed_off[t]..mixed_off[t + 1]]`.
    mixed_off: Vec<u32>,
    mixed: Vec<(u8, f64)>,
}

impl<'a> Depth3Cache<'a> {
    fn build(gbrt: &'a GbrtModel, catalog: &'a ItemCatalog, cost_floor: f64) -> Self {
        let n_trees = gbrt.n_trees();
        let mut state_nodes = Vec::new();
        let mut mixed_off = Vec::with_capacity(n_trees + 1);
        let mut mixed = Vec::new();
        let mut item_nodes: Vec<(usize, u8, usize, f64)> = Vec::new();
        for t in 0..n_trees {
            mixed_off.push(mixed.len() as u32);
            for k in 0..7 {
                let f = gbrt.feature[t * 7 + k] as usize;
                let thr = gbrt.threshold[t * 7 + k];
                if f < STATE_FEATURES {
                    state_nodes.push((t as u32, k as u8, f as u8, thr));
                } else if f == INTERACTION {
                    mixed.push((k as u8, thr));
                } else {
                    item_nodes.push((t, k as u8, f, thr));
                }
            }
        }
        mixed_off.push(mixed.len() as u32);

        let probe = StateSummary {
            budget_remaining: 0.0,
            slot: 0,
            survival: 1.0,
            prefix_cost: 0.0,
        };
        let mut item_bits = vec![0u8; catalog.n_items() * n_trees];
        for item in catalog.items() {
            let x = featurize_summary(&probe, item, cost_floor).0;
            let row = &mut item_bits[item.id * n_trees..(item.id + 1) * n_trees];
            for &(t, k, f, thr) in &item_nodes {
                row[t] |= u8::from(x[f] > thr) << k;
            }
        }
        Depth3Cache {
            gbrt,
            catalog,
            n_trees,
            item_bits,
            state_nodes,
            mixed_off,
            mixed,
        }
    }

    fn score(&self, state: &StateSummary, items: &[ItemId], scratch: &mut Scratch, out: &mut Vec<f64>) {
        let s = [
            state.budget_remaining,
            state.slot as f64,
            state.survival,
            state.prefix_cost,
        ];
        scratch.state_bits.clear();
        scratch.state_bits.resize(self.n_trees, 0);
        for &(t, k, f, thr) in &self.state_nodes {
            scratch.state_bits[t as usize] |= u8::from(s[f as usize] > thr) << k;
        }
        scratch.interaction.clear();
        scratch
            .interaction
            .extend(items.iter().map(|&id| self.catalog.item(id).sigma * state.survival));

        out.clear();
        out.resize(items.len(), self.gbrt.base);
        let nt = self.n_trees;
        let state_bits = &scratch.state_bits[..nt];
        let bits_of = |id: ItemId| &self.item_bits[id * nt..(id + 1) * nt];
        // Per tree: state bits, leaf values and interaction splits.
        let trees = || {
            state_bits
                .iter()
                .zip(self.gbrt.leaf.chunks_exact(8))
                .zip(self.mixed_off.windows(2))
                .map(|((&sb, leaf), w)| (sb, leaf, &self.mixed[w[0] as usize..w[1] as usize]))
        };
        let pick = |leaf: &[f64], m: u8| leaf[DEPTH3_LEAF[(m & 127) as usize] as usize & 7];
        let mixed_bits =
            |mixed: &[(u8, f64)], v: f64| mixed.iter().fold(0u8, |m, &(k, thr)| m | (u8::from(v > thr) << k));
        // Four rows at a time keep independent accumulation chains in flight;
        // each row still sums its trees in order.
        let mut blocks = out.chunks_exact_mut(4);
        let mut r = 0;
        for o in &mut blocks {
            let (b0, b1, b2, b3) = (
                bits_of(items[r]),
                bits_of(items[r + 1]),
                bits_of(items[r + 2]),
                bits_of(items[r + 3]),
            );
            let v: [f64; 4] = std::array::from_fn(|j| scratch.interaction[r + j]);
            let mut acc = [o[0], o[1], o[2], o[3]];
            let item_bits = b0.iter().zip(b1).zip(b2).zip(b3);
            for ((sb, leaf, mixed), (((&i0, &i1), &i2), &i3)) in trees().zip(item_bits) {
                let mut m = [sb | i0, sb | i1, sb | i2, sb | i3];
                if !mixed.is_empty() {
                    for j in 0..4 {
                        m[j] |= mixed_bits(mixed, v[j]);
                    }
                }
                for j in 0..4 {
                    acc[j] += pick(leaf, m[j]);
                }
            }
            o.copy_from_slice(&acc);
            r += 4;
        }
        for o in blocks.into_remainder() {
            let v = scratch.interaction[r];
            for ((sb, leaf, mixed), &ib) in trees().zip(bits_of(items[r])) {
                *o += pick(leaf, sb | ib | mixed_bits(mixed, v));
            }
            r += 1;
        }
    }
}

#[derive(Debug, Default)]
pub struct Scratch {
    state_bits: Vec<u8>,
    interaction: Vec<f64>,
    feats: Vec<QFeatures>,
}

/// Scores candidate items for a state with a fitted regressor.
pub struct ItemScorer<'a> {
    model: &'a QRegressor,
    cost_floor: f64,
    cache: Option<Depth3Cache<'a>>,
}

impl<'a> ItemScorer<'a> {
    /// Plain featurize-then-predict scoring.
    pub fn new(model: &'a QRegressor, cost_floor: f64) -> Self {
        ItemScorer {
            model,
            cost_floor,
            cache: None,
        }
    }

    /// Precomputes per-item split outcomes for `catalog` when the model allows it.
    pub fn for_catalog(model: &'a QRegressor, catalog: &'a ItemCatalog, cost_floor: f64) -> Self {
        let cache = match model {
            QRegressor::Gbrt(g) if g.depth == 3 => Some(Depth3Cache::build(g, catalog, cost_floor)),
            _ => None,
        };
        ItemScorer {
            model,
            cost_floor,
            cache,
        }
    }

    /// Q values of `items` (ids into `catalog`) in `state`, written to `out`.
    pub fn score(
        &self,
        state: &StateSummary,
        catalog: &ItemCatalog,
        items: &[ItemId],
        scratch: &mut Scratch,
        out: &mut Vec<f64>,
    ) {
        match &self.cache {
            Some(c) if std::ptr::eq(c.catalog, catalog) => c.score(state, items, scratch, out),
            _ => {
                let feats = &mut scratch.feats;
                feats.clear();
                feats.extend(
                    items
                        .iter()
                        .map(|&id| featurize_summary(state, catalog.item(id), self.cost_floor)),
                );
                self.model.predict_batch(feats, out);
            }
        }
    }

    pub fn model(&self) -> &'a QRegressor {
        self.model
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::GbrtParams;
    use crate::catalog::{generate_synthetic_catalog, CostDistribution, RelevanceParams};
    use crate::config::derive_stream;
    use rand::Rng;

    #[test]
    fn cached_scores_match_plain_prediction() {
        let mut rng = derive_stream(4, "scorer", 0);
        let catalog = generate_synthetic_catalog(
            500,
            &RelevanceParams::default(),
            &CostDistribution::new(0.0, 100.0).unwrap(),
            &mut rng,
        )
        .unwrap();
        let state = |rng: &mut crate::config::RngStream| StateSummary {
            budget_remaining: rng.random_range(0.0..300.0),
            slot: rng.random_range(0..30),
            survival: rng.random(),
            prefix_cost: rng.random_range(0.0..200.0),
        };
        let x: Vec<QFeatures> = (0..3000)
            .map(|_| featurize_summary(&state(&mut rng), catalog.item(rng.random_range(0..500)), 0.01))
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|f| f.0[6] * 2.0 + (f.0[0] > 150.0) as u8 as f64 - f.0[5] * 0.01)
            .collect();
        let model = QRegressor::fit(&crate::agents::RegressorKind::Gbrt(GbrtParams::default()), &x, &y).unwrap();
        let fast = ItemScorer::for_catalog(&model, &catalog, 0.01);
        let plain = ItemScorer::new(&model, 0.01);
        let mut scratch = Scratch::default();
        assert!(fast.cache.is_some());
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for _ in 0..200 {
            let s = state(&mut rng);
            let items: Vec<ItemId> = (0..60).map(|_| rng.random_range(0..500)).collect();
            fast.score(&s, &catalog, &items, &mut scratch, &mut a);
            plain.score(&s, &catalog, &items, &mut scratch, &mut b);
            assert_eq!(a, b);
        }
        // A different catalog object falls back to plain scoring.
        let other = catalog.clone();
        fast.score(&state(&mut rng), &other, &[1, 2, 3], &mut scratch, &mut a);
        assert_eq!(a.len(), 3);
    }
}
