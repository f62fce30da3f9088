//! Gradient-boosted regression trees with squared loss.
//!
//! Features are bucketed into at most `max_bins` quantile bins per fit and
//! trees are grown level by level to a fixed depth. Every tree is stored as a
//! complete binary tree so prediction is a fixed number of comparisons; a node
//! that does not split sends all rows left (`threshold = +inf`).
//!
//! Split search is sequential and deterministic: the first strictly best
//! gain wins, scanning features in index order and thresholds ascending.

use serde::{Deserialize, Serialize};

use super::features::{QFeatures, FEATURE_DIM};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbrtParams {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub max_bins: usize,
    pub min_samples_leaf: usize,
    /// L2 penalty on leaf values.
    pub l2: f64,
}

impl Default for GbrtParams {
    fn default() -> Self {
        GbrtParams {
            rounds: 100,
            max_depth: 3,
            learning_rate: 0.1,
            max_bins: 64,
            min_samples_leaf: 5,
            l2: 1.0,
        }
    }
}

/// Complete binary trees of a fixed depth stored back to back: tree `t`
/// owns internal nodes `t*(2^d-1)..` (heap order) and leaves `t*2^d..`.
/// Rows with `x[feature] > threshold` go right; unsplit nodes carry a `+inf`
/// threshold (stored as `null` in JSON) so every row goes left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbrtModel {
    pub(crate) base: f64,
    pub(crate) depth: usize,
    pub(crate) feature: Vec<u8>,
    #[serde(with = "inf_as_null")]
    pub(crate) threshold: Vec<f64>,
    pub(crate) leaf: Vec<f64>,
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|x| x.is_finite().then_some(*x))
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
    }
}

const _: () = assert!(FEATURE_DIM == 8);

/// Leaf reached by a depth-3 tree given the 7 node comparison outcomes
/// (bit `k` set when row goes right at node `k`).
pub(crate) const DEPTH3_LEAF: [u8; 128] = {
    let mut lut = [0u8; 128];
    let mut mask = 0;
    while mask < 128 {
        let mut node = 0;
        let mut level = 0;
        while level < 3 {
            node = 2 * node + 1 + ((mask >> node) & 1);
            level += 1;
        }
        lut[mask] = (node - 7) as u8;
        mask += 1;
    }
    lut
};

/// Quantile cut points for one feature; a value `x` falls in bin
/// `#{cuts < x}`.
fn cut_points(values: &mut [f64], max_bins: usize) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let mut distinct: Vec<f64> = Vec::new();
    for &v in values.iter() {
        if distinct.last() != Some(&v) {
            distinct.push(v);
        }
    }
    let mut cuts = Vec::new();
    if distinct.len() <= max_bins {
        for w in distinct.windows(2) {
            cuts.push(midpoint(w[0], w[1]));
        }
    } else {
        for b in 1..max_bins {
            let r = b * n / max_bins;
            if r == 0 || r >= n || values[r - 1] == values[r] {
                // Move the cut to the next value change at or after rank r.
                let Some(next) = (r.max(1)..n).find(|&j| values[j - 1] != values[j]) else {
                    continue;
                };
                cuts.push(midpoint(values[next - 1], values[next]));
            } else {
                cuts.push(midpoint(values[r - 1], values[r]));
            }
        }
        cuts.dedup();
    }
    cuts
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) * 0.5;
    // Keep a < m so `a` lands left of the cut.
    if m > a {
        m
    } else {
        b
    }
}

impl GbrtModel {
    pub fn fit(params: &GbrtParams, x: &[QFeatures], y: &[f64]) -> Result<Self> {
        let n = x.len();
        if n == 0 || n != y.len() {
            return Err(Error::Training(format!(
                "gbrt needs matching nonempty data ({} rows, {} targets)",
                n,
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Training("non-finite regression target".into()));
        }
        let depth = params.max_depth;
        let max_bins = params.max_bins.clamp(2, 256);

        let mut cuts: Vec<Vec<f64>> = Vec::with_capacity(FEATURE_DIM);
        let mut column = vec![0.0; n];
        for f in 0..FEATURE_DIM {
            for (c, row) in column.iter_mut().zip(x) {
                *c = row.0[f];
            }
            cuts.push(cut_points(&mut column, max_bins));
        }
        let n_bins: Vec<usize> = cuts.iter().map(|c| c.len() + 1).collect();
        let bin_offset: Vec<usize> = n_bins
            .iter()
            .scan(0usize, |acc, &b| {
                let o = *acc;
                *acc += b;
                Some(o)
            })
            .collect();
        let total_bins: usize = n_bins.iter().sum();

        let mut bins = vec![0u8; n * FEATURE_DIM];
        for (i, row) in x.iter().enumerate() {
            for f in 0..FEATURE_DIM {
                let b = cuts[f].partition_point(|&c| c < row.0[f]);
                bins[i * FEATURE_DIM + f] = b as u8;
            }
        }

        let base = y.iter().sum::<f64>() / n as f64;
        let mut pred = vec![base; n];
        let mut residual = vec![0.0; n];
        let mut node = vec![0u32; n];
        let internal = (1usize << depth) - 1;
        let mut model = GbrtModel {
            base,
            depth,
            feature: Vec::with_capacity(params.rounds * internal),
            threshold: Vec::with_capacity(params.rounds * internal),
            leaf: Vec::with_capacity(params.rounds << depth),
        };
        let mut hist_sum = vec![0.0f64; (1 << depth) * total_bins];
        let mut hist_cnt = vec![0u32; (1 << depth) * total_bins];
        let mut parent_sum = hist_sum.clone();
        let mut parent_cnt = hist_cnt.clone();
        let lambda = params.l2;
        let min_leaf = params.min_samples_leaf.max(1) as u32;

        for _ in 0..params.rounds {
            for i in 0..n {
                residual[i] = y[i] - pred[i];
            }
            node.iter_mut().for_each(|v| *v = 0);
            let mut feature = vec![0u8; internal];
            let mut threshold = vec![f64::INFINITY; internal];
            // Split bin per internal node (rows with bin <= split go left).
            let mut split_bin = vec![u8::MAX; internal];

            for level in 0..depth {
                let first = (1usize << level) - 1;
                let width = 1usize << level;
                std::mem::swap(&mut hist_sum, &mut parent_sum);
                std::mem::swap(&mut hist_cnt, &mut parent_cnt);
                let hs = &mut hist_sum[..width * total_bins];
                let hc = &mut hist_cnt[..width * total_bins];
                hs.iter_mut().for_each(|v| *v = 0.0);
                hc.iter_mut().for_each(|v| *v = 0);
                // Below the root, accumulate only the smaller child of each
                // sibling pair and derive the other from the parent.
                let mut direct = vec![true; width];
                if level > 0 {
                    let mut rows = vec![0usize; width];
                    for &v in &node {
                        rows[v as usize - first] += 1;
                    }
                    for pair in 0..width / 2 {
                        let (l, r) = (2 * pair, 2 * pair + 1);
                        direct[if rows[l] <= rows[r] { r } else { l }] = false;
                    }
                }
                for i in 0..n {
                    let local = node[i] as usize - first;
                    if !direct[local] {
                        continue;
                    }
                    let base_idx = local * total_bins;
                    let g = residual[i];
                    let row = &bins[i * FEATURE_DIM..(i + 1) * FEATURE_DIM];
                    for f in 0..FEATURE_DIM {
                        let k = base_idx + bin_offset[f] + row[f] as usize;
                        hs[k] += g;
                        hc[k] += 1;
                    }
                }
                for local in (0..width).filter(|&l| !direct[l]) {
                    let (sib, par) = (local ^ 1, local / 2);
                    for b in 0..total_bins {
                        hs[local * total_bins + b] = parent_sum[par * total_bins + b] - hs[sib * total_bins + b];
                        hc[local * total_bins + b] = parent_cnt[par * total_bins + b] - hc[sib * total_bins + b];
                    }
                }
                for local in 0..width {
                    let nid = first + local;
                    let h0 = local * total_bins;
                    // Totals from feature 0's bins.
                    let (mut s_tot, mut c_tot) = (0.0, 0u32);
                    for b in 0..n_bins[0] {
                        s_tot += hs[h0 + b];
                        c_tot += hc[h0 + b];
                    }
                    if c_tot < 2 * min_leaf {
                        continue;
                    }
                    let parent = s_tot * s_tot / (c_tot as f64 + lambda);
                    let mut best_gain = 0.0;
                    let mut best: Option<(usize, usize)> = None;
                    for f in 0..FEATURE_DIM {
                        let off = h0 + bin_offset[f];
                        let (mut sl, mut cl) = (0.0, 0u32);
                        for b in 0..n_bins[f] - 1 {
                            sl += hs[off + b];
                            cl += hc[off + b];
                            let cr = c_tot - cl;
                            if cl < min_leaf {
                                continue;
                            }
                            if cr < min_leaf {
                                break;
                            }
                            let sr = s_tot - sl;
                            let gain = sl * sl / (cl as f64 + lambda) + sr * sr / (cr as f64 + lambda) - parent;
                            if gain > best_gain {
                                best_gain = gain;
                                best = Some((f, b));
                            }
                        }
                    }
                    if let Some((f, b)) = best {
                        feature[nid] = f as u8;
                        threshold[nid] = cuts[f][b];
                        split_bin[nid] = b as u8;
                    }
                }
                for i in 0..n {
                    let nid = node[i] as usize;
                    let go_right =
                        split_bin[nid] != u8::MAX && bins[i * FEATURE_DIM + feature[nid] as usize] > split_bin[nid];
                    node[i] = (2 * nid + 1 + usize::from(go_right)) as u32;
                }
            }

            let leaves = 1usize << depth;
            let mut leaf_sum = vec![0.0; leaves];
            let mut leaf_cnt = vec![0u32; leaves];
            for i in 0..n {
                let l = node[i] as usize - internal;
                leaf_sum[l] += residual[i];
                leaf_cnt[l] += 1;
            }
            let leaf: Vec<f64> = leaf_sum
                .iter()
                .zip(&leaf_cnt)
                .map(|(&s, &c)| {
                    if c == 0 {
                        0.0
                    } else {
                        params.learning_rate * s / (c as f64 + lambda)
                    }
                })
                .collect();
            for i in 0..n {
                pred[i] += leaf[node[i] as usize - internal];
            }
            model.feature.extend_from_slice(&feature);
            model.threshold.extend_from_slice(&threshold);
            model.leaf.extend_from_slice(&leaf);
        }
        Ok(model)
    }

    #[inline]
    fn tree_leaf(&self, t: usize, x: &[f64; FEATURE_DIM]) -> f64 {
        let internal = (1usize << self.depth) - 1;
        let feature = &self.feature[t * internal..(t + 1) * internal];
        let threshold = &self.threshold[t * internal..(t + 1) * internal];
        let mut node = 0usize;
        for _ in 0..self.depth {
            node = 2 * node + 1 + usize::from(x[feature[node] as usize] > threshold[node]);
        }
        self.leaf[(t << self.depth) + node - internal]
    }

    pub fn predict_one(&self, x: &QFeatures) -> f64 {
        let mut acc = self.base;
        for t in 0..self.n_trees() {
            acc += self.tree_leaf(t, &x.0);
        }
        acc
    }

    /// Tree-major evaluation over a batch; sums each row in the same order as
    /// [`predict_one`](Self::predict_one), so results are bit-identical.
    pub fn predict_batch(&self, xs: &[QFeatures], out: &mut Vec<f64>) {
        out.clear();
        out.resize(xs.len(), self.base);
        if self.depth == 3 {
            // The seven comparisons are independent; a lookup maps them to the leaf.
            for ((feature, threshold), leaf) in self
                .feature
                .chunks_exact(7)
                .zip(self.threshold.chunks_exact(7))
                .zip(self.leaf.chunks_exact(8))
            {
                // FEATURE_DIM is 8, so masking keeps indices provably in range.
                let f: [usize; 7] = std::array::from_fn(|k| feature[k] as usize & 7);
                let th: [f64; 7] = std::array::from_fn(|k| threshold[k]);
                for (o, x) in out.iter_mut().zip(xs) {
                    let x = &x.0;
                    let mut mask = 0usize;
                    for k in 0..7 {
                        mask |= usize::from(x[f[k]] > th[k]) << k;
                    }
                    *o += leaf[DEPTH3_LEAF[mask & 127] as usize & 7];
                }
            }
        } else {
            for t in 0..self.n_trees() {
                for (o, x) in out.iter_mut().zip(xs) {
                    *o += self.tree_leaf(t, &x.0);
                }
            }
        }
    }

    pub fn n_trees(&self) -> usize {
        self.leaf.len() >> self.depth
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::derive_stream;
    use rand::Rng;

    fn row(v: f64, w: f64) -> QFeatures {
        let mut a = [0.0; FEATURE_DIM];
        a[0] = v;
        a[3] = w;
        QFeatures(a)
    }

    #[test]
    fn constant_target_is_exact() {
        let x: Vec<_> = (0..50).map(|i| row(i as f64, 0.0)).collect();
        let y = vec![0.5; 50];
        let m = GbrtModel::fit(&GbrtParams::default(), &x, &y).unwrap();
        assert!(x.iter().all(|r| (m.predict_one(r) - 0.5).abs() < 1e-12));
    }

    #[test]
    fn learns_step_function() {
        let x: Vec<_> = (0..400).map(|i| row((i % 40) as f64, (i % 7) as f64)).collect();
        let y: Vec<f64> = x.iter().map(|r| if r.0[0] > 20.0 { 1.0 } else { 0.0 }).collect();
        let m = GbrtModel::fit(&GbrtParams::default(), &x, &y).unwrap();
        let mse: f64 = x
            .iter()
            .zip(&y)
            .map(|(r, t)| (m.predict_one(r) - t).powi(2))
            .sum::<f64>()
            / 400.0;
        assert!(mse < 1e-3, "mse {mse}");
    }

    #[test]
    fn batch_matches_single_and_is_deterministic() {
        let mut rng = derive_stream(0, "gbrt", 0);
        let x: Vec<_> = (0..3000)
            .map(|_| {
                let mut a = [0.0; FEATURE_DIM];
                for v in a.iter_mut() {
                    *v = rng.random::<f64>();
                }
                QFeatures(a)
            })
            .collect();
        let y: Vec<f64> = x.iter().map(|r| r.0[1] * 2.0 + (r.0[5] > 0.3) as u8 as f64).collect();
        let a = GbrtModel::fit(&GbrtParams::default(), &x, &y).unwrap();
        let b = GbrtModel::fit(&GbrtParams::default(), &x, &y).unwrap();
        assert_eq!(a, b);
        let mut out = Vec::new();
        a.predict_batch(&x, &mut out);
        for (r, p) in x.iter().zip(&out) {
            assert_eq!(*p, a.predict_one(r));
        }
        let mse: f64 = out.iter().zip(&y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64;
        assert!(mse < 0.02, "mse {mse}");
    }

    #[test]
    fn tie_prefers_lowest_feature() {
        // Features 0 and 3 carry identical information.
        let x: Vec<_> = (0..100).map(|i| row((i / 50) as f64, (i / 50) as f64)).collect();
        let y: Vec<f64> = (0..100).map(|i| (i / 50) as f64).collect();
        let m = GbrtModel::fit(
            &GbrtParams {
                rounds: 1,
                ..Default::default()
            },
            &x,
            &y,
        )
        .unwrap();
        assert_eq!(m.feature[0], 0);
        assert_eq!(m.threshold[0], 0.5);
    }

    #[test]
    fn quantile_cuts_for_many_values() {
        let mut v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let cuts = cut_points(&mut v, 64);
        assert!(cuts.len() <= 63 && cuts.len() > 50);
        assert!(cuts.windows(2).all(|w| w[0] < w[1]));
        let mut few = vec![1.0, 1.0, 2.0, 3.0];
        assert_eq!(cut_points(&mut few, 64), vec![1.5, 2.5]);
    }

    #[test]
    fn rejects_bad_data() {
        assert!(GbrtModel::fit(&GbrtParams::default(), &[], &[]).is_err());
        assert!(GbrtModel::fit(&GbrtParams::default(), &[row(0.0, 0.0)], &[f64::NAN]).is_err());
    }
}
