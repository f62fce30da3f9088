use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::features::{QFeatures, FEATURE_DIM};
use super::gbrt::{GbrtModel, GbrtParams};
use crate::{Error, Result};

/// Which model family backs the Q function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RegressorKind {
    Gbrt(GbrtParams),
    Ridge {
        lambda: f64,
    },
    /// Exact lookup keyed by the feature vector; for tabular checks.
    Table,
}

impl Default for RegressorKind {
    fn default() -> Self {
        RegressorKind::Gbrt(GbrtParams::default())
    }
}

/// A fitted Q regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum QRegressor {
    Gbrt(GbrtModel),
    Ridge(RidgeModel),
    Table(LookupTable),
}

impl QRegressor {
    pub fn fit(kind: &RegressorKind, x: &[QFeatures], y: &[f64]) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::Training("no samples to fit".into()));
        }
        if x.len() != y.len() {
            return Err(Error::Training(format!("{} rows but {} targets", x.len(), y.len())));
        }
        Ok(match kind {
            RegressorKind::Gbrt(p) => QRegressor::Gbrt(GbrtModel::fit(p, x, y)?),
            RegressorKind::Ridge { lambda } => QRegressor::Ridge(RidgeModel::fit(*lambda, x, y)?),
            RegressorKind::Table => QRegressor::Table(LookupTable::fit(x, y)),
        })
    }

    pub fn predict_one(&self, x: &QFeatures) -> f64 {
        match self {
            QRegressor::Gbrt(m) => m.predict_one(x),
            QRegressor::Ridge(m) => m.predict_one(x),
            QRegressor::Table(m) => m.predict_one(x),
        }
    }

    pub fn predict_batch(&self, xs: &[QFeatures], out: &mut Vec<f64>) {
        match self {
            QRegressor::Gbrt(m) => m.predict_batch(xs, out),
            _ => {
                out.clear();
                out.extend(xs.iter().map(|x| self.predict_one(x)));
            }
        }
    }
}

/// Ridge regression on standardized features with an unpenalized intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub intercept: f64,
    pub weights: [f64; FEATURE_DIM],
    pub means: [f64; FEATURE_DIM],
    pub scales: [f64; FEATURE_DIM],
}

impl RidgeModel {
    pub fn fit(lambda: f64, x: &[QFeatures], y: &[f64]) -> Result<Self> {
        let n = x.len() as f64;
        let mut means = [0.0; FEATURE_DIM];
        let mut scales = [0.0; FEATURE_DIM];
        for f in 0..FEATURE_DIM {
            means[f] = x.iter().map(|r| r.0[f]).sum::<f64>() / n;
            let var = x.iter().map(|r| (r.0[f] - means[f]).powi(2)).sum::<f64>() / n;
            // Constant columns get scale 0 and drop out.
            scales[f] = if var > 1e-24 { var.sqrt() } else { 0.0 };
        }
        let y_mean = y.iter().sum::<f64>() / n;
        let z = |r: &QFeatures, f: usize| {
            if scales[f] == 0.0 {
                0.0
            } else {
                (r.0[f] - means[f]) / scales[f]
            }
        };
        let mut xtx = DMatrix::<f64>::zeros(FEATURE_DIM, FEATURE_DIM);
        let mut xty = DVector::<f64>::zeros(FEATURE_DIM);
        for (r, &t) in x.iter().zip(y) {
            let zr: Vec<f64> = (0..FEATURE_DIM).map(|f| z(r, f)).collect();
            for a in 0..FEATURE_DIM {
                xty[a] += zr[a] * (t - y_mean);
                for b in 0..FEATURE_DIM {
                    xtx[(a, b)] += zr[a] * zr[b];
                }
            }
        }
        for a in 0..FEATURE_DIM {
            // Dropped columns are all-zero; a unit diagonal keeps them solvable.
            xtx[(a, a)] += if scales[a] == 0.0 { 1.0 } else { lambda * n };
        }
        let solution = xtx
            .clone()
            .cholesky()
            .map(|c| c.solve(&xty))
            .or_else(|| xtx.clone().lu().solve(&xty))
            .ok_or_else(|| Error::Training("ridge normal equations are singular".into()))?;
        let mut weights = [0.0; FEATURE_DIM];
        for f in 0..FEATURE_DIM {
            weights[f] = if scales[f] == 0.0 { 0.0 } else { solution[f] };
        }
        let model = RidgeModel {
            intercept: y_mean,
            weights,
            means,
            scales,
        };
        if !model.weights.iter().all(|w| w.is_finite()) || !model.intercept.is_finite() {
            return Err(Error::Training("ridge produced non-finite weights".into()));
        }
        Ok(model)
    }

    pub fn predict_one(&self, x: &QFeatures) -> f64 {
        let mut acc = self.intercept;
        for f in 0..FEATURE_DIM {
            if self.scales[f] != 0.0 {
                acc += self.weights[f] * (x.0[f] - self.means[f]) / self.scales[f];
            }
        }
        acc
    }
}

/// Mean target per exact feature vector; unseen keys predict 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "TableRepr", into = "TableRepr")]
pub struct LookupTable {
    values: HashMap<[u64; FEATURE_DIM], f64>,
}

#[derive(Serialize, Deserialize)]
struct TableRepr {
    entries: Vec<([f64; FEATURE_DIM], f64)>,
}

impl From<TableRepr> for LookupTable {
    fn from(r: TableRepr) -> Self {
        LookupTable {
            values: r.entries.into_iter().map(|(k, v)| (key(&QFeatures(k)), v)).collect(),
        }
    }
}

impl From<LookupTable> for TableRepr {
    fn from(t: LookupTable) -> Self {
        let mut entries: Vec<_> = t.values.into_iter().map(|(k, v)| (k.map(f64::from_bits), v)).collect();
        entries.sort_by(|a, b| {
            a.0.iter()
                .zip(&b.0)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        TableRepr { entries }
    }
}

fn key(x: &QFeatures) -> [u64; FEATURE_DIM] {
    x.0.map(|v| if v == 0.0 { 0 } else { v.to_bits() })
}

impl LookupTable {
    pub fn fit(x: &[QFeatures], y: &[f64]) -> Self {
        let mut acc: HashMap<[u64; FEATURE_DIM], (f64, u64)> = HashMap::new();
        for (r, &t) in x.iter().zip(y) {
            let e = acc.entry(key(r)).or_insert((0.0, 0));
            e.0 += t;
            e.1 += 1;
        }
        LookupTable {
            values: acc.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect(),
        }
    }

    pub fn predict_one(&self, x: &QFeatures) -> f64 {
        self.values.get(&key(x)).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
