//! Item universe and the cost / budget samplers.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::format::{quantize9, sig9};
use crate::{Error, Result};

/// Smallest evaluation cost (seconds); sampled costs below it are clamped up.
pub const DEFAULT_COST_FLOOR: f64 = 0.01;

pub type ItemId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: ItemId,
    /// Click probability when examined, in `[0, 1]`.
    pub sigma: f64,
    /// Evaluation cost in seconds, `> 0`.
    pub cost: f64,
}

impl Item {
    /// Relevance per second of evaluation.
    pub fn ratio(&self, cost_floor: f64) -> f64 {
        self.sigma / self.cost.max(cost_floor)
    }
}

/// Immutable, validated item universe.
///
/// Items keep the order they were created or loaded in; ids are a
/// permutation of `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemCatalog {
    items: Vec<Item>,
    position: Vec<usize>,
}

impl ItemCatalog {
    pub fn new(items: Vec<Item>) -> Result<Self> {
        let n = items.len();
        let mut position = vec![usize::MAX; n];
        for (pos, item) in items.iter().enumerate() {
            validate_item(item).map_err(|m| Error::Domain(format!("item at position {pos}: {m}")))?;
            if item.id >= n {
                return Err(Error::Domain(format!(
                    "item id {} out of range for {n} items (ids must be contiguous from 0)",
                    item.id
                )));
            }
            if position[item.id] != usize::MAX {
                return Err(Error::Domain(format!("duplicate item id {}", item.id)));
            }
            position[item.id] = pos;
        }
        Ok(ItemCatalog { items, position })
    }

    /// Builds a catalog with ids `0..n` from parallel sigma/cost vectors.
    pub fn from_parts(sigmas: &[f64], costs: &[f64]) -> Result<Self> {
        if sigmas.len() != costs.len() {
            return Err(Error::Domain(format!(
                "sigma/cost length mismatch ({} vs {})",
                sigmas.len(),
                costs.len()
            )));
        }
        ItemCatalog::new(
            sigmas
                .iter()
                .zip(costs)
                .enumerate()
                .map(|(id, (&sigma, &cost))| Item { id, sigma, cost })
                .collect(),
        )
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    /// Looks an item up by id.
    ///
    /// # Panics
    /// If `id` is not in the catalog.
    pub fn item(&self, id: ItemId) -> &Item {
        &self.items[self.position[id]]
    }

    pub fn get(&self, id: ItemId) -> Option<&Item> {
        self.position.get(id).map(|&p| &self.items[p])
    }

    /// Same items with new costs (in item-id order), clamped to `floor`.
    pub fn with_costs(&self, costs_by_id: &[f64]) -> Result<Self> {
        let items = self
            .items
            .iter()
            .map(|it| Item {
                cost: costs_by_id[it.id],
                ..*it
            })
            .collect();
        ItemCatalog::new(items)
    }
}

fn validate_item(item: &Item) -> std::result::Result<(), String> {
    if !(item.sigma.is_finite() && (0.0..=1.0).contains(&item.sigma)) {
        return Err(format!("sigma {} outside [0, 1]", item.sigma));
    }
    if !(item.cost.is_finite() && item.cost > 0.0) {
        return Err(format!("cost {} must be finite and > 0", item.cost));
    }
    Ok(())
}

/// `Uniform(low, high)` evaluation costs with a positive floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostDistribution {
    pub low: f64,
    pub high: f64,
    pub floor: f64,
}

impl CostDistribution {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low.is_finite() && high.is_finite() && low >= 0.0 && low < high) {
            return Err(Error::config(
                "cost_low",
                format!("invalid cost interval [{low}, {high}]: need 0 <= low < high"),
            ));
        }
        Ok(CostDistribution {
            low,
            high,
            floor: DEFAULT_COST_FLOOR,
        })
    }

    pub fn with_floor(mut self, floor: f64) -> Result<Self> {
        if !(floor.is_finite() && floor > 0.0) {
            return Err(Error::config("cost_floor", "must be finite and > 0"));
        }
        self.floor = floor;
        Ok(self)
    }
}

/// Draws `n` costs in `(max(low, floor), high]`.
pub fn sample_costs<R: Rng + ?Sized>(n: usize, dist: &CostDistribution, rng: &mut R) -> Result<Vec<f64>> {
    // Re-check: the fields are public.
    CostDistribution::new(dist.low, dist.high)?;
    let width = dist.high - dist.low;
    Ok((0..n)
        .map(|_| {
            let u: f64 = rng.random();
            (dist.high - u * width).max(dist.floor)
        })
        .collect())
}

/// Median-parameterized log-normal: `u0 = loc * exp(scale * Z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetDistribution {
    pub loc: f64,
    pub scale: f64,
}

impl BudgetDistribution {
    pub fn new(loc: f64, scale: f64) -> Result<Self> {
        if !(loc.is_finite() && loc > 0.0) {
            return Err(Error::config("user_budget", format!("location {loc} must be > 0")));
        }
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(Error::config(
                "user_budget_scale",
                format!("scale {scale} must be >= 0"),
            ));
        }
        Ok(BudgetDistribution { loc, scale })
    }
}

pub fn sample_initial_budget<R: Rng + ?Sized>(dist: &BudgetDistribution, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    dist.loc * (dist.scale * z).exp()
}

/// Beta prior for synthetic relevance. `beta = 0` pins sigma to 1 and
/// `alpha = 0` pins it to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelevanceParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for RelevanceParams {
    fn default() -> Self {
        RelevanceParams { alpha: 2.0, beta: 8.0 }
    }
}

impl RelevanceParams {
    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

enum SigmaSampler {
    Constant(f64),
    Beta(Beta<f64>),
}

impl SigmaSampler {
    fn new(p: &RelevanceParams) -> Result<Self> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !ok(p.alpha) || !ok(p.beta) || (p.alpha == 0.0 && p.beta == 0.0) {
            return Err(Error::config(
                "relevance_alpha",
                format!("invalid Beta({}, {})", p.alpha, p.beta),
            ));
        }
        Ok(if p.beta == 0.0 {
            SigmaSampler::Constant(1.0)
        } else if p.alpha == 0.0 {
            SigmaSampler::Constant(0.0)
        } else {
            SigmaSampler::Beta(Beta::new(p.alpha, p.beta).map_err(|e| Error::config("relevance_alpha", e.to_string()))?)
        })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            SigmaSampler::Constant(x) => *x,
            SigmaSampler::Beta(b) => b.sample(rng),
        }
    }
}

/// Synthetic catalog: Beta relevance and uniform costs, ids `0..n`.
///
/// Values are rounded to nine significant digits so the catalog survives a
/// CSV round trip unchanged.
pub fn generate_synthetic_catalog<R: Rng + ?Sized>(
    n: usize,
    relevance: &RelevanceParams,
    cost_dist: &CostDistribution,
    rng: &mut R,
) -> Result<ItemCatalog> {
    if n == 0 {
        return Err(Error::config("num_items", "catalog needs at least one item"));
    }
    let sampler = SigmaSampler::new(relevance)?;
    let sigmas: Vec<f64> = (0..n).map(|_| quantize9(sampler.sample(rng)).clamp(0.0, 1.0)).collect();
    let costs: Vec<f64> = sample_costs(n, cost_dist, rng)?
        .into_iter()
        .map(|c| quantize9(c).max(cost_dist.floor))
        .collect();
    ItemCatalog::from_parts(&sigmas, &costs)
}

/// Whether costs are drawn once per item or redrawn for every user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CostAssignment {
    #[default]
    PerItem,
    PerUser,
}

pub const CATALOG_HEADER: [&str; 3] = ["item_id", "sigma", "cost"];

pub fn save_catalog(catalog: &ItemCatalog, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", CATALOG_HEADER.join(",")).map_err(io)?;
    for it in catalog.items() {
        writeln!(w, "{},{},{}", it.id, sig9(it.sigma), sig9(it.cost)).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a catalog CSV. Rows are numbered from 1 (the header is row 0).
pub fn load_catalog(path: &Path) -> Result<ItemCatalog> {
    let row_err = |row: usize, message: String| Error::Row {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| row_err(0, e.to_string()))?;
    let headers = reader.headers().map_err(|e| row_err(0, e.to_string()))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| row_err(0, format!("missing column `{name}`")))
    };
    let (id_col, sigma_col, cost_col) = (column("item_id")?, column("sigma")?, column("cost")?);

    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| row_err(row, e.to_string()))?;
        let field = |col: usize, name: &str| {
            record
                .get(col)
                .ok_or_else(|| row_err(row, format!("missing `{name}` value")))
        };
        let id: ItemId = field(id_col, "item_id")?
            .parse()
            .map_err(|e| row_err(row, format!("item_id: {e}")))?;
        let sigma: f64 = field(sigma_col, "sigma")?
            .parse()
            .map_err(|e| row_err(row, format!("sigma: {e}")))?;
        let cost: f64 = field(cost_col, "cost")?
            .parse()
            .map_err(|e| row_err(row, format!("cost: {e}")))?;
        let item = Item { id, sigma, cost };
        validate_item(&item).map_err(|m| row_err(row, m))?;
        if !seen.insert(id) {
            return Err(row_err(row, format!("duplicate item_id {id}")));
        }
        items.push(item);
    }
    let n = items.len();
    if let Some((i, it)) = items.iter().enumerate().find(|(_, it)| it.id >= n) {
        return Err(row_err(
            i + 1,
            format!("item_id {} breaks contiguity (expected ids 0..{n})", it.id),
        ));
    }
    ItemCatalog::new(items)
}
