use serde::Serialize;

use super::stats::{bootstrap_mean_ci, mean, sign_test};
use super::sweep::{same, SweepResult};
use crate::agents::Algorithm;
use crate::config::StreamFactory;
use crate::format::sig9;
use crate::{Error, Result};

/// Paired difference of one metric between two gammas at a fixed (algorithm, budget).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricDelta {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Two-sided sign test p-value; `None` when undefined (too few or all-tied pairs).
    pub sign_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaRow {
    pub algorithm: Algorithm,
    pub budget_loc: f64,
    pub pairs: usize,
    pub play_rate: MetricDelta,
    pub effective_slate_size: MetricDelta,
}

pub const DELTA_HEADER: &str = "algorithm,budget_loc,pairs,delta_play_rate,play_ci_low,play_ci_high,play_sign_p,delta_effective_slate_size,ess_ci_low,ess_ci_high,ess_sign_p";

impl DeltaRow {
    pub fn csv_line(&self) -> String {
        let p = |x: Option<f64>| x.map(sig9).unwrap_or_else(|| "NA".into());
        let m = |d: &MetricDelta| {
            format!(
                "{},{},{},{}",
                sig9(d.mean),
                sig9(d.ci_low),
                sig9(d.ci_high),
                p(d.sign_p)
            )
        };
        format!(
            "{},{},{},{},{}",
            self.algorithm,
            sig9(self.budget_loc),
            self.pairs,
            m(&self.play_rate),
            m(&self.effective_slate_size)
        )
    }
}

fn metric_delta(b: &[f64], a: &[f64], resamples: usize, streams: &StreamFactory, label: &str) -> Result<MetricDelta> {
    let diffs: Vec<f64> = b.iter().zip(a).map(|(y, x)| y - x).collect();
    let (ci_low, ci_high) = bootstrap_mean_ci(&diffs, resamples, 0.95, &mut streams.stream(label, 0))?;
    let sign_p = match sign_test(b, a) {
        Ok(p) => Some(p),
        Err(Error::UndefinedTest(_)) | Err(Error::Domain(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricDelta {
        mean: mean(&diffs),
        ci_low,
        ci_high,
        sign_p,
    })
}

/// Per (algorithm, budget): metric at `gamma_b` minus metric at `gamma_a`,
/// paired by seed, with bootstrap 95% intervals and sign tests.
pub fn delta_report(
    result: &SweepResult,
    gamma_a: f64,
    gamma_b: f64,
    resamples: usize,
    streams: &StreamFactory,
) -> Result<Vec<DeltaRow>> {
    for g in [gamma_a, gamma_b] {
        if !result.rows.iter().any(|r| same(r.gamma, g)) {
            return Err(Error::Domain(format!("gamma {g} not present in results")));
        }
    }
    let mut keys: Vec<(Algorithm, f64)> = result.rows.iter().map(|r| (r.algorithm, r.budget_loc)).collect();
    keys.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)));
    keys.dedup_by(|x, y| x.0 == y.0 && same(x.1, y.1));

    let mut out = Vec::new();
    for (algorithm, budget_loc) in keys {
        let rows_a = result.by_seed(algorithm, gamma_a, budget_loc);
        let rows_b = result.by_seed(algorithm, gamma_b, budget_loc);
        let paired: Vec<_> = rows_a
            .iter()
            .filter_map(|(s, ra)| rows_b.get(s).map(|rb| (*ra, *rb)))
            .collect();
        if paired.is_empty() {
            continue;
        }
        let col = |f: fn(&super::sweep::SweepRow) -> f64, pick_b: bool| -> Vec<f64> {
            paired.iter().map(|(ra, rb)| f(if pick_b { rb } else { ra })).collect()
        };
        let scope = streams.scoped(&format!("delta/{algorithm}/{}", sig9(budget_loc)));
        out.push(DeltaRow {
            algorithm,
            budget_loc,
            pairs: paired.len(),
            play_rate: metric_delta(
                &col(|r| r.play_rate, true),
                &col(|r| r.play_rate, false),
                resamples,
                &scope,
                "play",
            )?,
            effective_slate_size: metric_delta(
                &col(|r| r.effective_slate_size, true),
                &col(|r| r.effective_slate_size, false),
                resamples,
                &scope,
                "ess",
            )?,
        });
    }
    Ok(out)
}

pub fn delta_csv(rows: &[DeltaRow]) -> String {
    let mut s = String::from(DELTA_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    s
}
