//! Inter-execution variability (RMSE around per-signal means) and its
//! bootstrap over signals.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{percentile_sorted, stable_mean, QuantRecord, StatsError};
use crate::quant::MethodId;
use crate::seed::substream;
use crate::signal::{Metabolite, Voxel};

/// r(m, s, q, e) = x(m, s, q, e) − mean over converged executions of x(m, s, q, ·).
///
/// Keyed by (signal, execution). Non-converged rows are ignored.
pub fn execution_residuals(records: &[QuantRecord]) -> BTreeMap<(String, u32), f64> {
    let mut by_signal: BTreeMap<&str, Vec<(u32, f64)>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.converged) {
        by_signal
            .entry(&r.signal_id)
            .or_default()
            .push((r.execution, r.concentration));
    }
    let mut out = BTreeMap::new();
    for (s, rows) in by_signal {
        let xs: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let mean = stable_mean(&xs);
        for (e, x) in rows {
            out.insert((s.to_string(), e), x - mean);
        }
    }
    out
}

/// sqrt(mean(r²)); NaN for an empty input.
pub fn rmse<I: IntoIterator<Item = f64>>(residuals: I) -> f64 {
    let (mut ss, mut n) = (0.0, 0usize);
    for r in residuals {
        ss += r * r;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        (ss / n as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariabilityStats {
    pub metabolite: Metabolite,
    pub method: MethodId,
    pub voxel: Voxel,
    pub rmse: f64,
    pub bootstrap_rmse: Vec<f64>,
    pub bootstrap_ci: (f64, f64),
    /// Mean reported CRB standard deviation over converged fits, if any.
    pub mean_crb_sd: Option<f64>,
    pub n_signals: usize,
    pub n_records: usize,
}

fn single<T: PartialEq + Copy>(
    mut it: impl Iterator<Item = T>,
    what: &'static str,
) -> Result<Option<T>, StatsError> {
    let first = it.next();
    if let Some(f) = first {
        if it.any(|x| x != f) {
            return Err(StatsError::MixedGroup(what));
        }
    }
    Ok(first)
}

/// RMSE for one (metabolite, method, voxel) group plus a signal-level
/// bootstrap: each replicate resamples signals with replacement and pools
/// their residuals. The CI is the 2.5/97.5 percentile pair.
pub fn bootstrap_rmse(
    records: &[QuantRecord],
    n_boot: usize,
    seed: u64,
) -> Result<VariabilityStats, StatsError> {
    let conv: Vec<&QuantRecord> = records.iter().filter(|r| r.converged).collect();
    let (Some(metabolite), Some(method), Some(voxel)) = (
        single(conv.iter().map(|r| r.metabolite), "metabolites")?,
        single(conv.iter().map(|r| r.method), "methods")?,
        single(conv.iter().map(|r| r.voxel), "voxels")?,
    ) else {
        return Err(StatsError::InsufficientData {
            what: "converged records",
            needed: 1,
            got: 0,
        });
    };
    let residuals = execution_residuals(records);
    let mut per_signal: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for ((s, _), r) in &residuals {
        per_signal.entry(s.as_str()).or_default().push(*r);
    }
    let groups: Vec<(f64, usize)> = per_signal
        .values()
        .map(|rs| (rs.iter().map(|r| r * r).sum::<f64>(), rs.len()))
        .collect();
    let point = rmse(residuals.values().copied());

    let n = groups.len();
    let mut boot = Vec::with_capacity(n_boot);
    for b in 0..n_boot {
        let mut rng = substream(seed, b as u64);
        let (mut ss, mut cnt) = (0.0, 0usize);
        for _ in 0..n {
            let g = groups[rng.gen_range(0..n)];
            ss += g.0;
            cnt += g.1;
        }
        boot.push((ss / cnt as f64).sqrt());
    }
    let mut sorted = boot.clone();
    sorted.sort_by(f64::total_cmp);
    let ci = (percentile_sorted(&sorted, 0.025), percentile_sorted(&sorted, 0.975));

    let crbs: Vec<f64> = conv.iter().filter_map(|r| r.crb_sd).collect();
    let mean_crb_sd = (!crbs.is_empty()).then(|| crbs.iter().sum::<f64>() / crbs.len() as f64);
    Ok(VariabilityStats {
        metabolite,
        method,
        voxel,
        rmse: point,
        bootstrap_rmse: boot,
        bootstrap_ci: ci,
        mean_crb_sd,
        n_signals: n,
        n_records: conv.len(),
    })
}
