//! Between-method agreement: execution-averaged concentrations,
//! Bland-Altman statistics and the bias/CI95 ratio.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{stable_mean, QuantRecord, StatsError};
use crate::quant::MethodId;
use crate::signal::{Metabolite, Voxel};

/// Half-width multiplier of the 95% limits of agreement.
pub const LOA_FACTOR: f64 = 1.96;

pub type MeanKey = (Metabolite, String, MethodId);

/// Mean concentration over converged executions per (m, s, q). Keys whose
/// executions were all discarded are returned separately.
pub fn mean_over_executions(records: &[QuantRecord]) -> (BTreeMap<MeanKey, f64>, Vec<MeanKey>) {
    let mut groups: BTreeMap<MeanKey, Vec<f64>> = BTreeMap::new();
    for r in records {
        let e = groups
            .entry((r.metabolite, r.signal_id.clone(), r.method))
            .or_default();
        if r.converged {
            e.push(r.concentration);
        }
    }
    let mut means = BTreeMap::new();
    let mut omitted = Vec::new();
    for (k, xs) in groups {
        if xs.is_empty() {
            omitted.push(k);
        } else {
            means.insert(k, stable_mean(&xs));
        }
    }
    (means, omitted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlandAltman {
    pub bias: f64,
    pub sd_diff: f64,
    pub ci95: f64,
    /// bias / ci95; ±∞ when the differences are constant and non-zero.
    pub z95: f64,
    /// (signal, mean of both, difference q − q').
    pub points: Vec<(String, f64, f64)>,
}

pub fn bland_altman(
    x_q: &BTreeMap<String, f64>,
    x_q2: &BTreeMap<String, f64>,
) -> Result<BlandAltman, StatsError> {
    if x_q.len() != x_q2.len() || x_q.keys().zip(x_q2.keys()).any(|(a, b)| a != b) {
        let a: BTreeSet<_> = x_q.keys().collect();
        let b: BTreeSet<_> = x_q2.keys().collect();
        let diff: Vec<_> = a.symmetric_difference(&b).map(|s| s.as_str()).collect();
        return Err(StatsError::MismatchedSignals(diff.join(", ")));
    }
    let n = x_q.len();
    if n < 2 {
        return Err(StatsError::InsufficientData {
            what: "signals",
            needed: 2,
            got: n,
        });
    }
    let points: Vec<(String, f64, f64)> = x_q
        .iter()
        .zip(x_q2.values())
        .map(|((s, a), b)| (s.clone(), 0.5 * (a + b), a - b))
        .collect();
    let diffs: Vec<f64> = points.iter().map(|p| p.2).collect();
    let bias = diffs.iter().sum::<f64>() / n as f64;
    let sd_diff = (diffs.iter().map(|d| (d - bias).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let ci95 = LOA_FACTOR * sd_diff;
    let z95 = if ci95 > 0.0 {
        bias / ci95
    } else if bias == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(bias)
    };
    Ok(BlandAltman {
        bias,
        sd_diff,
        ci95,
        z95,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub metabolite: Metabolite,
    pub method_pair: (MethodId, MethodId),
    pub voxel: Voxel,
    #[serde(flatten)]
    pub stats: BlandAltman,
}

/// z95 for every unordered method pair, per metabolite, within one voxel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Z95Matrix {
    pub voxel: Voxel,
    pub metabolites: Vec<Metabolite>,
    /// Column order; pairs (q, q') follow the order of the method list.
    pub pairs: Vec<(MethodId, MethodId)>,
    /// `values[metabolite][pair]`.
    pub values: Vec<Vec<f64>>,
    pub details: Vec<AgreementStats>,
}

impl Z95Matrix {
    /// Antisymmetric lookup: z95(q, q') = −z95(q', q).
    pub fn get(&self, m: Metabolite, q: MethodId, q2: MethodId) -> Option<f64> {
        let row = self.metabolites.iter().position(|&k| k == m)?;
        if let Some(c) = self.pairs.iter().position(|&p| p == (q, q2)) {
            return Some(self.values[row][c]);
        }
        let c = self.pairs.iter().position(|&p| p == (q2, q))?;
        Some(-self.values[row][c])
    }
}

/// Per-voxel z95 matrix from execution means.
///
/// `voxel_of` maps signal ids to voxels; only signals in `voxel` are used.
pub fn z95_matrix(
    means: &BTreeMap<MeanKey, f64>,
    methods: &[MethodId],
    voxel_of: &BTreeMap<String, Voxel>,
    voxel: Voxel,
) -> Result<Z95Matrix, StatsError> {
    if methods.len() < 2 {
        return Err(StatsError::InsufficientData {
            what: "methods",
            needed: 2,
            got: methods.len(),
        });
    }
    let metabolites: Vec<Metabolite> = means
        .keys()
        .map(|k| k.0)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let per_method = |m: Metabolite, q: MethodId| -> BTreeMap<String, f64> {
        means
            .iter()
            .filter(|((mm, s, qq), _)| {
                *mm == m && *qq == q && voxel_of.get(s.as_str()) == Some(&voxel)
            })
            .map(|((_, s, _), x)| (s.clone(), *x))
            .collect()
    };
    let mut pairs = Vec::new();
    for i in 0..methods.len() {
        for j in i + 1..methods.len() {
            pairs.push((methods[i], methods[j]));
        }
    }
    let mut values = Vec::with_capacity(metabolites.len());
    let mut details = Vec::new();
    for &m in &metabolites {
        let mut row = Vec::with_capacity(pairs.len());
        for &(q, q2) in &pairs {
            let ba = bland_altman(&per_method(m, q), &per_method(m, q2))
                .map_err(|e| e.with_context(m, format!("{q} vs {q2} in {voxel}")))?;
            row.push(ba.z95);
            details.push(AgreementStats {
                metabolite: m,
                method_pair: (q, q2),
                voxel,
                stats: ba,
            });
        }
        values.push(row);
    }
    Ok(Z95Matrix {
        voxel,
        metabolites,
        pairs,
        values,
        details,
    })
}
