//! Finding preservation: does the Vox1 vs Vox2 signed-rank conclusion hold in
//! every execution?

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::wilcoxon::wilcoxon_signed_rank;
use super::{QuantRecord, StatsError};
use crate::quant::MethodId;
use crate::signal::{Metabolite, Voxel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FindingPreservation {
    pub metabolite: Metabolite,
    pub method: MethodId,
    pub n_significant: usize,
    /// Executions actually tested.
    pub n_executions: usize,
    pub mean_z_statistic: f64,
    /// Executions skipped because some animal lacked a converged Vox1 or
    /// Vox2 value.
    pub skipped_executions: Vec<u32>,
    pub p_values: Vec<(u32, f64)>,
}

/// One signed-rank test per execution on (Vox1, Vox2) pairs matched by
/// animal. `records` must hold a single (metabolite, method) group.
pub fn finding_preservation(
    records: &[QuantRecord],
    alpha: f64,
) -> Result<FindingPreservation, StatsError> {
    let Some(first) = records.first() else {
        return Err(StatsError::InsufficientData {
            what: "records",
            needed: 1,
            got: 0,
        });
    };
    let (metabolite, method) = (first.metabolite, first.method);
    if records.iter().any(|r| r.metabolite != metabolite) {
        return Err(StatsError::MixedGroup("metabolites"));
    }
    if records.iter().any(|r| r.method != method) {
        return Err(StatsError::MixedGroup("methods"));
    }
    let animals: BTreeSet<&str> = records.iter().map(|r| r.animal_id.as_str()).collect();
    let executions: BTreeSet<u32> = records.iter().map(|r| r.execution).collect();
    let mut values: BTreeMap<(u32, &str, Voxel), f64> = BTreeMap::new();
    for r in records.iter().filter(|r| r.converged) {
        values.insert((r.execution, &r.animal_id, r.voxel), r.concentration);
    }

    let mut skipped = Vec::new();
    let mut p_values = Vec::new();
    let mut z_sum = 0.0;
    let mut n_sig = 0;
    for &e in &executions {
        let pairs: Option<Vec<(f64, f64)>> = animals
            .iter()
            .map(|a| {
                Some((
                    *values.get(&(e, *a, Voxel::Vox1))?,
                    *values.get(&(e, *a, Voxel::Vox2))?,
                ))
            })
            .collect();
        let Some(pairs) = pairs else {
            skipped.push(e);
            continue;
        };
        let w = wilcoxon_signed_rank(&pairs).map_err(|err| err.with_context(metabolite, method.as_str()))?;
        if w.p_value < alpha {
            n_sig += 1;
        }
        z_sum += w.z;
        p_values.push((e, w.p_value));
    }
    let n = p_values.len();
    Ok(FindingPreservation {
        metabolite,
        method,
        n_significant: n_sig,
        n_executions: n,
        mean_z_statistic: if n > 0 { z_sum / n as f64 } else { f64::NAN },
        skipped_executions: skipped,
        p_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recs(n_animals: usize, n_exec: u32, effect: f64) -> Vec<QuantRecord> {
        let mut out = Vec::new();
        for e in 0..n_exec {
            for a in 0..n_animals {
                for (v, shift) in [(Voxel::Vox1, effect), (Voxel::Vox2, 0.0)] {
                    out.push(QuantRecord {
                        metabolite: Metabolite::CrPcr,
                        signal_id: format!("a{a}_{v}"),
                        voxel: v,
                        animal_id: format!("a{a}"),
                        method: MethodId::FreqfitA,
                        execution: e,
                        concentration: 5.0 + shift + ((a * 13 + e as usize * 7) % 11) as f64 * 0.01
                            + if v == Voxel::Vox1 { (a % 3) as f64 * 0.002 } else { 0.0 },
                        crb_sd: None,
                        converged: true,
                    });
                }
            }
        }
        out
    }

    #[test]
    fn large_effect_always_significant() {
        let fp = finding_preservation(&recs(16, 30, -1.0), 0.05).unwrap();
        assert_eq!(fp.n_significant, 30);
        assert_eq!(fp.n_executions, 30);
        assert!(fp.mean_z_statistic < -3.0);
        assert!(fp.skipped_executions.is_empty());
    }

    #[test]
    fn incomplete_execution_is_skipped() {
        let mut r = recs(8, 3, 1.0);
        let idx = r.iter().position(|x| x.execution == 1).unwrap();
        r[idx].converged = false;
        let fp = finding_preservation(&r, 0.05).unwrap();
        assert_eq!(fp.skipped_executions, vec![1]);
        assert_eq!(fp.n_executions, 2);
    }

    #[test]
    fn too_few_animals_is_an_error() {
        let err = finding_preservation(&recs(3, 1, 1.0), 0.05).unwrap_err();
        assert!(matches!(err, StatsError::Context { .. }));
        assert!(err.to_string().contains("Cr+PCr"));
    }
}
