//! Synthetic paired-voxel cohort generation.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::quant::model::{ModelParameters, SignalModel};
use crate::seed::SeedMixer;
use crate::signal::{
    FidSignal, MacromoleculeModel, Metabolite, MetaboliteBasis, SignalError, SpectrometerContext,
    Voxel,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticCohortSpec {
    pub n_signals_per_voxel: usize,
    pub truth_concentrations: BTreeMap<Voxel, BTreeMap<Metabolite, f64>>,
    pub biological_sd: BTreeMap<Voxel, BTreeMap<Metabolite, f64>>,
    /// Per-channel standard deviation of the complex time-domain noise.
    pub noise_sd: f64,
    pub master_seed: u64,
}

/// Control-voxel means (arbitrary water-normalized units).
pub const CONTROL_MEANS: [(Metabolite, f64); 7] = [
    (Metabolite::Naa, 8.0),
    (Metabolite::CrPcr, 7.0),
    (Metabolite::PchoGpc, 1.5),
    (Metabolite::Glu, 9.0),
    (Metabolite::Gln, 3.0),
    (Metabolite::Gaba, 1.5),
    (Metabolite::Tau, 5.0),
];

/// Lesion-voxel means; Cr+PCr carries the planted group difference.
pub const LESION_MEANS: [(Metabolite, f64); 7] = [
    (Metabolite::Naa, 6.5),
    (Metabolite::CrPcr, 5.5),
    (Metabolite::PchoGpc, 2.0),
    (Metabolite::Glu, 8.0),
    (Metabolite::Gln, 3.0),
    (Metabolite::Gaba, 1.3),
    (Metabolite::Tau, 5.0),
];

pub const DEFAULT_BIOLOGICAL_SD: f64 = 0.3;
pub const DEFAULT_NOISE_SD: f64 = 4.0;
pub const DEFAULT_SIGNALS_PER_VOXEL: usize = 16;

impl Default for SyntheticCohortSpec {
    fn default() -> Self {
        Self::default_with_seed(0)
    }
}

impl SyntheticCohortSpec {
    /// 16 + 16 signals with a lesion/control difference in several metabolites.
    pub fn default_with_seed(master_seed: u64) -> Self {
        let sd: BTreeMap<Metabolite, f64> = Metabolite::ALL
            .iter()
            .map(|&m| (m, DEFAULT_BIOLOGICAL_SD))
            .collect();
        Self {
            n_signals_per_voxel: DEFAULT_SIGNALS_PER_VOXEL,
            truth_concentrations: [
                (Voxel::Vox1, LESION_MEANS.into_iter().collect()),
                (Voxel::Vox2, CONTROL_MEANS.into_iter().collect()),
            ]
            .into_iter()
            .collect(),
            biological_sd: [(Voxel::Vox1, sd.clone()), (Voxel::Vox2, sd)]
                .into_iter()
                .collect(),
            noise_sd: DEFAULT_NOISE_SD,
            master_seed,
        }
    }

    /// Same as the default but without any group difference.
    pub fn null_effect(master_seed: u64) -> Self {
        let mut spec = Self::default_with_seed(master_seed);
        let control: BTreeMap<Metabolite, f64> = CONTROL_MEANS.into_iter().collect();
        spec.truth_concentrations = [(Voxel::Vox1, control.clone()), (Voxel::Vox2, control)]
            .into_iter()
            .collect();
        spec
    }

    pub fn voxels(&self) -> Vec<Voxel> {
        self.truth_concentrations.keys().copied().collect()
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        if self.n_signals_per_voxel == 0 {
            return Err(SignalError::BadCohort("n_signals_per_voxel must be >= 1".into()));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(SignalError::BadCohort(format!("noise_sd {}", self.noise_sd)));
        }
        if self.truth_concentrations.is_empty() {
            return Err(SignalError::BadCohort("no voxels".into()));
        }
        for (v, means) in &self.truth_concentrations {
            for (m, c) in means {
                if !(*c >= 0.0 && c.is_finite()) {
                    return Err(SignalError::BadCohort(format!("{v} {m} mean {c}")));
                }
                let sd = self
                    .biological_sd
                    .get(v)
                    .and_then(|s| s.get(m))
                    .copied()
                    .unwrap_or(0.0);
                if !(sd >= 0.0 && sd.is_finite()) {
                    return Err(SignalError::BadCohort(format!("{v} {m} sd {sd}")));
                }
            }
        }
        Ok(())
    }
}

pub fn animal_label(i: usize) -> String {
    format!("rat{:02}", i + 1)
}

pub fn signal_label(animal: &str, voxel: Voxel) -> String {
    format!("{animal}_{}", voxel.as_str().to_lowercase())
}

/// Draw per-signal truths and noise; signals are ordered voxel-major.
pub fn synthesize_cohort(
    spec: &SyntheticCohortSpec,
    basis: &MetaboliteBasis,
    mm: &MacromoleculeModel,
    ctx: &SpectrometerContext,
) -> Result<Vec<FidSignal>, SignalError> {
    spec.validate()?;
    ctx.validate()?;
    mm.validate()?;
    let dwell = basis.dwell_time();
    let model = SignalModel::new(basis, mm);
    let mets = basis.metabolites();
    let mut out = Vec::new();
    for (v_idx, (voxel, means)) in spec.truth_concentrations.iter().enumerate() {
        for i in 0..spec.n_signals_per_voxel {
            let animal = animal_label(i);
            let id = signal_label(&animal, *voxel);
            let stream = SeedMixer::new(spec.master_seed)
                .u64(v_idx as u64)
                .u64(i as u64)
                .finish();
            let mut rng = crate::seed::substream(stream, 0);
            let mut truth = BTreeMap::new();
            let mut amps = Vec::with_capacity(mets.len());
            for m in &mets {
                let mean = means.get(m).copied().unwrap_or(0.0);
                let sd = spec
                    .biological_sd
                    .get(voxel)
                    .and_then(|s| s.get(m))
                    .copied()
                    .unwrap_or(0.0);
                let z: f64 = StandardNormal.sample(&mut rng);
                let c = (mean + sd * z).max(0.0);
                truth.insert(*m, c);
                amps.push(c);
            }
            let params = ModelParameters::with_amplitudes(mets.clone(), amps, mm);
            let mut samples = model.eval(&params.to_vector());
            if spec.noise_sd > 0.0 {
                let noise = Normal::new(0.0, spec.noise_sd)
                    .map_err(|e| SignalError::BadCohort(e.to_string()))?;
                for s in samples.iter_mut() {
                    *s += Complex64::new(noise.sample(&mut rng), noise.sample(&mut rng));
                }
            }
            let mut fid = FidSignal::new(samples, dwell)?.with_labels(&id, *voxel, &animal);
            fid.truth = Some(truth);
            out.push(fid);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::model::model_eval;
    use crate::signal::{generate_basis, DEFAULT_SPECTRAL_WIDTH_HZ};

    fn setup(n: usize) -> (MetaboliteBasis, MacromoleculeModel, SpectrometerContext) {
        let ctx = SpectrometerContext::default();
        (
            generate_basis(&ctx, n, 1.0 / DEFAULT_SPECTRAL_WIDTH_HZ).unwrap(),
            MacromoleculeModel::default_for(&ctx),
            ctx,
        )
    }

    #[test]
    fn default_cohort_shape() {
        let (b, mm, ctx) = setup(64);
        let c = synthesize_cohort(&SyntheticCohortSpec::default_with_seed(1), &b, &mm, &ctx).unwrap();
        assert_eq!(c.len(), 32);
        assert_eq!(c.iter().filter(|s| s.voxel == Voxel::Vox1).count(), 16);
        assert_eq!(c.iter().filter(|s| s.voxel == Voxel::Vox2).count(), 16);
        assert_eq!(c[0].signal_id, "rat01_vox1");
        assert_eq!(c[16].animal_id, "rat01");
    }

    #[test]
    fn noiseless_constant_cohort_is_identical_and_exact() {
        let (b, mm, ctx) = setup(256);
        let mut spec = SyntheticCohortSpec::default_with_seed(5);
        spec.noise_sd = 0.0;
        for sds in spec.biological_sd.values_mut() {
            for v in sds.values_mut() {
                *v = 0.0;
            }
        }
        let c = synthesize_cohort(&spec, &b, &mm, &ctx).unwrap();
        let vox1: Vec<_> = c.iter().filter(|s| s.voxel == Voxel::Vox1).collect();
        assert!(vox1.iter().all(|s| s.samples() == vox1[0].samples()));
        for s in &c {
            let truth = s.truth.as_ref().unwrap();
            let p = ModelParameters::with_amplitudes(
                b.metabolites(),
                b.metabolites().iter().map(|m| truth[m]).collect(),
                &mm,
            );
            assert_eq!(model_eval(&p, &b, &mm), s.samples());
        }
    }

    #[test]
    fn same_seed_same_cohort() {
        let (b, mm, ctx) = setup(128);
        let spec = SyntheticCohortSpec::default_with_seed(99);
        let a = synthesize_cohort(&spec, &b, &mm, &ctx).unwrap();
        let c = synthesize_cohort(&spec, &b, &mm, &ctx).unwrap();
        assert_eq!(a, c);
        let other = synthesize_cohort(&SyntheticCohortSpec::default_with_seed(100), &b, &mm, &ctx).unwrap();
        assert_ne!(a[0].samples(), other[0].samples());
    }

    #[test]
    fn truths_are_clamped_at_zero() {
        let (b, mm, ctx) = setup(64);
        let mut spec = SyntheticCohortSpec::default_with_seed(3);
        for sds in spec.biological_sd.values_mut() {
            for v in sds.values_mut() {
                *v = 50.0;
            }
        }
        let c = synthesize_cohort(&spec, &b, &mm, &ctx).unwrap();
        let all: Vec<f64> = c.iter().flat_map(|s| s.truth.clone().unwrap().into_values()).collect();
        assert!(all.iter().all(|v| *v >= 0.0));
        assert!(all.contains(&0.0));
    }

    #[test]
    fn invalid_spec_rejected() {
        let (b, mm, ctx) = setup(64);
        let mut spec = SyntheticCohortSpec::default_with_seed(3);
        spec.n_signals_per_voxel = 0;
        assert!(synthesize_cohort(&spec, &b, &mm, &ctx).is_err());
        let mut spec = SyntheticCohortSpec::default_with_seed(3);
        spec.noise_sd = -1.0;
        assert!(synthesize_cohort(&spec, &b, &mm, &ctx).is_err());
    }
}
