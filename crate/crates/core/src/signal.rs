//! Signal and basis data types, chemical-shift conversion and the
//! macromolecule lineshape model.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Proton gyromagnetic ratio over 2π, MHz/T.
pub const PROTON_GAMMA_MHZ_PER_T: f64 = 42.577;
/// Chemical shift assigned to zero frequency offset (water).
pub const WATER_PPM: f64 = 4.7;
/// Default acquisition: 2048 complex points at 5464 Hz spectral width.
pub const DEFAULT_POINTS: usize = 2048;
pub const DEFAULT_SPECTRAL_WIDTH_HZ: f64 = 5464.0;
pub const DEFAULT_FIELD_T: f64 = 11.7;
/// Lorentzian decay rate of every synthetic basis line, s⁻¹.
pub const BASIS_DAMPING: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("signal has no samples")]
    Empty,
    #[error("dwell time must be finite and positive, got {0}")]
    BadDwell(f64),
    #[error("sample {0} is not finite")]
    NonFinite(usize),
    #[error("basis entries disagree on grid: {0}")]
    GridMismatch(String),
    #[error("basis entry {0} has zero or non-finite energy")]
    ZeroEnergy(String),
    #[error("invalid spectrometer context: {0}")]
    BadContext(String),
    #[error("invalid macromolecule model: {0}")]
    BadMacromolecules(String),
    #[error("invalid cohort spec: {0}")]
    BadCohort(String),
    #[error("unknown metabolite {0:?}")]
    UnknownMetabolite(String),
    #[error("unknown voxel {0:?}")]
    UnknownVoxel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Voxel {
    Vox1,
    Vox2,
    None,
}

impl Voxel {
    pub fn as_str(&self) -> &'static str {
        match self {
            Voxel::Vox1 => "Vox1",
            Voxel::Vox2 => "Vox2",
            Voxel::None => "None",
        }
    }
}

impl fmt::Display for Voxel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Voxel {
    type Err = SignalError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Vox1" => Ok(Voxel::Vox1),
            "Vox2" => Ok(Voxel::Vox2),
            "None" => Ok(Voxel::None),
            other => Err(SignalError::UnknownVoxel(other.to_string())),
        }
    }
}

/// Metabolites of the linear-combination dictionary, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metabolite {
    #[serde(rename = "NAA")]
    Naa,
    #[serde(rename = "Cr+PCr")]
    CrPcr,
    #[serde(rename = "PCho+GPC")]
    PchoGpc,
    #[serde(rename = "Glu")]
    Glu,
    #[serde(rename = "Gln")]
    Gln,
    #[serde(rename = "GABA")]
    Gaba,
    #[serde(rename = "Tau")]
    Tau,
}

impl Metabolite {
    pub const ALL: [Metabolite; 7] = [
        Metabolite::Naa,
        Metabolite::CrPcr,
        Metabolite::PchoGpc,
        Metabolite::Glu,
        Metabolite::Gln,
        Metabolite::Gaba,
        Metabolite::Tau,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Metabolite::Naa => "NAA",
            Metabolite::CrPcr => "Cr+PCr",
            Metabolite::PchoGpc => "PCho+GPC",
            Metabolite::Glu => "Glu",
            Metabolite::Gln => "Gln",
            Metabolite::Gaba => "GABA",
            Metabolite::Tau => "Tau",
        }
    }

    /// Resonances as (ppm, proton weight).
    pub fn lines(&self) -> &'static [(f64, f64)] {
        match self {
            Metabolite::Naa => &[(2.01, 3.0)],
            Metabolite::CrPcr => &[(3.03, 3.0), (3.93, 2.0)],
            Metabolite::PchoGpc => &[(3.19, 9.0)],
            Metabolite::Glu => &[(2.35, 2.0)],
            Metabolite::Gln => &[(2.45, 2.0)],
            Metabolite::Gaba => &[(1.89, 2.0), (2.28, 2.0), (3.01, 2.0)],
            Metabolite::Tau => &[(3.25, 2.0), (3.42, 2.0)],
        }
    }
}

impl fmt::Display for Metabolite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metabolite {
    type Err = SignalError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metabolite::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| SignalError::UnknownMetabolite(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrometerContext {
    /// Tesla.
    pub field_strength: f64,
    /// MHz, equal to Hz per ppm.
    pub proton_frequency: f64,
    pub reference_ppm: f64,
}

impl SpectrometerContext {
    pub fn from_field(field_strength: f64) -> Self {
        Self {
            field_strength,
            proton_frequency: field_strength * PROTON_GAMMA_MHZ_PER_T,
            reference_ppm: WATER_PPM,
        }
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        if !(self.field_strength.is_finite() && self.field_strength > 0.0) {
            return Err(SignalError::BadContext(format!(
                "field strength {}",
                self.field_strength
            )));
        }
        let expected = self.field_strength * PROTON_GAMMA_MHZ_PER_T;
        if !((self.proton_frequency - expected).abs() <= 1e-3 * expected) {
            return Err(SignalError::BadContext(format!(
                "proton frequency {} MHz inconsistent with {} T",
                self.proton_frequency, self.field_strength
            )));
        }
        if !self.reference_ppm.is_finite() {
            return Err(SignalError::BadContext("reference ppm".into()));
        }
        Ok(())
    }

    pub fn ppm_to_hz(&self, ppm: f64) -> f64 {
        (ppm - self.reference_ppm) * self.proton_frequency
    }

    pub fn hz_to_ppm(&self, hz: f64) -> f64 {
        hz / self.proton_frequency + self.reference_ppm
    }
}

impl Default for SpectrometerContext {
    fn default() -> Self {
        Self::from_field(DEFAULT_FIELD_T)
    }
}

/// Complex free-induction decay with sampling metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FidSignal {
    samples: Vec<Complex64>,
    dwell_time: f64,
    pub signal_id: String,
    pub voxel: Voxel,
    pub animal_id: String,
    /// Generating concentrations, when the signal is synthetic.
    pub truth: Option<BTreeMap<Metabolite, f64>>,
}

impl FidSignal {
    pub fn new(samples: Vec<Complex64>, dwell_time: f64) -> Result<Self, SignalError> {
        if samples.is_empty() {
            return Err(SignalError::Empty);
        }
        if !(dwell_time.is_finite() && dwell_time > 0.0 && (1.0 / dwell_time).is_finite()) {
            return Err(SignalError::BadDwell(dwell_time));
        }
        if let Some(i) = samples
            .iter()
            .position(|z| !(z.re.is_finite() && z.im.is_finite()))
        {
            return Err(SignalError::NonFinite(i));
        }
        Ok(Self {
            samples,
            dwell_time,
            signal_id: String::new(),
            voxel: Voxel::None,
            animal_id: String::new(),
            truth: None,
        })
    }

    pub fn with_labels(mut self, signal_id: &str, voxel: Voxel, animal_id: &str) -> Self {
        self.signal_id = signal_id.to_string();
        self.voxel = voxel;
        self.animal_id = animal_id.to_string();
        self
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dwell_time(&self) -> f64 {
        self.dwell_time
    }

    pub fn spectral_width(&self) -> f64 {
        1.0 / self.dwell_time
    }

    /// Same metadata, new samples. Length may differ.
    pub fn with_samples(&self, samples: Vec<Complex64>) -> Result<Self, SignalError> {
        let mut out = FidSignal::new(samples, self.dwell_time)?;
        out.signal_id = self.signal_id.clone();
        out.voxel = self.voxel;
        out.animal_id = self.animal_id.clone();
        out.truth = self.truth.clone();
        Ok(out)
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        let dt = self.dwell_time;
        (0..self.samples.len()).map(move |n| n as f64 * dt)
    }
}

/// Unit-concentration reference FIDs, one per metabolite, on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaboliteBasis {
    entries: Vec<(Metabolite, FidSignal)>,
}

impl MetaboliteBasis {
    pub fn new(mut entries: Vec<(Metabolite, FidSignal)>) -> Result<Self, SignalError> {
        if entries.is_empty() {
            return Err(SignalError::Empty);
        }
        entries.sort_by_key(|(m, _)| *m);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(SignalError::GridMismatch(format!(
                    "duplicate entry {}",
                    w[0].0
                )));
            }
        }
        let (n, dwell) = (entries[0].1.len(), entries[0].1.dwell_time());
        for (m, fid) in &entries {
            if fid.len() != n || fid.dwell_time().to_bits() != dwell.to_bits() {
                return Err(SignalError::GridMismatch(format!(
                    "{m} has {} points at dwell {}, expected {n} at {dwell}",
                    fid.len(),
                    fid.dwell_time()
                )));
            }
            let e = fid.energy();
            if !(e.is_finite() && e > 0.0) {
                return Err(SignalError::ZeroEnergy(m.name().to_string()));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(Metabolite, FidSignal)] {
        &self.entries
    }

    pub fn metabolites(&self) -> Vec<Metabolite> {
        self.entries.iter().map(|(m, _)| *m).collect()
    }

    pub fn get(&self, m: Metabolite) -> Option<&FidSignal> {
        self.entries.iter().find(|(k, _)| *k == m).map(|(_, f)| f)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_points(&self) -> usize {
        self.entries[0].1.len()
    }

    pub fn dwell_time(&self) -> f64 {
        self.entries[0].1.dwell_time()
    }
}

/// Sum of Lorentzian-damped complex exponentials evaluated on n points.
pub fn damped_lines(
    ctx: &SpectrometerContext,
    lines: &[(f64, f64)],
    damping: f64,
    n_points: usize,
    dwell_time: f64,
) -> Vec<Complex64> {
    (0..n_points)
        .map(|n| {
            let t = n as f64 * dwell_time;
            lines
                .iter()
                .map(|&(ppm, weight)| {
                    let f = ctx.ppm_to_hz(ppm);
                    weight * Complex64::new(-damping * t, 2.0 * PI * f * t).exp()
                })
                .sum()
        })
        .collect()
}

/// Synthetic basis from the fixed chemical-shift table. Deterministic.
pub fn generate_basis(
    ctx: &SpectrometerContext,
    n_points: usize,
    dwell_time: f64,
) -> Result<MetaboliteBasis, SignalError> {
    ctx.validate()?;
    if n_points < 2 {
        return Err(SignalError::BadContext(format!(
            "basis needs at least 2 points, got {n_points}"
        )));
    }
    let entries = Metabolite::ALL
        .iter()
        .map(|&m| {
            let samples = damped_lines(ctx, m.lines(), BASIS_DAMPING, n_points, dwell_time);
            FidSignal::new(samples, dwell_time)
                .map(|f| (m, f.with_labels(&format!("basis_{}", m.name()), Voxel::None, "")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    MetaboliteBasis::new(entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmComponent {
    pub center_frequency: f64,
    /// Coefficient of t² in the decay exponent, s⁻².
    pub gaussian_damping: f64,
    pub nominal_amplitude: f64,
    pub amplitude_bounds: (f64, f64),
}

impl MmComponent {
    /// Unit-amplitude lineshape sample at time t.
    pub fn unit_at(&self, t: f64) -> Complex64 {
        Complex64::new(
            -self.gaussian_damping * t * t,
            2.0 * PI * self.center_frequency * t,
        )
        .exp()
    }
}

/// Gaussian-damped macromolecule lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacromoleculeModel {
    pub components: Vec<MmComponent>,
}

/// (ppm, nominal amplitude) of the default macromolecule lines.
pub const DEFAULT_MM_LINES: [(f64, f64); 6] = [
    (0.9, 6.0),
    (1.2, 4.0),
    (1.7, 2.0),
    (2.05, 4.0),
    (3.0, 3.0),
    (3.2, 2.0),
];
pub const MM_GAUSSIAN_DAMPING: f64 = 1000.0;

impl MacromoleculeModel {
    pub fn empty() -> Self {
        Self {
            components: Vec::new(),
        }
    }

    pub fn default_for(ctx: &SpectrometerContext) -> Self {
        let components = DEFAULT_MM_LINES
            .iter()
            .map(|&(ppm, amp)| MmComponent {
                center_frequency: ctx.ppm_to_hz(ppm),
                gaussian_damping: MM_GAUSSIAN_DAMPING,
                nominal_amplitude: amp,
                amplitude_bounds: (0.5 * amp, 1.5 * amp),
            })
            .collect();
        Self { components }
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        for (k, c) in self.components.iter().enumerate() {
            let (lo, hi) = c.amplitude_bounds;
            if !(0.0 <= lo && lo <= c.nominal_amplitude && c.nominal_amplitude <= hi) {
                return Err(SignalError::BadMacromolecules(format!(
                    "component {k}: bounds [{lo}, {hi}] around nominal {}",
                    c.nominal_amplitude
                )));
            }
            if !(c.center_frequency.is_finite() && c.gaussian_damping.is_finite()) {
                return Err(SignalError::BadMacromolecules(format!(
                    "component {k} not finite"
                )));
            }
        }
        Ok(())
    }

    pub fn nominal_amplitudes(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.nominal_amplitude).collect()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}
