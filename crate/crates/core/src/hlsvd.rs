//! Hankel-matrix SVD decomposition of an FID into exponentially damped
//! sinusoids, and removal of baseline-like components.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{FidSignal, SignalError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HlsvdError {
    #[error("invalid HLSVD configuration: {0}")]
    Config(String),
    #[error("degenerate decomposition: singular value {index} is {value:e} against largest {largest:e}")]
    Degenerate {
        index: usize,
        value: f64,
        largest: f64,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampedSinusoid {
    /// Hz.
    pub frequency: f64,
    /// s⁻¹; negative means growing.
    pub damping: f64,
    pub amplitude: f64,
    /// Radians in (−π, π].
    pub phase: f64,
}

impl DampedSinusoid {
    pub fn at(&self, t: f64) -> Complex64 {
        Complex64::from_polar(self.amplitude, self.phase)
            * Complex64::new(-self.damping * t, 2.0 * PI * self.frequency * t).exp()
    }

    /// The pole grows over time (|z| > 1).
    pub fn is_growing(&self) -> bool {
        self.damping < 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HlsvdConfig {
    pub model_order: usize,
    /// Hankel rows; `None` selects floor(N/2).
    pub hankel_rows: Option<usize>,
    pub baseline_damping_threshold: f64,
    pub baseline_freq_band: Option<(f64, f64)>,
    /// Decompose only the first samples of the FID; `None` uses all.
    pub max_points: Option<usize>,
}

impl Default for HlsvdConfig {
    fn default() -> Self {
        Self {
            model_order: 12,
            hankel_rows: None,
            baseline_damping_threshold: 50.0,
            baseline_freq_band: None,
            max_points: None,
        }
    }
}

impl HlsvdConfig {
    fn rows_for(&self, n: usize) -> usize {
        self.hankel_rows.unwrap_or(n / 2)
    }

    pub fn validate(&self, n: usize) -> Result<(), HlsvdError> {
        let l = self.rows_for(n);
        if l == 0 || l > n {
            return Err(HlsvdError::Config(format!("{l} Hankel rows for {n} samples")));
        }
        let cols = n - l + 1;
        if self.model_order < 1 || self.model_order > l.min(cols) {
            return Err(HlsvdError::Config(format!(
                "model order {} outside [1, {}]",
                self.model_order,
                l.min(cols)
            )));
        }
        // shift invariance needs more rows than poles
        if self.model_order >= l {
            return Err(HlsvdError::Config(format!(
                "model order {} needs more than {l} Hankel rows",
                self.model_order
            )));
        }
        if !(self.baseline_damping_threshold > 0.0) {
            return Err(HlsvdError::Config("damping threshold must be positive".into()));
        }
        Ok(())
    }
}

fn wrap_phase(p: f64) -> f64 {
    if p <= -PI {
        p + 2.0 * PI
    } else {
        p
    }
}

/// Decompose into `model_order` damped sinusoids, sorted by descending amplitude.
pub fn hlsvd_decompose(fid: &FidSignal, cfg: &HlsvdConfig) -> Result<Vec<DampedSinusoid>, HlsvdError> {
    let n = cfg.max_points.map_or(fid.len(), |m| m.min(fid.len()));
    cfg.validate(n)?;
    let y = &fid.samples()[..n];
    let dwell = fid.dwell_time();
    let l = cfg.rows_for(n);
    let cols = n - l + 1;
    let k = cfg.model_order;

    let hankel = DMatrix::<Complex64>::from_fn(l, cols, |i, j| y[i + j]);
    let svd = hankel.svd(true, false);
    let u = svd
        .u
        .ok_or_else(|| HlsvdError::Numerical("SVD did not return U".into()))?;
    // nalgebra does not guarantee ordering
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let largest = svd.singular_values[order[0]];
    for (idx, &c) in order.iter().take(k).enumerate() {
        let s = svd.singular_values[c];
        if !(s >= 1e-12 * largest) || largest == 0.0 {
            return Err(HlsvdError::Degenerate {
                index: idx,
                value: s,
                largest,
            });
        }
    }
    let uk = DMatrix::<Complex64>::from_fn(l, k, |i, j| u[(i, order[j])]);
    let top = uk.rows(0, l - 1).into_owned();
    let bottom = uk.rows(1, l - 1).into_owned();
    let z_map = top
        .svd(true, true)
        .solve(&bottom, 0.0)
        .map_err(|e| HlsvdError::Numerical(e.to_string()))?;
    let poles = Schur::new(z_map)
        .eigenvalues()
        .ok_or_else(|| HlsvdError::Numerical("pole eigenvalues".into()))?;

    let vander = DMatrix::<Complex64>::from_fn(n, k, |t, j| poles[j].powu(t as u32));
    let rhs = DVector::<Complex64>::from_column_slice(y);
    let coeffs = vander
        .svd(true, true)
        .solve(&rhs, 0.0)
        .map_err(|e| HlsvdError::Numerical(e.to_string()))?;

    let mut out: Vec<DampedSinusoid> = poles
        .iter()
        .zip(coeffs.iter())
        .map(|(z, c)| DampedSinusoid {
            frequency: z.arg() / (2.0 * PI * dwell),
            damping: -z.norm().ln() / dwell,
            amplitude: c.norm(),
            phase: wrap_phase(c.arg()),
        })
        .collect();
    out.sort_by(|a, b| {
        b.amplitude
            .partial_cmp(&a.amplitude)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.frequency.total_cmp(&b.frequency))
    });
    Ok(out)
}

/// Components that look like baseline: fast decay, or inside the configured
/// band. Growing components are never selected.
pub fn select_baseline_components(components: &[DampedSinusoid], cfg: &HlsvdConfig) -> Vec<DampedSinusoid> {
    components
        .iter()
        .filter(|c| !c.is_growing())
        .filter(|c| {
            c.damping > cfg.baseline_damping_threshold
                || cfg
                    .baseline_freq_band
                    .is_some_and(|(lo, hi)| lo <= c.frequency && c.frequency <= hi)
        })
        .copied()
        .collect()
}

pub fn synthesize_components(components: &[DampedSinusoid], n: usize, dwell: f64) -> Vec<Complex64> {
    (0..n)
        .map(|i| {
            let t = i as f64 * dwell;
            components.iter().map(|c| c.at(t)).sum()
        })
        .collect()
}

pub fn subtract_components(fid: &FidSignal, components: &[DampedSinusoid]) -> FidSignal {
    if components.is_empty() {
        return fid.clone();
    }
    let model = synthesize_components(components, fid.len(), fid.dwell_time());
    let samples = fid
        .samples()
        .iter()
        .zip(&model)
        .map(|(y, m)| y - m)
        .collect();
    let mut out = fid.clone();
    // finite input minus finite model stays finite
    out = out.with_samples(samples).unwrap_or(out);
    out
}
