//! Agreement and variability statistics over quantification records.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quant::MethodId;
use crate::signal::{Metabolite, Voxel};

pub mod agreement;
pub mod preservation;
pub mod variability;
pub mod wilcoxon;

pub use agreement::{bland_altman, mean_over_executions, z95_matrix, AgreementStats, BlandAltman, Z95Matrix};
pub use preservation::{finding_preservation, FindingPreservation};
pub use variability::{bootstrap_rmse, execution_residuals, rmse, VariabilityStats};
pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("signal sets differ between methods: {0}")]
    MismatchedSignals(String),
    #[error("need at least {needed} {what}, got {got}")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("records mix {0}; expected a single group")]
    MixedGroup(&'static str),
    #[error("{metabolite} / {method}: {source}")]
    Context {
        metabolite: Metabolite,
        method: String,
        #[source]
        source: Box<StatsError>,
    },
}

impl StatsError {
    pub fn with_context(self, metabolite: Metabolite, method: impl Into<String>) -> Self {
        StatsError::Context {
            metabolite,
            method: method.into(),
            source: Box::new(self),
        }
    }
}

/// x(m, s, q, e): one concentration from one execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantRecord {
    pub metabolite: Metabolite,
    pub signal_id: String,
    pub voxel: Voxel,
    pub animal_id: String,
    pub method: MethodId,
    pub execution: u32,
    pub concentration: f64,
    pub crb_sd: Option<f64>,
    pub converged: bool,
}

/// Mean that is exact when all values are equal.
pub(crate) fn stable_mean(xs: &[f64]) -> f64 {
    let shift = xs[0];
    shift + xs.iter().map(|x| x - shift).sum::<f64>() / xs.len() as f64
}

/// Linear-interpolation percentile (q in [0, 1]) of a sorted slice.
pub(crate) fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
