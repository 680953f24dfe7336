//! Quantification engines and Cramér-Rao bounds.
//!
//! Two engines share one signal model ([`model::SignalModel`]):
//! a stochastic multi-start time-domain fit ([`fit_time_domain`]) and a
//! deterministic frequency-domain fit with a penalized spline baseline
//! ([`fit_freq_domain`]).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hlsvd::{HlsvdConfig, HlsvdError};
use crate::signal::{FidSignal, MacromoleculeModel, Metabolite, MetaboliteBasis, SignalError};

pub mod crb;
pub mod freqfit;
pub mod lm;
pub mod model;
pub mod spline;
pub mod timefit;

pub use crb::{compute_crb, estimate_noise};
pub use freqfit::fit_freq_domain;
pub use model::{model_eval, residuals, BoundsSpec, ModelParameters};
pub use timefit::fit_time_domain;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("method {method} cannot run on the {engine} engine")]
    WrongEngine { method: MethodId, engine: &'static str },
    #[error("invalid method configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("ill-conditioned baseline: penalized normal equations singular at pivot {pivot} ({value:e})")]
    IllConditionedBaseline { pivot: usize, value: f64 },
    #[error(transparent)]
    Hlsvd(#[from] HlsvdError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MethodId {
    #[serde(rename = "tdfit-A")]
    TdfitA,
    #[serde(rename = "tdfit-B")]
    TdfitB,
    #[serde(rename = "freqfit-A")]
    FreqfitA,
    #[serde(rename = "freqfit-B")]
    FreqfitB,
}

impl MethodId {
    pub const ALL: [MethodId; 4] = [
        MethodId::TdfitA,
        MethodId::TdfitB,
        MethodId::FreqfitA,
        MethodId::FreqfitB,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MethodId::TdfitA => "tdfit-A",
            MethodId::TdfitB => "tdfit-B",
            MethodId::FreqfitA => "freqfit-A",
            MethodId::FreqfitB => "freqfit-B",
        }
    }

    /// Software family, without the parameter set.
    pub fn family(&self) -> &'static str {
        match self {
            MethodId::TdfitA | MethodId::TdfitB => "tdfit",
            MethodId::FreqfitA | MethodId::FreqfitB => "freqfit",
        }
    }

    pub fn paramset(&self) -> &'static str {
        match self {
            MethodId::TdfitA | MethodId::FreqfitA => "A",
            MethodId::TdfitB | MethodId::FreqfitB => "B",
        }
    }

    pub fn from_parts(family: &str, paramset: &str) -> Option<Self> {
        format!("{family}-{paramset}").parse().ok()
    }

    pub fn engine(&self) -> Engine {
        match self {
            MethodId::TdfitA | MethodId::TdfitB => Engine::TimeDomain,
            MethodId::FreqfitA | MethodId::FreqfitB => Engine::FreqDomain,
        }
    }

    pub fn is_stochastic(&self) -> bool {
        self.engine() == Engine::TimeDomain
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodId {
    type Err = FitError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MethodId::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| FitError::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    TimeDomain,
    FreqDomain,
}

impl Engine {
    pub fn as_str(&self) -> &'static str {
        match self {
            Engine::TimeDomain => "time_domain",
            Engine::FreqDomain => "freq_domain",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    None,
    Hlsvd,
    Spline,
}

/// Penalty of the stiff ("as flat as possible") spline baseline.
pub const STIFF_SPLINE_LAMBDA: f64 = 1e6;
/// Penalty of the flexible spline baseline.
pub const FLEXIBLE_SPLINE_LAMBDA: f64 = 1.0;
/// Samples of the first-pass residual handed to HLSVD in the time-domain
/// B parameter set. Baseline-like components decay within this window.
pub const RESIDUAL_HLSVD_POINTS: usize = 256;
/// Line broadening of the time-domain pre-stage, s⁻¹.
pub const START_BROADENING: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub method_id: MethodId,
    pub engine: Engine,
    pub baseline_mode: BaselineMode,
    pub spline_lambda: f64,
    pub n_starts: usize,
    pub bounds: BoundsSpec,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub cost_tolerance: f64,
    pub hlsvd: HlsvdConfig,
    /// Fit window of the frequency-domain engine, ppm.
    pub fit_window_ppm: (f64, f64),
    /// Spline knot spacing, ppm.
    pub knot_spacing_ppm: f64,
    /// Exponential apodization (s⁻¹) of a pre-stage that every time-domain
    /// start runs before the unweighted fit. It widens the capture basin of
    /// each line; 0 disables the pre-stage.
    pub start_broadening: f64,
}

impl MethodConfig {
    pub fn preset(id: MethodId) -> Self {
        let (baseline_mode, spline_lambda, n_starts) = match id {
            MethodId::TdfitA => (BaselineMode::None, 0.0, 8),
            MethodId::TdfitB => (BaselineMode::Hlsvd, 0.0, 8),
            MethodId::FreqfitA => (BaselineMode::Spline, STIFF_SPLINE_LAMBDA, 1),
            MethodId::FreqfitB => (BaselineMode::Spline, FLEXIBLE_SPLINE_LAMBDA, 1),
        };
        Self {
            method_id: id,
            engine: id.engine(),
            baseline_mode,
            spline_lambda,
            n_starts,
            bounds: BoundsSpec::default(),
            max_iterations: 200,
            gradient_tolerance: 1e-8,
            cost_tolerance: 1e-10,
            hlsvd: HlsvdConfig {
                max_points: Some(RESIDUAL_HLSVD_POINTS),
                ..HlsvdConfig::default()
            },
            fit_window_ppm: (0.5, 4.2),
            knot_spacing_ppm: 0.15,
            start_broadening: if id.is_stochastic() { START_BROADENING } else { 0.0 },
        }
    }

    pub fn validate(&self) -> Result<(), FitError> {
        let expected = match self.method_id {
            MethodId::TdfitA => (Engine::TimeDomain, BaselineMode::None),
            MethodId::TdfitB => (Engine::TimeDomain, BaselineMode::Hlsvd),
            MethodId::FreqfitA | MethodId::FreqfitB => (Engine::FreqDomain, BaselineMode::Spline),
        };
        if (self.engine, self.baseline_mode) != expected {
            return Err(FitError::Config(format!(
                "{} requires {:?}/{:?}",
                self.method_id, expected.0, expected.1
            )));
        }
        if self.engine == Engine::FreqDomain && !(self.spline_lambda >= 0.0) {
            return Err(FitError::Config(format!("spline lambda {}", self.spline_lambda)));
        }
        if self.n_starts == 0 {
            return Err(FitError::Config("n_starts must be at least 1".into()));
        }
        if !(self.start_broadening >= 0.0 && self.start_broadening.is_finite()) {
            return Err(FitError::Config(format!("start broadening {}", self.start_broadening)));
        }
        let (lo, hi) = self.fit_window_ppm;
        if !(lo < hi) || !(self.knot_spacing_ppm > 0.0) {
            return Err(FitError::Config("fit window / knot spacing".into()));
        }
        Ok(())
    }
}

/// Outcome of one local optimization within a multi-start fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartOutcome {
    pub cost: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub method_id: MethodId,
    pub signal_id: String,
    pub execution_index: u32,
    pub seed: u64,
    pub concentrations: BTreeMap<Metabolite, f64>,
    /// `None` marks an unavailable bound (singular Fisher matrix).
    pub crb_sd: BTreeMap<Metabolite, Option<f64>>,
    pub converged: bool,
    pub final_cost: f64,
    pub n_iterations: usize,
    pub n_starts_tried: usize,
    pub params: ModelParameters,
    /// Per-start outcomes of the final fitting pass.
    pub starts: Vec<StartOutcome>,
    /// Number of HLSVD components removed before the final pass.
    pub baseline_components_removed: usize,
    pub noise_var: f64,
}

pub(crate) fn check_grid(
    observed: &FidSignal,
    basis: &MetaboliteBasis,
    mm: &MacromoleculeModel,
) -> Result<(), FitError> {
    if observed.len() != basis.n_points()
        || observed.dwell_time().to_bits() != basis.dwell_time().to_bits()
    {
        return Err(FitError::InvalidInput(format!(
            "signal {} ({} pts, dwell {}) does not match basis ({} pts, dwell {})",
            observed.signal_id,
            observed.len(),
            observed.dwell_time(),
            basis.n_points(),
            basis.dwell_time()
        )));
    }
    mm.validate()?;
    Ok(())
}
