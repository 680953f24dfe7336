//! Deterministic frequency-domain engine with a penalized B-spline baseline.
//!
//! Observed and model FIDs are transformed with a unitary DFT and compared
//! inside a ppm window. The spline coefficients are eliminated in closed form
//! for every nonlinear iterate (variable projection), so the optimizer only
//! sees the model parameters. Initialization is fixed, which makes the engine
//! fully deterministic.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::crb::{crb_from_jacobian, estimate_noise, free_parameters};
use super::lm::{minimize_bounded, LeastSquaresProblem};
use super::model::{amplitude_scale, stack_columns, Layout, ModelParameters, SignalModel};
use super::spline::{design_matrix, PenalizedSpline, SplineError};
use super::timefit::lm_settings;
use super::{check_grid, Engine, FitError, FitResult, MethodConfig, StartOutcome};
use crate::signal::{FidSignal, MacromoleculeModel, MetaboliteBasis, SpectrometerContext};

/// Window spectrum and fitted components, ordered by increasing ppm.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFit {
    pub ppm: Vec<f64>,
    pub observed: Vec<Complex64>,
    pub model: Vec<Complex64>,
    pub baseline: Vec<Complex64>,
}

struct FreqProblem {
    model: SignalModel,
    fft: Arc<dyn Fft<f64>>,
    bins: Vec<usize>,
    spline: PenalizedSpline,
    /// Windowed observed spectrum, columns (re, im).
    observed: DMatrix<f64>,
}

impl FreqProblem {
    fn spectrum(&self, fid: &[Complex64]) -> Vec<Complex64> {
        let mut buf = fid.to_vec();
        self.fft.process(&mut buf);
        let s = 1.0 / (buf.len() as f64).sqrt();
        self.bins.iter().map(|&k| buf[k] * s).collect()
    }

    fn flatten(&self, projected: &DMatrix<f64>, col_re: usize, col_im: usize, sign: f64) -> Vec<f64> {
        let rows = projected.nrows();
        let mut out = Vec::with_capacity(2 * rows);
        out.extend(projected.column(col_re).iter().map(|v| sign * v));
        out.extend(projected.column(col_im).iter().map(|v| sign * v));
        out
    }

    fn difference(&self, model: &[Complex64]) -> DMatrix<f64> {
        let spec = self.spectrum(model);
        DMatrix::from_fn(self.bins.len(), 2, |r, c| {
            self.observed[(r, c)] - if c == 0 { spec[r].re } else { spec[r].im }
        })
    }
}

impl LeastSquaresProblem for FreqProblem {
    fn n_params(&self) -> usize {
        self.model.layout().len()
    }

    fn residuals(&self, x: &[f64]) -> DVector<f64> {
        let p = self.spline.project(&self.difference(&self.model.eval(x)));
        DVector::from_vec(self.flatten(&p, 0, 1, 1.0))
    }

    fn residuals_and_jacobian(&self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let (m, cols) = self.model.eval_with_jacobian(x);
        let r = DVector::from_vec(self.flatten(&self.spline.project(&self.difference(&m)), 0, 1, 1.0));
        let nw = self.bins.len();
        let mut w = DMatrix::zeros(nw, 2 * cols.len());
        for (j, col) in cols.iter().enumerate() {
            for (r, z) in self.spectrum(col).iter().enumerate() {
                w[(r, 2 * j)] = z.re;
                w[(r, 2 * j + 1)] = z.im;
            }
        }
        let proj = self.spline.project(&w);
        let mut jac = DMatrix::zeros(2 * self.spline.output_rows(), cols.len());
        for j in 0..cols.len() {
            let col = self.flatten(&proj, 2 * j, 2 * j + 1, -1.0);
            jac.column_mut(j).copy_from_slice(&col);
        }
        (r, jac)
    }
}

/// Window bins ordered by increasing ppm, with their ppm values.
pub fn window_bins(
    n: usize,
    dwell: f64,
    ctx: &SpectrometerContext,
    window_ppm: (f64, f64),
) -> (Vec<usize>, Vec<f64>) {
    let mut sel: Vec<(f64, usize)> = (0..n)
        .filter_map(|k| {
            let kk = if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
            let ppm = ctx.hz_to_ppm(kk / (n as f64 * dwell));
            (window_ppm.0 <= ppm && ppm <= window_ppm.1).then_some((ppm, k))
        })
        .collect();
    sel.sort_by(|a, b| a.0.total_cmp(&b.0));
    (sel.iter().map(|s| s.1).collect(), sel.iter().map(|s| s.0).collect())
}

fn build_problem(
    observed: &FidSignal,
    basis: &MetaboliteBasis,
    mm: &MacromoleculeModel,
    cfg: &MethodConfig,
    ctx: &SpectrometerContext,
) -> Result<(FreqProblem, Vec<f64>), FitError> {
    let n = observed.len();
    let (bins, ppm) = window_bins(n, observed.dwell_time(), ctx, cfg.fit_window_ppm);
    if bins.len() < 8 {
        return Err(FitError::InvalidInput(format!(
            "fit window {:?} ppm covers {} bins",
            cfg.fit_window_ppm,
            bins.len()
        )));
    }
    let (lo, hi) = cfg.fit_window_ppm;
    let n_intervals = ((hi - lo) / cfg.knot_spacing_ppm).round().max(1.0) as usize;
    let design = design_matrix(&ppm, lo, hi, n_intervals);
    let spline = PenalizedSpline::new(design, cfg.spline_lambda).map_err(|e| match e {
        SplineError::Singular { pivot, value } => FitError::IllConditionedBaseline { pivot, value },
    })?;
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut problem = FreqProblem {
        model: SignalModel::new(basis, mm),
        fft,
        bins,
        spline,
        observed: DMatrix::zeros(0, 2),
    };
    let spec = problem.spectrum(observed.samples());
    problem.observed = DMatrix::from_fn(spec.len(), 2, |r, c| if c == 0 { spec[r].re } else { spec[r].im });
    Ok((problem, ppm))
}

/// Fixed starting point: equal amplitudes matching the data norm, zero
/// shifts and phase, nominal macromolecules.
pub fn initial_parameters(
    observed: &FidSignal,
    basis: &MetaboliteBasis,
    mm: &MacromoleculeModel,
) -> ModelParameters {
    let scale = amplitude_scale(observed, basis);
    ModelParameters::with_amplitudes(basis.metabolites(), vec![scale; basis.len()], mm)
}

pub fn fit_freq_domain(
    observed: &FidSignal,
    basis: &MetaboliteBasis,
    mm: &MacromoleculeModel,
    cfg: &MethodConfig,
    ctx: &SpectrometerContext,
) -> Result<FitResult, FitError> {
    fit_freq_domain_detailed(observed, basis, mm, cfg, ctx).map(|(r, _)| r)
}

pub fn fit_freq_domain_detailed(
    observed: &FidSignal,
    basis: &MetaboliteBasis,
    mm: &MacromoleculeModel,
    cfg: &MethodConfig,
    ctx: &SpectrometerContext,
) -> Result<(FitResult, SpectralFit), FitError> {
    cfg.validate()?;
    if cfg.engine != Engine::FreqDomain {
        return Err(FitError::WrongEngine {
            method: cfg.method_id,
            engine: Engine::FreqDomain.as_str(),
        });
    }
    check_grid(observed, basis, mm)?;
    let (problem, ppm) = build_problem(observed, basis, mm, cfg, ctx)?;
    let layout: Layout = problem.model.layout();
    let scale = amplitude_scale(observed, basis);
    let bounds = cfg.bounds.resolve(scale, layout.n_met, mm);
    let x0 = initial_parameters(observed, basis, mm).to_vector();
    let out = minimize_bounded(&problem, &x0, &bounds, &lm_settings(cfg));

    let (fitted, cols) = problem.model.eval_with_jacobian(&out.x);
    let residual: Vec<Complex64> = observed
        .samples()
        .iter()
        .zip(&fitted)
        .map(|(o, m)| o - m)
        .collect();
    let noise_var = estimate_noise(&observed.with_samples(residual)?);
    let free = free_parameters(&out.x, &bounds, layout);
    let crb = crb_from_jacobian(&stack_columns(&cols, 1.0), &free, layout, noise_var);
    let params =
        ModelParameters::from_vector(problem.model.metabolites().to_vec(), layout.n_mm, &out.x);

    let model_spec = problem.spectrum(&fitted);
    let diff = problem.difference(&fitted);
    let coeffs = problem.spline.coefficients(&diff);
    let base = &problem.spline.design * coeffs;
    let spectral = SpectralFit {
        ppm,
        observed: (0..problem.bins.len())
            .map(|r| Complex64::new(problem.observed[(r, 0)], problem.observed[(r, 1)]))
            .collect(),
        model: model_spec,
        baseline: (0..problem.bins.len())
            .map(|r| Complex64::new(base[(r, 0)], base[(r, 1)]))
            .collect(),
    };

    let result = FitResult {
        method_id: cfg.method_id,
        signal_id: observed.signal_id.clone(),
        execution_index: 0,
        seed: 0,
        concentrations: params
            .metabolites
            .iter()
            .copied()
            .zip(params.amplitudes.iter().copied())
            .collect(),
        crb_sd: params.metabolites.iter().copied().zip(crb).collect(),
        converged: out.converged,
        final_cost: out.cost,
        n_iterations: out.iterations,
        n_starts_tried: 1,
        params,
        starts: vec![StartOutcome {
            cost: out.cost,
            converged: out.converged,
            iterations: out.iterations,
        }],
        baseline_components_removed: 0,
        noise_var,
    };
    Ok((result, spectral))
}
