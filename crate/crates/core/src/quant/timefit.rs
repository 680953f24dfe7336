//! Multi-start time-domain engine.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::crb::{crb_from_jacobian, estimate_noise, free_parameters};
use super::lm::{minimize_bounded, LeastSquaresProblem, LmSettings};
use super::model::{
    amplitude_scale, gram, stack_columns, stacked_difference, ModelParameters, ParameterBounds,
    SignalModel,
};
use super::{check_grid, BaselineMode, Engine, FitError, FitResult, MethodConfig, StartOutcome};
use crate::hlsvd::{
    hlsvd_decompose, select_baseline_components, subtract_components, synthesize_components, HlsvdError,
};
use crate::seed::substream;
use crate::signal::{FidSignal, MacromoleculeModel, MetaboliteBasis};

/// Baseline energy, relative to the signal, below which nothing is removed.
const NEGLIGIBLE_BASELINE: f64 = 1e-20;

pub(crate) struct TimeDomainProblem<'a> {
    pub model: &'a SignalModel,
    pub observed: &'a [Complex64],
    /// Per-sample weights applied to both channels.
    pub weights: Option<&'a [f64]>,
}

impl TimeDomainProblem<'_> {
    fn weigh(&self, r: &mut DVector<f64>, j: Option<&mut DMatrix<f64>>) {
        let Some(w) = self.weights else { return };
        let n = w.len();
        for (i, wi) in w.iter().enumerate() {
            r[i] *= wi;
            r[i + n] *= wi;
        }
        if let Some(j) = j {
            for (i, wi) in w.iter().enumerate() {
                j.row_mut(i).scale_mut(*wi);
                j.row_mut(i + n).scale_mut(*wi);
            }
        }
    }
}

impl LeastSquaresProblem for TimeDomainProblem<'_> {
    fn n_params(&self) -> usize {
        self.model.layout().len()
    }

    fn residuals(&self, x: &[f64]) -> DVector<f64> {
        let mut r = DVector::from_vec(stacked_difference(self.observed, &self.model.eval(x)));
        self.weigh(&mut r, None);
        r
    }

    fn residuals_and_jacobian(&self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let (m, cols) = self.model.eval_with_jacobian(x);
        let mut r = DVector::from_vec(stacked_difference(self.observed, &m));
        let mut j = stack_columns(&cols, -1.0);
        self.weigh(&mut r, Some(&mut j));
        (r, j)
    }

    fn normal_equations(&self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>, DVector<f64>) {
        let (m, mut j) = self.model.eval_stacked_jacobian(x, -1.0);
        let mut r = DVector::from_vec(stacked_difference(self.observed, &m));
        self.weigh(&mut r, Some(&mut j));
        let g = j.tr_mul(&r);
        (r, gram(&j), g)
    }
}

pub(crate) fn lm_settings(cfg: &MethodConfig) -> LmSettings {
    LmSettings {
        max_iterations: cfg.max_iterations,
        gradient_tolerance: cfg.gradient_tolerance,
        cost_tolerance: cfg.cost_tolerance,
    }
}

struct MultiStart {
    x: Vec<f64>,
    cost: f64,
    converged: bool,
    iterations: usize,
    starts: Vec<StartOutcome>,
}

fn draw_start(bounds: &ParameterBounds, rng: &mut ChaCha8Rng) -> Vec<f64> {
    bounds
        .lower
        .iter()
        .zip(&bounds.upper)
        .map(|(lo, hi)| {
            let u: f64 = rng.gen();
            lo + (hi - lo) * u
        })
        .collect()
}

fn multi_start(
    problem: &TimeDomainProblem<'_>,
    bounds: &ParameterBounds,
    n_starts: usize,
    broadening: f64,
    settings: &LmSettings,
    rng: &mut ChaCha8Rng,
) -> MultiStart {
    let mut best: Option<MultiStart> = None;
    let mut starts = Vec::with_capacity(n_starts);
    let broad = (broadening > 0.0).then(|| {
        let dwell = problem.model.dwell();
        (0..problem.observed.len())
            .map(|i| (-broadening * i as f64 * dwell).exp())
            .collect::<Vec<f64>>()
    });
    for _ in 0..n_starts {
        let mut x0 = draw_start(bounds, rng);
        let mut pre_iterations = 0;
        if let Some(w) = &broad {
            let pre = TimeDomainProblem {
                model: problem.model,
                observed: problem.observed,
                weights: Some(w),
            };
            let out = minimize_bounded(&pre, &x0, bounds, settings);
            x0 = out.x;
            pre_iterations = out.iterations;
        }
        let out = minimize_bounded(problem, &x0, bounds, settings);
        starts.push(StartOutcome {
            cost: out.cost,
            converged: out.converged,
            iterations: pre_iterations + out.iterations,
        });
        let better = match &best {
            None => true,
            Some(b) => match (out.converged, b.converged) {
                (true, false) => true,
                (false, true) => false,
                _ => out.cost < b.cost,
            },
        };
        if better {
            best = Some(MultiStart {
                x: out.x,
                cost: out.cost,
                converged: out.converged,
                iterations: pre_iterations + out.iterations,
                starts: Vec::new(),
            });
        }
    }
    let mut best = best.expect("at least one start");
    best.starts = starts;
    best
}

/// Fit with `n_starts` uniform random starts drawn from a stream derived from
/// `seed`. Each start is first refined on a line-broadened copy of the
/// problem, then on the original; the parameter set B variant removes fast-decaying HLSVD components
/// of the first-pass residual and refits once from the first-pass optimum.
pub fn fit_time_domain(
    observed: &FidSignal,
    basis: &MetaboliteBasis,
    mm: &MacromoleculeModel,
    cfg: &MethodConfig,
    seed: u64,
) -> Result<FitResult, FitError> {
    cfg.validate()?;
    if cfg.engine != Engine::TimeDomain {
        return Err(FitError::WrongEngine {
            method: cfg.method_id,
            engine: Engine::TimeDomain.as_str(),
        });
    }
    check_grid(observed, basis, mm)?;
    let model = SignalModel::new(basis, mm);
    let layout = model.layout();
    let scale = amplitude_scale(observed, basis);
    let bounds = cfg.bounds.resolve(scale, layout.n_met, mm);
    let settings = lm_settings(cfg);

    let first = {
        let problem = TimeDomainProblem {
            model: &model,
            observed: observed.samples(),
            weights: None,
        };
        multi_start(
            &problem,
            &bounds,
            cfg.n_starts,
            cfg.start_broadening,
            &settings,
            &mut substream(seed, 0),
        )
    };

    let mut corrected = None;
    let mut removed = 0;
    if cfg.baseline_mode == BaselineMode::Hlsvd {
        let fitted = model.eval(&first.x);
        let residual: Vec<Complex64> = observed
            .samples()
            .iter()
            .zip(&fitted)
            .map(|(o, m)| o - m)
            .collect();
        let residual = observed.with_samples(residual)?;
        match hlsvd_decompose(&residual, &cfg.hlsvd) {
            Ok(components) => {
                let baseline = select_baseline_components(&components, &cfg.hlsvd);
                let energy: f64 = synthesize_components(&baseline, observed.len(), observed.dwell_time())
                    .iter()
                    .map(|z| z.norm_sqr())
                    .sum();
                // components of a round-off residual are not a baseline
                if energy > NEGLIGIBLE_BASELINE * observed.energy() {
                    removed = baseline.len();
                    corrected = Some(subtract_components(observed, &baseline));
                }
            }
            // nothing left to model in the residual
            Err(HlsvdError::Degenerate { .. }) => {}
            Err(e) => return Err(e.into()),
        }
    }

    let (signal, fit) = match &corrected {
        Some(sig) => {
            let problem = TimeDomainProblem {
                model: &model,
                observed: sig.samples(),
                weights: None,
            };
            // warm start from the first-pass optimum; the random draw
            // already happened in the first pass
            let second = minimize_bounded(&problem, &first.x, &bounds, &settings);
            let fit = MultiStart {
                x: second.x,
                cost: second.cost,
                converged: first.converged && second.converged,
                iterations: first.iterations + second.iterations,
                starts: first.starts,
            };
            (sig, fit)
        }
        None => (observed, first),
    };

    let (fitted, jac) = model.eval_stacked_jacobian(&fit.x, 1.0);
    let residual: Vec<Complex64> = signal
        .samples()
        .iter()
        .zip(&fitted)
        .map(|(o, m)| o - m)
        .collect();
    let noise_var = estimate_noise(&signal.with_samples(residual)?);
    let free = free_parameters(&fit.x, &bounds, layout);
    let crb = crb_from_jacobian(&jac, &free, layout, noise_var);
    let params = ModelParameters::from_vector(model.metabolites().to_vec(), layout.n_mm, &fit.x);

    Ok(FitResult {
        method_id: cfg.method_id,
        signal_id: observed.signal_id.clone(),
        execution_index: 0,
        seed,
        concentrations: params
            .metabolites
            .iter()
            .copied()
            .zip(params.amplitudes.iter().copied())
            .collect(),
        crb_sd: params.metabolites.iter().copied().zip(crb).collect(),
        converged: fit.converged,
        final_cost: fit.cost,
        n_iterations: fit.iterations,
        n_starts_tried: fit.starts.len(),
        params,
        starts: fit.starts,
        baseline_components_removed: removed,
        noise_var,
    })
}
