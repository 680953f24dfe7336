//! Cramér-Rao lower bounds on the fitted amplitudes.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};

use super::model::{stack_columns, Layout, ModelParameters, ParameterBounds, SignalModel};
use super::FitError;
use crate::signal::{FidSignal, MacromoleculeModel, Metabolite, MetaboliteBasis};

/// Largest tolerated condition number of the (unit-diagonal scaled) Fisher matrix.
pub const MAX_FISHER_CONDITION: f64 = 1e12;

/// Per-channel noise variance from the last quarter of the samples,
/// averaged over the real and imaginary channels.
pub fn estimate_noise(fid: &FidSignal) -> f64 {
    debug_assert!(fid.len() >= 64, "noise estimate needs at least 64 samples");
    let n = fid.len();
    let tail = &fid.samples()[n - (n / 4).max(2).min(n)..];
    let var = |xs: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = xs.collect();
        if v.len() < 2 {
            return 0.0;
        }
        // shifted two-pass: exact zero for constant input
        let shift = v[0];
        let mean = v.iter().map(|x| x - shift).sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - shift - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    let re = var(&mut tail.iter().map(|z| z.re));
    let im = var(&mut tail.iter().map(|z| z.im));
    0.5 * (re + im)
}

/// Indices of the flat parameters that enter the Fisher matrix. Amplitudes
/// always do; other parameters are dropped when fixed or pinned at a bound,
/// and a metabolite's shifts are dropped when its amplitude is zero.
pub fn free_parameters(x: &[f64], bounds: &ParameterBounds, layout: Layout) -> Vec<usize> {
    let at_bound = |i: usize| {
        let (lo, hi) = (bounds.lower[i], bounds.upper[i]);
        let tol = 1e-12 * (hi - lo).abs().max(1.0);
        lo == hi || x[i] <= lo + tol || x[i] >= hi - tol
    };
    let mut free = Vec::new();
    if !at_bound(Layout::PHASE) {
        free.push(Layout::PHASE);
    }
    for m in 0..layout.n_met {
        free.push(layout.amplitude(m));
    }
    for m in 0..layout.n_met {
        if x[layout.amplitude(m)] == 0.0 {
            continue;
        }
        for i in [layout.freq_shift(m), layout.damping_shift(m)] {
            if !at_bound(i) {
                free.push(i);
            }
        }
    }
    for k in 0..layout.n_mm {
        if !at_bound(layout.mm(k)) {
            free.push(layout.mm(k));
        }
    }
    free.sort_unstable();
    free
}

/// CRB standard deviations from a (real, stacked) model Jacobian restricted to
/// `free` columns. Returns `None` per amplitude when the Fisher matrix is
/// numerically singular.
pub fn crb_from_jacobian(
    jac: &DMatrix<f64>,
    free: &[usize],
    layout: Layout,
    noise_var: f64,
) -> Vec<Option<f64>> {
    let jf = jac.select_columns(free);
    let info = jf.tr_mul(&jf);
    let p = free.len();
    let d: Vec<f64> = (0..p).map(|i| info[(i, i)]).collect();
    if d.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return vec![None; layout.n_met];
    }
    let scaled = DMatrix::from_fn(p, p, |a, b| info[(a, b)] / (d[a] * d[b]).sqrt());
    let eig = SymmetricEigen::new(scaled.clone()).eigenvalues;
    let max = eig.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.iter().cloned().fold(f64::MAX, f64::min);
    if !(min > 0.0) || max / min > MAX_FISHER_CONDITION {
        return vec![None; layout.n_met];
    }
    let inv = match scaled.cholesky() {
        Some(ch) => ch.inverse(),
        None => return vec![None; layout.n_met],
    };
    (0..layout.n_met)
        .map(|m| {
            let col = layout.amplitude(m);
            let a = free.iter().position(|&i| i == col)?;
            Some((noise_var * inv[(a, a)] / d[a]).sqrt())
        })
        .collect()
}

/// Cramér-Rao standard deviation of each metabolite amplitude at `params`.
/// F = JᵀJ / noise_var over the stacked real/imaginary model Jacobian.
pub fn compute_crb(
    params: &ModelParameters,
    observed: &FidSignal,
    basis: &MetaboliteBasis,
    mm: &MacromoleculeModel,
    noise_var: f64,
    bounds: &ParameterBounds,
) -> Result<BTreeMap<Metabolite, Option<f64>>, FitError> {
    if !(noise_var >= 0.0) || !noise_var.is_finite() {
        return Err(FitError::InvalidInput(format!("noise variance {noise_var}")));
    }
    if observed.len() != basis.n_points() {
        return Err(FitError::InvalidInput(format!(
            "observed has {} points, basis {}",
            observed.len(),
            basis.n_points()
        )));
    }
    let model = SignalModel::new(basis, mm);
    let x = params.to_vector();
    let (_, cols) = model.eval_with_jacobian(&x);
    let jac = stack_columns(&cols, 1.0);
    let layout = model.layout();
    let free = free_parameters(&x, bounds, layout);
    let sds = crb_from_jacobian(&jac, &free, layout, noise_var);
    Ok(model.metabolites().iter().copied().zip(sds).collect())
}
