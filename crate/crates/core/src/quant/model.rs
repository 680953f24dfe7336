//! Linear-combination signal model with per-metabolite Lorentzian shifts,
//! a global zero-order phase and Gaussian macromolecule lines.
//!
//! Flat parameter layout used by the optimizers and the Cramér-Rao code:
//! `[phase, amplitudes(M), freq_shifts(M), damping_shifts(M), mm_amplitudes(K)]`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::signal::{FidSignal, MacromoleculeModel, Metabolite, MetaboliteBasis};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    pub metabolites: Vec<Metabolite>,
    pub amplitudes: Vec<f64>,
    /// Δα per metabolite, s⁻¹ (added decay).
    pub damping_shifts: Vec<f64>,
    /// Δf per metabolite, Hz.
    pub freq_shifts: Vec<f64>,
    pub global_phase: f64,
    pub mm_amplitudes: Vec<f64>,
}

impl ModelParameters {
    /// Zero shifts and phase, macromolecules at nominal amplitude.
    pub fn with_amplitudes(
        metabolites: Vec<Metabolite>,
        amplitudes: Vec<f64>,
        mm: &MacromoleculeModel,
    ) -> Self {
        let m = metabolites.len();
        assert_eq!(m, amplitudes.len());
        Self {
            metabolites,
            amplitudes,
            damping_shifts: vec![0.0; m],
            freq_shifts: vec![0.0; m],
            global_phase: 0.0,
            mm_amplitudes: mm.nominal_amplitudes(),
        }
    }

    pub fn zeros(metabolites: Vec<Metabolite>, n_mm: usize) -> Self {
        let m = metabolites.len();
        Self {
            metabolites,
            amplitudes: vec![0.0; m],
            damping_shifts: vec![0.0; m],
            freq_shifts: vec![0.0; m],
            global_phase: 0.0,
            mm_amplitudes: vec![0.0; n_mm],
        }
    }

    pub fn n_metabolites(&self) -> usize {
        self.metabolites.len()
    }

    pub fn n_params(&self) -> usize {
        1 + 3 * self.metabolites.len() + self.mm_amplitudes.len()
    }

    pub fn amplitude(&self, m: Metabolite) -> Option<f64> {
        self.metabolites
            .iter()
            .position(|&k| k == m)
            .map(|i| self.amplitudes[i])
    }

    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        v.push(self.global_phase);
        v.extend_from_slice(&self.amplitudes);
        v.extend_from_slice(&self.freq_shifts);
        v.extend_from_slice(&self.damping_shifts);
        v.extend_from_slice(&self.mm_amplitudes);
        v
    }

    pub fn from_vector(metabolites: Vec<Metabolite>, n_mm: usize, v: &[f64]) -> Self {
        let m = metabolites.len();
        assert_eq!(v.len(), 1 + 3 * m + n_mm);
        Self {
            metabolites,
            global_phase: v[0],
            amplitudes: v[1..1 + m].to_vec(),
            freq_shifts: v[1 + m..1 + 2 * m].to_vec(),
            damping_shifts: v[1 + 2 * m..1 + 3 * m].to_vec(),
            mm_amplitudes: v[1 + 3 * m..].to_vec(),
        }
    }
}

/// Index helpers for the flat layout.
#[derive(Debug, Clone, Copy)]
pub struct Layout {
    pub n_met: usize,
    pub n_mm: usize,
}

impl Layout {
    pub const PHASE: usize = 0;

    pub fn amplitude(&self, m: usize) -> usize {
        1 + m
    }
    pub fn freq_shift(&self, m: usize) -> usize {
        1 + self.n_met + m
    }
    pub fn damping_shift(&self, m: usize) -> usize {
        1 + 2 * self.n_met + m
    }
    pub fn mm(&self, k: usize) -> usize {
        1 + 3 * self.n_met + k
    }
    pub fn len(&self) -> usize {
        1 + 3 * self.n_met + self.n_mm
    }
    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Box constraints on the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParameterBounds {
    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .all(|((v, lo), hi)| *lo <= *v && *v <= *hi)
    }

    pub fn is_fixed(&self, i: usize) -> bool {
        self.lower[i] == self.upper[i]
    }
}

/// Limits of the nonlinear parameters; amplitude ceiling is relative to a
/// data-derived scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsSpec {
    pub amplitude_scale_factor: f64,
    pub freq_shift_hz: (f64, f64),
    pub damping_shift: (f64, f64),
    pub phase: (f64, f64),
}

impl Default for BoundsSpec {
    fn default() -> Self {
        Self {
            amplitude_scale_factor: 10.0,
            freq_shift_hz: (-10.0, 10.0),
            damping_shift: (-10.0, 30.0),
            phase: (-PI, PI),
        }
    }
}

impl BoundsSpec {
    pub fn resolve(&self, amplitude_scale: f64, n_met: usize, mm: &MacromoleculeModel) -> ParameterBounds {
        let layout = Layout {
            n_met,
            n_mm: mm.len(),
        };
        let mut lower = vec![0.0; layout.len()];
        let mut upper = vec![0.0; layout.len()];
        lower[Layout::PHASE] = self.phase.0;
        upper[Layout::PHASE] = self.phase.1;
        let amp_max = self.amplitude_scale_factor * amplitude_scale;
        for m in 0..n_met {
            lower[layout.amplitude(m)] = 0.0;
            upper[layout.amplitude(m)] = amp_max;
            lower[layout.freq_shift(m)] = self.freq_shift_hz.0;
            upper[layout.freq_shift(m)] = self.freq_shift_hz.1;
            lower[layout.damping_shift(m)] = self.damping_shift.0;
            upper[layout.damping_shift(m)] = self.damping_shift.1;
        }
        for (k, c) in mm.components.iter().enumerate() {
            lower[layout.mm(k)] = c.amplitude_bounds.0;
            upper[layout.mm(k)] = c.amplitude_bounds.1;
        }
        ParameterBounds { lower, upper }
    }
}

/// ‖observed‖ / ‖Σ basis‖: the common amplitude that matches the data norm.
pub fn amplitude_scale(observed: &FidSignal, basis: &MetaboliteBasis) -> f64 {
    let n = basis.n_points();
    let mut sum = vec![Complex64::new(0.0, 0.0); n];
    for (_, fid) in basis.entries() {
        for (s, b) in sum.iter_mut().zip(fid.samples()) {
            *s += b;
        }
    }
    let denom: f64 = sum.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let num = observed.energy().sqrt();
    if denom > 0.0 && num > 0.0 {
        num / denom
    } else {
        1.0
    }
}

/// Model precomputed on one sampling grid.
#[derive(Debug, Clone)]
pub struct SignalModel {
    metabolites: Vec<Metabolite>,
    basis: Vec<Vec<Complex64>>,
    mm: Vec<Vec<Complex64>>,
    n_points: usize,
    dwell: f64,
}

impl SignalModel {
    pub fn new(basis: &MetaboliteBasis, mm: &MacromoleculeModel) -> Self {
        Self::with_points(basis, mm, basis.n_points())
    }

    /// Model truncated (or kept) to the first `n_points` samples.
    pub fn with_points(basis: &MetaboliteBasis, mm: &MacromoleculeModel, n_points: usize) -> Self {
        let n_points = n_points.min(basis.n_points());
        let dwell = basis.dwell_time();
        let basis_samples = basis
            .entries()
            .iter()
            .map(|(_, f)| f.samples()[..n_points].to_vec())
            .collect();
        let mm_samples = mm
            .components
            .iter()
            .map(|c| (0..n_points).map(|n| c.unit_at(n as f64 * dwell)).collect())
            .collect();
        Self {
            metabolites: basis.metabolites(),
            basis: basis_samples,
            mm: mm_samples,
            n_points,
            dwell,
        }
    }

    pub fn metabolites(&self) -> &[Metabolite] {
        &self.metabolites
    }

    pub fn layout(&self) -> Layout {
        Layout {
            n_met: self.basis.len(),
            n_mm: self.mm.len(),
        }
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dwell(&self) -> f64 {
        self.dwell
    }

    /// e^{(−Δα + i2πΔf) n dwell} for n = 0..N by recurrence.
    fn shift_factors(&self, freq_shift: f64, damping_shift: f64) -> Vec<Complex64> {
        let step = Complex64::new(-damping_shift * self.dwell, 2.0 * PI * freq_shift * self.dwell).exp();
        let mut out = Vec::with_capacity(self.n_points);
        let mut w = Complex64::new(1.0, 0.0);
        for _ in 0..self.n_points {
            out.push(w);
            w *= step;
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> Vec<Complex64> {
        let layout = self.layout();
        debug_assert_eq!(x.len(), layout.len());
        let mut acc = vec![Complex64::new(0.0, 0.0); self.n_points];
        for (m, b) in self.basis.iter().enumerate() {
            let a = x[layout.amplitude(m)];
            if a == 0.0 {
                continue;
            }
            let w = self.shift_factors(x[layout.freq_shift(m)], x[layout.damping_shift(m)]);
            for ((s, bv), wv) in acc.iter_mut().zip(b).zip(&w) {
                *s += a * bv * wv;
            }
        }
        for (k, g) in self.mm.iter().enumerate() {
            let amp = x[layout.mm(k)];
            if amp == 0.0 {
                continue;
            }
            for (s, gv) in acc.iter_mut().zip(g) {
                *s += amp * gv;
            }
        }
        let rot = Complex64::from_polar(1.0, x[Layout::PHASE]);
        for s in &mut acc {
            *s *= rot;
        }
        acc
    }

    /// Model and its complex Jacobian (one column per flat parameter).
    pub fn eval_with_jacobian(&self, x: &[f64]) -> (Vec<Complex64>, Vec<Vec<Complex64>>) {
        let layout = self.layout();
        let n = self.n_points;
        let rot = Complex64::from_polar(1.0, x[Layout::PHASE]);
        let mut cols = vec![vec![Complex64::new(0.0, 0.0); n]; layout.len()];
        let mut inner = vec![Complex64::new(0.0, 0.0); n];
        let two_pi_i = Complex64::new(0.0, 2.0 * PI);
        for (m, b) in self.basis.iter().enumerate() {
            let a = x[layout.amplitude(m)];
            let w = self.shift_factors(x[layout.freq_shift(m)], x[layout.damping_shift(m)]);
            let (ca, rest) = cols.split_at_mut(layout.freq_shift(m));
            let col_amp = &mut ca[layout.amplitude(m)];
            let (cf, cd) = rest.split_at_mut(layout.damping_shift(m) - layout.freq_shift(m));
            let col_f = &mut cf[0];
            let col_d = &mut cd[0];
            for i in 0..n {
                let t = i as f64 * self.dwell;
                let unit = b[i] * w[i];
                inner[i] += a * unit;
                let d_amp = rot * unit;
                col_amp[i] = d_amp;
                col_f[i] = a * d_amp * two_pi_i * t;
                col_d[i] = -a * d_amp * t;
            }
        }
        for (k, g) in self.mm.iter().enumerate() {
            let amp = x[layout.mm(k)];
            let col = &mut cols[layout.mm(k)];
            for i in 0..n {
                inner[i] += amp * g[i];
                col[i] = rot * g[i];
            }
        }
        let model: Vec<Complex64> = inner.iter().map(|s| s * rot).collect();
        cols[Layout::PHASE] = model.iter().map(|s| Complex64::new(-s.im, s.re)).collect();
        (model, cols)
    }
}

impl SignalModel {
    /// Model plus `sign`·Jacobian written straight into the stacked real
    /// 2N×P layout. The model matches [`SignalModel::eval`] bit for bit.
    pub fn eval_stacked_jacobian(&self, x: &[f64], sign: f64) -> (Vec<Complex64>, DMatrix<f64>) {
        let layout = self.layout();
        let n = self.n_points;
        let rot = Complex64::from_polar(1.0, x[Layout::PHASE]);
        let srot = rot * sign;
        let mut jac = DMatrix::<f64>::zeros(2 * n, layout.len());
        let mut acc = vec![Complex64::new(0.0, 0.0); n];
        let data = jac.as_mut_slice();
        let col = |c: usize| c * 2 * n;
        for (m, b) in self.basis.iter().enumerate() {
            let a = x[layout.amplitude(m)];
            let step = Complex64::new(
                -x[layout.damping_shift(m)] * self.dwell,
                2.0 * PI * x[layout.freq_shift(m)] * self.dwell,
            )
            .exp();
            let (ca, cf, cd) = (col(layout.amplitude(m)), col(layout.freq_shift(m)), col(layout.damping_shift(m)));
            let two_pi = 2.0 * PI;
            let mut w = Complex64::new(1.0, 0.0);
            for i in 0..n {
                let bv = b[i];
                if a != 0.0 {
                    acc[i] += a * bv * w;
                }
                let t = i as f64 * self.dwell;
                let d = srot * (bv * w);
                let at = a * t;
                data[ca + i] = d.re;
                data[ca + n + i] = d.im;
                // ∂/∂Δf = i2πt·a·d, ∂/∂Δα = −t·a·d
                data[cf + i] = -two_pi * at * d.im;
                data[cf + n + i] = two_pi * at * d.re;
                data[cd + i] = -at * d.re;
                data[cd + n + i] = -at * d.im;
                w *= step;
            }
        }
        for (k, g) in self.mm.iter().enumerate() {
            let amp = x[layout.mm(k)];
            let c = col(layout.mm(k));
            for i in 0..n {
                if amp != 0.0 {
                    acc[i] += amp * g[i];
                }
                let d = srot * g[i];
                data[c + i] = d.re;
                data[c + n + i] = d.im;
            }
        }
        for s in &mut acc {
            *s *= rot;
        }
        let c = col(Layout::PHASE);
        for (i, s) in acc.iter().enumerate() {
            data[c + i] = -sign * s.im;
            data[c + n + i] = sign * s.re;
        }
        (acc, jac)
    }
}

/// JᵀJ through a strided GEMM; nalgebra's `tr_mul` is a plain dot loop.
pub fn gram(j: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = j.shape();
    let mut out = DMatrix::<f64>::zeros(cols, cols);
    if rows == 0 || cols == 0 {
        return out;
    }
    // SAFETY: both operands view `j` (rows×cols, column-major) with valid
    // strides and the output is a distinct cols×cols column-major buffer.
    unsafe {
        matrixmultiply::dgemm(
            cols,
            rows,
            cols,
            1.0,
            j.as_ptr(),
            rows as isize,
            1,
            j.as_ptr(),
            1,
            rows as isize,
            0.0,
            out.as_mut_ptr(),
            1,
            cols as isize,
        );
    }
    for a in 0..cols {
        for b in a + 1..cols {
            out[(a, b)] = out[(b, a)];
        }
    }
    out
}

/// Stack complex columns into a real 2N×P matrix `[Re; Im]`, scaled by `sign`.
pub fn stack_columns(cols: &[Vec<Complex64>], sign: f64) -> DMatrix<f64> {
    let n = cols.first().map_or(0, |c| c.len());
    let mut j = DMatrix::<f64>::zeros(2 * n, cols.len());
    for (c, col) in cols.iter().enumerate() {
        let mut dst = j.column_mut(c);
        for (i, z) in col.iter().enumerate() {
            dst[i] = sign * z.re;
            dst[n + i] = sign * z.im;
        }
    }
    j
}

/// Evaluate the model on the basis grid.
pub fn model_eval(
    params: &ModelParameters,
    basis: &MetaboliteBasis,
    mm: &MacromoleculeModel,
) -> Vec<Complex64> {
    SignalModel::new(basis, mm).eval(&params.to_vector())
}

/// Stacked `[Re; Im]` of observed − model.
pub fn residuals(
    params: &ModelParameters,
    observed: &FidSignal,
    basis: &MetaboliteBasis,
    mm: &MacromoleculeModel,
) -> Vec<f64> {
    let model = model_eval(params, basis, mm);
    stacked_difference(observed.samples(), &model)
}

pub fn stacked_difference(observed: &[Complex64], model: &[Complex64]) -> Vec<f64> {
    let n = model.len();
    let mut r = vec![0.0; 2 * n];
    for (i, (o, m)) in observed.iter().zip(model).enumerate() {
        let d = o - m;
        r[i] = d.re;
        r[n + i] = d.im;
    }
    r
}

pub fn cost(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}
