//! Uniform cubic B-spline baseline with a second-difference roughness penalty.
//!
//! For a fixed penalty the baseline coefficients are a linear function of the
//! data, so the whole penalized baseline fit reduces to a constant linear
//! operator that the frequency-domain engine applies to residual vectors and
//! Jacobian columns alike.

use nalgebra::DMatrix;

/// Values of the uniform cubic B-spline basis at `x` on [lo, hi] split into
/// `n_intervals` intervals. Returns `n_intervals + 3` values.
pub fn cubic_bspline_row(x: f64, lo: f64, hi: f64, n_intervals: usize) -> Vec<f64> {
    let n_basis = n_intervals + 3;
    let mut row = vec![0.0; n_basis];
    let h = (hi - lo) / n_intervals as f64;
    let pos = ((x - lo) / h).clamp(0.0, n_intervals as f64);
    let mut i = pos.floor() as usize;
    if i >= n_intervals {
        i = n_intervals - 1;
    }
    let u = pos - i as f64;
    let u2 = u * u;
    let u3 = u2 * u;
    row[i] = (1.0 - u).powi(3) / 6.0;
    row[i + 1] = (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0;
    row[i + 2] = (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0;
    row[i + 3] = u3 / 6.0;
    row
}

pub fn design_matrix(xs: &[f64], lo: f64, hi: f64, n_intervals: usize) -> DMatrix<f64> {
    let n_basis = n_intervals + 3;
    let mut b = DMatrix::zeros(xs.len(), n_basis);
    for (r, &x) in xs.iter().enumerate() {
        for (c, v) in cubic_bspline_row(x, lo, hi, n_intervals).into_iter().enumerate() {
            b[(r, c)] = v;
        }
    }
    b
}

pub fn second_difference(n: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(n.saturating_sub(2), n);
    for r in 0..n.saturating_sub(2) {
        d[(r, r)] = 1.0;
        d[(r, r + 1)] = -2.0;
        d[(r, r + 2)] = 1.0;
    }
    d
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplineError {
    /// Pivot of the penalized system fell below tolerance.
    Singular { pivot: usize, value: f64 },
}

/// Closed-form penalized spline smoother: c(v) = (BᵀB + λDᵀD)⁻¹ Bᵀ v.
#[derive(Debug, Clone)]
pub struct PenalizedSpline {
    pub design: DMatrix<f64>,
    pub penalty: DMatrix<f64>,
    pub lambda: f64,
    /// (BᵀB + λDᵀD)⁻¹ Bᵀ, computed through a QR of the stacked system.
    smoother: DMatrix<f64>,
}

impl PenalizedSpline {
    pub fn new(design: DMatrix<f64>, lambda: f64) -> Result<Self, SplineError> {
        let nb = design.ncols();
        let penalty = second_difference(nb);
        let rows = design.nrows() + penalty.nrows();
        let sl = lambda.sqrt();
        let mut stacked = DMatrix::zeros(rows, nb);
        stacked.rows_mut(0, design.nrows()).copy_from(&design);
        stacked
            .rows_mut(design.nrows(), penalty.nrows())
            .copy_from(&(&penalty * sl));
        let r = stacked.qr().r();
        let max_pivot = (0..nb).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
        for i in 0..nb {
            let v = r[(i, i)].abs();
            if !(v > 1e-12 * max_pivot) {
                return Err(SplineError::Singular { pivot: i, value: v });
            }
        }
        // H = RᵀR, so H⁻¹Bᵀ = R⁻¹ R⁻ᵀ Bᵀ
        let rt = r.transpose();
        let mut tmp = design.transpose();
        if !rt.solve_lower_triangular_mut(&mut tmp) {
            return Err(SplineError::Singular { pivot: 0, value: 0.0 });
        }
        if !r.solve_upper_triangular_mut(&mut tmp) {
            return Err(SplineError::Singular { pivot: 0, value: 0.0 });
        }
        Ok(Self {
            design,
            penalty,
            lambda,
            smoother: tmp,
        })
    }

    pub fn n_coefficients(&self) -> usize {
        self.design.ncols()
    }

    /// Coefficients for each column of `v`.
    pub fn coefficients(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        &self.smoother * v
    }

    /// Stacked penalized residual `[v − Bc; √λ·Dc]` for each column of `v`.
    pub fn project(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        let c = self.coefficients(v);
        let fit = &self.design * &c;
        let rough = &self.penalty * &c * self.lambda.sqrt();
        let mut out = DMatrix::zeros(v.nrows() + rough.nrows(), v.ncols());
        out.rows_mut(0, v.nrows()).copy_from(&(v - fit));
        out.rows_mut(v.nrows(), rough.nrows()).copy_from(&rough);
        out
    }

    pub fn output_rows(&self) -> usize {
        self.design.nrows() + self.penalty.nrows()
    }
}
