//! Box-constrained damped Gauss-Newton (Levenberg-Marquardt) minimizer.
//!
//! Steps are computed on the free subspace (parameters not pinned against a
//! bound by the descent direction) with Marquardt diagonal scaling, then
//! projected back onto the box. Convergence is declared when either the
//! relative actual and predicted cost reductions of an accepted step both fall
//! below `cost_tolerance`, or the scaled projected gradient (the largest cosine
//! between a free Jacobian column and the residual) falls below
//! `gradient_tolerance`.

use nalgebra::{DMatrix, DVector};

use super::model::{gram, ParameterBounds};

pub trait LeastSquaresProblem {
    fn n_params(&self) -> usize;
    fn residuals(&self, x: &[f64]) -> DVector<f64>;
    fn residuals_and_jacobian(&self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>);

    /// Residuals, JᵀJ and Jᵀr.
    fn normal_equations(&self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>, DVector<f64>) {
        let (r, j) = self.residuals_and_jacobian(x);
        let g = j.tr_mul(&r);
        (r, gram(&j), g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmSettings {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub cost_tolerance: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-8,
            cost_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    CostDecrease,
    Gradient,
    /// Residual vanished to round-off.
    ZeroResidual,
    MaxIterations,
    /// No step decreases the cost even at maximal damping.
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub x: Vec<f64>,
    pub cost: f64,
    pub converged: bool,
    pub iterations: usize,
    pub termination: Termination,
}

const MAX_DAMPING: f64 = 1e16;

fn blocked(x: f64, g: f64, lo: f64, hi: f64) -> bool {
    // descent direction is -g
    lo == hi || (x <= lo && g > 0.0) || (x >= hi && g < 0.0)
}

pub fn minimize_bounded<P: LeastSquaresProblem + ?Sized>(
    problem: &P,
    x0: &[f64],
    bounds: &ParameterBounds,
    settings: &LmSettings,
) -> LmOutcome {
    let n = problem.n_params();
    assert_eq!(x0.len(), n);
    assert_eq!(bounds.len(), n);
    let mut x = x0.to_vec();
    bounds.clamp(&mut x);

    let (mut r, mut jtj, mut g) = problem.normal_equations(&x);
    let mut cost = r.norm_squared();
    let cost_floor = 1e-28 * cost.max(f64::MIN_POSITIVE);
    let mut mu = 1e-3;
    let mut nu = 2.0;
    let mut diag_scale = vec![0.0f64; n];
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;

    'outer: while iterations < settings.max_iterations {
        iterations += 1;
        if cost <= cost_floor {
            termination = Termination::ZeroResidual;
            break;
        }
        let free: Vec<usize> = (0..n)
            .filter(|&i| !blocked(x[i], g[i], bounds.lower[i], bounds.upper[i]))
            .collect();
        let rnorm = cost.sqrt();
        let gmax = free
            .iter()
            .filter(|&&i| jtj[(i, i)] > 0.0)
            .map(|&i| g[i].abs() / (jtj[(i, i)].sqrt() * rnorm))
            .fold(0.0, f64::max);
        if free.is_empty() || gmax < settings.gradient_tolerance {
            termination = Termination::Gradient;
            break;
        }
        for i in 0..n {
            diag_scale[i] = diag_scale[i].max(jtj[(i, i)]);
        }
        let max_diag = diag_scale.iter().cloned().fold(0.0, f64::max);
        let floor = 1e-14 * max_diag.max(f64::MIN_POSITIVE);

        let nf = free.len();
        let a_ff = DMatrix::from_fn(nf, nf, |a, b| jtj[(free[a], free[b])]);
        let g_f = DVector::from_fn(nf, |a, _| g[free[a]]);

        loop {
            let mut damped = a_ff.clone();
            for a in 0..nf {
                damped[(a, a)] += mu * diag_scale[free[a]].max(floor);
            }
            let step = match damped.cholesky() {
                Some(ch) => ch.solve(&(-&g_f)),
                None => {
                    mu *= nu;
                    nu *= 2.0;
                    if mu > MAX_DAMPING {
                        termination = Termination::Stalled;
                        break 'outer;
                    }
                    continue;
                }
            };
            let mut x_new = x.clone();
            for (a, &i) in free.iter().enumerate() {
                x_new[i] += step[a];
            }
            bounds.clamp(&mut x_new);
            let delta = DVector::from_fn(n, |i, _| x_new[i] - x[i]);
            let r_new = problem.residuals(&x_new);
            let cost_new = r_new.norm_squared();
            // cost − ‖r + Jδ‖²
            let predicted = -(2.0 * delta.dot(&g) + delta.dot(&(&jtj * &delta)));
            let actual = cost - cost_new;
            if cost_new.is_finite() && actual > 0.0 {
                let rho = if predicted > 0.0 { actual / predicted } else { 0.0 };
                mu *= (1.0 / 3.0f64).max(1.0 - (2.0 * rho - 1.0).powi(3));
                nu = 2.0;
                let small = actual <= settings.cost_tolerance * cost
                    && predicted.abs() <= settings.cost_tolerance * cost;
                x = x_new;
                (r, jtj, g) = problem.normal_equations(&x);
                cost = r.norm_squared();
                if small {
                    termination = Termination::CostDecrease;
                    break 'outer;
                }
                break;
            }
            mu *= nu;
            nu *= 2.0;
            if mu > MAX_DAMPING {
                termination = Termination::Stalled;
                break 'outer;
            }
        }
    }

    let converged = matches!(
        termination,
        Termination::CostDecrease | Termination::Gradient | Termination::ZeroResidual
    );
    LmOutcome {
        x,
        cost,
        converged,
        iterations,
        termination,
    }
}
