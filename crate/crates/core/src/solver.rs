//! Projected Newton minimization.
//!
//! Objectives supply a per-term positive-semidefinite Hessian approximation;
//! the assembled matrix is projected once more by clamping its eigenvalues to
//! `EIGEN_FLOOR * lambda_max`. Steps are solved in the eigenbasis with
//! Levenberg-Marquardt damping and globalized with Armijo backtracking; the
//! damping grows whenever backtracking alone finds no decrease.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

pub const EIGEN_FLOOR: f64 = 1e-8;
const ARMIJO: f64 = 1e-4;
const BACKTRACKS: usize = 6;
const MIN_DAMPING: f64 = 1e-10;
const MAX_DAMPING: f64 = 1e20;
/// Relative decrease below which an accepted step counts as no progress.
const STAGNATION: f64 = 1e-12;
/// Consecutive no-progress steps that end the solve.
const STAGNATION_STEPS: usize = 5;

pub trait Objective {
    fn num_vars(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64], grad: &mut [f64]);

    /// Positive-semidefinite Hessian approximation.
    fn hessian(&self, x: &[f64]) -> DMatrix<f64>;

    /// True when the value is a sum of squares, so `energy_tol` is a valid
    /// absolute stopping threshold.
    fn is_sum_of_squares(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub energy_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 1000,
            grad_tol: 1e-9,
            energy_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    EnergyTolerance,
    /// No descent left above floating-point resolution.
    Stalled,
    LineSearchFailed,
    MaxIterations,
}

impl Termination {
    pub fn converged(self) -> bool {
        !matches!(self, Termination::LineSearchFailed | Termination::MaxIterations)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub energy: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub x: Vec<f64>,
    pub energy: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub trace: Vec<TraceRecord>,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.termination.converged()
    }
}

/// Minimizes `obj` from `x0`. Deterministic for a given start point.
pub fn solve_least_squares(obj: &dyn Objective, x0: &[f64], opts: &SolverOptions) -> SolveReport {
    let n = obj.num_vars();
    assert_eq!(x0.len(), n, "start point has the wrong dimension");
    let mut x = x0.to_vec();
    let mut energy = obj.value(&x);
    let mut grad = vec![0.0; n];
    let mut trace = Vec::new();
    let mut trial = vec![0.0; n];

    if n == 0 {
        trace.push(TraceRecord { iteration: 0, energy, grad_norm: 0.0 });
        return SolveReport { x, energy, iterations: 0, termination: Termination::GradientTolerance, trace };
    }

    let mut iteration = 0;
    // Levenberg-Marquardt damping, relative to the largest eigenvalue.
    let mut damping = 0.0;
    let mut idle = 0;
    let termination = loop {
        obj.gradient(&x, &mut grad);
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        trace.push(TraceRecord { iteration, energy, grad_norm });
        log::trace!("iter {iteration}: energy {energy:e}, |g| {grad_norm:e}");

        if grad_norm < opts.grad_tol {
            break Termination::GradientTolerance;
        }
        if obj.is_sum_of_squares() && energy < opts.energy_tol {
            break Termination::EnergyTolerance;
        }
        if iteration >= opts.max_iters {
            break Termination::MaxIterations;
        }

        let model = EigenModel::new(&obj.hessian(&x), &grad);
        let mut accepted = None;
        let mut last_slope = 0.0;
        while accepted.is_none() && damping <= MAX_DAMPING {
            let step = model.step(damping);
            let slope: f64 = step.iter().zip(&grad).map(|(p, g)| p * g).sum();
            last_slope = slope;
            let mut t = 1.0;
            for _ in 0..BACKTRACKS {
                for i in 0..n {
                    trial[i] = x[i] + t * step[i];
                }
                let e = obj.value(&trial);
                if e.is_finite() && e <= energy + ARMIJO * t * slope {
                    accepted = Some((e, t));
                    break;
                }
                t *= 0.5;
            }
            if accepted.is_none() {
                damping = (damping * 10.0).max(MIN_DAMPING);
            }
        }
        match accepted {
            Some((e, t)) if e <= energy => {
                std::mem::swap(&mut x, &mut trial);
                idle = if energy - e <= STAGNATION * energy.abs() { idle + 1 } else { 0 };
                let stalled = idle >= STAGNATION_STEPS;
                energy = e;
                iteration += 1;
                if t == 1.0 {
                    damping = if damping / 4.0 < MIN_DAMPING { 0.0 } else { damping / 4.0 };
                }
                if stalled {
                    obj.gradient(&x, &mut grad);
                    let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                    trace.push(TraceRecord { iteration, energy, grad_norm });
                    break Termination::Stalled;
                }
            }
            _ => {
                // A predicted decrease below round-off means we are done.
                let resolution = 64.0 * f64::EPSILON * energy.abs().max(1e-300);
                if -last_slope <= resolution {
                    break Termination::Stalled;
                }
                break Termination::LineSearchFailed;
            }
        }
    };

    SolveReport { x, energy, iterations: iteration, termination, trace }
}

/// Eigendecomposition of the Hessian model with the gradient in its basis.
struct EigenModel {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
    coeffs: DVector<f64>,
    lmax: f64,
}

impl EigenModel {
    fn new(h: &DMatrix<f64>, grad: &[f64]) -> Self {
        let eig = SymmetricEigen::new(h.clone());
        let lmax = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        let coeffs = eig.eigenvectors.tr_mul(&DVector::from_column_slice(grad));
        let floor = EIGEN_FLOOR * lmax;
        EigenModel {
            values: eig.eigenvalues.iter().map(|&l| l.max(floor)).collect(),
            vectors: eig.eigenvectors,
            coeffs,
            lmax,
        }
    }

    /// Minimizer of the clamped quadratic model plus `damping * lmax / 2 |p|^2`.
    fn step(&self, damping: f64) -> Vec<f64> {
        let n = self.coeffs.len();
        if !(self.lmax > 0.0) {
            // No curvature at all: plain gradient descent.
            let mu = damping.max(1.0);
            return (&self.vectors * &self.coeffs).iter().map(|g| -g / mu).collect();
        }
        let mu = damping * self.lmax;
        let mut step = DVector::zeros(n);
        for k in 0..n {
            step.axpy(-self.coeffs[k] / (self.values[k] + mu), &self.vectors.column(k), 1.0);
        }
        step.iter().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// E(x) = |A x - b|^2.
    struct Linear {
        a: DMatrix<f64>,
        b: DVector<f64>,
    }

    impl Objective for Linear {
        fn num_vars(&self) -> usize {
            self.a.ncols()
        }
        fn value(&self, x: &[f64]) -> f64 {
            let r = &self.a * DVector::from_column_slice(x) - &self.b;
            r.norm_squared()
        }
        fn gradient(&self, x: &[f64], grad: &mut [f64]) {
            let r = &self.a * DVector::from_column_slice(x) - &self.b;
            let g = 2.0 * self.a.tr_mul(&r);
            grad.copy_from_slice(g.as_slice());
        }
        fn hessian(&self, _x: &[f64]) -> DMatrix<f64> {
            2.0 * self.a.tr_mul(&self.a)
        }
    }

    #[test]
    fn quadratic_converges_in_two_iterations() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.0]);
        let xstar = DVector::from_column_slice(&[0.3, -1.2]);
        let b = &a * &xstar;
        let obj = Linear { a, b };
        let rep = solve_least_squares(&obj, &[5.0, 5.0], &SolverOptions { energy_tol: 0.0, ..Default::default() });
        assert!(rep.converged());
        assert!(rep.iterations <= 2, "took {} iterations", rep.iterations);
        assert!((rep.x[0] - 0.3).abs() < 1e-10 && (rep.x[1] + 1.2).abs() < 1e-10);
    }

    #[test]
    fn trace_is_non_increasing() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-3]);
        let obj = Linear { a, b: DVector::from_column_slice(&[1.0, 1.0]) };
        let rep = solve_least_squares(&obj, &[0.0, 0.0], &SolverOptions::default());
        for w in rep.trace.windows(2) {
            assert!(w[1].energy <= w[0].energy);
        }
    }

    #[test]
    fn max_iterations_is_not_converged() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let obj = Linear { a, b: DVector::from_column_slice(&[1.0, 1.0]) };
        let rep = solve_least_squares(&obj, &[0.0, 0.0], &SolverOptions { max_iters: 0, ..Default::default() });
        assert_eq!(rep.termination, Termination::MaxIterations);
        assert!(!rep.converged());
    }
}
