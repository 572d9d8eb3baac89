//! Levenberg–Marquardt nonlinear least squares.
//!
//! Small dense problems only (a handful of parameters, up to a few thousand
//! residuals). Damping uses Marquardt's diagonal scaling so the iteration is
//! insensitive to parameter units, which range from nanoseconds to 10⁷ rad/s
//! in this crate.

use nalgebra::{DMatrix, DVector};

/// A least-squares problem: minimise Σ r_i(p)².
pub trait Problem {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    fn residuals(&self, p: &[f64], out: &mut [f64]);

    /// Jacobian ∂r_i/∂p_k. Defaults to central differences.
    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        let m = self.n_residuals();
        let mut plus = vec![0.0; m];
        let mut minus = vec![0.0; m];
        let mut q = p.to_vec();
        for k in 0..p.len() {
            let h = 1e-7 * p[k].abs().max(1e-8);
            q[k] = p[k] + h;
            self.residuals(&q, &mut plus);
            q[k] = p[k] - h;
            self.residuals(&q, &mut minus);
            q[k] = p[k];
            for i in 0..m {
                jac[(i, k)] = (plus[i] - minus[i]) / (2.0 * h);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Options {
    pub max_iter: usize,
    /// Stop when the relative cost decrease falls below this.
    pub ftol: f64,
    /// Stop when the scaled step norm falls below this.
    pub xtol: f64,
    pub lambda0: f64,
}

impl Default for Options {
    fn default() -> Self {
        Options { max_iter: 200, ftol: 1e-12, xtol: 1e-12, lambda0: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub params: Vec<f64>,
    /// Σ r_i² at `params`.
    pub cost: f64,
    pub initial_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// s²(JᵀJ)⁻¹ with s² = cost/(m − n); `None` when JᵀJ is singular.
    pub covariance: Option<DMatrix<f64>>,
    /// Smallest/largest singular value of the column-scaled Jacobian.
    pub condition: f64,
    pub residuals: Vec<f64>,
}

impl Report {
    /// Jacobian columns are numerically dependent.
    pub fn rank_deficient(&self) -> bool {
        self.condition < 1e-10
    }

    pub fn std_errors(&self) -> Option<Vec<f64>> {
        self.covariance
            .as_ref()
            .map(|c| (0..c.nrows()).map(|i| c[(i, i)].max(0.0).sqrt()).collect())
    }
}

fn cost_of(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

pub fn minimize<P: Problem + ?Sized>(problem: &P, p0: &[f64], opts: &Options) -> Report {
    let n = problem.n_params();
    let m = problem.n_residuals();
    assert_eq!(p0.len(), n, "initial parameter vector has wrong length");
    let mut p = p0.to_vec();
    let mut r = vec![0.0; m];
    problem.residuals(&p, &mut r);
    let initial_cost = cost_of(&r);
    let mut cost = initial_cost;
    let mut jac = DMatrix::zeros(m, n);
    let mut lambda = opts.lambda0;
    let mut converged = false;
    let mut iterations = 0;
    let mut trial = vec![0.0; n];
    let mut r_trial = vec![0.0; m];

    if cost == 0.0 || !cost.is_finite() {
        converged = cost == 0.0;
    } else {
        'outer: for it in 0..opts.max_iter {
            iterations = it + 1;
            problem.jacobian(&p, &mut jac);
            let jt = jac.transpose();
            let jtj = &jt * &jac;
            let grad = &jt * DVector::from_column_slice(&r);
            let diag: Vec<f64> = (0..n).map(|i| jtj[(i, i)].max(1e-300)).collect();
            loop {
                let mut a = jtj.clone();
                for i in 0..n {
                    a[(i, i)] += lambda * diag[i];
                }
                let Some(chol) = a.cholesky() else {
                    lambda *= 10.0;
                    if lambda > 1e16 {
                        break 'outer;
                    }
                    continue;
                };
                let step = chol.solve(&(-&grad));
                for i in 0..n {
                    trial[i] = p[i] + step[i];
                }
                problem.residuals(&trial, &mut r_trial);
                let new_cost = cost_of(&r_trial);
                let scaled_step = (0..n)
                    .map(|i| (step[i] / (p[i].abs() + 1e-300)).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if new_cost.is_finite() && new_cost <= cost {
                    let rel = (cost - new_cost) / cost.max(1e-300);
                    p.copy_from_slice(&trial);
                    r.copy_from_slice(&r_trial);
                    cost = new_cost;
                    lambda = (lambda / 3.0).max(1e-15);
                    if rel < opts.ftol || scaled_step < opts.xtol || cost == 0.0 {
                        converged = true;
                        break 'outer;
                    }
                    break;
                }
                lambda *= 4.0;
                if lambda > 1e16 || scaled_step < opts.xtol {
                    // No downhill step exists at machine precision.
                    converged = scaled_step < opts.xtol || lambda > 1e16;
                    break 'outer;
                }
            }
        }
    }

    problem.jacobian(&p, &mut jac);
    let (covariance, condition) = covariance_and_condition(&jac, cost, m, n);
    Report { params: p, cost, initial_cost, iterations, converged, covariance, condition, residuals: r }
}

fn covariance_and_condition(jac: &DMatrix<f64>, cost: f64, m: usize, n: usize) -> (Option<DMatrix<f64>>, f64) {
    let mut scaled = jac.clone();
    let mut scales = vec![1.0; n];
    for k in 0..n {
        let norm = scaled.column(k).norm();
        if norm > 0.0 {
            scales[k] = norm;
            scaled.column_mut(k).scale_mut(1.0 / norm);
        }
    }
    let svd = scaled.clone().svd(false, false);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smax > 0.0 { smin / smax } else { 0.0 };
    if condition < 1e-14 || m <= n {
        return (None, condition);
    }
    let jtj = scaled.transpose() * &scaled;
    let Some(inv) = jtj.try_inverse() else {
        return (None, condition);
    };
    let s2 = cost / (m - n) as f64;
    let mut cov = inv * s2;
    for i in 0..n {
        for j in 0..n {
            cov[(i, j)] /= scales[i] * scales[j];
        }
    }
    (Some(cov), condition)
}
