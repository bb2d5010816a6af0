use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{fit_erm, ErmFit, LogisticProblem, ERM_TOL};
use crate::error::{MlsaError, Result};

const BISECTION_MAX_ITERATIONS: usize = 400;

/// Second-moment geometry of a logistic problem.
#[derive(Debug, Clone)]
pub struct LogisticGeometry {
    /// `A = sum_i x_i x_i^T`.
    pub a: DMatrix<f64>,
    /// Ascending eigenvalues of `A`.
    pub eigenvalues: DVector<f64>,
    /// Eigenvectors in the same order, as columns.
    pub eigenvectors: DMatrix<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub a_half: DMatrix<f64>,
    pub a_half_inv: DMatrix<f64>,
    /// Full-sample minimizer over the ball, fixed once.
    pub erm: ErmFit,
    /// `sqrt(n) r R + 2 sqrt(r R)`.
    pub r_b: f64,
    /// `1 + r R + sqrt(r R / lambda_min) R`.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometryReport {
    pub n: usize,
    pub d: usize,
    pub r: f64,
    pub big_r: f64,
    pub eigenvalues: Vec<f64>,
    pub theta_star: Vec<f64>,
    pub erm_loss: f64,
    pub delta: f64,
    pub r_b: f64,
    pub grid_size: usize,
}

impl LogisticGeometry {
    pub fn new(problem: &LogisticProblem) -> Result<Self> {
        let a = problem.x.transpose() * &problem.x;
        let eig = SymmetricEigen::new(a.clone());
        let d = problem.d();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&p, &q| eig.eigenvalues[p].total_cmp(&eig.eigenvalues[q]));
        let eigenvalues = DVector::from_fn(d, |k, _| eig.eigenvalues[order[k]]);
        let eigenvectors = DMatrix::from_fn(d, d, |i, k| eig.eigenvectors[(i, order[k])]);
        let lambda_min = eigenvalues[0];
        let lambda_max = eigenvalues[d - 1];
        if !(lambda_min > 0.0) || lambda_min <= lambda_max * f64::EPSILON * d as f64 {
            return Err(MlsaError::DegenerateGeometry(lambda_min));
        }
        let scaled = |f: fn(f64) -> f64| {
            let diag = DMatrix::from_diagonal(&eigenvalues.map(f));
            &eigenvectors * diag * eigenvectors.transpose()
        };
        let a_half = scaled(f64::sqrt);
        let a_half_inv = scaled(|l| 1.0 / l.sqrt());
        let erm = fit_erm(problem, None, ERM_TOL)?;
        let rr = problem.r_big_r();
        let n = problem.n() as f64;
        Ok(Self {
            a,
            eigenvalues,
            eigenvectors,
            lambda_min,
            lambda_max,
            a_half,
            a_half_inv,
            erm,
            r_b: n.sqrt() * rr + 2.0 * rr.sqrt(),
            delta: 1.0 + rr + (rr / lambda_min).sqrt() * problem.big_r,
        })
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.erm.theta
    }

    /// `(theta - c)^T A (theta - c)`.
    pub fn a_norm_sq(&self, theta: &[f64], center: &[f64]) -> f64 {
        let d = self.a.nrows();
        let mut total = 0.0;
        for p in 0..d {
            for q in 0..d {
                total += (theta[p] - center[p]) * self.a[(p, q)] * (theta[q] - center[q]);
            }
        }
        total
    }

    /// `min_{||theta|| <= r} (v - theta)^T A (v - theta)`, solved through
    /// the secular equation `||theta(lambda)|| = r` with
    /// `theta(lambda) = (A + lambda I)^{-1} A v`.
    pub fn distance_sq_to_ball(&self, v: &[f64], r: f64) -> Result<f64> {
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm <= r {
            return Ok(0.0);
        }
        let d = v.len();
        let c: Vec<f64> = (0..d)
            .map(|k| (0..d).map(|p| self.eigenvectors[(p, k)] * v[p]).sum())
            .collect();
        let lam = self.eigenvalues.as_slice();
        let proj_norm_sq =
            |mu: f64| -> f64 { (0..d).map(|k| (lam[k] / (lam[k] + mu) * c[k]).powi(2)).sum() };
        let dist_sq = |mu: f64| -> f64 { (0..d).map(|k| lam[k] * (c[k] * mu / (lam[k] + mu)).powi(2)).sum() };
        let (mut lo, mut hi) = (0.0, self.lambda_max * norm / r);
        let r_sq = r * r;
        for _ in 0..BISECTION_MAX_ITERATIONS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                return Ok(dist_sq(hi));
            }
            if proj_norm_sq(mid) > r_sq {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if (hi - lo) <= 1e-12 * hi.max(1e-300) {
            Ok(dist_sq(hi))
        } else {
            Err(MlsaError::NonConvergence {
                solver: "secular-equation bisection",
                iterations: BISECTION_MAX_ITERATIONS,
                residual: hi - lo,
            })
        }
    }

    pub fn report(&self, problem: &LogisticProblem, grid_size: usize) -> GeometryReport {
        GeometryReport {
            n: problem.n(),
            d: problem.d(),
            r: problem.r,
            big_r: problem.big_r,
            eigenvalues: self.eigenvalues.iter().copied().collect(),
            theta_star: self.erm.theta.iter().copied().collect(),
            erm_loss: self.erm.loss,
            delta: self.delta,
            r_b: self.r_b,
            grid_size,
        }
    }

    /// Maps a point of the unit ball to `center + scale * A^{-1/2} u`.
    pub(crate) fn map_ball(&self, u: &[f64], scale: f64, center: Option<&[f64]>, out: &mut [f64]) {
        let d = u.len();
        for p in 0..d {
            let mut s = 0.0;
            for q in 0..d {
                s += self.a_half_inv[(p, q)] * u[q];
            }
            out[p] = scale * s + center.map_or(0.0, |c| c[p]);
        }
    }
}

/// Whether `v` lies within A-distance `sqrt(r R)` of the parameter ball.
pub fn membership_ha(geometry: &LogisticGeometry, problem: &LogisticProblem, v: &[f64]) -> Result<bool> {
    let rr = problem.r_big_r();
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm <= problem.r {
        return Ok(true);
    }
    let gap = norm - problem.r;
    if geometry.lambda_min * gap * gap > rr {
        return Ok(false);
    }
    Ok(geometry.distance_sq_to_ball(v, problem.r)? <= rr)
}

/// Uniform point in the unit ball of dimension `d`.
pub(crate) fn unit_ball_point(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let d = out.len();
    loop {
        let mut sq = 0.0;
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
            sq += *v * *v;
        }
        if sq > 0.0 {
            let radius = rng.random::<f64>().powf(1.0 / d as f64);
            let s = radius / sq.sqrt();
            out.iter_mut().for_each(|v| *v *= s);
            return;
        }
    }
}

/// `k` uniform draws from `B = {theta : ||A^{1/2} theta|| <= R_B}`, as rows.
pub fn sample_mu_b(geometry: &LogisticGeometry, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let d = geometry.a.nrows();
    let mut u = vec![0.0; d];
    let mut theta = vec![0.0; d];
    let mut out = DMatrix::zeros(k, d);
    for s in 0..k {
        unit_ball_point(rng, &mut u);
        geometry.map_ball(&u, geometry.r_b, None, &mut theta);
        for p in 0..d {
            out[(s, p)] = theta[p];
        }
    }
    out
}
