//! Logistic regression over a Euclidean parameter ball with Monte-Carlo
//! level-set aggregation against an ellipsoidal reference measure.

mod geometry;
mod montecarlo;
mod verify;

pub use geometry::{membership_ha, sample_mu_b, GeometryReport, LogisticGeometry};
pub use montecarlo::{
    aggregate_prob, estimate_level, logistic_grid, run_mlsa_logistic, LevelEstimate, LogisticRun, McConfig,
    SampleCloud,
};
pub use verify::{
    verify_cor_logistic, verify_lemma_containment, verify_volume_lower_bound, volume_samples_required, volume_threshold, ContainmentReport, VolumeReport,
    LOGISTIC_MC_ALLOWANCE,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{MlsaError, Result};

/// Relative slack when checking `||x_i|| <= R`.
const NORM_SLACK: f64 = 1e-12;

pub const ERM_MAX_ITERATIONS: usize = 100_000;
pub const ERM_TOL: f64 = 1e-8;

/// `ln(1 + e^{-z})` without overflow.
pub fn softplus_neg(z: f64) -> f64 {
    (-z).max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticProblem {
    /// `n x d`, rows are covariates.
    pub x: DMatrix<f64>,
    /// Labels in `{-1, +1}`.
    pub y: Vec<f64>,
    /// Parameter-ball radius.
    pub r: f64,
    /// Covariate-norm bound.
    pub big_r: f64,
}

impl LogisticProblem {
    pub fn new(x: DMatrix<f64>, y: Vec<f64>, r: f64, big_r: f64) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(MlsaError::Empty("logistic design"));
        }
        if y.len() != x.nrows() {
            return Err(MlsaError::LengthMismatch {
                what: "labels",
                got: y.len(),
                expected: x.nrows(),
            });
        }
        if !(r > 0.0 && r.is_finite() && big_r > 0.0 && big_r.is_finite()) {
            return Err(MlsaError::InvalidParameter(format!("radii must be positive, got r = {r}, R = {big_r}")));
        }
        if let Some(&bad) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
            return Err(MlsaError::InvalidParameter(format!("label {bad} is not -1 or +1")));
        }
        for i in 0..x.nrows() {
            let norm = x.row(i).norm();
            if !norm.is_finite() || norm > big_r * (1.0 + NORM_SLACK) {
                return Err(MlsaError::InvalidParameter(format!(
                    "covariate {i} has norm {norm} above R = {big_r}"
                )));
            }
        }
        Ok(Self { x, y, r, big_r })
    }

    /// Columns `x_1 .. x_d, y` as whitespace-separated text.
    pub fn parse(text: &str, r: f64, big_r: f64) -> Result<Self> {
        let (x, y) = crate::vaw::parse_design(text)?;
        Self::new(x, y, r, big_r)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    /// `y_i x_i^T theta`.
    #[inline]
    pub fn margin(&self, i: usize, theta: &[f64]) -> f64 {
        let mut z = 0.0;
        for (j, &t) in theta.iter().enumerate() {
            z += self.x[(i, j)] * t;
        }
        self.y[i] * z
    }

    /// `-ln sigma(y_i x_i^T theta)`.
    pub fn sample_loss(&self, i: usize, theta: &[f64]) -> f64 {
        softplus_neg(self.margin(i, theta))
    }

    /// `L_S(theta)`, skipping `exclude` when given.
    pub fn loss(&self, theta: &[f64], exclude: Option<usize>) -> f64 {
        (0..self.n())
            .filter(|&i| Some(i) != exclude)
            .map(|i| self.sample_loss(i, theta))
            .sum()
    }

    pub fn gradient(&self, theta: &[f64], exclude: Option<usize>) -> DVector<f64> {
        let mut g = DVector::zeros(self.d());
        for i in (0..self.n()).filter(|&i| Some(i) != exclude) {
            let w = -self.y[i] * sigmoid(-self.margin(i, theta));
            for j in 0..self.d() {
                g[j] += w * self.x[(i, j)];
            }
        }
        g
    }

    /// `r * R`.
    pub fn r_big_r(&self) -> f64 {
        self.r * self.big_r
    }
}

/// Projected-gradient result.
#[derive(Debug, Clone, PartialEq)]
pub struct ErmFit {
    pub theta: DVector<f64>,
    pub loss: f64,
    /// Gradient of the objective at `theta` (not the gradient mapping).
    pub gradient: DVector<f64>,
    pub iterations: usize,
    /// Final gradient-mapping norm.
    pub residual: f64,
}

fn project(theta: &mut DVector<f64>, r: f64) {
    let norm = theta.norm();
    if norm > r {
        *theta *= r / norm;
    }
}

/// Minimizes the (leave-one-out) logistic loss over `||theta|| <= r` by
/// projected gradient with step `4 / lambda_max(A)`.
pub fn fit_erm(problem: &LogisticProblem, exclude: Option<usize>, tol: f64) -> Result<ErmFit> {
    if !(tol > 0.0) {
        return Err(MlsaError::InvalidParameter(format!("solver tolerance must be positive, got {tol}")));
    }
    if let Some(i) = exclude {
        crate::error::check_index("excluded sample", i, problem.n())?;
    }
    let a = problem.x.transpose() * &problem.x;
    let lambda_max = a.symmetric_eigenvalues().max();
    let mut theta = DVector::zeros(problem.d());
    if lambda_max <= 0.0 {
        let gradient = problem.gradient(theta.as_slice(), exclude);
        return Ok(ErmFit {
            loss: problem.loss(theta.as_slice(), exclude),
            theta,
            gradient,
            iterations: 0,
            residual: 0.0,
        });
    }
    let step = 4.0 / lambda_max;
    let mut residual = f64::INFINITY;
    for it in 0..ERM_MAX_ITERATIONS {
        let g = problem.gradient(theta.as_slice(), exclude);
        let mut next = &theta - &g * step;
        project(&mut next, problem.r);
        residual = (&next - &theta).norm() / step;
        theta = next;
        if residual <= tol {
            let gradient = problem.gradient(theta.as_slice(), exclude);
            return Ok(ErmFit {
                loss: problem.loss(theta.as_slice(), exclude),
                theta,
                gradient,
                iterations: it + 1,
                residual,
            });
        }
    }
    Err(MlsaError::NonConvergence {
        solver: "projected gradient",
        iterations: ERM_MAX_ITERATIONS,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stable_scalar_functions() {
        assert!((softplus_neg(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!(softplus_neg(800.0) >= 0.0 && softplus_neg(800.0) < 1e-300);
        assert!((softplus_neg(-800.0) - 800.0).abs() < 1e-12);
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3.0) + sigmoid(-3.0) - 1.0).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0);
    }

    #[test]
    fn validation() {
        let x = DMatrix::from_row_slice(2, 1, &[0.5, -1.0]);
        assert!(LogisticProblem::new(x.clone(), vec![1.0, -1.0], 1.0, 1.0).is_ok());
        assert!(LogisticProblem::new(x.clone(), vec![1.0, 0.0], 1.0, 1.0).is_err());
        assert!(LogisticProblem::new(x.clone(), vec![1.0, 1.0], 1.0, 0.9).is_err());
        assert!(LogisticProblem::new(x, vec![1.0], 1.0, 1.0).is_err());
        let p = LogisticProblem::parse("0.5 1\n-1 -1\n", 2.0, 1.0).unwrap();
        assert_eq!(p.n(), 2);
    }

    fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        while hi - lo > 1e-12 {
            let a = hi - phi * (hi - lo);
            let b = lo + phi * (hi - lo);
            if f(a) <= f(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        (lo + hi) / 2.0
    }

    #[test]
    fn one_dimensional_two_points_match_golden_section() {
        let x = DMatrix::from_row_slice(2, 1, &[0.8, -0.3]);
        let p = LogisticProblem::new(x, vec![1.0, 1.0], 1.5, 1.0).unwrap();
        let fit = fit_erm(&p, None, 1e-10).unwrap();
        let oracle = golden_section(|t| p.loss(&[t], None), -1.5, 1.5);
        assert!((fit.theta[0] - oracle).abs() < 1e-6);
        let fit_loo = fit_erm(&p, Some(1), 1e-10).unwrap();
        let oracle_loo = golden_section(|t| p.loss(&[t], Some(1)), -1.5, 1.5);
        assert!((fit_loo.theta[0] - oracle_loo).abs() < 1e-6);
    }

    #[test]
    fn separable_data_hits_the_boundary() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.8, 0.2, -0.9, 0.1, -0.7, -0.3]);
        let p = LogisticProblem::new(x, vec![1.0, 1.0, -1.0, -1.0], 5.0, 1.0).unwrap();
        let fit = fit_erm(&p, None, 1e-8).unwrap();
        assert!((fit.theta.norm() - 5.0).abs() < 1e-9);
        assert!(fit.loss < 4.0 * 2f64.ln());
    }

    #[test]
    fn label_flip_negates_the_minimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(20, 2, |_, _| rng.random_range(-0.7..0.7));
        let y: Vec<f64> = (0..20).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let flipped: Vec<f64> = y.iter().map(|v| -v).collect();
        let p = LogisticProblem::new(x.clone(), y, 1.0, 1.0).unwrap();
        let q = LogisticProblem::new(x, flipped, 1.0, 1.0).unwrap();
        let a = fit_erm(&p, None, 1e-10).unwrap();
        let b = fit_erm(&q, None, 1e-10).unwrap();
        assert!((a.theta + b.theta).norm() < 1e-7);
    }

    #[test]
    fn minimizer_beats_random_feasible_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = DMatrix::from_fn(30, 2, |_, _| rng.random_range(-0.7..0.7));
        let y: Vec<f64> = (0..30).map(|_| if rng.random_bool(0.6) { 1.0 } else { -1.0 }).collect();
        let p = LogisticProblem::new(x, y, 1.0, 1.0).unwrap();
        let fit = fit_erm(&p, None, ERM_TOL).unwrap();
        for _ in 0..1000 {
            let mut probe = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            project(&mut probe, 1.0);
            assert!(fit.loss <= p.loss(probe.as_slice(), None) + 1e-9);
        }
    }

    #[test]
    fn rejects_bad_tolerance() {
        let p = LogisticProblem::new(DMatrix::from_row_slice(1, 1, &[1.0]), vec![1.0], 1.0, 1.0).unwrap();
        assert!(fit_erm(&p, None, 0.0).is_err());
        assert!(fit_erm(&p, Some(1), 1e-8).is_err());
    }
}
