use serde::Serialize;

use super::geometry::{membership_ha, unit_ball_point, LogisticGeometry};
use super::montecarlo::{log_volume_factor, logistic_grid, McConfig, SampleCloud};
use super::LogisticProblem;
use crate::audit::{BoundCertificate, BoundComponents};
use crate::engine::{in_level, MlsaOutput};
use crate::error::{MlsaError, Result};
use crate::seed::rng_for;

/// Relative allowance on the logistic bound for Monte-Carlo error.
pub const LOGISTIC_MC_ALLOWANCE: f64 = 0.05;

/// Gradient norm below which the minimizer counts as interior.
const INTERIOR_GRADIENT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContainmentReport {
    pub samples: usize,
    /// Draws on the minimizer's side of the gradient cut.
    pub in_halfspace: usize,
    pub fraction: f64,
    pub stderr: f64,
    pub interior: bool,
    /// Half-space draws with excess loss above `r R` or outside `H_A`.
    pub violations: usize,
    pub passed: bool,
}

/// Draws `theta* + sqrt(r R) A^{-1/2} u` and checks that the half of the
/// ellipsoid facing the feasible side stays inside `H_{rR}` and `H_A`.
pub fn verify_lemma_containment(
    geometry: &LogisticGeometry,
    problem: &LogisticProblem,
    mc: &McConfig,
) -> Result<ContainmentReport> {
    let d = problem.d();
    let rr = problem.r_big_r();
    let center = geometry.erm.theta.as_slice();
    let grad = &geometry.erm.gradient;
    let interior = grad.norm() <= INTERIOR_GRADIENT;
    let erm = problem.loss(center, None);
    let mut rng = rng_for(mc.seed, "logistic-containment", 0);
    let (mut u, mut theta) = (vec![0.0; d], vec![0.0; d]);
    let (mut inside, mut violations) = (0, 0);
    for _ in 0..mc.samples_per_level {
        unit_ball_point(&mut rng, &mut u);
        geometry.map_ball(&u, rr.sqrt(), Some(center), &mut theta);
        let cut: f64 = (0..d).map(|p| grad[p] * (theta[p] - center[p])).sum();
        if !interior && cut > 0.0 {
            continue;
        }
        inside += 1;
        let excess = problem.loss(&theta, None) - erm;
        if !in_level(excess, rr) || !membership_ha(geometry, problem, &theta)? {
            violations += 1;
        }
    }
    let k = mc.samples_per_level as f64;
    let fraction = inside as f64 / k;
    let stderr = (fraction * (1.0 - fraction) / k).sqrt();
    let passed = violations == 0
        && if interior {
            inside == mc.samples_per_level
        } else {
            (fraction - 0.5).abs() <= 3.0 * (0.25 / k).sqrt()
        };
    Ok(ContainmentReport {
        samples: mc.samples_per_level,
        in_halfspace: inside,
        fraction,
        stderr,
        interior,
        violations,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolumeReport {
    pub samples: usize,
    pub accepted: usize,
    pub estimate: f64,
    pub stderr: f64,
    /// `max(8, 2 n r R)^{-d}`.
    pub threshold: f64,
    pub passed: bool,
}

/// Estimates the reference measure of `H_{rR}` and compares it with
/// `max(8, 2 n r R)^{-d}`.
/// `max(8, 2 n r R)^-d`.
pub fn volume_threshold(problem: &LogisticProblem) -> f64 {
    (-(problem.d() as f64) * log_volume_factor(problem)).exp()
}

/// Draws needed so that `min_accepted` hits are expected at the volume
/// threshold. Fewer cannot resolve the bound.
pub fn volume_samples_required(problem: &LogisticProblem, min_accepted: usize) -> usize {
    let exact = min_accepted as f64 / volume_threshold(problem);
    // Absorb the rounding in exp/ln so that exact powers do not round up.
    (exact * (1.0 - 1e-12)).ceil() as usize
}

pub fn verify_volume_lower_bound(
    geometry: &LogisticGeometry,
    problem: &LogisticProblem,
    mc: &McConfig,
) -> Result<VolumeReport> {
    let threshold = volume_threshold(problem);
    let k = mc.samples_per_level;
    let needed = volume_samples_required(problem, mc.min_accepted);
    if k < needed {
        return Err(MlsaError::InsufficientAcceptance {
            t: problem.r_big_r(),
            exclude: None,
            accepted: k,
            required: needed,
        });
    }
    let cloud = SampleCloud::draw_component(geometry, problem, k, mc.seed, "logistic-volume")?;
    let erm = geometry.erm.loss;
    let rr = problem.r_big_r();
    let accepted = (0..cloud.len()).filter(|&s| in_level(cloud.full_loss(s) - erm, rr)).count();
    let estimate = accepted as f64 / k as f64;
    let stderr = (estimate * (1.0 - estimate) / k as f64).sqrt();
    Ok(VolumeReport {
        samples: k,
        accepted,
        estimate,
        stderr,
        threshold,
        passed: estimate + 3.0 * stderr >= threshold,
    })
}

/// Lower bound on the constrained minimum from convexity:
/// `L(theta) >= L(theta_hat) + g^T (theta - theta_hat) >= L(theta_hat) - r ||g|| - g^T theta_hat`.
pub(crate) fn certified_min_loss(geometry: &LogisticGeometry, problem: &LogisticProblem) -> f64 {
    let g = &geometry.erm.gradient;
    let gap = problem.r * g.norm() + g.dot(&geometry.erm.theta);
    geometry.erm.loss - gap.max(0.0)
}

/// `loo <= 8 minL / n + 136 Delta d ln max(8, 2 n r R) / n`, with a relative
/// allowance for Monte-Carlo error.
pub fn verify_cor_logistic(
    output: &MlsaOutput,
    geometry: &LogisticGeometry,
    problem: &LogisticProblem,
) -> Result<BoundCertificate> {
    let n = problem.n();
    let grid = logistic_grid(geometry, problem)?;
    if output.per_level.len() != grid.len() {
        return Err(MlsaError::GridLengthMismatch {
            levels: output.per_level.len(),
            expected: grid.len(),
        });
    }
    if output.medians.len() != n {
        return Err(MlsaError::LengthMismatch {
            what: "aggregated predictions",
            got: output.medians.len(),
            expected: n,
        });
    }
    let nf = n as f64;
    let erm = certified_min_loss(geometry, problem);
    let multiplier = 8.0 / nf;
    let complexity = 136.0 * geometry.delta * problem.d() as f64 * log_volume_factor(problem) / nf;
    Ok(BoundCertificate::new(
        "logistic-corollary",
        output.loo_error,
        multiplier * erm + complexity,
        BoundComponents {
            n,
            erm_loss: erm,
            t_max: grid.t_max(),
            delta: geometry.delta,
            c_g: crate::classification::GROWTH_CONSTANT,
            rho: crate::classification::NOMINAL_RHO,
            multiplier,
        },
    )
    .with_relative_allowance(LOGISTIC_MC_ALLOWANCE))
}
