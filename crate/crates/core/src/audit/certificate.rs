use serde::Serialize;

use crate::engine::{predict_level, Aggregation, LossMatrix, MlsaOutput};
use crate::error::{MlsaError, Result};
use crate::grid::ToleranceGrid;
use crate::loss::LossModel;
use crate::table::{LabeledSample, PredictionTable};

use super::growth::{growth_audit_from, GrowthAudit};

/// Absolute slack for inequalities that hold exactly in real arithmetic.
pub const NUMERIC_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundComponents {
    pub n: usize,
    pub erm_loss: f64,
    pub t_max: f64,
    pub delta: f64,
    pub c_g: f64,
    pub rho: f64,
    /// Factor in front of `erm_loss + t_max + delta` (or of the whole
    /// complexity expression for corollary-form bounds).
    pub multiplier: f64,
}

/// One checked inequality `lhs <= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCertificate {
    /// Name of the inequality this certificate instantiates.
    pub anchor: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    /// Relative allowance on `rhs` for Monte-Carlo estimates; zero for exact bounds.
    pub relative_allowance: f64,
    pub components: BoundComponents,
}

impl BoundCertificate {
    pub fn new(anchor: impl Into<String>, lhs: f64, rhs: f64, components: BoundComponents) -> Self {
        Self {
            anchor: anchor.into(),
            lhs,
            rhs,
            slack: rhs - lhs,
            relative_allowance: 0.0,
            components,
        }
    }

    pub fn with_relative_allowance(mut self, allowance: f64) -> Self {
        self.relative_allowance = allowance;
        self
    }

    pub fn passes(&self) -> bool {
        self.lhs.is_finite() && self.slack + self.relative_allowance * self.rhs.abs() >= -NUMERIC_TOL
    }
}

/// Single-tolerance guarantee. Fails with a precondition error when `t` does
/// not satisfy the local growth condition.
pub fn verify_single_level(
    table: &PredictionTable,
    sample: &LabeledSample,
    loss: &LossModel,
    agg: Aggregation,
    t: f64,
    delta: f64,
    c_g: f64,
) -> Result<BoundCertificate> {
    if !(t >= 0.0) {
        return Err(MlsaError::InvalidParameter(format!("tolerance must be nonnegative, got {t}")));
    }
    let lm = LossMatrix::new(table, sample, loss)?;
    let audit = growth_audit_from(&lm, &[t], delta, c_g)?;
    let rec = &audit.per_level[0];
    if !rec.good {
        return Err(MlsaError::GrowthConditionFailed {
            t,
            ratio: rec.ratio,
            sandwich_ok: rec.sandwich_ok,
        });
    }
    let n = table.n_samples();
    let predictions = predict_level(&lm, table, agg, t);
    let lhs = crate::engine::loo_error(&predictions, sample, loss)?;
    let erm = lm.erm_loss();
    let multiplier = c_g / n as f64;
    Ok(BoundCertificate::new(
        "single-level",
        lhs,
        multiplier * (erm + t + delta),
        BoundComponents {
            n,
            erm_loss: erm,
            t_max: t,
            delta,
            c_g,
            rho: 1.0,
            multiplier,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MainTheoremCertificates {
    /// Uses the growth lemma's nominal majority fraction.
    pub nominal: BoundCertificate,
    /// Uses the measured good fraction.
    pub empirical: BoundCertificate,
}

/// Multiplicative oracle inequality for the median output.
pub fn verify_main_theorem(
    output: &MlsaOutput,
    audit: &GrowthAudit,
    erm: f64,
    grid: &ToleranceGrid,
    nominal_rho: f64,
) -> Result<MainTheoremCertificates> {
    if audit.good_fraction <= 0.5 {
        return Err(MlsaError::GridMajorityFailure {
            rho: audit.good_fraction,
        });
    }
    if !(nominal_rho > 0.5 && nominal_rho <= 1.0) {
        return Err(MlsaError::InvalidParameter(format!("nominal rho must lie in (1/2, 1], got {nominal_rho}")));
    }
    grid.check_gap(audit.delta)?;
    let n = output.medians.len();
    let make = |anchor: &str, rho: f64| {
        let multiplier = 2.0 * audit.c_g / ((2.0 * rho - 1.0) * n as f64);
        BoundCertificate::new(
            anchor,
            output.loo_error,
            multiplier * (erm + grid.t_max() + grid.gap()),
            BoundComponents {
                n,
                erm_loss: erm,
                t_max: grid.t_max(),
                delta: grid.gap(),
                c_g: audit.c_g,
                rho,
                multiplier,
            },
        )
    };
    Ok(MainTheoremCertificates {
        nominal: make("main-theorem", nominal_rho),
        empirical: make("main-theorem/measured-rho", audit.good_fraction),
    })
}
