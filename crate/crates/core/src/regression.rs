//! Finite regression classes with bounded losses and averaging aggregation.

use crate::audit::{BoundCertificate, BoundComponents};
use crate::engine::{Aggregation, LossMatrix, MlsaOutput};
use crate::error::{MlsaError, Result};
use crate::grid::{level_count, ToleranceGrid};
use crate::loss::LossModel;
use crate::table::{LabeledSample, PredictionTable};

pub const GROWTH_CONSTANT: f64 = 2.0;
pub const NOMINAL_RHO: f64 = 0.75;

/// Mean of `{h(x_i) : h in indices}`.
pub fn average_aggregate(indices: &[usize], table: &PredictionTable, i: usize) -> Result<f64> {
    if indices.is_empty() {
        return Err(MlsaError::Empty("averaging set"));
    }
    table.check_row(i)?;
    for &j in indices {
        table.check_column(j)?;
    }
    Aggregation::Average.aggregate(table, indices, i)
}

/// Levels `{k M : k = 1..=ceil(12 ln m)}` with gap `M`.
pub fn regression_grid(m_bound: f64, class_size: usize) -> Result<ToleranceGrid> {
    scaled_log_grid(m_bound, class_size, "regression class")
}

pub(crate) fn scaled_log_grid(m_bound: f64, class_size: usize, what: &str) -> Result<ToleranceGrid> {
    if !(m_bound > 0.0 && m_bound.is_finite()) {
        return Err(MlsaError::InvalidParameter(format!("loss bound must be positive and finite, got {m_bound}")));
    }
    if class_size < 2 {
        return Err(MlsaError::InvalidParameter(format!(
            "{what} has {class_size} member(s); at least 2 are needed for a nondegenerate grid"
        )));
    }
    let count = level_count(12.0 * (class_size as f64).ln());
    ToleranceGrid::new((1..=count).map(|k| k as f64 * m_bound).collect(), m_bound)
}

/// Oracle inequality `LOO <= 8 minL / n + 104 M ln m / n`.
pub fn verify_cor_regression(
    output: &MlsaOutput,
    table: &PredictionTable,
    sample: &LabeledSample,
    loss: &LossModel,
) -> Result<BoundCertificate> {
    let m_bound = loss.delta_bound;
    let grid = regression_grid(m_bound, table.n_hypotheses())?;
    check_output_shape(output, &grid, table.n_samples())?;
    let erm = LossMatrix::new(table, sample, loss)?.erm_loss();
    Ok(log_class_certificate(
        "regression-corollary",
        output.loo_error,
        erm,
        m_bound,
        table.n_hypotheses(),
        table.n_samples(),
        grid.t_max(),
    ))
}

pub(crate) fn check_output_shape(output: &MlsaOutput, grid: &ToleranceGrid, n: usize) -> Result<()> {
    if output.per_level.len() != grid.len() || output.medians.len() != n {
        return Err(MlsaError::GridLengthMismatch {
            levels: output.per_level.len(),
            expected: grid.len(),
        });
    }
    Ok(())
}

pub(crate) fn log_class_certificate(
    anchor: &str,
    lhs: f64,
    erm: f64,
    m_bound: f64,
    class_size: usize,
    n: usize,
    t_max: f64,
) -> BoundCertificate {
    let nf = n as f64;
    let multiplier = 8.0 / nf;
    BoundCertificate::new(
        anchor,
        lhs,
        multiplier * erm + 104.0 * m_bound * (class_size as f64).ln() / nf,
        BoundComponents {
            n,
            erm_loss: erm,
            t_max,
            delta: m_bound,
            c_g: GROWTH_CONSTANT,
            rho: NOMINAL_RHO,
            multiplier,
        },
    )
}
