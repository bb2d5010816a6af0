use rayon::prelude::*;

use crate::engine::{in_level, order_by, LossMatrix};
use crate::error::{MlsaError, Result};
use crate::grid::ToleranceGrid;
use crate::loss::LossModel;
use crate::table::{LabeledSample, PredictionTable};

/// Counting-measure growth record at one tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelRecord {
    pub t: f64,
    /// `|H_{max(t - delta, 0)}|`.
    pub size_minus: usize,
    /// `|H_{t + delta}|`.
    pub size_plus: usize,
    pub ratio: f64,
    /// `H_{t-delta} ⊆ H_{t,i} ⊆ H_{t+delta}` for every `i`. The lower
    /// inclusion is only checked when `t >= delta`.
    pub sandwich_ok: bool,
    pub good: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthAudit {
    pub per_level: Vec<LevelRecord>,
    pub good_fraction: f64,
    pub c_g: f64,
    pub delta: f64,
}

impl GrowthAudit {
    pub fn good_levels(&self) -> usize {
        self.per_level.iter().filter(|r| r.good).count()
    }

    pub fn sandwich_ok(&self) -> bool {
        self.per_level.iter().all(|r| r.sandwich_ok)
    }
}

pub fn grid_growth_audit(
    table: &PredictionTable,
    sample: &LabeledSample,
    loss: &LossModel,
    grid: &ToleranceGrid,
    c_g: f64,
) -> Result<GrowthAudit> {
    grid.check_gap(loss.delta_bound)?;
    let lm = LossMatrix::new(table, sample, loss)?;
    growth_audit_from(&lm, grid.levels(), grid.gap(), c_g)
}

/// Growth audit over arbitrary nonnegative tolerances (need not be a grid).
pub fn growth_audit_from(lm: &LossMatrix, levels: &[f64], delta: f64, c_g: f64) -> Result<GrowthAudit> {
    if !(c_g >= 1.0) {
        return Err(MlsaError::InvalidParameter(format!("growth constant must be >= 1, got {c_g}")));
    }
    if levels.is_empty() {
        return Err(MlsaError::Empty("tolerance levels"));
    }
    let mut full = lm.excess(None);
    full.sort_by(f64::total_cmp);
    let count_within = |s: f64| full.partition_point(|&e| in_level(e, s));
    let violations = sandwich_violations(lm, levels, delta);
    let per_level: Vec<LevelRecord> = levels
        .iter()
        .zip(&violations)
        .map(|(&t, &bad)| {
            let size_minus = count_within((t - delta).max(0.0));
            let size_plus = count_within(t + delta);
            let ratio = size_plus as f64 / size_minus as f64;
            let sandwich_ok = bad == 0;
            LevelRecord {
                t,
                size_minus,
                size_plus,
                ratio,
                sandwich_ok,
                good: ratio <= c_g && sandwich_ok,
            }
        })
        .collect();
    let good = per_level.iter().filter(|r| r.good).count();
    Ok(GrowthAudit {
        good_fraction: good as f64 / per_level.len() as f64,
        per_level,
        c_g,
        delta,
    })
}

/// Number of indices `i` violating the sandwich at each tolerance.
///
/// For a fixed `i`, the lower inclusion at `t` holds iff the largest
/// leave-one-out excess among `H_{t-delta}` is within `t`; sorting by full
/// excess and taking prefix maxima answers that for all `t` at once. The
/// upper inclusion is handled symmetrically.
pub fn sandwich_violations(lm: &LossMatrix, levels: &[f64], delta: f64) -> Vec<usize> {
    let full = lm.excess(None);
    let by_full = order_by(&full);
    let full_sorted: Vec<f64> = by_full.iter().map(|&j| full[j]).collect();
    let per_index: Vec<Vec<bool>> = (0..lm.n_samples())
        .into_par_iter()
        .map(|i| {
            let loo = lm.excess(Some(i));
            let mut max_loo = Vec::with_capacity(by_full.len());
            let mut acc = f64::NEG_INFINITY;
            for &j in &by_full {
                acc = acc.max(loo[j]);
                max_loo.push(acc);
            }
            let by_loo = lm.loo_order(i, &loo);
            let loo_sorted: Vec<f64> = by_loo.iter().map(|&j| loo[j]).collect();
            let mut max_full = Vec::with_capacity(by_loo.len());
            let mut acc = f64::NEG_INFINITY;
            for &j in &by_loo {
                acc = acc.max(full[j]);
                max_full.push(acc);
            }
            levels
                .iter()
                .map(|&t| {
                    let lower_ok = if t >= delta {
                        let s = t - delta;
                        let c = full_sorted.partition_point(|&e| in_level(e, s));
                        c == 0 || in_level(max_loo[c - 1], t)
                    } else {
                        true
                    };
                    let c = loo_sorted.partition_point(|&e| in_level(e, t));
                    let upper_ok = c == 0 || in_level(max_full[c - 1], t + delta);
                    !(lower_ok && upper_ok)
                })
                .collect()
        })
        .collect();
    (0..levels.len())
        .map(|k| per_index.iter().filter(|v| v[k]).count())
        .collect()
}
