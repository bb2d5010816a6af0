use rand::seq::index::sample as sample_indices;
use rand::Rng;

use crate::engine::Aggregation;
use crate::error::{MlsaError, Result};
use crate::loss::LossModel;
use crate::seed::rng_for;
use crate::table::{LabeledSample, PredictionTable};

use super::NUMERIC_TOL;

#[derive(Debug, Clone, PartialEq)]
pub struct AggViolation {
    pub subset: Vec<usize>,
    pub row: usize,
    /// Loss of the aggregated prediction.
    pub aggregated_loss: f64,
    /// Average loss of the aggregated hypotheses.
    pub mean_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggReport {
    pub trials: usize,
    pub violations: usize,
    pub first_violation: Option<AggViolation>,
    /// Largest `aggregated_loss / mean_loss` seen; infinite if a positive
    /// aggregated loss met a zero mean.
    pub worst_ratio: f64,
}

impl AggReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Samples random nonempty subsets `G` and rows `i` and checks
/// `loss(agg(G, x_i), y_i) <= mean_{h in G} loss(h(x_i), y_i)`.
pub fn check_agg_assumption(
    agg: Aggregation,
    loss: &LossModel,
    table: &PredictionTable,
    sample: &LabeledSample,
    trials: usize,
    seed: u64,
) -> Result<AggReport> {
    if trials == 0 {
        return Err(MlsaError::InvalidParameter("trials must be at least 1".into()));
    }
    sample.check_matches(table)?;
    let (n, m) = (table.n_samples(), table.n_hypotheses());
    let mut rng = rng_for(seed, "agg-assumption", 0);
    let mut violations = 0;
    let mut first_violation = None;
    let mut worst_ratio = 0.0f64;
    for _ in 0..trials {
        let size = rng.random_range(1..=m);
        let mut subset = sample_indices(&mut rng, m, size).into_vec();
        subset.sort_unstable();
        let row = rng.random_range(0..n);
        let y = sample.responses[row];
        let aggregated_loss = loss.eval(agg.aggregate(table, &subset, row)?, y);
        let mean_loss = subset.iter().map(|&j| loss.eval(table.get(row, j), y)).sum::<f64>() / size as f64;
        if aggregated_loss > NUMERIC_TOL {
            worst_ratio = worst_ratio.max(if mean_loss > 0.0 {
                aggregated_loss / mean_loss
            } else {
                f64::INFINITY
            });
        }
        if aggregated_loss > mean_loss + NUMERIC_TOL {
            violations += 1;
            first_violation.get_or_insert(AggViolation {
                subset,
                row,
                aggregated_loss,
                mean_loss,
            });
        }
    }
    Ok(AggReport {
        trials,
        violations,
        first_violation,
        worst_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn majority_vote_is_within_a_factor_two() {
        // Row 0 has label 0 and votes (1, 1, 0): the vote is wrong at loss 1
        // while only two of three members are wrong, so the unit-constant
        // inequality fails. A wrong vote always has at least half of the
        // members wrong, which caps the ratio at 2.
        let table = PredictionTable::from_columns(vec![vec![1., 0.], vec![1., 1.], vec![0., 1.]]).unwrap();
        let sample = LabeledSample::new(vec![0., 1.]);
        let report = check_agg_assumption(Aggregation::MajorityVote, &LossModel::zero_one(), &table, &sample, 500, 1).unwrap();
        assert!(!report.passed());
        let v = report.first_violation.unwrap();
        assert_eq!(v.aggregated_loss, 1.0);
        assert!(v.mean_loss >= 0.5);
        assert!(report.worst_ratio <= 2.0);
    }

    #[test]
    fn unanimous_vote_never_violates() {
        let table = PredictionTable::from_columns(vec![vec![1., 0.], vec![1., 0.]]).unwrap();
        let sample = LabeledSample::new(vec![0., 0.]);
        let report = check_agg_assumption(Aggregation::MajorityVote, &LossModel::zero_one(), &table, &sample, 200, 1).unwrap();
        // Rows where all members agree give equality.
        assert!(report.passed());
        assert!(report.worst_ratio <= 1.0);
    }

    #[test]
    fn averaging_is_stable_for_squared() {
        let table = PredictionTable::from_columns(vec![vec![0.1, 0.9], vec![0.7, 0.2], vec![1.0, 0.0]]).unwrap();
        let sample = LabeledSample::new(vec![0.3, 0.8]);
        let report = check_agg_assumption(Aggregation::Average, &LossModel::squared(1.0), &table, &sample, 500, 2).unwrap();
        assert!(report.passed());
    }

    #[test]
    fn averaging_under_zero_one_is_caught() {
        // G = {h: 0, h: 1}, y = 0: the average 0.5 is wrong while only half of G is.
        let table = PredictionTable::from_columns(vec![vec![0.], vec![1.]]).unwrap();
        let sample = LabeledSample::new(vec![0.]);
        let report = check_agg_assumption(Aggregation::Average, &LossModel::zero_one(), &table, &sample, 50, 3).unwrap();
        assert!(!report.passed());
        let v = report.first_violation.unwrap();
        assert_eq!(v.subset, vec![0, 1]);
        assert_eq!((v.aggregated_loss, v.mean_loss), (1.0, 0.5));
    }

    #[test]
    fn zero_trials_rejected() {
        let table = PredictionTable::from_columns(vec![vec![0.]]).unwrap();
        let sample = LabeledSample::new(vec![0.]);
        assert!(check_agg_assumption(Aggregation::Average, &LossModel::zero_one(), &table, &sample, 0, 3).is_err());
    }
}
