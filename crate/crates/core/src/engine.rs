//! Median of level-set aggregation over a finite class under counting measure.
//!
//! For each left-out index `i` the engine sorts hypotheses by their
//! leave-one-out excess loss once, then sweeps the tolerance grid in
//! increasing order, growing the level set and a running aggregate as it
//! goes. Level sets at larger tolerances are supersets of smaller ones, so a
//! single pass per row yields every `y_hat[t][i]`.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{MlsaError, Result};
use crate::grid::ToleranceGrid;
use crate::loss::LossModel;
use crate::table::{LabeledSample, PredictionTable};

/// Absolute slack in level-set membership, `L(h) <= min L + t + LEVEL_TOL`.
/// Loss sums are computed in floating point; ties that are exact in real
/// arithmetic must not be split by rounding.
pub const LEVEL_TOL: f64 = 1e-9;

/// Inner aggregation rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    /// `1{ sum (2 h(x) - 1) >= 0 }` over {0,1} predictions; ties go to 1.
    MajorityVote,
    /// Arithmetic mean of the predictions.
    Average,
}

impl Aggregation {
    #[inline]
    pub(crate) fn finish(self, sum: f64, count: usize) -> f64 {
        match self {
            Self::MajorityVote => {
                if 2.0 * sum - count as f64 >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Average => sum / count as f64,
        }
    }

    /// Aggregates `h_j(x_i)` over `indices`, summing in the given order.
    pub fn aggregate(self, table: &PredictionTable, indices: &[usize], row: usize) -> Result<f64> {
        if indices.is_empty() {
            return Err(MlsaError::Empty("aggregation set"));
        }
        table.check_row(row)?;
        let mut sum = 0.0;
        for &j in indices {
            table.check_column(j)?;
            sum += table.get(row, j);
        }
        Ok(self.finish(sum, indices.len()))
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::MajorityVote => "majority-vote",
            Self::Average => "average",
        }
    }
}

/// Pointwise losses `loss(h_j(x_i), y_i)` and their column totals `L_S(h_j)`.
#[derive(Debug, Clone)]
pub struct LossMatrix {
    n: usize,
    m: usize,
    values: Vec<f64>,
    totals: Vec<f64>,
    /// Hypotheses by ascending `(L_S, index)`.
    full_order: Vec<usize>,
}

impl LossMatrix {
    pub fn new(table: &PredictionTable, sample: &LabeledSample, loss: &LossModel) -> Result<Self> {
        sample.check_matches(table)?;
        let (n, m) = (table.n_samples(), table.n_hypotheses());
        let mut values = Vec::with_capacity(n * m);
        let mut totals = vec![0.0; m];
        for i in 0..n {
            let y = sample.responses[i];
            for (j, &p) in table.row(i).iter().enumerate() {
                let v = loss.eval(p, y);
                if !(v.is_finite() && v >= 0.0) {
                    return Err(MlsaError::LossBoundViolated {
                        row: i,
                        column: j,
                        value: v,
                        bound: loss.delta_bound,
                    });
                }
                totals[j] += v;
                values.push(v);
            }
        }
        let full_order = order_by(&totals);
        Ok(Self {
            n,
            m,
            values,
            totals,
            full_order,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn n_hypotheses(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn pointwise(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.m + j]
    }

    pub fn totals(&self) -> &[f64] {
        &self.totals
    }

    pub fn erm_loss(&self) -> f64 {
        self.totals.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `L_{S_{-i}}(h_j)` for every `j`, or `L_S` when `exclude` is `None`.
    pub fn losses(&self, exclude: Option<usize>) -> Vec<f64> {
        match exclude {
            None => self.totals.clone(),
            Some(i) => self
                .totals
                .iter()
                .enumerate()
                .map(|(j, &tot)| tot - self.pointwise(i, j))
                .collect(),
        }
    }

    /// Losses shifted so that the minimum is zero.
    pub fn excess(&self, exclude: Option<usize>) -> Vec<f64> {
        let l = self.losses(exclude);
        let min = l.iter().copied().fold(f64::INFINITY, f64::min);
        l.into_iter().map(|v| v - min).collect()
    }

    /// `order_by(excess)` for `excess = self.excess(Some(i))`.
    ///
    /// Hypotheses sharing the same loss at row `i` keep their `L_S` order
    /// after the shift, so when the row has few distinct losses the groups
    /// are merged instead of sorted.
    pub(crate) fn loo_order(&self, i: usize, excess: &[f64]) -> Vec<usize> {
        const MAX_GROUPS: usize = 4;
        let row = &self.values[i * self.m..(i + 1) * self.m];
        let mut levels: Vec<u64> = Vec::with_capacity(MAX_GROUPS);
        for v in row {
            let bits = v.to_bits();
            if !levels.contains(&bits) {
                if levels.len() == MAX_GROUPS {
                    return order_by(excess);
                }
                levels.push(bits);
            }
        }
        let mut groups = vec![Vec::new(); levels.len()];
        for &j in &self.full_order {
            let g = levels.iter().position(|&b| b == row[j].to_bits()).unwrap_or(0);
            groups[g].push(j);
        }
        let mut heads = vec![0usize; groups.len()];
        let mut out = Vec::with_capacity(self.m);
        for _ in 0..self.m {
            let mut best: Option<(u64, usize, usize)> = None;
            for (g, group) in groups.iter().enumerate() {
                if let Some(&j) = group.get(heads[g]) {
                    let key = (total_key(excess[j]), j);
                    if best.is_none_or(|(k, b, _)| key < (k, b)) {
                        best = Some((key.0, j, g));
                    }
                }
            }
            let (_, j, g) = best.expect("groups cover every hypothesis");
            heads[g] += 1;
            out.push(j);
        }
        // The shift can round distinct totals to equal excess; ties go by index.
        for run in out.chunk_by_mut(|&a, &b| total_key(excess[a]) == total_key(excess[b])) {
            run.sort_unstable();
        }
        out
    }
}

#[inline]
pub(crate) fn in_level(excess: f64, t: f64) -> bool {
    excess <= t + LEVEL_TOL
}

/// Indices sorted by ascending excess, ties broken by index.
pub(crate) fn order_by(excess: &[f64]) -> Vec<usize> {
    let mut keyed: Vec<(u64, usize)> = excess.iter().enumerate().map(|(j, &e)| (total_key(e), j)).collect();
    keyed.sort_unstable();
    keyed.into_iter().map(|(_, j)| j).collect()
}

/// Integer key with the same order as `f64::total_cmp`.
#[inline]
fn total_key(x: f64) -> u64 {
    let bits = x.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}

/// `L_S(h_j)`, or `L_{S_{-i}}(h_j)` when `exclude = Some(i)`, summed row by row.
pub fn empirical_loss(
    table: &PredictionTable,
    sample: &LabeledSample,
    loss: &LossModel,
    j: usize,
    exclude: Option<usize>,
) -> Result<f64> {
    sample.check_matches(table)?;
    table.check_column(j)?;
    if let Some(i) = exclude {
        table.check_row(i)?;
    }
    Ok((0..table.n_samples())
        .filter(|&i| Some(i) != exclude)
        .map(|i| loss.eval(table.get(i, j), sample.responses[i]))
        .sum())
}

/// `{ j : L(h_j) <= min_k L(h_k) + t }` on the full or excluded sample.
pub fn level_set(
    table: &PredictionTable,
    sample: &LabeledSample,
    loss: &LossModel,
    t: f64,
    exclude: Option<usize>,
) -> Result<Vec<usize>> {
    if !(t >= 0.0) {
        return Err(MlsaError::InvalidParameter(format!("tolerance must be nonnegative, got {t}")));
    }
    if let Some(i) = exclude {
        table.check_row(i)?;
    }
    let lm = LossMatrix::new(table, sample, loss)?;
    Ok(level_set_from(&lm, t, exclude))
}

pub(crate) fn level_set_from(lm: &LossMatrix, t: f64, exclude: Option<usize>) -> Vec<usize> {
    let set: Vec<usize> = lm
        .excess(exclude)
        .iter()
        .enumerate()
        .filter(|(_, &e)| in_level(e, t))
        .map(|(j, _)| j)
        .collect();
    assert!(!set.is_empty(), "level set must contain an empirical risk minimizer");
    set
}

/// Lower median: the `ceil(k/2)`-th order statistic.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(MlsaError::Empty("median input"));
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    Ok(v[(v.len() - 1) / 2])
}

/// Mean pointwise loss of the predictions.
pub fn loo_error(predictions: &[f64], sample: &LabeledSample, loss: &LossModel) -> Result<f64> {
    if predictions.len() != sample.len() {
        return Err(MlsaError::LengthMismatch {
            what: "predictions",
            got: predictions.len(),
            expected: sample.len(),
        });
    }
    if predictions.is_empty() {
        return Err(MlsaError::Empty("predictions"));
    }
    let total: f64 = predictions
        .iter()
        .zip(&sample.responses)
        .map(|(&p, &y)| loss.eval(p, y))
        .sum();
    Ok(total / predictions.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlsaOutput {
    /// `per_level[k][i]` is the prediction for index `i` at the `k`-th tolerance.
    pub per_level: Vec<Vec<f64>>,
    pub medians: Vec<f64>,
    pub loo_error: f64,
}

/// Per-level leave-one-out predictions for a single index.
pub fn predict_index(
    lm: &LossMatrix,
    table: &PredictionTable,
    grid: &ToleranceGrid,
    agg: Aggregation,
    i: usize,
) -> Vec<f64> {
    let excess = lm.excess(Some(i));
    let order = lm.loo_order(i, &excess);
    let row = table.row(i);
    let mut out = Vec::with_capacity(grid.len());
    let (mut taken, mut sum) = (0usize, 0.0);
    for &t in grid.levels() {
        while taken < order.len() && in_level(excess[order[taken]], t) {
            sum += row[order[taken]];
            taken += 1;
        }
        assert!(taken > 0, "level set must contain an empirical risk minimizer");
        out.push(agg.finish(sum, taken));
    }
    out
}

/// Leave-one-out predictions at a single tolerance, for every index.
pub fn predict_level(lm: &LossMatrix, table: &PredictionTable, agg: Aggregation, t: f64) -> Vec<f64> {
    (0..table.n_samples())
        .map(|i| {
            let set = level_set_from(lm, t, Some(i));
            let sum: f64 = set.iter().map(|&j| table.get(i, j)).sum();
            agg.finish(sum, set.len())
        })
        .collect()
}

/// Runs the two-layer procedure: per-level aggregation over leave-one-out
/// level sets, then the lower median across levels.
pub fn run_mlsa(
    table: &PredictionTable,
    sample: &LabeledSample,
    loss: &LossModel,
    grid: &ToleranceGrid,
    agg: Aggregation,
) -> Result<MlsaOutput> {
    grid.check_gap(loss.delta_bound)?;
    loss.audit_bound(table, sample)?;
    let lm = LossMatrix::new(table, sample, loss)?;
    let by_index: Vec<Vec<f64>> = (0..table.n_samples())
        .into_par_iter()
        .map(|i| predict_index(&lm, table, grid, agg, i))
        .collect();
    let medians = by_index
        .iter()
        .map(|v| median(v))
        .collect::<Result<Vec<_>>>()?;
    let per_level = (0..grid.len())
        .map(|k| by_index.iter().map(|v| v[k]).collect())
        .collect();
    let loo_error = loo_error(&medians, sample, loss)?;
    Ok(MlsaOutput {
        per_level,
        medians,
        loo_error,
    })
}

/// Output for a one-member class: every level set is that member, so the
/// grid plays no role and a single level is recorded.
pub fn single_hypothesis_output(
    table: &PredictionTable,
    sample: &LabeledSample,
    loss: &LossModel,
) -> Result<MlsaOutput> {
    if table.n_hypotheses() != 1 {
        return Err(MlsaError::InvalidParameter(format!(
            "expected a single hypothesis, got {}",
            table.n_hypotheses()
        )));
    }
    sample.check_matches(table)?;
    let medians = table.column(0);
    let loo_error = loo_error(&medians, sample, loss)?;
    Ok(MlsaOutput {
        per_level: vec![medians.clone()],
        medians,
        loo_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, m: usize) -> (PredictionTable, LabeledSample) {
        let cols = (0..m)
            .map(|_| (0..n).map(|_| rng.random::<f64>()).collect())
            .collect();
        let y = (0..n).map(|_| rng.random::<f64>()).collect();
        (PredictionTable::with_multiplicity(cols).unwrap(), LabeledSample::new(y))
    }

    proptest! {
        #[test]
        fn merged_loo_order_matches_sorting(
            rows in prop::collection::vec(prop::collection::vec(0u8..3, 12), 1..6),
            scale in prop::sample::select(vec![1.0, 0.1, 1e-9, 3.0]),
        ) {
            let n = rows.len();
            let cols: Vec<Vec<f64>> = (0..12).map(|j| rows.iter().map(|r| r[j] as f64 * scale).collect()).collect();
            let table = PredictionTable::with_multiplicity(cols).unwrap();
            let sample = LabeledSample::new(vec![0.0; n]);
            let lm = LossMatrix::new(&table, &sample, &LossModel::absolute(3.0 * scale)).unwrap();
            for i in 0..n {
                let excess = lm.excess(Some(i));
                prop_assert_eq!(lm.loo_order(i, &excess), order_by(&excess));
            }
        }
    }

    #[test]
    fn order_matches_total_cmp_with_index_ties() {
        let v = [0.5, -0.0, 0.0, f64::INFINITY, -1.0, 0.5, 1e-300, f64::NEG_INFINITY];
        let mut expected: Vec<usize> = (0..v.len()).collect();
        expected.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
        assert_eq!(order_by(&v), expected);
    }

    #[test]
    fn empirical_loss_examples() {
        let zo = LossModel::zero_one();
        let table = PredictionTable::from_columns(vec![vec![1., 0., 1.], vec![0., 0., 0.]]).unwrap();
        let sample = LabeledSample::new(vec![1., 0., 1.]);
        assert_eq!(empirical_loss(&table, &sample, &zo, 0, None).unwrap(), 0.0);
        // column 1 losses per row are [1, 0, 1]
        assert_eq!(empirical_loss(&table, &sample, &zo, 1, Some(0)).unwrap(), 1.0);
        assert!(empirical_loss(&table, &sample, &zo, 2, None).is_err());
        assert!(empirical_loss(&table, &sample, &zo, 0, Some(3)).is_err());
    }

    #[test]
    fn empirical_loss_matches_row_by_row_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (table, sample) = random_instance(&mut rng, 5, 3);
        let sq = LossModel::squared(1.0);
        for j in 0..3 {
            for exclude in [None, Some(0), Some(4)] {
                let mut oracle = 0.0;
                for i in 0..5 {
                    if Some(i) == exclude {
                        continue;
                    }
                    let d = table.get(i, j) - sample.responses[i];
                    oracle += d * d;
                }
                let got = empirical_loss(&table, &sample, &sq, j, exclude).unwrap();
                assert_eq!(got, oracle);
            }
        }
    }

    #[test]
    fn level_set_examples() {
        // Column losses [3, 5, 4] under 0-1 loss on 6 rows, all labels 0.
        let cols = vec![
            vec![1., 1., 1., 0., 0., 0.],
            vec![1., 1., 1., 1., 1., 0.],
            vec![1., 1., 1., 1., 0., 0.],
        ];
        let table = PredictionTable::from_columns(cols).unwrap();
        let sample = LabeledSample::new(vec![0.; 6]);
        let zo = LossModel::zero_one();
        assert_eq!(level_set(&table, &sample, &zo, 1.0, None).unwrap(), vec![0, 2]);
        assert_eq!(level_set(&table, &sample, &zo, 0.0, None).unwrap(), vec![0]);
        assert_eq!(level_set(&table, &sample, &zo, 2.0, None).unwrap(), vec![0, 1, 2]);
        assert!(level_set(&table, &sample, &zo, -1.0, None).is_err());
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[2.0]).unwrap(), 2.0);
        assert_eq!(median(&[1.0, 3.0, 2.0]).unwrap(), 2.0);
        assert_eq!(median(&[1.0, 2.0, 3.0, 10.0]).unwrap(), 2.0);
        assert!(median(&[]).is_err());
    }

    #[test]
    fn loo_error_examples() {
        let zo = LossModel::zero_one();
        let sample = LabeledSample::new(vec![0., 1., 1.]);
        assert_eq!(loo_error(&[0., 1., 1.], &sample, &zo).unwrap(), 0.0);
        assert_eq!(loo_error(&[1., 0., 0.], &sample, &zo).unwrap(), 1.0);
        assert!(loo_error(&[1., 0.], &sample, &zo).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let preds: Vec<f64> = (0..9).map(|_| rng.random()).collect();
        let ys: Vec<f64> = (0..9).map(|_| rng.random()).collect();
        let mut oracle = 0.0;
        for k in 0..9 {
            oracle += (preds[k] - ys[k]).abs();
        }
        oracle /= 9.0;
        let got = loo_error(&preds, &LabeledSample::new(ys), &LossModel::absolute(1.0)).unwrap();
        assert!((got - oracle).abs() < 1e-15);
    }

    #[test]
    fn single_hypothesis_predicts_itself() {
        let table = PredictionTable::from_columns(vec![vec![0.2, 0.9, 0.4]]).unwrap();
        let sample = LabeledSample::new(vec![0.0, 1.0, 0.5]);
        let grid = ToleranceGrid::arithmetic(1.0, 4).unwrap();
        let out = run_mlsa(&table, &sample, &LossModel::squared(1.0), &grid, Aggregation::Average).unwrap();
        for row in &out.per_level {
            assert_eq!(row, &vec![0.2, 0.9, 0.4]);
        }
        assert_eq!(out.medians, vec![0.2, 0.9, 0.4]);
    }

    /// Straight-line transcription of the algorithm: every (i, t) cell
    /// recomputes L_{S_{-i}} by direct summation and votes in index order.
    fn straight_line(table: &PredictionTable, y: &[f64], levels: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let (n, m) = (table.n_samples(), table.n_hypotheses());
        let mut per_level = vec![vec![0.0; n]; levels.len()];
        let mut medians = vec![0.0; n];
        for i in 0..n {
            let mut loo = vec![0.0; m];
            for j in 0..m {
                for r in 0..n {
                    if r != i && table.get(r, j) != y[r] {
                        loo[j] += 1.0;
                    }
                }
            }
            let best = loo.iter().cloned().fold(f64::INFINITY, f64::min);
            let mut cell = Vec::new();
            for (k, &t) in levels.iter().enumerate() {
                let mut vote = 0.0;
                for j in 0..m {
                    if loo[j] <= best + t {
                        vote += 2.0 * table.get(i, j) - 1.0;
                    }
                }
                let v = if vote >= 0.0 { 1.0 } else { 0.0 };
                per_level[k][i] = v;
                cell.push(v);
            }
            cell.sort_by(|a, b| a.partial_cmp(b).unwrap());
            medians[i] = cell[(cell.len() - 1) / 2];
        }
        (per_level, medians)
    }

    #[test]
    fn matches_straight_line_implementation() {
        let cols = vec![vec![0., 0., 1., 1.], vec![0., 1., 1., 1.], vec![1., 1., 1., 0.]];
        let table = PredictionTable::from_columns(cols).unwrap();
        let sample = LabeledSample::new(vec![0., 1., 1., 0.]);
        let grid = ToleranceGrid::arithmetic(1.0, 3).unwrap();
        let out = run_mlsa(&table, &sample, &LossModel::zero_one(), &grid, Aggregation::MajorityVote).unwrap();
        let (per_level, medians) = straight_line(&table, &sample.responses, grid.levels());
        assert_eq!(out.per_level, per_level);
        assert_eq!(out.medians, medians);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(1..9);
            let m = rng.random_range(1..12);
            let cols = (0..m)
                .map(|_| (0..n).map(|_| f64::from(rng.random_bool(0.5) as u8)).collect())
                .collect();
            let table = PredictionTable::with_multiplicity(cols).unwrap();
            let y: Vec<f64> = (0..n).map(|_| f64::from(rng.random_bool(0.5) as u8)).collect();
            let sample = LabeledSample::new(y);
            let grid = ToleranceGrid::arithmetic(1.0, rng.random_range(1..6)).unwrap();
            let out = run_mlsa(&table, &sample, &LossModel::zero_one(), &grid, Aggregation::MajorityVote).unwrap();
            let (per_level, medians) = straight_line(&table, &sample.responses, grid.levels());
            assert_eq!(out.per_level, per_level);
            assert_eq!(out.medians, medians);
        }
    }

    #[test]
    fn low_tolerance_aggregates_only_leave_one_out_minimizers() {
        // Column 0 is perfect; with a grid starting near zero only the
        // leave-one-out minimizers are aggregated at the first level.
        let cols = vec![vec![0., 1., 1., 0., 1.], vec![1., 1., 1., 0., 1.], vec![0., 0., 0., 0., 0.]];
        let table = PredictionTable::from_columns(cols).unwrap();
        let sample = LabeledSample::new(vec![0., 1., 1., 0., 1.]);
        let zo = LossModel::zero_one();
        let grid = ToleranceGrid::new(vec![0.5, 1.0, 2.0], 1.0).unwrap();
        let out = run_mlsa(&table, &sample, &zo, &grid, Aggregation::MajorityVote).unwrap();
        for i in 0..5 {
            let set = level_set(&table, &sample, &zo, 0.5, Some(i)).unwrap();
            let mut best = f64::INFINITY;
            for j in 0..3 {
                best = best.min(empirical_loss(&table, &sample, &zo, j, Some(i)).unwrap());
            }
            for &j in &set {
                assert_eq!(empirical_loss(&table, &sample, &zo, j, Some(i)).unwrap(), best);
            }
            let expected = Aggregation::MajorityVote.aggregate(&table, &set, i).unwrap();
            assert_eq!(out.per_level[0][i], expected);
        }
        // Leaving out row 0 ties the perfect column with column 1 at every
        // level; the tie votes 1 against a label of 0.
        assert_eq!(out.medians[0], 1.0);
        assert_eq!(out.loo_error, 0.2);
    }

    #[test]
    fn rejects_mismatched_grid() {
        let table = PredictionTable::from_columns(vec![vec![0.]]).unwrap();
        let sample = LabeledSample::new(vec![0.]);
        let grid = ToleranceGrid::arithmetic(2.0, 2).unwrap();
        assert!(matches!(
            run_mlsa(&table, &sample, &LossModel::zero_one(), &grid, Aggregation::MajorityVote),
            Err(MlsaError::GridMismatch { .. })
        ));
    }

    #[test]
    fn deterministic_across_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (table, sample) = random_instance(&mut rng, 20, 15);
        let grid = ToleranceGrid::arithmetic(1.0, 10).unwrap();
        let loss = LossModel::squared(1.0);
        let a = run_mlsa(&table, &sample, &loss, &grid, Aggregation::Average).unwrap();
        let b = run_mlsa(&table, &sample, &loss, &grid, Aggregation::Average).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn median_minimizes_absolute_deviation(
            values in prop::collection::vec(-100.0f64..100.0, 1..30),
            probes in prop::collection::vec(-150.0f64..150.0, 1000),
        ) {
            let m = median(&values).unwrap();
            let cost = |y: f64| values.iter().map(|v| (v - y).abs()).sum::<f64>();
            let best = cost(m);
            for y in probes {
                prop_assert!(best <= cost(y) + 1e-9);
            }
        }

        #[test]
        fn level_sets_are_nested_and_contain_erm(
            seed in any::<u64>(),
            n in 1usize..12,
            m in 1usize..10,
            t1 in 0.0f64..3.0,
            dt in 0.0f64..3.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (table, sample) = random_instance(&mut rng, n, m);
            let loss = LossModel::absolute(1.0);
            let lm = LossMatrix::new(&table, &sample, &loss).unwrap();
            for exclude in std::iter::once(None).chain((0..n).map(Some)) {
                let small = level_set_from(&lm, t1, exclude);
                let large = level_set_from(&lm, t1 + dt, exclude);
                prop_assert!(small.iter().all(|j| large.contains(j)));
                let ls = lm.losses(exclude);
                let argmin = order_by(&ls)[0];
                prop_assert!(small.contains(&argmin));
            }
        }

        #[test]
        fn sandwich_holds_for_bounded_losses(
            seed in any::<u64>(),
            n in 1usize..10,
            m in 1usize..10,
            t in 0.0f64..4.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (table, sample) = random_instance(&mut rng, n, m);
            let loss = LossModel::squared(1.0);
            let lm = LossMatrix::new(&table, &sample, &loss).unwrap();
            let upper = level_set_from(&lm, t + 1.0, None);
            for i in 0..n {
                let mid = level_set_from(&lm, t, Some(i));
                prop_assert!(mid.iter().all(|j| upper.contains(j)));
                if t >= 1.0 {
                    let lower = level_set_from(&lm, t - 1.0, None);
                    prop_assert!(lower.iter().all(|j| mid.contains(j)));
                }
            }
        }
    }
}
