//! Binary classification under 0-1 loss with majority-vote aggregation.

use std::collections::HashSet;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::audit::{BoundCertificate, BoundComponents, TaskGenerator};
use crate::engine::{Aggregation, LossMatrix, MlsaOutput};
use crate::error::{MlsaError, Result};
use crate::grid::{level_count, ToleranceGrid};
use crate::loss::LossModel;
use crate::table::{LabeledSample, PredictionTable};

pub const GROWTH_CONSTANT: f64 = 2.0;
pub const NOMINAL_RHO: f64 = 0.75;

/// Majority vote over `{h(x_i) : h in indices}`; a tied vote predicts 1.
pub fn majority_vote(indices: &[usize], table: &PredictionTable, i: usize) -> Result<f64> {
    if indices.is_empty() {
        return Err(MlsaError::Empty("vote set"));
    }
    table.check_row(i)?;
    for &j in indices {
        table.check_column(j)?;
        let v = table.get(i, j);
        if v != 0.0 && v != 1.0 {
            return Err(MlsaError::InvalidParameter(format!("label {v} is not in {{0, 1}}")));
        }
    }
    Aggregation::MajorityVote.aggregate(table, indices, i)
}

/// Integer tolerances `1..=ceil(24 d ln n)` with unit gap.
pub fn classification_grid(d: usize, n: usize) -> Result<ToleranceGrid> {
    if d == 0 {
        return Err(MlsaError::InvalidParameter("VC dimension must be at least 1".into()));
    }
    if n < 3 {
        return Err(MlsaError::InvalidParameter(format!("classification grid needs n >= 3, got {n}")));
    }
    ToleranceGrid::arithmetic(1.0, level_count(24.0 * d as f64 * (n as f64).ln()))
}

/// Covariates for the built-in VC classes.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariates {
    Line(Vec<f64>),
    Plane(Vec<[f64; 2]>),
}

impl Covariates {
    pub fn len(&self) -> usize {
        match self {
            Self::Line(v) => v.len(),
            Self::Plane(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassDescriptor {
    /// `x -> 1{x >= a}`.
    Thresholds,
    /// `x -> 1{a <= x <= b}`.
    Intervals,
    /// Indicators of unions of at most `k` intervals.
    UnionsOfIntervals(usize),
    /// Indicators of axis-aligned rectangles in the plane.
    AxisRectangles,
    /// A caller-supplied restricted class with its VC dimension.
    Explicit { table: PredictionTable, vc_dim: usize },
}

impl ClassDescriptor {
    pub fn vc_dimension(&self) -> usize {
        match self {
            Self::Thresholds => 1,
            Self::Intervals => 2,
            Self::UnionsOfIntervals(k) => 2 * k,
            Self::AxisRectangles => 4,
            Self::Explicit { vc_dim, .. } => *vc_dim,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Thresholds => "thresholds".into(),
            Self::Intervals => "intervals".into(),
            Self::UnionsOfIntervals(k) => format!("unions-of-{k}-intervals"),
            Self::AxisRectangles => "axis-rectangles".into(),
            Self::Explicit { .. } => "explicit".into(),
        }
    }
}

impl FromStr for ClassDescriptor {
    type Err = MlsaError;

    /// Accepts `thresholds`, `intervals`, `unions-of-<k>-intervals` and
    /// `axis-rectangles`. Explicit tables are constructed directly.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "thresholds" => return Ok(Self::Thresholds),
            "intervals" => return Ok(Self::Intervals),
            "axis-rectangles" => return Ok(Self::AxisRectangles),
            _ => {}
        }
        s.strip_prefix("unions-of-")
            .and_then(|r| r.strip_suffix("-intervals"))
            .and_then(|k| k.parse::<usize>().ok())
            .filter(|&k| k >= 1)
            .map(Self::UnionsOfIntervals)
            .ok_or_else(|| MlsaError::UnknownDescriptor(s.to_string()))
    }
}

/// Sample positions sorted by value; rejects repeated values.
fn ranks(xs: &[f64]) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    for w in order.windows(2) {
        if xs[w[0]] == xs[w[1]] {
            return Err(MlsaError::DuplicateCovariate(xs[w[0]]));
        }
    }
    Ok(order)
}

/// Column from a membership mask given in sorted order.
fn column_from_sorted(order: &[usize], inside: impl Fn(usize) -> bool) -> Vec<f64> {
    let mut col = vec![0.0; order.len()];
    for (rank, &pos) in order.iter().enumerate() {
        if inside(rank) {
            col[pos] = 1.0;
        }
    }
    col
}

fn push_boundaries(n: usize, k: usize, start: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if current.len() % 2 == 0 {
        out.push(current.clone());
        if current.len() == 2 * k {
            return;
        }
    }
    for b in start..=n {
        current.push(b);
        push_boundaries(n, k, b + 1, current, out);
        current.pop();
    }
}

/// Replaces the class by its set of distinct labelings on the covariates.
pub fn restrict_class(descriptor: &ClassDescriptor, covariates: &Covariates) -> Result<PredictionTable> {
    if covariates.is_empty() {
        return Err(MlsaError::Empty("covariates"));
    }
    let line = |c: &Covariates| match c {
        Covariates::Line(xs) => Ok(xs.clone()),
        Covariates::Plane(_) => Err(MlsaError::InvalidParameter(format!(
            "{} needs one-dimensional covariates",
            descriptor.name()
        ))),
    };
    let columns = match descriptor {
        ClassDescriptor::Thresholds => {
            let xs = line(covariates)?;
            let order = ranks(&xs)?;
            (0..=xs.len()).map(|k| column_from_sorted(&order, |r| r >= k)).collect()
        }
        ClassDescriptor::Intervals => {
            let xs = line(covariates)?;
            let order = ranks(&xs)?;
            let n = xs.len();
            let mut cols = vec![vec![0.0; n]];
            for a in 0..n {
                for b in a..n {
                    cols.push(column_from_sorted(&order, |r| a <= r && r <= b));
                }
            }
            cols
        }
        ClassDescriptor::UnionsOfIntervals(k) => {
            let xs = line(covariates)?;
            let order = ranks(&xs)?;
            // Strictly increasing boundaries b1 < b2 < ... < b2j in 0..=n
            // give exactly j separated runs [b1, b2), [b3, b4), ...
            let mut bounds = Vec::new();
            push_boundaries(xs.len(), *k, 0, &mut Vec::new(), &mut bounds);
            bounds
                .iter()
                .map(|b| {
                    column_from_sorted(&order, |r| b.chunks(2).any(|run| run[0] <= r && r < run[1]))
                })
                .collect()
        }
        ClassDescriptor::AxisRectangles => {
            let pts = match covariates {
                Covariates::Plane(p) => p.clone(),
                Covariates::Line(_) => {
                    return Err(MlsaError::InvalidParameter("axis-rectangles needs planar covariates".into()))
                }
            };
            let xs: Vec<f64> = pts.iter().map(|p| p[0]).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p[1]).collect();
            let x_order = ranks(&xs)?;
            ranks(&ys)?;
            let n = pts.len();
            let mut seen = HashSet::new();
            let mut cols = vec![vec![0.0; n]];
            seen.insert(vec![false; n]);
            for a in 0..n {
                for b in a..n {
                    let mut slab: Vec<usize> = x_order[a..=b].to_vec();
                    slab.sort_by(|&p, &q| ys[p].total_cmp(&ys[q]));
                    for c in 0..slab.len() {
                        for d in c..slab.len() {
                            let mut mask = vec![false; n];
                            for &p in &slab[c..=d] {
                                mask[p] = true;
                            }
                            if seen.insert(mask.clone()) {
                                cols.push(mask.iter().map(|&v| f64::from(u8::from(v))).collect());
                            }
                        }
                    }
                }
            }
            cols
        }
        ClassDescriptor::Explicit { table, .. } => {
            if table.n_samples() != covariates.len() {
                return Err(MlsaError::LengthMismatch {
                    what: "explicit table",
                    got: table.n_samples(),
                    expected: covariates.len(),
                });
            }
            return Ok(table.clone());
        }
    };
    PredictionTable::from_columns(columns)
}

/// `sum_{k <= d} C(n, k)`.
pub fn sauer_bound(n: usize, d: usize) -> f64 {
    let mut term = 1.0;
    let mut total = 1.0;
    for k in 1..=d.min(n) {
        term *= (n - k + 1) as f64 / k as f64;
        total += term;
    }
    total
}

/// Classification oracle inequality `LOO <= 8 minL / n + 200 d ln n / n`.
pub fn verify_cor_loo01(
    output: &MlsaOutput,
    table: &PredictionTable,
    sample: &LabeledSample,
    d: usize,
) -> Result<BoundCertificate> {
    let n = table.n_samples();
    let grid = classification_grid(d, n)?;
    if output.per_level.len() != grid.len() || output.medians.len() != n {
        return Err(MlsaError::GridLengthMismatch {
            levels: output.per_level.len(),
            expected: grid.len(),
        });
    }
    let erm = LossMatrix::new(table, sample, &LossModel::zero_one())?.erm_loss();
    let nf = n as f64;
    let multiplier = 8.0 / nf;
    Ok(BoundCertificate::new(
        "classification-corollary",
        output.loo_error,
        multiplier * erm + 200.0 * d as f64 * nf.ln() / nf,
        BoundComponents {
            n,
            erm_loss: erm,
            t_max: grid.t_max(),
            delta: 1.0,
            c_g: GROWTH_CONSTANT,
            rho: NOMINAL_RHO,
            multiplier,
        },
    ))
}

/// Uniform covariates on [0, 1], labels from a planted threshold with
/// independent flips of probability `noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTask {
    pub threshold: f64,
    pub noise: f64,
}

impl ThresholdTask {
    pub fn new(threshold: f64, noise: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) || !(0.0..=1.0).contains(&noise) {
            return Err(MlsaError::InvalidParameter("threshold and noise must lie in [0, 1]".into()));
        }
        Ok(Self { threshold, noise })
    }
}

/// `count` distinct uniform draws on [0, 1].
pub fn distinct_uniform(count: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut seen = HashSet::new();
    let mut xs = Vec::with_capacity(count);
    while xs.len() < count {
        let x: f64 = rng.random();
        if seen.insert(x.to_bits()) {
            xs.push(x);
        }
    }
    xs
}

impl TaskGenerator for ThresholdTask {
    fn draw(&self, count: usize, rng: &mut ChaCha8Rng) -> Result<(PredictionTable, LabeledSample)> {
        let xs = distinct_uniform(count, rng);
        let ys = xs
            .iter()
            .map(|&x| {
                let clean = x >= self.threshold;
                let flip = rng.random_bool(self.noise);
                f64::from(u8::from(clean != flip))
            })
            .collect();
        let table = restrict_class(&ClassDescriptor::Thresholds, &Covariates::Line(xs))?;
        Ok((table, LabeledSample::new(ys)))
    }

    fn loss(&self) -> LossModel {
        LossModel::zero_one()
    }

    fn aggregation(&self) -> Aggregation {
        Aggregation::MajorityVote
    }

    fn grid(&self, sample_size: usize) -> Result<ToleranceGrid> {
        classification_grid(1, sample_size)
    }

    /// Risk of `1{x >= a}` is `noise + (1 - 2 noise) |a - threshold|` on [0, 1].
    fn min_risk(&self) -> f64 {
        if self.noise <= 0.5 {
            self.noise
        } else {
            self.noise + (1.0 - 2.0 * self.noise) * self.threshold.max(1.0 - self.threshold)
        }
    }

    fn oracle_constants(&self, sample_size: usize) -> (f64, f64) {
        (8.0, 200.0 * (sample_size as f64).ln())
    }
}
