use rayon::prelude::*;

use super::geometry::{membership_ha, unit_ball_point, GeometryReport, LogisticGeometry};
use super::{fit_erm, sigmoid, LogisticProblem, ERM_TOL};
use crate::engine::{in_level, median, MlsaOutput};
use crate::error::{MlsaError, Result};
use crate::grid::{level_count, ToleranceGrid};
use crate::seed::rng_for;

const CHUNK: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McConfig {
    /// Number of draws `k` from the reference measure.
    pub samples_per_level: usize,
    pub seed: u64,
    /// Fewest accepted draws an estimate may rest on.
    pub min_accepted: usize,
}

impl McConfig {
    pub fn new(samples_per_level: usize, seed: u64, min_accepted: usize) -> Result<Self> {
        if min_accepted < 100 || samples_per_level < min_accepted {
            return Err(MlsaError::InvalidParameter(format!(
                "need samples_per_level >= min_accepted >= 100, got {samples_per_level} and {min_accepted}"
            )));
        }
        Ok(Self {
            samples_per_level,
            seed,
            min_accepted,
        })
    }
}

/// Draws from the reference measure that fall in the enlarged set `H_A`,
/// shared by every (level, index) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCloud {
    d: usize,
    total: usize,
    points: Vec<f64>,
    full_loss: Vec<f64>,
}

impl SampleCloud {
    pub fn draw(geometry: &LogisticGeometry, problem: &LogisticProblem, mc: &McConfig) -> Result<Self> {
        Self::draw_component(geometry, problem, mc.samples_per_level, mc.seed, "logistic-mu-b")
    }

    pub(crate) fn draw_component(
        geometry: &LogisticGeometry,
        problem: &LogisticProblem,
        total: usize,
        seed: u64,
        component: &str,
    ) -> Result<Self> {
        let d = problem.d();
        let chunks: Vec<(Vec<f64>, Vec<f64>)> = (0..total.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut rng = rng_for(seed, component, c as u64);
                let count = CHUNK.min(total - c * CHUNK);
                let (mut u, mut theta) = (vec![0.0; d], vec![0.0; d]);
                let (mut pts, mut losses) = (Vec::new(), Vec::new());
                for _ in 0..count {
                    unit_ball_point(&mut rng, &mut u);
                    geometry.map_ball(&u, geometry.r_b, None, &mut theta);
                    if membership_ha(geometry, problem, &theta)? {
                        pts.extend_from_slice(&theta);
                        losses.push(problem.loss(&theta, None));
                    }
                }
                Ok((pts, losses))
            })
            .collect::<Result<_>>()?;
        let (mut points, mut full_loss) = (Vec::new(), Vec::new());
        for (p, l) in chunks {
            points.extend(p);
            full_loss.extend(l);
        }
        Ok(Self {
            d,
            total,
            points,
            full_loss,
        })
    }

    /// Number of draws from the reference measure.
    pub fn total(&self) -> usize {
        self.total
    }

    /// Number of draws inside `H_A`.
    pub fn len(&self) -> usize {
        self.full_loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.full_loss.is_empty()
    }

    pub fn point(&self, s: usize) -> &[f64] {
        &self.points[s * self.d..(s + 1) * self.d]
    }

    pub fn full_loss(&self, s: usize) -> f64 {
        self.full_loss[s]
    }

    pub fn ha_fraction(&self) -> f64 {
        self.len() as f64 / self.total as f64
    }
}

/// Reference minima. Both are taken over the same set of solver outputs
/// (the full fit and every leave-one-out fit), which keeps the sandwich
/// inclusions exact even though each fit is only approximate.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Anchors {
    pub full: f64,
    pub loo: Vec<f64>,
}

impl Anchors {
    pub fn compute(geometry: &LogisticGeometry, problem: &LogisticProblem) -> Result<Self> {
        let n = problem.n();
        let mut candidates = vec![geometry.erm.theta.clone()];
        let fits: Vec<_> = (0..n)
            .into_par_iter()
            .map(|i| fit_erm(problem, Some(i), ERM_TOL).map(|f| f.theta))
            .collect::<Result<_>>()?;
        candidates.extend(fits);
        let per_candidate: Vec<(f64, Vec<f64>)> = candidates
            .iter()
            .map(|th| {
                let s = th.as_slice();
                let full = problem.loss(s, None);
                (full, (0..n).map(|i| full - problem.sample_loss(i, s)).collect())
            })
            .collect();
        let full = per_candidate.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        let loo = (0..n)
            .map(|i| per_candidate.iter().map(|c| c.1[i]).fold(f64::INFINITY, f64::min))
            .collect();
        Ok(Self { full, loo })
    }

    fn reference(&self, exclude: Option<usize>) -> f64 {
        exclude.map_or(self.full, |i| self.loo[i])
    }
}

/// Excess `L_{S-i}(theta) - L*_{-i}` (or the full-sample version) of a cloud point.
fn excess(cloud: &SampleCloud, problem: &LogisticProblem, anchors: &Anchors, s: usize, exclude: Option<usize>) -> f64 {
    let dropped = exclude.map_or(0.0, |i| problem.sample_loss(i, cloud.point(s)));
    cloud.full_loss(s) - dropped - anchors.reference(exclude)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelEstimate {
    pub t: f64,
    pub exclude: Option<usize>,
    /// `accepted / total` draws.
    pub estimate: f64,
    pub stderr: f64,
    /// Cloud indices of accepted draws.
    pub accepted: Vec<usize>,
    pub total: usize,
}

pub(crate) fn estimate_in_cloud(
    cloud: &SampleCloud,
    problem: &LogisticProblem,
    anchors: &Anchors,
    t: f64,
    exclude: Option<usize>,
    min_accepted: usize,
) -> Result<LevelEstimate> {
    if !(t >= 0.0) {
        return Err(MlsaError::InvalidParameter(format!("tolerance must be nonnegative, got {t}")));
    }
    let accepted: Vec<usize> = (0..cloud.len())
        .filter(|&s| in_level(excess(cloud, problem, anchors, s, exclude), t))
        .collect();
    if accepted.len() < min_accepted {
        return Err(MlsaError::InsufficientAcceptance {
            t,
            exclude,
            accepted: accepted.len(),
            required: min_accepted,
        });
    }
    let p = accepted.len() as f64 / cloud.total() as f64;
    Ok(LevelEstimate {
        t,
        exclude,
        estimate: p,
        stderr: (p * (1.0 - p) / cloud.total() as f64).sqrt(),
        accepted,
        total: cloud.total(),
    })
}

/// Monte-Carlo estimate of the reference measure of a (leave-one-out) level set.
pub fn estimate_level(
    geometry: &LogisticGeometry,
    problem: &LogisticProblem,
    t: f64,
    exclude: Option<usize>,
    mc: &McConfig,
) -> Result<(LevelEstimate, SampleCloud)> {
    if let Some(i) = exclude {
        crate::error::check_index("excluded sample", i, problem.n())?;
    }
    let anchors = Anchors::compute(geometry, problem)?;
    let cloud = SampleCloud::draw(geometry, problem, mc)?;
    Ok((estimate_in_cloud(&cloud, problem, &anchors, t, exclude, mc.min_accepted)?, cloud))
}

/// Mean of `sigma(y_i x_i^T theta)` over the accepted parameters.
pub fn aggregate_prob(accepted: &[&[f64]], problem: &LogisticProblem, i: usize) -> Result<f64> {
    if accepted.is_empty() {
        return Err(MlsaError::Empty("accepted parameters"));
    }
    crate::error::check_index("sample", i, problem.n())?;
    let total: f64 = accepted.iter().map(|th| sigmoid(problem.margin(i, th))).sum();
    Ok(total / accepted.len() as f64)
}

/// Levels `{k Delta : k = 1..=ceil(16 d ln max(8, 2 n r R))}` with gap `Delta`.
pub fn logistic_grid(geometry: &LogisticGeometry, problem: &LogisticProblem) -> Result<ToleranceGrid> {
    let count = level_count(16.0 * problem.d() as f64 * log_volume_factor(problem));
    ToleranceGrid::new((1..=count).map(|k| k as f64 * geometry.delta).collect(), geometry.delta)
}

/// `ln max(8, 2 n r R)`.
pub(crate) fn log_volume_factor(problem: &LogisticProblem) -> f64 {
    (8.0f64).max(2.0 * problem.n() as f64 * problem.r_big_r()).ln()
}

#[derive(Debug, Clone)]
pub struct LogisticRun {
    pub output: MlsaOutput,
    pub grid: ToleranceGrid,
    pub geometry: LogisticGeometry,
    pub report: GeometryReport,
    /// Smallest accepted count over all (level, index) cells.
    pub min_cell_accepted: usize,
    pub cloud_total: usize,
    pub cloud_in_ha: usize,
    /// (sample, index) pairs breaking `H_{t-D} ⊆ H_{t,i} ⊆ H_{t+D}` at some grid level.
    pub nestedness_violations: usize,
    /// (sample, index) pairs with per-sample loss above `Delta`.
    pub loss_bound_violations: usize,
}

/// First grid index `k` with `pred(levels[k])`, for a predicate monotone in `t`.
fn first_level(levels: &[f64], pred: impl Fn(f64) -> bool) -> usize {
    levels.partition_point(|&t| !pred(t))
}

/// Full procedure: per-level self-normalized averages over the accepted
/// draws of a single common cloud, then the lower median across levels.
pub fn run_mlsa_logistic(problem: &LogisticProblem, mc: &McConfig) -> Result<LogisticRun> {
    let geometry = LogisticGeometry::new(problem)?;
    let grid = logistic_grid(&geometry, problem)?;
    let anchors = Anchors::compute(&geometry, problem)?;
    let cloud = SampleCloud::draw(&geometry, problem, mc)?;
    let levels = grid.levels();
    let delta = grid.gap();
    let full_excess: Vec<f64> = (0..cloud.len()).map(|s| excess(&cloud, problem, &anchors, s, None)).collect();

    struct Cell {
        per_level: Vec<f64>,
        min_accepted: usize,
        nest_bad: usize,
        loss_bad: usize,
    }
    let cells: Vec<Cell> = (0..problem.n())
        .into_par_iter()
        .map(|i| {
            let mut rows: Vec<(f64, f64)> = Vec::with_capacity(cloud.len());
            let (mut nest_bad, mut loss_bad) = (0, 0);
            for s in 0..cloud.len() {
                let th = cloud.point(s);
                let margin = problem.margin(i, th);
                let li = super::softplus_neg(margin);
                if li > delta {
                    loss_bad += 1;
                }
                let e_i = cloud.full_loss(s) - li - anchors.loo[i];
                let e_full = full_excess[s];
                let k_lower = first_level(levels, |t| in_level(e_full, t - delta));
                let lower_bad = k_lower < levels.len() && !in_level(e_i, levels[k_lower]);
                let k_mid = first_level(levels, |t| in_level(e_i, t));
                let upper_bad = k_mid < levels.len() && !in_level(e_full, levels[k_mid] + delta);
                if lower_bad || upper_bad {
                    nest_bad += 1;
                }
                rows.push((e_i, sigmoid(margin)));
            }
            rows.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut per_level = Vec::with_capacity(levels.len());
            let (mut taken, mut sum) = (0usize, 0.0);
            let mut fewest = usize::MAX;
            for &t in levels {
                while taken < rows.len() && in_level(rows[taken].0, t) {
                    sum += rows[taken].1;
                    taken += 1;
                }
                if taken < mc.min_accepted {
                    return Err(MlsaError::InsufficientAcceptance {
                        t,
                        exclude: Some(i),
                        accepted: taken,
                        required: mc.min_accepted,
                    });
                }
                fewest = fewest.min(taken);
                per_level.push(sum / taken as f64);
            }
            Ok(Cell {
                per_level,
                min_accepted: fewest,
                nest_bad,
                loss_bad,
            })
        })
        .collect::<Result<_>>()?;

    let medians = cells.iter().map(|c| median(&c.per_level)).collect::<Result<Vec<_>>>()?;
    let loo_error = medians.iter().map(|p| -p.ln()).sum::<f64>() / medians.len() as f64;
    let per_level = (0..levels.len())
        .map(|k| cells.iter().map(|c| c.per_level[k]).collect())
        .collect();
    let report = geometry.report(problem, grid.len());
    Ok(LogisticRun {
        output: MlsaOutput {
            per_level,
            medians,
            loo_error,
        },
        min_cell_accepted: cells.iter().map(|c| c.min_accepted).min().unwrap_or(0),
        nestedness_violations: cells.iter().map(|c| c.nest_bad).sum(),
        loss_bound_violations: cells.iter().map(|c| c.loss_bad).sum(),
        cloud_total: cloud.total(),
        cloud_in_ha: cloud.len(),
        grid,
        geometry,
        report,
    })
}
