//! Randomized audit suites over many small instances.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use mlsa::audit::{check_agg_assumption, growth_audit_from, sandwich_violations, simulate_generalization, verify_main_theorem};
use mlsa::classification::{classification_grid, ThresholdTask, GROWTH_CONSTANT, NOMINAL_RHO};
use mlsa::density::{density_grid, log_loss_table, DensityClass};
use mlsa::regression::regression_grid;
use mlsa::seed::{derive_seed, rng_for};
use mlsa::vaw::{condition_number, default_svd_tol};
use mlsa::{run_mlsa, Aggregation, LabeledSample, LossMatrix, LossModel, PredictionTable, ToleranceGrid};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{HarnessError, Result, StageExt};
use crate::generate::{vaw, InstanceData};
use crate::output::{csv_bytes, write_file, CsvRow};
use crate::pipeline::{run_vaw, InstanceReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    /// Level-set sandwich on random finite classes.
    Sandwich,
    /// Aggregation inequality on random subsets and rows.
    Aggregation,
    /// Linear leave-one-out bound and pseudoinverse checks.
    Vaw,
    /// Held-out loss of the procedure on fresh thresholds data.
    Generalization,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Self::Sandwich => "sandwich",
            Self::Aggregation => "aggregation",
            Self::Vaw => "vaw",
            Self::Generalization => "generalization",
        }
    }

    /// Default case count: instances per family, trials per rule,
    /// instances, or repetitions.
    pub fn default_count(self) -> usize {
        match self {
            Self::Sandwich | Self::Vaw => 100,
            Self::Aggregation => 1000,
            Self::Generalization => 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteSummary {
    pub suite: String,
    pub seed: u64,
    pub count: usize,
    pub cases: usize,
    pub passed: bool,
    pub wall_ms: f64,
    pub stats: BTreeMap<String, f64>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SuiteRun {
    pub summary: SuiteSummary,
    pub csv: Vec<u8>,
}

impl SuiteRun {
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_file(dir, &format!("{}.csv", self.summary.suite), &self.csv)?;
        write_file(dir, &format!("{}.toml", self.summary.suite), toml::to_string(&self.summary)?.as_bytes())
    }
}

pub fn run_suite(suite: Suite, seed: u64, count: usize) -> Result<SuiteRun> {
    if count == 0 {
        return Err(HarnessError::Config("suite count must be positive".into()));
    }
    let start = Instant::now();
    let (cases, stats, failures, csv) = match suite {
        Suite::Sandwich => sandwich(seed, count)?,
        Suite::Aggregation => aggregation(seed, count)?,
        Suite::Vaw => vaw_suite(seed, count)?,
        Suite::Generalization => generalization(seed, count)?,
    };
    Ok(SuiteRun {
        summary: SuiteSummary {
            suite: suite.name().into(),
            seed,
            count,
            cases,
            passed: failures.is_empty(),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            stats,
            failures,
        },
        csv,
    })
}

type Parts = (usize, BTreeMap<String, f64>, Vec<String>, Vec<u8>);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Classification,
    Regression,
    Density,
}

impl Family {
    fn name(self) -> &'static str {
        match self {
            Self::Classification => "classification",
            Self::Regression => "regression",
            Self::Density => "density",
        }
    }
}

struct FiniteInstance {
    table: PredictionTable,
    sample: LabeledSample,
    loss: LossModel,
    agg: Aggregation,
    grid: ToleranceGrid,
}

fn random_density(rng: &mut ChaCha8Rng, size: usize, support: usize) -> mlsa::Result<DensityClass> {
    let probs = (0..size)
        .map(|_| {
            let w: Vec<f64> = (0..support).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|v| v / s).collect()
        })
        .collect();
    DensityClass::new(probs)
}

/// `n <= 50` samples and `2 <= |H| <= 200` members.
fn finite_instance(family: Family, k: usize, rng: &mut ChaCha8Rng) -> mlsa::Result<FiniteInstance> {
    let n = rng.random_range(3..=50);
    let m = rng.random_range(2..=200);
    match family {
        Family::Classification => {
            let columns = (0..m)
                .map(|_| {
                    let bias: f64 = rng.random();
                    (0..n).map(|_| f64::from(u8::from(rng.random_bool(bias)))).collect()
                })
                .collect();
            let labels = (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect();
            let d = rng.random_range(1..=3);
            Ok(FiniteInstance {
                table: PredictionTable::with_multiplicity(columns)?,
                sample: LabeledSample::new(labels),
                loss: LossModel::zero_one(),
                agg: Aggregation::MajorityVote,
                grid: classification_grid(d, n)?,
            })
        }
        Family::Regression => {
            let columns = (0..m).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
            let ys = (0..n).map(|_| rng.random::<f64>()).collect();
            let loss = if k % 2 == 0 {
                LossModel::squared(1.0)
            } else {
                LossModel::absolute(1.0)
            };
            Ok(FiniteInstance {
                table: PredictionTable::with_multiplicity(columns)?,
                sample: LabeledSample::new(ys),
                loss,
                agg: Aggregation::Average,
                grid: regression_grid(1.0, m)?,
            })
        }
        Family::Density => {
            let support = rng.random_range(2..=32);
            let class = random_density(rng, m, support)?;
            let source = rng.random_range(0..m);
            let p = &class.probs()[source];
            let obs: Vec<usize> = (0..n)
                .map(|_| {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    p.iter()
                        .position(|&q| {
                            acc += q;
                            u < acc
                        })
                        .unwrap_or(support - 1)
                })
                .collect();
            let (table, sample, loss) = log_loss_table(&class, &obs)?;
            Ok(FiniteInstance {
                grid: density_grid(class.log_ratio_bound(), m)?,
                table,
                sample,
                loss,
                agg: Aggregation::Average,
            })
        }
    }
}

/// Criterion-style sandwich check on every index and grid level, plus the
/// usual CSV row from a full run.
fn sandwich(seed: u64, count: usize) -> Result<Parts> {
    let families = [Family::Classification, Family::Regression, Family::Density];
    let jobs: Vec<(Family, usize)> = families
        .iter()
        .flat_map(|&f| (0..count).map(move |k| (f, k)))
        .collect();
    let results: Vec<(CsvRow, usize, usize)> = jobs
        .par_iter()
        .map(|&(family, k)| {
            let id = format!("{}-{k:04}", family.name());
            let mut rng = rng_for(seed, &format!("sandwich/{}", family.name()), k as u64);
            let inst = finite_instance(family, k, &mut rng).stage("generate", &id)?;
            let lm = LossMatrix::new(&inst.table, &inst.sample, &inst.loss).stage("audit", &id)?;
            let delta = inst.grid.gap();
            let violations: usize = sandwich_violations(&lm, inst.grid.levels(), delta).iter().sum();
            let checked = inst.grid.len() * lm.n_samples();
            let output = run_mlsa(&inst.table, &inst.sample, &inst.loss, &inst.grid, inst.agg).stage("mlsa", &id)?;
            let audit = growth_audit_from(&lm, inst.grid.levels(), delta, GROWTH_CONSTANT).stage("audit", &id)?;
            let n = lm.n_samples();
            let (bound, slack) = if audit.good_fraction > 0.5 {
                let c = verify_main_theorem(&output, &audit, lm.erm_loss(), &inst.grid, NOMINAL_RHO)
                    .stage("certify", &id)?
                    .nominal;
                (c.rhs, c.slack)
            } else {
                (f64::NAN, f64::NAN)
            };
            let row = CsvRow {
                instance_id: id,
                n,
                d: lm.n_hypotheses(),
                loo: output.loo_error,
                erm_per_n: lm.erm_loss() / n as f64,
                bound,
                slack,
                rho_hat: Some(audit.good_fraction),
            };
            Ok((row, violations, checked))
        })
        .collect::<Result<_>>()?;
    let mut stats = BTreeMap::new();
    let mut failures = Vec::new();
    for family in families {
        let of: Vec<_> = results
            .iter()
            .filter(|r| r.0.instance_id.starts_with(family.name()))
            .collect();
        let v: usize = of.iter().map(|r| r.1).sum();
        stats.insert(format!("{}/violations", family.name()), v as f64);
        stats.insert(format!("{}/checked_pairs", family.name()), of.iter().map(|r| r.2).sum::<usize>() as f64);
        for r in of.iter().filter(|r| r.1 > 0) {
            failures.push(format!("{}: {} (index, level) sandwich violations", r.0.instance_id, r.1));
        }
    }
    let rows: Vec<CsvRow> = results.into_iter().map(|r| r.0).collect();
    Ok((rows.len(), stats, failures, csv_bytes(&rows)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct AggRow {
    rule: String,
    loss: String,
    trials: usize,
    violations: usize,
    worst_ratio: f64,
    first_aggregated_loss: Option<f64>,
    first_mean_loss: Option<f64>,
}

/// Majority vote under 0-1 loss and averaging under squared, absolute and
/// log loss, each on its own random table.
fn aggregation(seed: u64, trials: usize) -> Result<Parts> {
    let (n, m) = (40, 30);
    let combos: [(&str, Aggregation, LossModel); 4] = [
        ("zero-one", Aggregation::MajorityVote, LossModel::zero_one()),
        ("squared", Aggregation::Average, LossModel::squared(1.0)),
        ("absolute", Aggregation::Average, LossModel::absolute(1.0)),
        ("neg-log", Aggregation::Average, LossModel::neg_log(1.0)),
    ];
    let mut rows = Vec::new();
    let mut stats = BTreeMap::new();
    let mut failures = Vec::new();
    for (k, (name, agg, loss)) in combos.into_iter().enumerate() {
        let id = format!("{}/{name}", agg.name());
        let mut rng = rng_for(seed, "aggregation-table", k as u64);
        let (table, sample, loss) = match name {
            "zero-one" => {
                let cols = (0..m)
                    .map(|_| (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect())
                    .collect();
                let ys = (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect();
                (PredictionTable::with_multiplicity(cols), LabeledSample::new(ys), loss)
            }
            "neg-log" => {
                let class = random_density(&mut rng, m, 8).stage("generate", &id)?;
                let obs: Vec<usize> = (0..n).map(|_| rng.random_range(0..8)).collect();
                let (t, s, l) = log_loss_table(&class, &obs).stage("generate", &id)?;
                (Ok(t), s, l)
            }
            _ => {
                let cols = (0..m).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
                let ys = (0..n).map(|_| rng.random::<f64>()).collect();
                (PredictionTable::with_multiplicity(cols), LabeledSample::new(ys), loss)
            }
        };
        let table = table.stage("generate", &id)?;
        let report = check_agg_assumption(agg, &loss, &table, &sample, trials, derive_seed(seed, "aggregation", k as u64))
            .stage("audit", &id)?;
        stats.insert(format!("{id}/violations"), report.violations as f64);
        stats.insert(format!("{id}/worst_ratio"), report.worst_ratio);
        if let Some(v) = &report.first_violation {
            failures.push(format!(
                "{id}: {} of {trials} trials violate; first at row {} with subset size {}: aggregated loss {} > mean loss {}",
                report.violations,
                v.row,
                v.subset.len(),
                v.aggregated_loss,
                v.mean_loss
            ));
        }
        rows.push(AggRow {
            rule: agg.name().into(),
            loss: loss.name(),
            trials,
            violations: report.violations,
            worst_ratio: report.worst_ratio,
            first_aggregated_loss: report.first_violation.as_ref().map(|v| v.aggregated_loss),
            first_mean_loss: report.first_violation.as_ref().map(|v| v.mean_loss),
        });
    }
    Ok((rows.len() * trials, stats, failures, csv_bytes(&rows)?))
}

/// Design shapes cycle through full-rank, low-rank, sparse with a repeated
/// column, and wide (`n < d`).
fn vaw_design(k: usize, rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DVector<f64>) {
    let n = rng.random_range(2..=50);
    let d = rng.random_range(1..=10);
    let data = match k % 4 {
        0 => vaw(n, d, None, 0.5, rng),
        1 => {
            let top = n.min(d);
            let rank = if top > 1 { rng.random_range(1..top) } else { 1 };
            vaw(n, d, Some(rank), 0.5, rng)
        }
        2 => {
            let d = d.max(2);
            let InstanceData::Vaw { mut x, y } = vaw(n, d, None, 0.5, rng) else {
                unreachable!()
            };
            for v in x.iter_mut() {
                if rng.random_bool(0.6) {
                    *v = 0.0;
                }
            }
            let first = x.column(0).into_owned();
            x.set_column(d - 1, &first);
            InstanceData::Vaw { x, y }
        }
        _ => {
            let n = rng.random_range(2..=9);
            let d = rng.random_range(n + 1..=10);
            vaw(n, d, None, 0.5, rng)
        }
    };
    let InstanceData::Vaw { x, y } = data else { unreachable!() };
    (x, y)
}

/// Largest condition number over the retained spectrum kept in the vaw
/// suite. The pseudoinverse identity error grows like `eps * kappa^2 /
/// sigma_max`, so a fixed absolute tolerance needs a bounded `kappa`.
pub const VAW_MAX_CONDITION: f64 = 1e3;

fn vaw_suite(seed: u64, count: usize) -> Result<Parts> {
    let drawn = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_for(seed, "vaw-suite", k as u64);
            let id = format!("vaw-{k:04}");
            let mut redraws = 0usize;
            loop {
                let (x, y) = vaw_design(k, &mut rng);
                let kappa = condition_number(&x, default_svd_tol(x.nrows(), x.ncols())).stage("draw", &id)?;
                if kappa <= VAW_MAX_CONDITION {
                    return Ok((run_vaw(&id, &x, &y, None)?, redraws));
                }
                redraws += 1;
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let redrawn: usize = drawn.iter().map(|(_, r)| r).sum();
    let reports: Vec<InstanceReport> = drawn.into_iter().map(|(r, _)| r).collect();
    let mut stats = BTreeMap::new();
    let worst = |name: &str| {
        reports
            .iter()
            .map(|r| r.details[name])
            .fold(f64::NEG_INFINITY, f64::max)
    };
    stats.insert("max_pinv_identity_error".into(), worst("pinv_identity_error"));
    stats.insert("max_condition".into(), worst("condition"));
    stats.insert(
        "max_leverage_sum_error".into(),
        reports
            .iter()
            .map(|r| (r.details["leverage_sum"] - r.details["rank"]).abs())
            .fold(0.0, f64::max),
    );
    stats.insert("redrawn_ill_conditioned".into(), redrawn as f64);
    stats.insert("max_leverage".into(), worst("leverage_max"));
    stats.insert(
        "min_leverage".into(),
        reports.iter().map(|r| r.details["leverage_min"]).fold(f64::INFINITY, f64::min),
    );
    stats.insert(
        "rank_deficient".into(),
        reports
            .iter()
            .filter(|r| (r.details["rank"] as usize) < r.d)
            .count() as f64,
    );
    stats.insert("min_slack".into(), reports.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min));
    let failures = reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| {
            let bad: Vec<&str> = r
                .checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| c.name.as_str())
                .chain(r.certificates.iter().filter(|c| !c.passes()).map(|c| c.anchor.as_str()))
                .collect();
            format!("{}: {}", r.id, bad.join(", "))
        })
        .collect();
    let rows: Vec<CsvRow> = reports.iter().map(CsvRow::from).collect();
    Ok((rows.len(), stats, failures, csv_bytes(&rows)?))
}

/// Thresholds at 1/2 with 10% label noise, `n = 30` training points.
pub const GENERALIZATION_N: usize = 30;
pub const GENERALIZATION_THRESHOLD: f64 = 0.5;
pub const GENERALIZATION_NOISE: f64 = 0.1;

fn generalization(seed: u64, repetitions: usize) -> Result<Parts> {
    let id = "thresholds";
    let task = ThresholdTask::new(GENERALIZATION_THRESHOLD, GENERALIZATION_NOISE).stage("generate", id)?;
    let report = simulate_generalization(&task, GENERALIZATION_N, repetitions, seed).stage("simulate", id)?;
    let mut stats = BTreeMap::new();
    stats.insert("mean_test_loss".into(), report.mean_test_loss);
    stats.insert("stderr".into(), report.stderr);
    stats.insert("bound".into(), report.bound);
    let mut failures = Vec::new();
    if !report.within(3.0) {
        failures.push(format!(
            "mean held-out loss {} exceeds bound {} + 3 * {}",
            report.mean_test_loss, report.bound, report.stderr
        ));
    }
    Ok((repetitions, stats, failures, csv_bytes(&[report])?))
}
