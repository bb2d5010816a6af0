use std::collections::BTreeMap;
use std::time::Instant;

use mlsa::audit::{grid_growth_audit, verify_main_theorem, BoundCertificate, BoundComponents, GrowthAudit};
use mlsa::classification::{classification_grid, verify_cor_loo01, ClassDescriptor};
use mlsa::density::{
    density_grid, log_loss_table, run_density, verify_cor_density, verify_smoothed_density,
    verify_smoothing_inflation, DensityClass,
};
use mlsa::engine::Aggregation;
use mlsa::logistic::{
    run_mlsa_logistic, verify_cor_logistic, verify_lemma_containment, verify_volume_lower_bound, volume_samples_required, LogisticGeometry,
    LogisticProblem, McConfig,
};
use mlsa::regression::{regression_grid, verify_cor_regression};
use mlsa::vaw::{condition_number, default_svd_tol, fit_transductive_vaw, pinv_identity_error, PINV_IDENTITY_TOL};
use mlsa::{run_mlsa, LabeledSample, LossMatrix, LossModel, MlsaOutput, PredictionTable, ToleranceGrid};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, Task};
use crate::error::{Result, StageExt};
use crate::generate::{generate_instance, instance_count, Instance, InstanceData};

/// Growth condition constant shared by every finite-class task.
const C_G: f64 = mlsa::classification::GROWTH_CONSTANT;
const NOMINAL_RHO: f64 = mlsa::classification::NOMINAL_RHO;
/// Tolerance for the leverage-sum check.
pub const LEVERAGE_SUM_TOL: f64 = 1e-8;

/// A pass/fail check that is not an upper bound on the leave-one-out error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
}

impl Check {
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= threshold,
            value,
            threshold,
        }
    }

    fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            passed: value >= threshold,
            value,
            threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthSummary {
    pub levels: usize,
    pub good_levels: usize,
    pub good_fraction: f64,
    pub c_g: f64,
    pub delta: f64,
    pub sandwich_ok: bool,
    pub max_ratio: f64,
}

impl From<&GrowthAudit> for GrowthSummary {
    fn from(a: &GrowthAudit) -> Self {
        Self {
            levels: a.per_level.len(),
            good_levels: a.good_levels(),
            good_fraction: a.good_fraction,
            c_g: a.c_g,
            delta: a.delta,
            sandwich_ok: a.sandwich_ok(),
            max_ratio: a.per_level.iter().map(|r| r.ratio).fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceReport {
    pub id: String,
    pub task: Task,
    pub n: usize,
    /// VC dimension, class size or parameter dimension, by task.
    pub d: usize,
    pub loo: f64,
    pub erm_per_n: f64,
    /// Right-hand side of the first certificate.
    pub bound: f64,
    pub slack: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_hat: Option<f64>,
    pub passed: bool,
    pub details: BTreeMap<String, f64>,
    pub timings_ms: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub growth: Option<GrowthSummary>,
    pub certificates: Vec<BoundCertificate>,
    pub checks: Vec<Check>,
}

/// Collects certificates and timings while a task runs.
struct Builder {
    id: String,
    task: Task,
    n: usize,
    d: usize,
    loo: f64,
    erm: f64,
    rho_hat: Option<f64>,
    growth: Option<GrowthSummary>,
    certificates: Vec<BoundCertificate>,
    checks: Vec<Check>,
    details: BTreeMap<String, f64>,
    timings: BTreeMap<String, f64>,
    clock: Instant,
}

impl Builder {
    fn new(id: &str, task: Task, n: usize, d: usize) -> Self {
        Self {
            id: id.into(),
            task,
            n,
            d,
            loo: f64::NAN,
            erm: f64::NAN,
            rho_hat: None,
            growth: None,
            certificates: Vec::new(),
            checks: Vec::new(),
            details: BTreeMap::new(),
            timings: BTreeMap::new(),
            clock: Instant::now(),
        }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.timings
            .insert(stage.into(), (now - self.clock).as_secs_f64() * 1e3);
        self.clock = now;
    }

    fn growth(&mut self, audit: &GrowthAudit, default_grid: bool) {
        let summary = GrowthSummary::from(audit);
        self.rho_hat = Some(summary.good_fraction);
        if default_grid {
            self.checks
                .push(Check::at_least("growth-fraction", summary.good_fraction, NOMINAL_RHO));
        } else {
            self.checks
                .push(Check::at_least("grid-majority", summary.good_fraction, 0.5 + f64::EPSILON));
        }
        self.checks.push(Check::at_most(
            "sandwich-violations",
            audit.per_level.iter().filter(|r| !r.sandwich_ok).count() as f64,
            0.0,
        ));
        self.growth = Some(summary);
    }

    /// Generic median-over-grid certificates, issued only when more than half
    /// of the grid satisfies the growth condition.
    fn main_theorem(&mut self, output: &MlsaOutput, audit: &GrowthAudit, erm: f64, grid: &ToleranceGrid, default_grid: bool) -> Result<()> {
        if audit.good_fraction <= 0.5 {
            return Ok(());
        }
        let certs = verify_main_theorem(output, audit, erm, grid, NOMINAL_RHO).stage("certify", &self.id)?;
        if default_grid {
            self.certificates.push(certs.nominal);
        }
        self.certificates.push(certs.empirical);
        Ok(())
    }

    fn finish(mut self) -> InstanceReport {
        self.lap("certify");
        let (bound, slack) = self
            .certificates
            .first()
            .map_or((f64::NAN, f64::NAN), |c| (c.rhs, c.slack));
        let passed = self.certificates.iter().all(BoundCertificate::passes) && self.checks.iter().all(|c| c.passed);
        InstanceReport {
            id: self.id,
            task: self.task,
            n: self.n,
            d: self.d,
            loo: self.loo,
            erm_per_n: self.erm / self.n as f64,
            bound,
            slack,
            rho_hat: self.rho_hat,
            passed,
            details: self.details,
            timings_ms: self.timings,
            growth: self.growth,
            certificates: self.certificates,
            checks: self.checks,
        }
    }
}

fn grid_or(config: &ExperimentConfig, default: impl FnOnce() -> mlsa::Result<ToleranceGrid>) -> mlsa::Result<(ToleranceGrid, bool)> {
    match config.grid {
        Some(g) => Ok((ToleranceGrid::arithmetic(g.step, g.count)?, false)),
        None => Ok((default()?, true)),
    }
}

pub fn run_instance(config: &ExperimentConfig, instance: &Instance) -> Result<InstanceReport> {
    match &instance.data {
        InstanceData::Classification {
            descriptor, table, sample, ..
        } => run_classification(config, &instance.id, descriptor, table, sample),
        InstanceData::Regression { table, sample, loss, .. } => run_regression(config, &instance.id, table, sample, loss),
        InstanceData::Density { class, observations } => run_density_task(config, &instance.id, class, observations),
        InstanceData::Logistic { problem } => run_logistic(config, &instance.id, instance.mc_seed, problem),
        InstanceData::Vaw { x, y } => run_vaw(&instance.id, x, y, config.instance.svd_tol),
    }
}

fn run_classification(
    config: &ExperimentConfig,
    id: &str,
    descriptor: &ClassDescriptor,
    table: &PredictionTable,
    sample: &LabeledSample,
) -> Result<InstanceReport> {
    let n = table.n_samples();
    let d = descriptor.vc_dimension();
    let mut b = Builder::new(id, Task::Classification, n, d);
    let loss = LossModel::zero_one();
    let (grid, default_grid) = grid_or(config, || classification_grid(d, n)).stage("grid", id)?;
    let output = run_mlsa(table, sample, &loss, &grid, Aggregation::MajorityVote).stage("mlsa", id)?;
    b.lap("mlsa");
    let audit = grid_growth_audit(table, sample, &loss, &grid, C_G).stage("audit", id)?;
    b.lap("audit");
    b.erm = LossMatrix::new(table, sample, &loss).stage("audit", id)?.erm_loss();
    b.loo = output.loo_error;
    b.details.insert("class_size".into(), table.n_hypotheses() as f64);
    b.details.insert("grid_levels".into(), grid.len() as f64);
    b.growth(&audit, default_grid);
    if default_grid {
        b.certificates
            .push(verify_cor_loo01(&output, table, sample, d).stage("certify", id)?);
        if b.erm == 0.0 {
            let nf = n as f64;
            let cert = &b.certificates[0];
            let realizable = BoundCertificate::new(
                "classification-corollary/realizable",
                output.loo_error,
                200.0 * d as f64 * nf.ln() / nf,
                cert.components.clone(),
            );
            b.certificates.push(realizable);
        }
    }
    let erm = b.erm;
    b.main_theorem(&output, &audit, erm, &grid, default_grid)?;
    Ok(b.finish())
}

fn run_regression(
    config: &ExperimentConfig,
    id: &str,
    table: &PredictionTable,
    sample: &LabeledSample,
    loss: &LossModel,
) -> Result<InstanceReport> {
    let (n, m) = (table.n_samples(), table.n_hypotheses());
    let mut b = Builder::new(id, Task::Regression, n, m);
    let (grid, default_grid) = grid_or(config, || regression_grid(loss.delta_bound, m)).stage("grid", id)?;
    let output = run_mlsa(table, sample, loss, &grid, Aggregation::Average).stage("mlsa", id)?;
    b.lap("mlsa");
    let audit = grid_growth_audit(table, sample, loss, &grid, C_G).stage("audit", id)?;
    b.lap("audit");
    b.erm = LossMatrix::new(table, sample, loss).stage("audit", id)?.erm_loss();
    b.loo = output.loo_error;
    b.details.insert("loss_bound".into(), loss.delta_bound);
    b.details.insert("grid_levels".into(), grid.len() as f64);
    b.growth(&audit, default_grid);
    if default_grid {
        b.certificates
            .push(verify_cor_regression(&output, table, sample, loss).stage("certify", id)?);
    }
    let erm = b.erm;
    b.main_theorem(&output, &audit, erm, &grid, default_grid)?;
    Ok(b.finish())
}

fn run_density_task(config: &ExperimentConfig, id: &str, class: &DensityClass, observations: &[usize]) -> Result<InstanceReport> {
    let n = observations.len();
    let mut b = Builder::new(id, Task::Density, n, class.size());
    let eps = config.smoothing().map_err(|e| crate::error::HarnessError::Config(e.to_string()))?.epsilon(n);
    let finite = class.log_ratio_bound().is_finite();
    b.details.insert("log_ratio_bound".into(), class.log_ratio_bound());
    b.details.insert("support".into(), class.support_size() as f64);
    b.erm = class
        .log_losses(observations)
        .stage("audit", id)?
        .into_iter()
        .fold(f64::INFINITY, f64::min);

    // Certificates for the pipeline actually used go first.
    let mut unsmoothed = Vec::new();
    if finite {
        let output = run_density(class, observations).stage("mlsa", id)?;
        b.lap("mlsa");
        b.details.insert("unsmoothed_loo".into(), output.loo_error);
        let cert = verify_cor_density(&output, class, observations).stage("certify", id)?;
        if eps.is_none() {
            b.loo = output.loo_error;
            b.certificates.push(cert);
            audit_density(config, &mut b, class, observations, &output)?;
        } else {
            unsmoothed.push(cert);
        }
    } else if eps.is_none() {
        return Err(mlsa::MlsaError::UnboundedLogRatio).stage("mlsa", id);
    }
    if let Some(eps) = eps {
        let (output, certs) = verify_smoothed_density(class, observations, eps).stage("mlsa", id)?;
        b.lap("smoothed-mlsa");
        let smoothed = mlsa::density::smooth_class(class, eps).stage("smooth", id)?;
        b.details.insert("epsilon".into(), eps);
        b.details.insert("smoothed_log_ratio_bound".into(), smoothed.log_ratio_bound());
        b.loo = output.loo_error;
        if let Some(inv) = certs.inverse_n {
            b.certificates.push(inv);
        }
        b.certificates.push(certs.general);
        b.certificates
            .push(verify_smoothing_inflation(class, observations, eps).stage("certify", id)?);
        audit_density(config, &mut b, &smoothed, observations, &output)?;
    }
    b.certificates.extend(unsmoothed);
    Ok(b.finish())
}

/// Growth audit of the density pipeline on `class` (already smoothed if needed).
fn audit_density(
    config: &ExperimentConfig,
    b: &mut Builder,
    class: &DensityClass,
    observations: &[usize],
    output: &MlsaOutput,
) -> Result<()> {
    if class.size() < 2 {
        return Ok(());
    }
    let id = b.id.clone();
    let (table, sample, loss) = log_loss_table(class, observations).stage("audit", &id)?;
    let (grid, default_grid) = grid_or(config, || density_grid(class.log_ratio_bound(), class.size())).stage("grid", &id)?;
    let audit = grid_growth_audit(&table, &sample, &loss, &grid, C_G).stage("audit", &id)?;
    b.lap("audit");
    b.growth(&audit, default_grid);
    let erm = LossMatrix::new(&table, &sample, &loss).stage("audit", &id)?.erm_loss();
    // The generic certificate is stated for the class the procedure ran on.
    if default_grid {
        b.main_theorem(output, &audit, erm, &grid, true)?;
    }
    Ok(())
}

fn run_logistic(config: &ExperimentConfig, id: &str, mc_seed: u64, problem: &LogisticProblem) -> Result<InstanceReport> {
    let (n, d) = (problem.n(), problem.d());
    let mut b = Builder::new(id, Task::Logistic, n, d);
    let geometry = LogisticGeometry::new(problem).stage("geometry", id)?;
    b.lap("geometry");
    b.erm = geometry.erm.loss;
    b.details.insert("delta".into(), geometry.delta);
    b.details.insert("r_b".into(), geometry.r_b);
    b.details.insert("lambda_min".into(), geometry.lambda_min);
    b.details.insert("theta_star_norm".into(), geometry.erm.theta.norm());
    let mc = &config.mc;
    if mc.aggregate {
        let settings = McConfig::new(mc.samples, mc_seed, mc.min_accepted).stage("mlsa", id)?;
        let run = run_mlsa_logistic(problem, &settings).stage("mlsa", id)?;
        b.lap("mlsa");
        b.loo = run.output.loo_error;
        b.details.insert("grid_levels".into(), run.grid.len() as f64);
        b.details.insert("ha_fraction".into(), run.cloud_in_ha as f64 / run.cloud_total as f64);
        b.details.insert("min_cell_accepted".into(), run.min_cell_accepted as f64);
        b.certificates
            .push(verify_cor_logistic(&run.output, &run.geometry, problem).stage("certify", id)?);
        b.checks
            .push(Check::at_most("nestedness-violations", run.nestedness_violations as f64, 0.0));
        b.checks
            .push(Check::at_most("loss-bound-violations", run.loss_bound_violations as f64, 0.0));
    }
    if mc.geometry {
        let seed = mlsa::seed::derive_seed(mc_seed, "geometry", 0);
        let containment_mc = McConfig::new(mc.containment_samples.max(mc.min_accepted), seed, mc.min_accepted)
            .stage("containment", id)?;
        let containment = verify_lemma_containment(&geometry, problem, &containment_mc).stage("containment", id)?;
        b.lap("containment");
        b.details.insert("containment_fraction".into(), containment.fraction);
        b.details.insert("interior".into(), f64::from(u8::from(containment.interior)));
        b.checks
            .push(Check::at_most("containment-violations", containment.violations as f64, 0.0));
        b.checks.push(Check {
            name: "containment-halfspace".into(),
            passed: containment.passed,
            value: containment.fraction,
            threshold: if containment.interior { 1.0 } else { 0.5 },
        });
        let volume_samples = volume_samples(problem, mc.samples, mc.min_accepted);
        let volume_mc = McConfig::new(volume_samples, seed, mc.min_accepted).stage("volume", id)?;
        let volume = verify_volume_lower_bound(&geometry, problem, &volume_mc).stage("volume", id)?;
        b.lap("volume");
        b.details.insert("volume_samples".into(), volume_samples as f64);
        b.details.insert("volume_stderr".into(), volume.stderr);
        b.checks.push(Check {
            name: "volume-lower-bound".into(),
            passed: volume.passed,
            value: volume.estimate,
            threshold: volume.threshold,
        });
    }
    Ok(b.finish())
}

/// Enough draws that `min_accepted` hits are expected at the volume threshold.
pub fn volume_samples(problem: &LogisticProblem, samples: usize, min_accepted: usize) -> usize {
    samples.max(volume_samples_required(problem, min_accepted))
}

/// Linear leave-one-out bound, normalized per sample:
/// `loo_sq / n <= 2 (fit_sq + rank * m^2) / n`.
pub fn run_vaw(id: &str, x: &DMatrix<f64>, y: &DVector<f64>, svd_tol: Option<f64>) -> Result<InstanceReport> {
    let (n, d) = (x.nrows(), x.ncols());
    let mut b = Builder::new(id, Task::Vaw, n, d);
    let tol = svd_tol.unwrap_or_else(|| default_svd_tol(n, d));
    let fit = fit_transductive_vaw(x, y, tol).stage("fit", id)?;
    b.lap("fit");
    let nf = n as f64;
    b.loo = fit.loo_sq_sum / nf;
    b.erm = fit.fit_sq_sum;
    b.certificates.push(BoundCertificate::new(
        "linear-loo-bound",
        fit.loo_sq_sum / nf,
        fit.bound_rhs() / nf,
        // rhs = multiplier * (erm_loss + t_max * delta), with t_max = rank, delta = m^2.
        BoundComponents {
            n,
            erm_loss: fit.fit_sq_sum,
            t_max: fit.rank as f64,
            delta: fit.m_sq,
            c_g: 1.0,
            rho: 1.0,
            multiplier: 2.0 / nf,
        },
    ));
    let lev_min = fit.leverages.iter().copied().fold(f64::INFINITY, f64::min);
    let lev_max = fit.leverages.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lev_sum: f64 = fit.leverages.iter().sum();
    let pinv_err = pinv_identity_error(x, tol).stage("fit", id)?;
    b.details.insert("rank".into(), fit.rank as f64);
    b.details.insert("m_sq".into(), fit.m_sq);
    b.details.insert("leverage_min".into(), lev_min);
    b.details.insert("leverage_max".into(), lev_max);
    b.details.insert("leverage_sum".into(), lev_sum);
    b.details.insert("pinv_identity_error".into(), pinv_err);
    b.details.insert("svd_tol".into(), tol);
    b.details.insert("condition".into(), condition_number(x, tol).stage("fit", id)?);
    // Leverages lie in [0, 1] up to rounding of order LEVERAGE_SUM_TOL.
    b.checks.push(Check::at_least("leverage-min", lev_min, -LEVERAGE_SUM_TOL));
    b.checks.push(Check::at_most("leverage-max", lev_max, 1.0 + LEVERAGE_SUM_TOL));
    b.checks
        .push(Check::at_most("leverage-sum-error", (lev_sum - fit.rank as f64).abs(), LEVERAGE_SUM_TOL));
    b.checks.push(Check::at_most("pinv-identity-error", pinv_err, PINV_IDENTITY_TOL));
    Ok(b.finish())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub passed: bool,
    pub instances_total: usize,
    pub instances_failed: usize,
    pub wall_ms: f64,
    pub instances: Vec<InstanceReport>,
}

impl RunReport {
    pub fn new(config: ExperimentConfig, instances: Vec<InstanceReport>, wall_ms: f64) -> Self {
        let failed = instances.iter().filter(|r| !r.passed).count();
        Self {
            config,
            passed: failed == 0,
            instances_total: instances.len(),
            instances_failed: failed,
            wall_ms,
            instances,
        }
    }
}

/// Generates and runs every instance of `config`, in parallel.
pub fn run(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let start = Instant::now();
    let reports = (0..instance_count(config))
        .into_par_iter()
        .map(|k| {
            let instance = generate_instance(config, k)?;
            run_instance(config, &instance)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunReport::new(config.clone(), reports, start.elapsed().as_secs_f64() * 1e3))
}

/// Runs every sweep point; instance ids are prefixed with the point label.
pub fn sweep(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let start = Instant::now();
    let mut all = Vec::new();
    for (label, point) in config.sweep_points()? {
        let report = run(&point)?;
        for mut r in report.instances {
            if !label.is_empty() {
                r.id = format!("{label}/{}", r.id);
            }
            all.push(r);
        }
    }
    Ok(RunReport::new(config.clone(), all, start.elapsed().as_secs_f64() * 1e3))
}
