//! Acceptance criteria. Each test prints one PASS/FAIL line and asserts the
//! same verdict. Tests hold a shared lock so that wall-time limits are
//! measured without competing runs.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::{Mutex, MutexGuard, OnceLock};

use mlsa_cli::output::write_run;
use mlsa_cli::suites::{GENERALIZATION_N, GENERALIZATION_NOISE};
use mlsa_cli::{run_suite, sweep, InstanceReport, RunReport, Suite, SuiteRun};
use mlsa_criteria::{load_config, timed, Timed, Verdict};

const SLACK_TOL: f64 = 1e-9;

const SANDWICH_SEED: u64 = 1001;
const AGGREGATION_SEED: u64 = 1002;
const VAW_SEED: u64 = 1008;
const GENERALIZATION_SEED: u64 = 1009;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn conclude(v: &Verdict) {
    v.emit();
    assert!(v.passed, "{v}");
}

type CachedSweep = OnceLock<Timed<RunReport>>;
type CachedSuite = OnceLock<Timed<SuiteRun>>;

static CLASSIFICATION: CachedSweep = OnceLock::new();
static REGRESSION: CachedSweep = OnceLock::new();
static DENSITY: CachedSweep = OnceLock::new();
static LOGISTIC_GEOMETRY: CachedSweep = OnceLock::new();
static LOGISTIC: CachedSweep = OnceLock::new();
static SANDWICH: CachedSuite = OnceLock::new();
static AGGREGATION: CachedSuite = OnceLock::new();
static VAW: CachedSuite = OnceLock::new();
static GENERALIZATION: CachedSuite = OnceLock::new();

fn run_config(name: &str) -> RunReport {
    let config = load_config(name).unwrap_or_else(|e| panic!("{name}: {e}"));
    sweep(&config).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn cached_sweep(cell: &'static CachedSweep, name: &str) -> &'static Timed<RunReport> {
    cell.get_or_init(|| timed(|| run_config(name)))
}

fn cached_suite(cell: &'static CachedSuite, suite: Suite, seed: u64) -> &'static Timed<SuiteRun> {
    cell.get_or_init(|| timed(|| run_suite(suite, seed, suite.default_count()).unwrap_or_else(|e| panic!("{e}"))))
}

fn certificate<'a>(r: &'a InstanceReport, anchor: &str) -> Option<&'a mlsa::audit::BoundCertificate> {
    r.certificates.iter().find(|c| c.anchor == anchor)
}

fn check<'a>(r: &'a InstanceReport, name: &str) -> Option<&'a mlsa_cli::pipeline::Check> {
    r.checks.iter().find(|c| c.name == name)
}

/// `anchor` is present on every instance and its slack is at least `-SLACK_TOL`.
fn all_hold<'a>(reports: impl IntoIterator<Item = &'a InstanceReport>, anchor: &str) -> (usize, usize, f64) {
    let (mut present, mut holding, mut min_slack) = (0, 0, f64::INFINITY);
    for r in reports {
        if let Some(c) = certificate(r, anchor) {
            present += 1;
            if c.slack >= -SLACK_TOL {
                holding += 1;
            }
            min_slack = min_slack.min(c.slack);
        }
    }
    (present, holding, min_slack)
}

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn sweep_label<'a>(r: &'a InstanceReport, key: &str) -> &'a str {
    r.id.split('/')
        .next()
        .unwrap_or("")
        .split(',')
        .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
        .unwrap_or("")
}

fn every_certificate_passes(v: &mut Verdict, report: &RunReport) {
    let failing = report
        .instances
        .iter()
        .flat_map(|r| r.certificates.iter().map(move |c| (r, c)))
        .filter(|(_, c)| !c.passes())
        .map(|(r, c)| format!("{}:{}", r.id, c.anchor))
        .collect::<Vec<_>>();
    v.require(failing.is_empty(), format!("every emitted certificate passes {failing:?}"));
}

#[test]
fn criterion_01_sandwich_suite() {
    let _guard = serial();
    let run = cached_suite(&SANDWICH, Suite::Sandwich, SANDWICH_SEED);
    let s = &run.value.summary;
    let mut v = Verdict::new("1", "sandwich suite");
    let families = ["classification", "regression", "density"];
    let violations: f64 = families.iter().map(|f| s.stats[&format!("{f}/violations")]).sum();
    let pairs: f64 = families.iter().map(|f| s.stats[&format!("{f}/checked_pairs")]).sum();
    v.require(s.cases == 3 * 100, format!("{} instances over 3 families", s.cases))
        .require(violations == 0.0 && s.passed, format!("{violations} violations over {pairs} (i, t) pairs"))
        .require(run.secs < 30.0, format!("{:.2} s < 30 s", run.secs));
    conclude(&v);
}

#[test]
fn criterion_02a_aggregation_averaging() {
    let _guard = serial();
    let run = cached_suite(&AGGREGATION, Suite::Aggregation, AGGREGATION_SEED);
    let s = &run.value.summary;
    let mut v = Verdict::new("2", "aggregation assumption, averaging");
    for loss in ["squared", "absolute", "neg-log"] {
        let bad = s.stats[&format!("average/{loss}/violations")];
        v.require(bad == 0.0, format!("{loss}: {bad} violations in {} trials", s.count));
    }
    v.require(run.secs < 10.0, format!("{:.3} s < 10 s", run.secs));
    conclude(&v);
}

/// Majority vote under 0-1 loss does not satisfy the aggregation inequality
/// with constant 1: votes (1, 1, 0) against label 0 give aggregated loss 1
/// and mean loss 2/3. This test checks the literal inequality and fails.
#[test]
fn criterion_02b_aggregation_majority_vote() {
    let _guard = serial();
    let run = cached_suite(&AGGREGATION, Suite::Aggregation, AGGREGATION_SEED);
    let s = &run.value.summary;
    let mut v = Verdict::new("2", "aggregation assumption, majority vote");
    let bad = s.stats["majority-vote/zero-one/violations"];
    let ratio = s.stats["majority-vote/zero-one/worst_ratio"];
    v.require(
        bad == 0.0,
        format!("zero-one: {bad} violations in {} trials (worst aggregated/mean ratio {ratio})", s.count),
    )
    .require(run.secs < 10.0, format!("{:.3} s < 10 s", run.secs));
    conclude(&v);
}

#[test]
fn criterion_03_classification() {
    let _guard = serial();
    let run = cached_sweep(&CLASSIFICATION, "classification.toml");
    let report = &run.value;
    let mut v = Verdict::new("3", "classification corollary");
    let classes: BTreeSet<_> = report.instances.iter().map(|r| sweep_label(r, "class")).collect();
    v.require(
        report.instances.len() == 2 * 3 * 3 * 20 && classes.len() == 2,
        format!("{} instances over {classes:?}", report.instances.len()),
    );
    let (present, holding, min_slack) = all_hold(&report.instances, "classification-corollary");
    v.require(
        present == report.instances.len() && holding == present,
        format!("bound holds on {holding}/{present} (min slack {min_slack:.4})"),
    );
    // Independent right-hand side: 8 minL / n + 200 d ln n / n.
    let worst_rhs = report
        .instances
        .iter()
        .filter_map(|r| {
            let c = certificate(r, "classification-corollary")?;
            let n = r.n as f64;
            let rhs = 8.0 * r.erm_per_n + 200.0 * r.d as f64 * n.ln() / n;
            Some(relative_gap(c.rhs, rhs))
        })
        .fold(0.0, f64::max);
    v.require(worst_rhs <= 1e-12, format!("rhs matches 8minL/n + 200 d ln n / n (gap {worst_rhs:.1e})"));
    let rho = report.instances.iter().filter_map(|r| r.rho_hat).fold(f64::INFINITY, f64::min);
    let rho_count = report.instances.iter().filter(|r| r.rho_hat.is_some()).count();
    v.require(
        rho_count == report.instances.len() && rho >= 0.75,
        format!("min rho_hat {rho:.3} >= 3/4"),
    );
    let realizable: Vec<_> = report.instances.iter().filter(|r| r.erm_per_n == 0.0).collect();
    let (rp, rh, rs) = all_hold(realizable.iter().copied(), "classification-corollary/realizable");
    v.require(
        !realizable.is_empty() && rp == realizable.len() && rh == rp,
        format!("realizable bound holds on {rh}/{} (min slack {rs:.4})", realizable.len()),
    );
    every_certificate_passes(&mut v, report);
    v.require(run.secs < 120.0, format!("{:.1} s < 120 s", run.secs));
    conclude(&v);
}

#[test]
fn criterion_04_regression() {
    let _guard = serial();
    let run = cached_sweep(&REGRESSION, "regression.toml");
    let report = &run.value;
    let mut v = Verdict::new("4", "bounded convex regression corollary");
    v.require(report.instances.len() == 2 * 2 * 2 * 20, format!("{} instances", report.instances.len()));
    let (present, holding, min_slack) = all_hold(&report.instances, "regression-corollary");
    v.require(
        present == report.instances.len() && holding == present,
        format!("bound holds on {holding}/{present} (min slack {min_slack:.4})"),
    );
    // 8 minL / n + 104 M ln|H| / n with M = 1.
    let worst_rhs = report
        .instances
        .iter()
        .filter_map(|r| {
            let c = certificate(r, "regression-corollary")?;
            let n = r.n as f64;
            Some(relative_gap(c.rhs, 8.0 * r.erm_per_n + 104.0 * (r.d as f64).ln() / n))
        })
        .fold(0.0, f64::max);
    v.require(worst_rhs <= 1e-12, format!("rhs matches 8minL/n + 104 M ln|H| / n (gap {worst_rhs:.1e})"));
    every_certificate_passes(&mut v, report);
    v.require(run.secs < 60.0, format!("{:.2} s < 60 s", run.secs));
    conclude(&v);
}

#[test]
fn criterion_05_density() {
    let _guard = serial();
    let run = cached_sweep(&DENSITY, "density.toml");
    let report = &run.value;
    let mut v = Verdict::new("5", "density corollary and smoothing");
    v.require(report.instances.len() == 3 * 3 * 2 * 2 * 20, format!("{} instances", report.instances.len()));
    let finite: Vec<_> = report
        .instances
        .iter()
        .filter(|r| r.details["log_ratio_bound"].is_finite())
        .collect();
    let (p, h, s) = all_hold(finite.iter().copied(), "density-corollary");
    v.require(
        !finite.is_empty() && p == finite.len() && h == p,
        format!("unsmoothed bound holds on {h}/{} finite-M instances (min slack {s:.4})", finite.len()),
    );
    let (p, h, s) = all_hold(&report.instances, "smoothed-density/inverse-n");
    v.require(
        p == report.instances.len() && h == p,
        format!("eps = 1/n bound holds on {h}/{p} (min slack {s:.4})"),
    );
    // 8 minL / n + 112 ln|P| min(ln|P|, ln|X|) / n + 112 ln|P| ln n / n.
    let worst_rhs = report
        .instances
        .iter()
        .filter_map(|r| {
            let c = certificate(r, "smoothed-density/inverse-n")?;
            let n = r.n as f64;
            let lp = (r.d as f64).ln();
            let lx = r.details["support"].ln();
            let rhs = 8.0 * r.erm_per_n + 112.0 * lp * lp.min(lx) / n + 112.0 * lp * n.ln() / n;
            Some(relative_gap(c.rhs, rhs))
        })
        .fold(0.0, f64::max);
    v.require(worst_rhs <= 1e-12, format!("smoothed rhs matches the 112-coefficient form (gap {worst_rhs:.1e})"));
    let (p, h, s) = all_hold(&report.instances, "smoothing-inflation");
    v.require(
        p == report.instances.len() && h == p,
        format!("inflation L(p_eps) <= L(p) + 2 n eps holds on {h}/{p} (min slack {s:.4})"),
    );
    every_certificate_passes(&mut v, report);
    v.require(run.secs < 60.0, format!("{:.2} s < 60 s", run.secs));
    conclude(&v);
}

#[test]
fn criterion_06_logistic_geometry() {
    let _guard = serial();
    let run = cached_sweep(&LOGISTIC_GEOMETRY, "logistic-geometry.toml");
    let report = &run.value;
    let mut v = Verdict::new("6", "logistic geometry");
    let dims: BTreeSet<_> = report.instances.iter().map(|r| r.d).collect();
    v.require(
        report.instances.len() == 10 && dims == BTreeSet::from([1, 2]) && report.instances.iter().all(|r| r.n == 50),
        format!("{} instances, n = 50, d in {dims:?}", report.instances.len()),
    );
    let mut interior = 0;
    for r in &report.instances {
        let (Some(viol), Some(half), Some(vol)) = (
            check(r, "containment-violations"),
            check(r, "containment-halfspace"),
            check(r, "volume-lower-bound"),
        ) else {
            v.require(false, format!("{} reports all geometry checks", r.id));
            continue;
        };
        if half.threshold == 1.0 {
            interior += 1;
        }
        // (max(8, 2 n r R))^-d with n = 50, r = R = 1.
        let threshold = 100f64.powi(-(r.d as i32));
        v.require(viol.passed && viol.value == 0.0, format!("{}: 0 containment violations", r.id))
            .require(half.passed, format!("{}: half-space fraction {:.4}", r.id, half.value))
            .require(
                vol.passed && relative_gap(vol.threshold, threshold) <= 1e-12,
                format!("{}: volume {:.4} + 3 se >= {:.0e}", r.id, vol.value, vol.threshold),
            );
    }
    v.require(true, format!("{interior} interior and {} boundary minimizers", report.instances.len() - interior));
    v.require(run.secs < 300.0, format!("{:.1} s < 300 s", run.secs));
    conclude(&v);
}

#[test]
fn criterion_07_logistic_end_to_end() {
    let _guard = serial();
    let config = load_config("logistic.toml").unwrap();
    let run = cached_sweep(&LOGISTIC, "logistic.toml");
    let report = &run.value;
    let mut v = Verdict::new("7", "logistic corollary");
    v.require(
        report.instances.len() == 3
            && config.mc.samples == 200_000
            && report.instances.iter().all(|r| r.n == 50 && r.d == 2),
        format!("{} instances, n = 50, d = 2, k = {}", report.instances.len(), config.mc.samples),
    );
    for r in &report.instances {
        match certificate(r, "logistic-corollary") {
            Some(c) => {
                v.require(
                    c.passes() && c.relative_allowance == 0.05,
                    format!("{}: loo {:.4} <= {:.3} (5% allowance)", r.id, c.lhs, c.rhs),
                );
            }
            None => {
                v.require(false, format!("{} has a certificate", r.id));
            }
        }
        let nested = check(r, "nestedness-violations");
        v.require(
            nested.is_some_and(|c| c.passed && c.value == 0.0),
            format!("{}: nested level sets on every accepted sample", r.id),
        );
    }
    v.require(run.secs < 1200.0, format!("{:.1} s < 1200 s", run.secs));
    conclude(&v);
}

#[test]
fn criterion_08_vaw_suite() {
    let _guard = serial();
    let run = cached_suite(&VAW, Suite::Vaw, VAW_SEED);
    let s = &run.value.summary;
    let mut v = Verdict::new("8", "linear leave-one-out bound");
    v.require(s.cases == 100, format!("{} instances", s.cases))
        .require(s.stats["rank_deficient"] >= 1.0, format!("{} rank-deficient", s.stats["rank_deficient"]))
        .require(s.stats["min_slack"] >= -SLACK_TOL, format!("min slack {:.4}", s.stats["min_slack"]))
        .require(
            s.stats["min_leverage"] >= -1e-12 && s.stats["max_leverage"] <= 1.0 + 1e-12,
            format!("leverages in [{:.3e}, {:.15}]", s.stats["min_leverage"], s.stats["max_leverage"]),
        )
        .require(
            s.stats["max_leverage_sum_error"] <= 1e-8,
            format!("|sum leverages - rank| <= {:.1e}", s.stats["max_leverage_sum_error"]),
        )
        .require(
            s.stats["max_pinv_identity_error"] <= 1e-10,
            format!("max |X+ - A+ X^T| = {:.1e}", s.stats["max_pinv_identity_error"]),
        )
        .require(s.passed, format!("{} failures", s.failures.len()))
        .require(run.secs < 10.0, format!("{:.3} s < 10 s", run.secs));
    conclude(&v);
}

#[test]
fn criterion_09_generalization() {
    let _guard = serial();
    let run = cached_suite(&GENERALIZATION, Suite::Generalization, GENERALIZATION_SEED);
    let s = &run.value.summary;
    let mut v = Verdict::new("9", "generalization simulation");
    // Thresholds have VC dimension 1; the best threshold errs at the noise rate.
    let m = GENERALIZATION_N as f64 + 1.0;
    let bound = 8.0 * GENERALIZATION_NOISE + 200.0 * m.ln() / m;
    let (mean, se) = (s.stats["mean_test_loss"], s.stats["stderr"]);
    v.require(s.count == 2000 && GENERALIZATION_N == 30, format!("{} repetitions at n = {GENERALIZATION_N}", s.count))
        .require(relative_gap(s.stats["bound"], bound) <= 1e-12, format!("bound {bound:.4}"))
        .require(mean <= bound + 3.0 * se, format!("mean held-out loss {mean:.4} <= bound + 3 * {se:.4}"))
        .require(run.secs < 180.0, format!("{:.2} s < 180 s", run.secs));
    conclude(&v);
}

fn same_bytes(a: &Path, b: &Path, file: &str) -> bool {
    match (std::fs::read(a.join(file)), std::fs::read(b.join(file))) {
        (Ok(x), Ok(y)) => !x.is_empty() && x == y,
        _ => false,
    }
}

#[test]
fn criterion_10_determinism() {
    let _guard = serial();
    let mut v = Verdict::new("10", "determinism");
    // The reruns use a different worker count than the first runs.
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let sweeps: [(&'static CachedSweep, &str); 5] = [
        (&CLASSIFICATION, "classification.toml"),
        (&REGRESSION, "regression.toml"),
        (&DENSITY, "density.toml"),
        (&LOGISTIC_GEOMETRY, "logistic-geometry.toml"),
        (&LOGISTIC, "logistic.toml"),
    ];
    for (cell, name) in sweeps {
        let first = &cached_sweep(cell, name).value;
        let again = pool.install(|| run_config(name));
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        write_run(first, a.path()).unwrap();
        write_run(&again, b.path()).unwrap();
        v.require(same_bytes(a.path(), b.path(), &first.config.output.csv), format!("{name} CSV identical"));
    }
    let suites: [(&'static CachedSuite, Suite, u64); 4] = [
        (&SANDWICH, Suite::Sandwich, SANDWICH_SEED),
        (&AGGREGATION, Suite::Aggregation, AGGREGATION_SEED),
        (&VAW, Suite::Vaw, VAW_SEED),
        (&GENERALIZATION, Suite::Generalization, GENERALIZATION_SEED),
    ];
    for (cell, suite, seed) in suites {
        let first = &cached_suite(cell, suite, seed).value;
        let again = pool.install(|| run_suite(suite, seed, suite.default_count()).unwrap());
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        first.write(a.path()).unwrap();
        again.write(b.path()).unwrap();
        v.require(
            same_bytes(a.path(), b.path(), &format!("{}.csv", suite.name())),
            format!("{} suite CSV identical", suite.name()),
        );
    }
    conclude(&v);
}
