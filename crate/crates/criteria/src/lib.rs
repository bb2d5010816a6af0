//! Shared plumbing for the acceptance target: config lookup, timing and the
//! one-line verdict each criterion prints.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use mlsa_cli::ExperimentConfig;

/// The workspace `configs/` directory.
pub fn config_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn load_config(name: &str) -> mlsa_cli::Result<ExperimentConfig> {
    ExperimentConfig::load(&config_dir().join(name))
}

/// A value together with the wall time it took to produce.
#[derive(Debug)]
pub struct Timed<T> {
    pub value: T,
    pub secs: f64,
}

pub fn timed<T>(f: impl FnOnce() -> T) -> Timed<T> {
    let start = Instant::now();
    let value = f();
    Timed {
        value,
        secs: start.elapsed().as_secs_f64(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub criterion: &'static str,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(criterion: &'static str, title: &'static str) -> Self {
        Self {
            criterion,
            title,
            passed: true,
            detail: String::new(),
        }
    }

    /// Records one requirement; any failing requirement fails the verdict.
    pub fn require(&mut self, ok: bool, what: impl fmt::Display) -> &mut Self {
        if !self.detail.is_empty() {
            self.detail.push_str("; ");
        }
        if ok {
            self.detail.push_str(&what.to_string());
        } else {
            self.passed = false;
            self.detail.push_str(&format!("NOT {what}"));
        }
        self
    }

    /// Prints the verdict line straight to stdout, past the test harness's
    /// output capture.
    pub fn emit(&self) {
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "{self}");
        let _ = out.flush();
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} criterion {} ({}): {}", self.criterion, self.title, self.detail)
    }
}
