use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::pipeline::{InstanceReport, RunReport};

/// The flat per-instance CSV schema shared by every task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub instance_id: String,
    pub n: usize,
    pub d: usize,
    pub loo: f64,
    pub erm_per_n: f64,
    pub bound: f64,
    pub slack: f64,
    pub rho_hat: Option<f64>,
}

impl From<&InstanceReport> for CsvRow {
    fn from(r: &InstanceReport) -> Self {
        Self {
            instance_id: r.id.clone(),
            n: r.n,
            d: r.d,
            loo: r.loo,
            erm_per_n: r.erm_per_n,
            bound: r.bound,
            slack: r.slack,
            rho_hat: r.rho_hat,
        }
    }
}

/// Serializes rows to CSV bytes with a header.
pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| HarnessError::Config(format!("csv buffer: {e}")))
}

impl RunReport {
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        self.instances.iter().map(CsvRow::from).collect()
    }

    pub fn csv_bytes(&self) -> Result<Vec<u8>> {
        csv_bytes(&self.csv_rows())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

pub fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| HarnessError::io(&path, e))
}

/// Writes the report and CSV named in the config's output settings.
pub fn write_run(report: &RunReport, dir: &Path) -> Result<()> {
    let out = &report.config.output;
    write_file(dir, &out.csv, &report.csv_bytes()?)?;
    write_file(dir, &out.report, report.to_toml()?.as_bytes())
}

pub fn read_rows(path: &Path) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub source: String,
    pub instances: usize,
    pub mean_loo: f64,
    pub mean_erm_per_n: f64,
    pub mean_bound: f64,
    pub min_slack: f64,
    pub nonnegative_slack: usize,
    pub min_rho_hat: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

/// One summary line per CSV file.
pub fn summarize(source: &str, rows: &[CsvRow]) -> SummaryRow {
    let finite = |v: f64| v.is_finite().then_some(v);
    SummaryRow {
        source: source.into(),
        instances: rows.len(),
        mean_loo: mean(rows.iter().filter_map(|r| finite(r.loo))),
        mean_erm_per_n: mean(rows.iter().filter_map(|r| finite(r.erm_per_n))),
        mean_bound: mean(rows.iter().filter_map(|r| finite(r.bound))),
        min_slack: rows
            .iter()
            .filter_map(|r| finite(r.slack))
            .fold(f64::INFINITY, f64::min),
        nonnegative_slack: rows.iter().filter(|r| r.slack >= 0.0).count(),
        min_rho_hat: rows.iter().filter_map(|r| r.rho_hat).reduce(f64::min),
    }
}

/// Fixed-width text table of summary rows.
pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut out = format!(
        "{:<32} {:>9} {:>10} {:>10} {:>10} {:>11} {:>8} {:>8}\n",
        "source", "instances", "mean_loo", "erm/n", "bound", "min_slack", "slack>=0", "min_rho"
    );
    for r in rows {
        let rho = r.min_rho_hat.map_or("-".to_string(), |v| format!("{v:.3}"));
        out.push_str(&format!(
            "{:<32} {:>9} {:>10.4} {:>10.4} {:>10.4} {:>11.4} {:>8} {:>8}\n",
            r.source, r.instances, r.mean_loo, r.mean_erm_per_n, r.mean_bound, r.min_slack, r.nonnegative_slack, rho
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, slack: f64, rho: Option<f64>) -> CsvRow {
        CsvRow {
            instance_id: id.into(),
            n: 10,
            d: 1,
            loo: 0.1,
            erm_per_n: 0.0,
            bound: 0.1 + slack,
            slack,
            rho_hat: rho,
        }
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![row("a", 0.5, Some(0.8)), row("b,c", -0.1, None)];
        let bytes = csv_bytes(&rows).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("instance_id,n,d,loo,erm_per_n,bound,slack,rho_hat\n"));
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "x.csv", &bytes).unwrap();
        assert_eq!(read_rows(&dir.path().join("x.csv")).unwrap(), rows);
    }

    #[test]
    fn summary_counts() {
        let s = summarize("f", &[row("a", 0.5, Some(0.8)), row("b", -0.1, Some(0.9)), row("c", 0.2, None)]);
        assert_eq!(s.instances, 3);
        assert_eq!(s.nonnegative_slack, 2);
        assert_eq!(s.min_slack, -0.1);
        assert_eq!(s.min_rho_hat, Some(0.8));
        assert!(format_summary(&[s]).lines().count() == 2);
    }
}
