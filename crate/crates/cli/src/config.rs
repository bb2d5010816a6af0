use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mlsa::classification::ClassDescriptor;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
    Density,
    Logistic,
    Vaw,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Self::Classification => "classification",
            Self::Regression => "regression",
            Self::Density => "density",
            Self::Logistic => "logistic",
            Self::Vaw => "vaw",
        }
    }
}

/// One experiment: a task, its instance parameters and a root seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub seed: u64,
    /// Independent instances drawn per parameter point.
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default)]
    pub instance: InstanceParams,
    /// Replaces the task's default tolerance grid. Only the generic
    /// certificates are issued for overridden grids.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridOverride>,
    #[serde(default)]
    pub mc: McSettings,
    #[serde(default)]
    pub output: OutputSettings,
    /// Parameter axes for `sweep`: instance field name to list of values.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sweep: BTreeMap<String, Vec<toml::Value>>,
}

fn default_instances() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceParams {
    pub n: usize,
    /// Classification class descriptor.
    pub class: String,
    /// Label-flip probability (classification), noise amplitude
    /// (regression) or noise standard deviation (vaw).
    pub noise: f64,
    /// Class size for regression and density.
    pub hypotheses: usize,
    /// Regression loss name.
    pub loss: String,
    /// Regression loss bound.
    pub m_bound: f64,
    /// Density support size.
    pub support: usize,
    /// Probability that a density entry is zeroed.
    pub zero_fraction: f64,
    /// Density smoothing: `none`, `inverse-n` or a number.
    pub smoothing: String,
    /// Parameter dimension (logistic, vaw).
    pub d: usize,
    pub r: f64,
    pub big_r: f64,
    /// Design rank for vaw; full rank when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    /// Whitespace-delimited input used instead of a generated instance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// VC dimension declared for an input classification table.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vc_dim: Option<usize>,
    /// Relative singular-value cutoff for vaw; the numerical-rank default
    /// when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub svd_tol: Option<f64>,
}

impl Default for InstanceParams {
    fn default() -> Self {
        Self {
            n: 50,
            class: "thresholds".into(),
            noise: 0.0,
            hypotheses: 8,
            loss: "squared".into(),
            m_bound: 1.0,
            support: 8,
            zero_fraction: 0.0,
            smoothing: "none".into(),
            d: 2,
            r: 1.0,
            big_r: 1.0,
            rank: None,
            input: None,
            vc_dim: None,
            svd_tol: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothing {
    None,
    InverseN,
    Epsilon(f64),
}

impl FromStr for Smoothing {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "inverse-n" => Ok(Self::InverseN),
            other => other
                .parse::<f64>()
                .ok()
                .filter(|e| *e > 0.0 && *e <= 1.0)
                .map(Self::Epsilon)
                .ok_or_else(|| HarnessError::Config(format!("smoothing must be none, inverse-n or a number in (0, 1], got '{other}'"))),
        }
    }
}

impl Smoothing {
    pub fn epsilon(self, n: usize) -> Option<f64> {
        match self {
            Self::None => None,
            Self::InverseN => Some(1.0 / n as f64),
            Self::Epsilon(e) => Some(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridOverride {
    pub step: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSettings {
    /// Reference-measure draws per run.
    pub samples: usize,
    pub min_accepted: usize,
    /// Run the aggregation procedure (logistic).
    pub aggregate: bool,
    /// Run the containment and volume checks (logistic).
    pub geometry: bool,
    /// Draws for the containment check.
    pub containment_samples: usize,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            samples: 200_000,
            min_accepted: 100,
            aggregate: true,
            geometry: false,
            containment_samples: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSettings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    pub csv: String,
    pub report: String,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self {
            dir: None,
            csv: "results.csv".into(),
            report: "report.toml".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn new(task: Task, seed: u64) -> Self {
        Self {
            task,
            seed,
            instances: 1,
            instance: InstanceParams::default(),
            grid: None,
            mc: McSettings::default(),
            output: OutputSettings::default(),
            sweep: BTreeMap::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut config = Self::parse(&text)?;
        // Relative inputs are resolved against the config's directory.
        if let (Some(input), Some(base)) = (config.instance.input.as_mut(), path.parent()) {
            if input.is_relative() {
                *input = base.join(&*input);
            }
        }
        Ok(config)
    }

    pub fn smoothing(&self) -> Result<Smoothing> {
        self.instance.smoothing.parse()
    }

    /// Checks the preconditions of the selected task.
    pub fn validate(&self) -> Result<()> {
        let p = &self.instance;
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.instances == 0 {
            return bad("instances must be at least 1".into());
        }
        if self.task != Task::Vaw && p.n < 3 {
            return bad(format!("n must be at least 3, got {}", p.n));
        }
        if p.n == 0 {
            return bad("n must be positive".into());
        }
        if !(0.0..=1.0).contains(&p.noise) && matches!(self.task, Task::Classification | Task::Regression) {
            return bad(format!("noise must lie in [0, 1], got {}", p.noise));
        }
        if let Some(g) = self.grid {
            if !(g.step > 0.0 && g.step.is_finite()) || g.count == 0 {
                return bad("grid override needs a positive step and count".into());
            }
            if matches!(self.task, Task::Logistic | Task::Vaw) {
                return bad(format!("grid overrides are not supported for {}", self.task.name()));
            }
        }
        match self.task {
            Task::Classification => {
                if p.input.is_none() {
                    ClassDescriptor::from_str(&p.class).map_err(|e| HarnessError::Config(e.to_string()))?;
                } else if p.vc_dim.is_none() {
                    return bad("an input classification table needs vc_dim".into());
                }
            }
            Task::Regression => {
                if p.input.is_none() && p.hypotheses < 2 {
                    return bad(format!("regression needs at least 2 hypotheses, got {}", p.hypotheses));
                }
                mlsa::loss::loss_by_name(&p.loss, p.m_bound).map_err(|e| HarnessError::Config(e.to_string()))?;
                if !(p.m_bound > 0.0 && p.m_bound.is_finite()) {
                    return bad(format!("m_bound must be positive, got {}", p.m_bound));
                }
            }
            Task::Density => {
                if p.hypotheses == 0 || p.support == 0 {
                    return bad("density needs at least one member and one support point".into());
                }
                if !(0.0..1.0).contains(&p.zero_fraction) {
                    return bad(format!("zero_fraction must lie in [0, 1), got {}", p.zero_fraction));
                }
                self.smoothing()?;
            }
            Task::Logistic => {
                if p.input.is_none() && p.d == 0 {
                    return bad("d must be positive".into());
                }
                if !(p.r > 0.0 && p.big_r > 0.0 && p.r.is_finite() && p.big_r.is_finite()) {
                    return bad("r and big_r must be positive".into());
                }
                let mc = &self.mc;
                if !(mc.aggregate || mc.geometry) {
                    return bad("logistic runs need mc.aggregate or mc.geometry".into());
                }
                if mc.min_accepted < 100 || mc.samples < mc.min_accepted {
                    return bad("mc needs samples >= min_accepted >= 100".into());
                }
                if mc.geometry && mc.containment_samples == 0 {
                    return bad("containment_samples must be positive".into());
                }
            }
            Task::Vaw => {
                if let Some(tol) = p.svd_tol {
                    if !(0.0..1.0).contains(&tol) {
                        return bad(format!("svd_tol must lie in [0, 1), got {tol}"));
                    }
                }
                if p.input.is_none() {
                    if p.d == 0 {
                        return bad("d must be positive".into());
                    }
                    if let Some(k) = p.rank {
                        if k == 0 || k > p.d.min(p.n) {
                            return bad(format!("rank must lie in 1..=min(n, d), got {k}"));
                        }
                    }
                }
                if !(p.noise >= 0.0 && p.noise.is_finite()) {
                    return bad(format!("noise must be nonnegative, got {}", p.noise));
                }
            }
        }
        for key in self.sweep.keys() {
            if !InstanceParams::FIELDS.contains(&key.as_str()) {
                return bad(format!("unknown sweep axis '{key}'"));
            }
        }
        Ok(())
    }

    /// Cartesian product of the sweep axes, in lexicographic axis order.
    /// Each point gets its own derived seed.
    pub fn sweep_points(&self) -> Result<Vec<(String, ExperimentConfig)>> {
        if self.sweep.is_empty() {
            return Ok(vec![(String::new(), self.clone())]);
        }
        let axes: Vec<(&String, &Vec<toml::Value>)> = self.sweep.iter().collect();
        if let Some((k, _)) = axes.iter().find(|(_, v)| v.is_empty()) {
            return Err(HarnessError::Config(format!("sweep axis '{k}' is empty")));
        }
        let total: usize = axes.iter().map(|(_, v)| v.len()).product();
        let base = toml::Table::try_from(&self.instance).map_err(|e| HarnessError::Config(e.to_string()))?;
        let mut points = Vec::with_capacity(total);
        for idx in 0..total {
            let mut rest = idx;
            let mut table = base.clone();
            let mut label = Vec::new();
            for (key, values) in axes.iter().rev() {
                let v = &values[rest % values.len()];
                rest /= values.len();
                table.insert((*key).clone(), v.clone());
            }
            for (key, _) in &axes {
                label.push(format!("{key}={}", value_label(&table[key.as_str()])));
            }
            let instance: InstanceParams = table
                .try_into()
                .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
            let mut point = self.clone();
            point.sweep.clear();
            point.instance = instance;
            point.seed = mlsa::seed::derive_seed(self.seed, "sweep-point", idx as u64);
            point.validate()?;
            points.push((label.join(","), point));
        }
        Ok(points)
    }
}

fn value_label(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl InstanceParams {
    const FIELDS: &'static [&'static str] = &[
        "n",
        "class",
        "noise",
        "hypotheses",
        "loss",
        "m_bound",
        "support",
        "zero_fraction",
        "smoothing",
        "d",
        "r",
        "big_r",
        "rank",
        "svd_tol",
    ];
}
