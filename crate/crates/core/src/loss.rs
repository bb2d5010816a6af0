use std::fmt;
use std::sync::Arc;

use crate::error::{MlsaError, Result};
use crate::table::{LabeledSample, PredictionTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Increasing,
    Decreasing,
}

/// Which monotonicity the median step relies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotonicity {
    /// `|y'' - y| >= |y' - y|` implies `loss(y'', y) >= loss(y', y)`.
    InDistance,
    /// `loss(., y)` is monotone in its first argument, in the given direction.
    InFirstArgument(Direction),
}

type LossFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum LossKind {
    ZeroOne,
    /// `scale * (clamp(p) - clamp(y))^2`, predictions and responses clamped to [0, 1].
    Squared { scale: f64 },
    /// `scale * |clamp(p) - clamp(y)|`.
    Absolute { scale: f64 },
    /// `-ln p`; the response is ignored.
    NegLog,
    Custom { name: String, f: LossFn },
}

impl fmt::Debug for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ZeroOne => write!(f, "ZeroOne"),
            Self::Squared { scale } => write!(f, "Squared({scale})"),
            Self::Absolute { scale } => write!(f, "Absolute({scale})"),
            Self::NegLog => write!(f, "NegLog"),
            Self::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

/// Pointwise loss together with its declared per-sample bound.
#[derive(Debug, Clone)]
pub struct LossModel {
    pub kind: LossKind,
    pub delta_bound: f64,
    pub monotonicity: Monotonicity,
}

impl LossModel {
    pub fn zero_one() -> Self {
        Self {
            kind: LossKind::ZeroOne,
            delta_bound: 1.0,
            monotonicity: Monotonicity::InDistance,
        }
    }

    /// Squared loss on [0, 1] scaled by `m`; the bound `m` is attained at (0, 1).
    pub fn squared(m: f64) -> Self {
        Self {
            kind: LossKind::Squared { scale: m },
            delta_bound: m,
            monotonicity: Monotonicity::InDistance,
        }
    }

    pub fn absolute(m: f64) -> Self {
        Self {
            kind: LossKind::Absolute { scale: m },
            delta_bound: m,
            monotonicity: Monotonicity::InDistance,
        }
    }

    /// Log loss on probability values. `m` is the log-ratio bound of the
    /// class, which plays the role of the sandwich gap.
    pub fn neg_log(m: f64) -> Self {
        Self {
            kind: LossKind::NegLog,
            delta_bound: m,
            monotonicity: Monotonicity::InFirstArgument(Direction::Decreasing),
        }
    }

    pub fn custom(
        name: impl Into<String>,
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        delta_bound: f64,
        monotonicity: Monotonicity,
    ) -> Self {
        Self {
            kind: LossKind::Custom {
                name: name.into(),
                f: Arc::new(f),
            },
            delta_bound,
            monotonicity,
        }
    }

    pub fn name(&self) -> String {
        match &self.kind {
            LossKind::ZeroOne => "zero-one".into(),
            LossKind::Squared { .. } => "squared".into(),
            LossKind::Absolute { .. } => "absolute".into(),
            LossKind::NegLog => "neg-log".into(),
            LossKind::Custom { name, .. } => name.clone(),
        }
    }

    #[inline]
    pub fn eval(&self, prediction: f64, response: f64) -> f64 {
        match &self.kind {
            LossKind::ZeroOne => {
                if prediction == response {
                    0.0
                } else {
                    1.0
                }
            }
            LossKind::Squared { scale } => {
                let d = prediction.clamp(0.0, 1.0) - response.clamp(0.0, 1.0);
                scale * d * d
            }
            LossKind::Absolute { scale } => {
                scale * (prediction.clamp(0.0, 1.0) - response.clamp(0.0, 1.0)).abs()
            }
            LossKind::NegLog => -prediction.ln(),
            LossKind::Custom { f, .. } => f(prediction, response),
        }
    }

    /// Checks every table entry against the declared bound. Log loss is
    /// bounded through log-ratios rather than pointwise, so it only has to be
    /// finite here.
    pub fn audit_bound(&self, table: &PredictionTable, sample: &LabeledSample) -> Result<()> {
        sample.check_matches(table)?;
        for i in 0..table.n_samples() {
            let y = sample.responses[i];
            for (j, &p) in table.row(i).iter().enumerate() {
                let v = self.eval(p, y);
                let ok = match self.kind {
                    LossKind::NegLog => v.is_finite() && v >= 0.0,
                    _ => v.is_finite() && v >= 0.0 && v <= self.delta_bound + 1e-12,
                };
                if !ok {
                    return Err(MlsaError::LossBoundViolated {
                        row: i,
                        column: j,
                        value: v,
                        bound: self.delta_bound,
                    });
                }
            }
        }
        Ok(())
    }

    /// Probes the declared monotonicity on every ordered triple drawn from
    /// `points`. Returns the first offending `(y_far, y_near, y)` triple.
    pub fn probe_monotonicity(&self, points: &[f64]) -> Option<(f64, f64, f64)> {
        for &y in points {
            for &a in points {
                for &b in points {
                    let (la, lb) = (self.eval(a, y), self.eval(b, y));
                    let bad = match self.monotonicity {
                        Monotonicity::InDistance => (a - y).abs() >= (b - y).abs() && la < lb - 1e-12,
                        Monotonicity::InFirstArgument(Direction::Increasing) => a >= b && la < lb - 1e-12,
                        Monotonicity::InFirstArgument(Direction::Decreasing) => a <= b && la < lb - 1e-12,
                    };
                    if bad {
                        return Some((a, b, y));
                    }
                }
            }
        }
        None
    }
}

/// The built-in regression losses on [0, 1].
pub fn builtin_losses() -> Vec<LossModel> {
    vec![
        LossModel::squared(1.0),
        LossModel::absolute(1.0),
        LossModel::squared(0.5),
        LossModel::absolute(2.0),
    ]
}

pub fn loss_by_name(name: &str, m: f64) -> Result<LossModel> {
    match name {
        "squared" => Ok(LossModel::squared(m)),
        "absolute" => Ok(LossModel::absolute(m)),
        "zero-one" | "zero_one" | "01" => Ok(LossModel::zero_one()),
        "neg-log" | "log" => Ok(LossModel::neg_log(m)),
        other => Err(MlsaError::InvalidParameter(format!("unknown loss '{other}'"))),
    }
}
