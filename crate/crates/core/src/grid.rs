use crate::error::{MlsaError, Result};

/// Ordered finite tolerance set with its sandwich gap.
#[derive(Debug, Clone, PartialEq)]
pub struct ToleranceGrid {
    levels: Vec<f64>,
    gap: f64,
}

impl ToleranceGrid {
    pub fn new(levels: Vec<f64>, gap: f64) -> Result<Self> {
        if levels.is_empty() {
            return Err(MlsaError::Empty("tolerance grid"));
        }
        if !(gap > 0.0 && gap.is_finite()) {
            return Err(MlsaError::InvalidParameter(format!("grid gap must be positive, got {gap}")));
        }
        if levels.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(MlsaError::InvalidParameter("grid levels must be finite and nonnegative".into()));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MlsaError::InvalidParameter("grid levels must be strictly increasing".into()));
        }
        Ok(Self { levels, gap })
    }

    /// `{step, 2 step, ..., count step}` with gap `step`.
    pub fn arithmetic(step: f64, count: usize) -> Result<Self> {
        Self::new((1..=count).map(|k| k as f64 * step).collect(), step)
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn gap(&self) -> f64 {
        self.gap
    }

    pub fn t_max(&self) -> f64 {
        *self.levels.last().expect("grid is nonempty")
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn check_gap(&self, delta: f64) -> Result<()> {
        if (self.gap - delta).abs() <= 1e-12 * delta.abs().max(1.0) {
            Ok(())
        } else {
            Err(MlsaError::GridMismatch { gap: self.gap, delta })
        }
    }
}

/// Ceiling of a real-valued grid-size bound, at least one level.
pub(crate) fn level_count(bound: f64) -> usize {
    (bound.ceil() as usize).max(1)
}
