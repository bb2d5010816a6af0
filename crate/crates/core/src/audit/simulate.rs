use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{median, predict_index, Aggregation, LossMatrix};
use crate::error::{MlsaError, Result};
use crate::grid::ToleranceGrid;
use crate::loss::LossModel;
use crate::seed::rng_for;
use crate::table::{LabeledSample, PredictionTable};

/// A synthetic i.i.d. task whose class can be restricted to any drawn sample.
pub trait TaskGenerator: Sync {
    /// Draws `count` i.i.d. pairs and restricts the class to their covariates.
    fn draw(&self, count: usize, rng: &mut ChaCha8Rng) -> Result<(PredictionTable, LabeledSample)>;
    fn loss(&self) -> LossModel;
    fn aggregation(&self) -> Aggregation;
    fn grid(&self, sample_size: usize) -> Result<ToleranceGrid>;
    /// `min_h E[loss(h(X), Y)]` under the generating distribution.
    fn min_risk(&self) -> f64;
    /// `(C, Comp)` of the multiplicative oracle inequality on `sample_size` points.
    fn oracle_constants(&self, sample_size: usize) -> (f64, f64);
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub n: usize,
    pub repetitions: usize,
    pub mean_test_loss: f64,
    pub stderr: f64,
    pub min_risk: f64,
    /// Mean of `min_h L_S(h) / (n + 1)` over repetitions.
    pub mean_empirical_risk: f64,
    pub multiplier: f64,
    pub complexity: f64,
    /// `C * min_risk + Comp / (n + 1)`.
    pub bound: f64,
}

impl SimulationReport {
    /// `mean_test_loss <= bound + k * stderr`.
    pub fn within(&self, k: f64) -> bool {
        self.mean_test_loss.is_finite() && self.mean_test_loss <= self.bound + k * self.stderr
    }
}

/// Draws `n + 1` points per repetition, hides the last response from its own
/// level sets and records the held-out loss at that point.
pub fn simulate_generalization<G: TaskGenerator>(
    generator: &G,
    n: usize,
    repetitions: usize,
    seed: u64,
) -> Result<SimulationReport> {
    if n == 0 || repetitions == 0 {
        return Err(MlsaError::InvalidParameter("n and repetitions must be positive".into()));
    }
    let loss = generator.loss();
    let agg = generator.aggregation();
    let grid = generator.grid(n + 1)?;
    let draws: Vec<(f64, f64)> = (0..repetitions)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rng_for(seed, "generalization", rep as u64);
            let (table, sample) = generator.draw(n + 1, &mut rng)?;
            let lm = LossMatrix::new(&table, &sample, &loss)?;
            let held_out = n;
            let prediction = median(&predict_index(&lm, &table, &grid, agg, held_out))?;
            let test_loss = loss.eval(prediction, sample.responses[held_out]);
            Ok((test_loss, lm.erm_loss() / (n + 1) as f64))
        })
        .collect::<Result<_>>()?;
    let reps = repetitions as f64;
    let mean = draws.iter().map(|d| d.0).sum::<f64>() / reps;
    let var = if repetitions > 1 {
        draws.iter().map(|d| (d.0 - mean).powi(2)).sum::<f64>() / (reps - 1.0)
    } else {
        0.0
    };
    let (multiplier, complexity) = generator.oracle_constants(n + 1);
    let min_risk = generator.min_risk();
    Ok(SimulationReport {
        n,
        repetitions,
        mean_test_loss: mean,
        stderr: (var / reps).sqrt(),
        min_risk,
        mean_empirical_risk: draws.iter().map(|d| d.1).sum::<f64>() / reps,
        multiplier,
        complexity,
        bound: multiplier * min_risk + complexity / (n + 1) as f64,
    })
}
