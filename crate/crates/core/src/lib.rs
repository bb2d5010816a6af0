//! Median of level-set aggregation (MLSA) over finite prediction tables.
//!
//! A hypothesis class is represented by its restriction to the sample: a
//! table of predictions `h_j(x_i)`. For each held-out index the engine forms
//! the leave-one-out level sets at every tolerance of a grid, aggregates the
//! predictions inside each set and returns the median over the grid.

pub mod audit;
pub mod classification;
pub mod density;
pub mod engine;
pub mod error;
pub mod grid;
pub mod logistic;
pub mod loss;
pub mod regression;
pub mod seed;
pub mod table;
pub mod vaw;

pub use engine::{run_mlsa, Aggregation, LossMatrix, MlsaOutput};
pub use error::{MlsaError, Result};
pub use grid::ToleranceGrid;
pub use loss::LossModel;
pub use table::{LabeledSample, PredictionTable};
