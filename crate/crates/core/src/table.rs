use std::collections::HashSet;

use crate::error::{check_index, MlsaError, Result};

/// A finite hypothesis class restricted to the sample covariates.
///
/// Entry `(i, j)` holds `h_j(x_i)`. Storage is row-major so that the
/// per-row sweeps of the engine stay contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl PredictionTable {
    /// Builds a table from hypothesis columns, collapsing duplicate columns
    /// (first occurrence wins). Restricted classes are sets of labelings.
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let mut seen = HashSet::new();
        let unique: Vec<Vec<f64>> = columns
            .into_iter()
            .filter(|c| seen.insert(c.iter().map(|v| v.to_bits()).collect::<Vec<_>>()))
            .collect();
        Self::with_multiplicity(unique)
    }

    /// Builds a table keeping every column, duplicates included. Under the
    /// counting measure a repeated column then carries weight equal to its
    /// multiplicity.
    pub fn with_multiplicity(columns: Vec<Vec<f64>>) -> Result<Self> {
        let cols = columns.len();
        if cols == 0 {
            return Err(MlsaError::Empty("hypothesis class"));
        }
        let rows = columns[0].len();
        if rows == 0 {
            return Err(MlsaError::Empty("sample"));
        }
        for c in &columns {
            if c.len() != rows {
                return Err(MlsaError::LengthMismatch {
                    what: "hypothesis column",
                    got: c.len(),
                    expected: rows,
                });
            }
        }
        let mut values = vec![0.0; rows * cols];
        for (j, c) in columns.iter().enumerate() {
            for (i, &v) in c.iter().enumerate() {
                values[i * cols + j] = v;
            }
        }
        Ok(Self { rows, cols, values })
    }

    /// Row-major constructor; keeps duplicates.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(MlsaError::Empty("sample"));
        }
        let m = rows[0].len();
        if m == 0 {
            return Err(MlsaError::Empty("hypothesis class"));
        }
        let mut values = Vec::with_capacity(n * m);
        for r in &rows {
            if r.len() != m {
                return Err(MlsaError::LengthMismatch {
                    what: "table row",
                    got: r.len(),
                    expected: m,
                });
            }
            values.extend_from_slice(r);
        }
        Ok(Self {
            rows: n,
            cols: m,
            values,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.rows
    }

    pub fn n_hypotheses(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.cols).map(|j| self.column(j)).collect()
    }

    pub fn check_column(&self, j: usize) -> Result<()> {
        check_index("hypothesis", j, self.cols)
    }

    pub fn check_row(&self, i: usize) -> Result<()> {
        check_index("sample", i, self.rows)
    }

    /// New table with columns reordered by `perm` (a permutation of `0..m`).
    pub fn permute_columns(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.cols {
            return Err(MlsaError::LengthMismatch {
                what: "permutation",
                got: perm.len(),
                expected: self.cols,
            });
        }
        let cols = perm
            .iter()
            .map(|&j| {
                self.check_column(j)?;
                Ok(self.column(j))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::with_multiplicity(cols)
    }
}

/// Responses `y_1..y_n`. For density estimation the response slot carries the
/// observation index and the loss ignores it.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub responses: Vec<f64>,
}

impl LabeledSample {
    pub fn new(responses: Vec<f64>) -> Self {
        Self { responses }
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn check_matches(&self, table: &PredictionTable) -> Result<()> {
        if self.len() == table.n_samples() {
            Ok(())
        } else {
            Err(MlsaError::LengthMismatch {
                what: "sample",
                got: self.len(),
                expected: table.n_samples(),
            })
        }
    }
}
