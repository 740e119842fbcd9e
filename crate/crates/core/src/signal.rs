//! Discrete-time signals: `K` samples of an `n`-dimensional state.
//!
//! Steps are numbered `1..=K`. A formula evaluated at step `k` may look at
//! steps `k + a ..= k + b` for each temporal interval `[a, b]`, so evaluation
//! at `k = 0` is meaningful whenever every predicate access lands on a
//! step `>= 1`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    steps: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Signal {
    /// Builds a signal from row-major data (`steps * dim` entries).
    pub fn new(steps: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if steps == 0 || dim == 0 {
            return Err(Error::Signal(format!(
                "need at least one step and one dimension, got {steps}x{dim}"
            )));
        }
        if data.len() != steps * dim {
            return Err(Error::Signal(format!(
                "expected {} entries for a {steps}x{dim} signal, got {}",
                steps * dim,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Signal(format!(
                "non-finite entry at step {}, component {}",
                i / dim + 1,
                i % dim + 1
            )));
        }
        Ok(Self { steps, dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Signal("ragged rows".into()));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    /// Scalar signal, one value per step.
    pub fn scalar(values: &[f64]) -> Result<Self> {
        Self::new(values.len(), 1, values.to_vec())
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// State at 1-based step `k`.
    pub fn at(&self, k: usize) -> &[f64] {
        assert!(k >= 1 && k <= self.steps, "step {k} outside 1..={}", self.steps);
        &self.data[(k - 1) * self.dim..k * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}
