//! Observation sequences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// T×d real-valued time series stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSequence {
    dim: usize,
    values: Vec<f64>,
}

impl ObservationSequence {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("observation dimension must be at least 1"));
        }
        if values.len() % dim != 0 {
            return Err(Error::input(format!(
                "{} values do not form rows of length {dim}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite observation at row {}", i / dim)));
        }
        Ok(Self { dim, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::input("ragged observation rows"));
        }
        Self::new(dim, rows.concat())
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    /// Sub-sequence of rows `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            dim: self.dim,
            values: self.values[start * self.dim..end * self.dim].to_vec(),
        }
    }

    /// Per-dimension mean and (population) standard deviation.
    pub fn moments(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.len().max(1) as f64;
        let mut mean = vec![0.0; self.dim];
        for r in self.rows() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; self.dim];
        for r in self.rows() {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        (mean, var.into_iter().map(f64::sqrt).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_and_validation() {
        let y = ObservationSequence::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(y.len(), 2);
        assert_eq!(y.row(1), &[3.0, 4.0]);
        assert!(ObservationSequence::new(2, vec![1.0, 2.0, 3.0]).is_err());
        assert!(ObservationSequence::new(1, vec![f64::NAN]).is_err());
        let (m, s) = y.moments();
        assert_eq!(m, vec![2.0, 3.0]);
        assert_eq!(s, vec![1.0, 1.0]);
    }
}
