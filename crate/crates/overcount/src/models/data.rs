//! Count observations: a single multivariate count vector and a matrix of
//! observations sharing the same number of categories.

use crate::error::{Error, Result};

/// A single multivariate count observation over p ≥ 2 categories.
///
/// The size m is the row total. It is zero only for families whose total is
/// itself random (the negative multinomial); the conditional-on-m families
/// always see m ≥ 1 in practice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountVector {
    y: Vec<u64>,
    m: u64,
}

impl CountVector {
    pub fn new(y: Vec<u64>) -> Result<Self> {
        if y.len() < 2 {
            return Err(Error::InvalidData(format!(
                "count vector needs at least 2 categories, got {}",
                y.len()
            )));
        }
        let m = y.iter().sum();
        Ok(CountVector { y, m })
    }

    pub fn counts(&self) -> &[u64] {
        &self.y
    }

    /// Total number of trials (the row sum).
    pub fn m(&self) -> u64 {
        self.m
    }

    /// Number of categories.
    pub fn p(&self) -> usize {
        self.y.len()
    }
}

/// An n×p matrix of count observations. Rows may carry different totals m_i.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountMatrix {
    rows: Vec<Vec<u64>>,
    row_sums: Vec<u64>,
    p: usize,
}

impl CountMatrix {
    pub fn new(rows: Vec<Vec<u64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidData("count matrix needs at least one row".into()));
        }
        let p = rows[0].len();
        if p < 2 {
            return Err(Error::InvalidData(format!(
                "count matrix needs at least 2 columns, got {p}"
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::InvalidData(format!(
                    "row {} has {} columns, expected {p}",
                    i + 1,
                    row.len()
                )));
            }
        }
        let row_sums = rows.iter().map(|r| r.iter().sum()).collect();
        Ok(CountMatrix { rows, row_sums, p })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.rows[i]
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.row_sums[i]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.rows.iter().map(|r| r.as_slice())
    }

    pub fn row_vector(&self, i: usize) -> CountVector {
        CountVector {
            y: self.rows[i].clone(),
            m: self.row_sums[i],
        }
    }

    /// Mean row total, used as the reference size m* when rows differ.
    pub fn mean_row_sum(&self) -> f64 {
        self.row_sums.iter().sum::<u64>() as f64 / self.n() as f64
    }

    /// Drops rows whose total is zero; returns the retained matrix and the
    /// number of dropped rows. Errors if nothing remains.
    pub fn drop_empty_rows(&self) -> Result<(CountMatrix, usize)> {
        let kept: Vec<Vec<u64>> = self
            .rows
            .iter()
            .zip(&self.row_sums)
            .filter(|(_, &s)| s > 0)
            .map(|(r, _)| r.clone())
            .collect();
        let dropped = self.n() - kept.len();
        if kept.is_empty() {
            return Err(Error::InvalidData("all rows are zero".into()));
        }
        Ok((CountMatrix::new(kept)?, dropped))
    }
}
