//! Compressed sparse row storage.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Items per partial matrix in [`assemble`]; fixed so the summation order
/// does not depend on the thread count.
const ASSEMBLY_CHUNK: usize = 64;

/// Builds a matrix from `count` independent contributions, `f(item, builder)`.
/// Contributions are compressed in fixed-size chunks in parallel and then
/// summed, which bounds the number of live triplets.
pub fn assemble(rows: usize, cols: usize, count: usize, f: impl Fn(usize, &mut TripletBuilder) + Sync) -> SparseOperator {
    let starts: Vec<usize> = (0..count).step_by(ASSEMBLY_CHUNK).collect();
    let parts: Vec<SparseOperator> = starts
        .par_iter()
        .map(|&s| {
            let mut b = TripletBuilder::new(rows, cols);
            for item in s..(s + ASSEMBLY_CHUNK).min(count) {
                f(item, &mut b);
            }
            b.build()
        })
        .collect();
    let mut b = TripletBuilder::new(rows, cols);
    for p in &parts {
        for (i, j, v) in p.triplets() {
            b.push(i, j, v);
        }
    }
    b.build()
}

/// Accumulates `(row, col, value)` entries; duplicates are summed on build.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.rows && col < self.cols);
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    pub fn extend(&mut self, other: TripletBuilder) {
        self.entries.extend(other.entries);
    }

    pub fn build(mut self) -> SparseOperator {
        self.entries
            .sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; self.rows + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..self.rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseOperator {
            rows: self.rows,
            cols: self.cols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

/// CSR matrix with sorted, deduplicated column indices in every row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseOperator {
    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        TripletBuilder::new(rows, cols).build()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// `y += s · A x`.
    pub fn matvec_add(&self, s: f64, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let v: f64 = self.row(i).map(|(j, v)| v * x[j]).sum();
            *yi += s * v;
        }
    }

    pub fn transpose(&self) -> SparseOperator {
        let mut b = TripletBuilder::new(self.cols, self.rows);
        for (i, j, v) in self.triplets() {
            b.push(j, i, v);
        }
        b.build()
    }

    /// Largest entry of `|A − Aᵀ|`.
    pub fn asymmetry(&self) -> f64 {
        self.triplets()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: f64) -> SparseOperator {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Lower and upper bandwidth.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for (i, j, _) in self.triplets() {
            if j < i {
                kl = kl.max(i - j);
            } else {
                ku = ku.max(j - i);
            }
        }
        (kl, ku)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub(crate) fn raw(&self) -> (&[usize], &[usize], &[f64]) {
        (&self.row_ptr, &self.col_idx, &self.values)
    }

    pub fn check_square(&self) -> Result<()> {
        if self.rows != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                found: self.cols,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed_and_sorted() {
        let mut b = TripletBuilder::new(2, 3);
        b.push(1, 2, 1.0);
        b.push(0, 1, 2.0);
        b.push(1, 0, 3.0);
        b.push(1, 2, 4.0);
        let a = b.build();
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.get(1, 2), 5.0);
        assert_eq!(a.row(1).map(|(j, _)| j).collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(a.matvec(&[1.0, 1.0, 1.0]), vec![2.0, 8.0]);
        let t = a.transpose();
        assert_eq!(t.get(2, 1), 5.0);
        assert_eq!(a.bandwidths(), (1, 1));
    }

    #[test]
    fn chunked_assembly_sums_overlaps() {
        let n = 200;
        let a = assemble(n, n, n, |i, b| {
            b.push(i, i, 1.0);
            b.push((i + 1) % n, (i + 1) % n, 1.0);
        });
        assert_eq!(a.nnz(), n);
        assert!(a.diagonal().iter().all(|&d| d == 2.0));
    }
}
