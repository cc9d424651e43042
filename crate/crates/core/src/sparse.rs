//! Compressed sparse row storage for the finite-difference operators.

use std::ops::{Add, AddAssign, Mul};

use faer::sparse::{SparseColMat, Triplet};

use crate::{Error, Result};

/// Square CSR matrix. Duplicate entries given at construction are summed.
#[derive(Debug, Clone)]
pub struct CsrMatrix<T> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
}

impl<T> CsrMatrix<T>
where
    T: Copy + Default + Add<Output = T> + AddAssign + Mul<Output = T>,
{
    pub fn from_triplets(n: usize, mut entries: Vec<(usize, usize, T)>) -> Self {
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut vals: Vec<T> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            assert!(r < n && c < n, "entry ({r}, {c}) outside {n}×{n} matrix");
            if last == Some((r, c)) {
                *vals.last_mut().expect("duplicate follows an entry") += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `y = A·x`.
    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        for (r, yr) in y.iter_mut().enumerate().take(self.n) {
            let mut acc = T::default();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *yr = acc;
        }
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::default(); self.n];
        self.matvec(x, &mut y);
        y
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.cols[k], self.vals[k]))
        })
    }

    /// `α·I + s·A` with the same sparsity plus the diagonal.
    pub fn shifted(&self, alpha: T, scale: T) -> Self {
        let mut e: Vec<_> = self.entries().map(|(r, c, v)| (r, c, scale * v)).collect();
        e.extend((0..self.n).map(|i| (i, i, alpha)));
        Self::from_triplets(self.n, e)
    }
}

pub(crate) fn to_faer<T>(m: &CsrMatrix<T>) -> Result<SparseColMat<usize, T>>
where
    T: Copy + Default + Add<Output = T> + AddAssign + Mul<Output = T> + faer::traits::ComplexField,
{
    let t: Vec<Triplet<usize, usize, T>> = m.entries().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
    SparseColMat::try_new_from_triplets(m.n, m.n, &t)
        .map_err(|e| Error::LinearAlgebra(format!("sparse assembly failed: {e:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed_and_matvec_matches_dense() {
        let m = CsrMatrix::from_triplets(3, vec![(0, 0, 1.0), (2, 1, 4.0), (0, 0, 2.0), (1, 2, -1.0), (2, 2, 5.0)]);
        assert_eq!(m.nnz(), 4);
        assert_eq!(m.apply(&[1.0, 2.0, 3.0]), vec![3.0, -3.0, 23.0]);
    }

    #[test]
    fn shift_adds_diagonal() {
        let m = CsrMatrix::from_triplets(2, vec![(0, 1, 1.0), (1, 0, 1.0)]);
        let s = m.shifted(3.0, -1.0);
        assert_eq!(s.apply(&[1.0, 1.0]), vec![2.0, 2.0]);
    }
}
