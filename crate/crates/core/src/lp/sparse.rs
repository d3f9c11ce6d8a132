use crate::scalar::Scalar;

/// Compressed sparse column matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix<T = f64> {
    n_rows: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Scalar> CscMatrix<T> {
    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// explicit zeros dropped. Entries within a column are sorted by row.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut counts = vec![0usize; n_cols + 1];
        for &(r, c, _) in triplets {
            assert!(r < n_rows && c < n_cols, "triplet ({r}, {c}) outside {n_rows}x{n_cols}");
            counts[c + 1] += 1;
        }
        for c in 0..n_cols {
            counts[c + 1] += counts[c];
        }
        let mut next = counts.clone();
        let mut rows = vec![0usize; triplets.len()];
        let mut vals = vec![T::zero(); triplets.len()];
        for &(r, c, v) in triplets {
            rows[next[c]] = r;
            vals[next[c]] = v;
            next[c] += 1;
        }
        let mut col_ptr = Vec::with_capacity(n_cols + 1);
        let mut row_idx = Vec::with_capacity(triplets.len());
        let mut out_vals = Vec::with_capacity(triplets.len());
        col_ptr.push(0);
        let mut scratch: Vec<(usize, T)> = Vec::new();
        for c in 0..n_cols {
            scratch.clear();
            scratch.extend((counts[c]..counts[c + 1]).map(|i| (rows[i], vals[i])));
            scratch.sort_by_key(|e| e.0);
            let mut i = 0;
            while i < scratch.len() {
                let r = scratch[i].0;
                let mut v = T::zero();
                while i < scratch.len() && scratch[i].0 == r {
                    v = v + scratch[i].1;
                    i += 1;
                }
                if v != T::zero() {
                    row_idx.push(r);
                    out_vals.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        Self { n_rows, col_ptr, row_idx, vals: out_vals }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.col_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn col(&self, c: usize) -> (&[usize], &[T]) {
        let r = self.col_ptr[c]..self.col_ptr[c + 1];
        (&self.row_idx[r.clone()], &self.vals[r])
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let (rows, vals) = self.col(c);
        match rows.binary_search(&r) {
            Ok(i) => vals[i],
            Err(_) => T::zero(),
        }
    }

    /// `A x`.
    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_rows];
        for (c, &xc) in x.iter().enumerate() {
            if xc != T::zero() {
                let (rows, vals) = self.col(c);
                for (&r, &v) in rows.iter().zip(vals) {
                    out[r] = out[r] + v * xc;
                }
            }
        }
        out
    }

    /// `yᵀ A_c`.
    pub fn col_dot(&self, c: usize, y: &[T]) -> T {
        let (rows, vals) = self.col(c);
        rows.iter().zip(vals).fold(T::zero(), |acc, (&r, &v)| acc + v * y[r])
    }

    /// `Aᵀ y`.
    pub fn tr_mul_vec(&self, y: &[T]) -> Vec<T> {
        (0..self.n_cols()).map(|c| self.col_dot(c, y)).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.n_cols(), self.n_rows, &self.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect::<Vec<_>>())
    }

    pub fn scaled(&self, s: T) -> Self {
        Self { n_rows: self.n_rows, col_ptr: self.col_ptr.clone(), row_idx: self.row_idx.clone(), vals: self.vals.iter().map(|&v| v * s).collect() }
    }

    /// `(row, col, value)` in column-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, T)> {
        let mut out = Vec::with_capacity(self.nnz());
        for c in 0..self.n_cols() {
            let (rows, vals) = self.col(c);
            out.extend(rows.iter().zip(vals).map(|(&r, &v)| (r, c, v)));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed_and_zeros_dropped() {
        let m = CscMatrix::<f64>::from_triplets(3, 2, &[(2, 0, 1.0), (0, 0, 2.0), (2, 0, 0.5), (1, 1, 0.0)]);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.col(0), (&[0usize, 2][..], &[2.0, 1.5][..]));
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.mul_vec(&[1.0, 5.0]), vec![2.0, 0.0, 1.5]);
        assert_eq!(m.transpose().get(0, 2), 1.5);
    }
}
