//! Basis factorization for the revised simplex.
//!
//! Column singletons are peeled off first, then row singletons; whatever
//! remains (the nucleus) is factorized densely with partial pivoting. In
//! that order the permuted basis is block upper triangular
//!
//! ```text
//!   [ U  X  X ]      U: column-singleton block (upper triangular)
//!   [ 0  N  Y ]      N: dense nucleus
//!   [ 0  0  L ]      L: row-singleton block (lower triangular)
//! ```
//!
//! so both `B x = b` and `Bᵀ y = d` reduce to column-oriented sweeps.
//! Occupation-measure bases are triangular in time and factor with an
//! empty nucleus. Updates between refactorizations use the product form.

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum FactorError {
    Singular { position: usize },
}

#[derive(Debug, Clone)]
struct Step<T> {
    row: usize,
    pos: usize,
    pivot: T,
}

/// One elimination step of the nucleus: `l` holds the multipliers below the
/// pivot (by row), `u` the rest of the pivot row (by position).
#[derive(Debug, Clone)]
struct NucStep<T> {
    row: usize,
    pos: usize,
    pivot: T,
    l: Vec<(usize, T)>,
    u: Vec<(usize, T)>,
}

#[derive(Debug, Clone)]
struct Eta<T> {
    pos: usize,
    pivot: T,
    entries: Vec<(usize, T)>,
}

#[derive(Debug, Clone)]
pub(crate) struct BasisFactor<T> {
    m: usize,
    col_ptr: Vec<usize>,
    rows: Vec<usize>,
    vals: Vec<T>,
    col_steps: Vec<Step<T>>,
    row_steps: Vec<Step<T>>,
    nuc_pos: Vec<usize>,
    is_nuc_row: Vec<bool>,
    nuc_steps: Vec<NucStep<T>>,
    etas: Vec<Eta<T>>,
}

impl<T: Scalar> BasisFactor<T> {
    /// Factorizes the `m×m` matrix whose column `p` is `column(p)`.
    pub(crate) fn new<'a, F>(m: usize, column: F) -> Result<Self, FactorError>
    where
        F: Fn(usize) -> (&'a [usize], &'a [T]),
        T: 'a,
    {
        let mut col_ptr = Vec::with_capacity(m + 1);
        let mut rows = Vec::new();
        let mut vals = Vec::new();
        col_ptr.push(0);
        for p in 0..m {
            let (r, v) = column(p);
            for (&ri, &vi) in r.iter().zip(v) {
                if vi != T::zero() {
                    rows.push(ri);
                    vals.push(vi);
                }
            }
            col_ptr.push(rows.len());
        }

        // row -> positions
        let mut row_ptr = vec![0usize; m + 1];
        for &r in &rows {
            row_ptr[r + 1] += 1;
        }
        for r in 0..m {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut fill = row_ptr.clone();
        let mut row_pos = vec![0usize; rows.len()];
        for p in 0..m {
            for &r in &rows[col_ptr[p]..col_ptr[p + 1]] {
                row_pos[fill[r]] = p;
                fill[r] += 1;
            }
        }

        let mut row_active = vec![true; m];
        let mut col_active = vec![true; m];
        let mut row_count: Vec<usize> = (0..m).map(|r| row_ptr[r + 1] - row_ptr[r]).collect();
        let mut col_count: Vec<usize> = (0..m).map(|p| col_ptr[p + 1] - col_ptr[p]).collect();
        if let Some(p) = (0..m).find(|&p| col_count[p] == 0) {
            return Err(FactorError::Singular { position: p });
        }

        let col_max = |p: usize| vals[col_ptr[p]..col_ptr[p + 1]].iter().fold(T::zero(), |a, v| a.max(v.abs()));
        let pivot_ok = |v: T, p: usize| v.abs() > T::tol(1e-11) * col_max(p);

        let mut col_steps = Vec::new();
        let mut stack: Vec<usize> = (0..m).rev().filter(|&p| col_count[p] == 1).collect();
        while let Some(p) = stack.pop() {
            if !col_active[p] || col_count[p] != 1 {
                continue;
            }
            let Some((r, v)) = (col_ptr[p]..col_ptr[p + 1]).map(|i| (rows[i], vals[i])).find(|&(r, _)| row_active[r]) else {
                continue;
            };
            if !pivot_ok(v, p) {
                continue;
            }
            col_steps.push(Step { row: r, pos: p, pivot: v });
            col_active[p] = false;
            row_active[r] = false;
            for &q in &row_pos[row_ptr[r]..row_ptr[r + 1]] {
                if col_active[q] {
                    col_count[q] -= 1;
                    if col_count[q] == 1 {
                        stack.push(q);
                    }
                }
            }
        }
        // remaining row counts only see active columns
        for r in 0..m {
            if row_active[r] {
                row_count[r] = row_pos[row_ptr[r]..row_ptr[r + 1]].iter().filter(|&&q| col_active[q]).count();
            }
        }

        let mut row_steps = Vec::new();
        let mut stack: Vec<usize> = (0..m).rev().filter(|&r| row_active[r] && row_count[r] == 1).collect();
        while let Some(r) = stack.pop() {
            if !row_active[r] || row_count[r] != 1 {
                continue;
            }
            let Some(p) = row_pos[row_ptr[r]..row_ptr[r + 1]].iter().copied().find(|&q| col_active[q]) else {
                continue;
            };
            let v = (col_ptr[p]..col_ptr[p + 1]).find(|&i| rows[i] == r).map(|i| vals[i]).unwrap_or(T::zero());
            if !pivot_ok(v, p) {
                continue;
            }
            row_steps.push(Step { row: r, pos: p, pivot: v });
            row_active[r] = false;
            col_active[p] = false;
            for &r2 in &rows[col_ptr[p]..col_ptr[p + 1]] {
                if row_active[r2] {
                    row_count[r2] -= 1;
                    if row_count[r2] == 1 {
                        stack.push(r2);
                    }
                }
            }
        }

        let nuc_rows: Vec<usize> = (0..m).filter(|&r| row_active[r]).collect();
        let nuc_pos: Vec<usize> = (0..m).filter(|&p| col_active[p]).collect();
        if nuc_rows.len() != nuc_pos.len() {
            return Err(FactorError::Singular { position: nuc_pos.first().copied().unwrap_or(0) });
        }
        let nucleus = {
            let mut slot = vec![usize::MAX; m];
            for (i, &r) in nuc_rows.iter().enumerate() {
                slot[r] = i;
            }
            let cols: Vec<Vec<(usize, T)>> = nuc_pos
                .iter()
                .map(|&p| (col_ptr[p]..col_ptr[p + 1]).filter(|&i| slot[rows[i]] != usize::MAX).map(|i| (slot[rows[i]], vals[i])).collect())
                .collect();
            sparse_lu(cols).map_err(|b| FactorError::Singular { position: nuc_pos[b] })?
        };
        let nuc_steps = nucleus
            .into_iter()
            .map(|s| NucStep {
                row: nuc_rows[s.row],
                pos: nuc_pos[s.pos],
                pivot: s.pivot,
                l: s.l.into_iter().map(|(i, v)| (nuc_rows[i], v)).collect(),
                u: s.u.into_iter().map(|(b, v)| (nuc_pos[b], v)).collect(),
            })
            .collect();
        let mut is_nuc_row = vec![false; m];
        for &r in &nuc_rows {
            is_nuc_row[r] = true;
        }

        Ok(Self {
            m,
            col_ptr,
            rows,
            vals,
            col_steps,
            row_steps,
            nuc_pos,
            is_nuc_row,
            nuc_steps,
            etas: Vec::new(),
        })
    }

    #[cfg(test)]
    pub(crate) fn nucleus_size(&self) -> usize {
        self.nuc_pos.len()
    }

    pub(crate) fn eta_count(&self) -> usize {
        self.etas.len()
    }

    fn col(&self, p: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        (self.col_ptr[p]..self.col_ptr[p + 1]).map(move |i| (self.rows[i], self.vals[i]))
    }

    /// Solves `B₀ x = b`; `w` is row-indexed and consumed.
    fn solve_base(&self, w: &mut [T]) -> Vec<T> {
        let mut x = vec![T::zero(); self.m];
        for s in &self.row_steps {
            let xp = w[s.row] / s.pivot;
            x[s.pos] = xp;
            if xp != T::zero() {
                for (r, v) in self.col(s.pos) {
                    if r != s.row {
                        w[r] = w[r] - v * xp;
                    }
                }
            }
        }
        for s in &self.nuc_steps {
            let wr = w[s.row];
            if wr != T::zero() {
                for &(i, l) in &s.l {
                    w[i] = w[i] - l * wr;
                }
            }
        }
        for s in self.nuc_steps.iter().rev() {
            let acc = s.u.iter().fold(w[s.row], |acc, &(q, v)| acc - v * x[q]);
            x[s.pos] = acc / s.pivot;
        }
        for &p in &self.nuc_pos {
            let xp = x[p];
            if xp != T::zero() {
                for (r, v) in self.col(p) {
                    if !self.is_nuc_row[r] {
                        w[r] = w[r] - v * xp;
                    }
                }
            }
        }
        for s in self.col_steps.iter().rev() {
            let xp = w[s.row] / s.pivot;
            x[s.pos] = xp;
            if xp != T::zero() {
                for (r, v) in self.col(s.pos) {
                    if r != s.row {
                        w[r] = w[r] - v * xp;
                    }
                }
            }
        }
        x
    }

    /// Solves `B₀ᵀ y = d`; `d` is position-indexed.
    fn solve_base_tr(&self, d: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.m];
        for s in &self.col_steps {
            let mut acc = d[s.pos];
            for (r, v) in self.col(s.pos) {
                if r != s.row {
                    acc = acc - v * y[r];
                }
            }
            y[s.row] = acc / s.pivot;
        }
        if !self.nuc_steps.is_empty() {
            let mut dn = vec![T::zero(); self.m];
            for &p in &self.nuc_pos {
                let mut acc = d[p];
                for (r, v) in self.col(p) {
                    if !self.is_nuc_row[r] {
                        acc = acc - v * y[r];
                    }
                }
                dn[p] = acc;
            }
            for s in &self.nuc_steps {
                let z = dn[s.pos] / s.pivot;
                y[s.row] = z;
                if z != T::zero() {
                    for &(q, v) in &s.u {
                        dn[q] = dn[q] - v * z;
                    }
                }
            }
            for s in self.nuc_steps.iter().rev() {
                let acc = s.l.iter().fold(y[s.row], |acc, &(i, l)| acc - l * y[i]);
                y[s.row] = acc;
            }
        }
        for s in self.row_steps.iter().rev() {
            let mut acc = d[s.pos];
            for (r, v) in self.col(s.pos) {
                if r != s.row {
                    acc = acc - v * y[r];
                }
            }
            y[s.row] = acc / s.pivot;
        }
        y
    }

    /// `B⁻¹ b` for the current (updated) basis.
    pub(crate) fn ftran(&self, b: &[T]) -> Vec<T> {
        let mut w = b.to_vec();
        let mut x = self.solve_base(&mut w);
        for e in &self.etas {
            let xp = x[e.pos] / e.pivot;
            x[e.pos] = xp;
            if xp != T::zero() {
                for &(i, v) in &e.entries {
                    x[i] = x[i] - v * xp;
                }
            }
        }
        x
    }

    /// `B⁻ᵀ d` for the current (updated) basis.
    pub(crate) fn btran(&self, d: &[T]) -> Vec<T> {
        let mut d = d.to_vec();
        for e in self.etas.iter().rev() {
            let mut acc = d[e.pos];
            for &(i, v) in &e.entries {
                acc = acc - v * d[i];
            }
            d[e.pos] = acc / e.pivot;
        }
        self.solve_base_tr(&d)
    }

    /// Records the replacement of the column at `pos` by one with `alpha = B⁻¹ a`.
    pub(crate) fn update(&mut self, pos: usize, alpha: &[T]) {
        let entries = alpha
            .iter()
            .enumerate()
            .filter(|&(i, v)| i != pos && *v != T::zero())
            .map(|(i, &v)| (i, v))
            .collect();
        self.etas.push(Eta { pos, pivot: alpha[pos], entries });
    }
}

struct LocalStep<T> {
    row: usize,
    pos: usize,
    pivot: T,
    l: Vec<(usize, T)>,
    u: Vec<(usize, T)>,
}

/// Markowitz threshold pivoting on a square sparse matrix given by columns
/// of `(row, value)`. On failure returns the column that could not be pivoted.
fn sparse_lu<T: Scalar>(mut cols: Vec<Vec<(usize, T)>>) -> Result<Vec<LocalStep<T>>, usize> {
    const THRESHOLD: f64 = 0.1;
    const SEARCH: usize = 4;
    let k = cols.len();
    let scale = cols.iter().flatten().fold(T::zero(), |a, &(_, v)| a.max(v.abs())).max(T::one());
    let tiny = T::tol(1e-13) * scale;
    let mut row_pattern: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (b, col) in cols.iter().enumerate() {
        for &(i, _) in col {
            row_pattern[i].push(b);
        }
    }
    let mut row_count: Vec<usize> = row_pattern.iter().map(Vec::len).collect();
    let mut col_active = vec![true; k];
    let mut where_in_col = vec![usize::MAX; k];
    let mut steps = Vec::with_capacity(k);
    for _ in 0..k {
        // a few sparsest active columns
        let mut cand: Vec<(usize, usize)> = Vec::with_capacity(SEARCH + 1);
        for b in (0..k).filter(|&b| col_active[b]) {
            let c = cols[b].len();
            if cand.len() < SEARCH || c < cand[cand.len() - 1].0 {
                let at = cand.partition_point(|&(cc, _)| cc <= c);
                cand.insert(at, (c, b));
                cand.truncate(SEARCH);
            }
        }
        let mut best: Option<(usize, usize, usize, T)> = None;
        for &(c, b) in &cand {
            let cmax = cols[b].iter().fold(T::zero(), |a, &(_, v)| a.max(v.abs()));
            if cmax <= tiny {
                return Err(b);
            }
            for (idx, &(i, v)) in cols[b].iter().enumerate() {
                if v.abs() < T::lit(THRESHOLD) * cmax {
                    continue;
                }
                let cost = (row_count[i] - 1) * (c - 1);
                let better = match best {
                    None => true,
                    Some((bc, _, _, bv)) => cost < bc || (cost == bc && v.abs() > bv.abs()),
                };
                if better {
                    best = Some((cost, b, idx, v));
                }
            }
        }
        let Some((_, p, idx, pivot)) = best else {
            return Err(cand.first().map_or(0, |c| c.1));
        };
        let r = cols[p][idx].0;
        let pivot_col = std::mem::take(&mut cols[p]);
        col_active[p] = false;
        for &(i, _) in &pivot_col {
            row_count[i] -= 1;
        }
        let l: Vec<(usize, T)> = pivot_col.iter().filter(|&&(i, _)| i != r).map(|&(i, v)| (i, v / pivot)).collect();
        let mut u = Vec::new();
        let pattern = std::mem::take(&mut row_pattern[r]);
        for &q in &pattern {
            if !col_active[q] {
                continue;
            }
            let col = &mut cols[q];
            let Some(at) = col.iter().position(|&(i, _)| i == r) else { continue };
            let (_, arq) = col.swap_remove(at);
            row_count[r] -= 1;
            u.push((q, arq));
            if arq == T::zero() || l.is_empty() {
                continue;
            }
            for (n, &(i, _)) in col.iter().enumerate() {
                where_in_col[i] = n;
            }
            for &(i, li) in &l {
                let delta = li * arq;
                if where_in_col[i] != usize::MAX {
                    let e = &mut col[where_in_col[i]];
                    e.1 = e.1 - delta;
                } else {
                    where_in_col[i] = col.len();
                    col.push((i, -delta));
                    row_pattern[i].push(q);
                    row_count[i] += 1;
                }
            }
            for &(i, _) in col.iter() {
                where_in_col[i] = usize::MAX;
            }
        }
        steps.push(LocalStep { row: r, pos: p, pivot, l, u });
    }
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::sparse::CscMatrix;

    fn dense_mul(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter().map(|row| row.iter().zip(x).map(|(u, v)| u * v).sum()).collect()
    }

    fn check(a: Vec<Vec<f64>>) {
        let m = a.len();
        let trip: Vec<_> = (0..m).flat_map(|r| (0..m).map(move |c| (r, c))).map(|(r, c)| (r, c, a[r][c])).collect();
        let csc = CscMatrix::from_triplets(m, m, &trip);
        let f = BasisFactor::new(m, |p| csc.col(p)).unwrap();
        let b: Vec<f64> = (0..m).map(|i| (i as f64 + 1.0).sin()).collect();
        let x = f.ftran(&b);
        let ax = dense_mul(&a, &x);
        for (u, v) in ax.iter().zip(&b) {
            assert!((u - v).abs() < 1e-10, "{ax:?} vs {b:?}");
        }
        let at: Vec<Vec<f64>> = (0..m).map(|c| (0..m).map(|r| a[r][c]).collect()).collect();
        let y = f.btran(&b);
        let aty = dense_mul(&at, &y);
        for (u, v) in aty.iter().zip(&b) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn triangular_and_dense_blocks() {
        check(vec![vec![2.0, 1.0, 0.0], vec![0.0, 3.0, 0.0], vec![0.0, 1.0, 4.0]]);
        check(vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 10.0]]);
        check(vec![
            vec![1.0, 0.0, 0.0, 2.0],
            vec![0.0, 2.0, 1.0, 0.0],
            vec![0.0, 1.0, 3.0, 0.0],
            vec![0.0, 0.0, 0.0, 5.0],
        ]);
        check(vec![
            vec![0.0, 1.0, 0.0, 0.0, 0.0],
            vec![3.0, 0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 2.0, 1.0, 7.0],
            vec![1.0, 0.0, 0.0, 4.0, 0.0],
            vec![0.0, 2.0, 0.0, 0.0, 1.0],
        ]);
    }

    proptest::proptest! {
        #[test]
        fn sparse_nucleus_solves(seed in 0u64..5000, m in 3usize..25) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut a = vec![vec![0.0; m]; m];
            for (i, row) in a.iter_mut().enumerate() {
                row[(i + 1) % m] = rng.gen_range(1.0..2.0);
                for _ in 0..2 {
                    row[rng.gen_range(0..m)] += rng.gen_range(-1.0..1.0);
                }
            }
            check(a);
        }
    }

    #[test]
    fn triangular_basis_has_empty_nucleus() {
        let tri = CscMatrix::from_triplets(3, 3, &[(0, 0, 1.0), (1, 0, -0.5), (1, 1, 1.0), (2, 1, -0.5), (2, 2, 1.0)]);
        assert_eq!(BasisFactor::<f64>::new(3, |p| tri.col(p)).unwrap().nucleus_size(), 0);
        let dense = CscMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 0, 2.0), (0, 1, 3.0), (1, 1, 1.0)]);
        assert_eq!(BasisFactor::<f64>::new(2, |p| dense.col(p)).unwrap().nucleus_size(), 2);
    }

    #[test]
    fn singular_basis_is_detected() {
        let csc = CscMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 0, 1.0), (0, 1, 2.0), (1, 1, 2.0)]);
        assert!(BasisFactor::<f64>::new(2, |p| csc.col(p)).is_err());
    }

    #[test]
    fn eta_updates_match_refactorization() {
        let a = CscMatrix::from_triplets(3, 4, &[(0, 0, 2.0), (1, 1, 1.0), (2, 2, 1.0), (0, 3, 1.0), (1, 3, 1.0), (2, 3, 1.0), (1, 0, 1.0)]);
        let mut f = BasisFactor::<f64>::new(3, |p| a.col(p)).unwrap();
        let entering = a.mul_vec(&[0.0, 0.0, 0.0, 1.0]);
        let alpha = f.ftran(&entering);
        f.update(1, &alpha);
        let g = BasisFactor::<f64>::new(3, |p| a.col([0, 3, 2][p])).unwrap();
        let b = [1.0, -2.0, 0.5];
        let (x1, x2) = (f.ftran(&b), g.ftran(&b));
        let (y1, y2) = (f.btran(&b), g.btran(&b));
        for i in 0..3 {
            assert!((x1[i] - x2[i]).abs() < 1e-12);
            assert!((y1[i] - y2[i]).abs() < 1e-12);
        }
    }
}
