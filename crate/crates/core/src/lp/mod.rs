//! Sparse linear programs and a revised simplex solver that returns both the
//! primal point and one dual multiplier per constraint row.
//!
//! Programs are always in minimization form:
//!
//! ```text
//!   minimize cᵀx   subject to   A_i x = b_i  or  A_i x ≥ b_i,   x_j ≥ 0 or free.
//! ```
//!
//! Multipliers follow the usual sign convention: `y_i ≥ 0` on `≥` rows,
//! free on `=` rows, and `Aᵀy ≤ c` on nonnegative columns.

mod factor;
mod simplex;
mod sparse;

use std::fmt::Write as _;
use std::io::{self, Write};

pub use simplex::{solve_lp, solve_lp_warm};
pub use sparse::CscMatrix;

use crate::error::LpError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowerBound {
    Zero,
    Free,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram<T = f64> {
    objective: Vec<T>,
    matrix: CscMatrix<T>,
    rhs: Vec<T>,
    senses: Vec<RowSense>,
    bounds: Vec<LowerBound>,
}

impl<T: Scalar> LinearProgram<T> {
    pub fn new(
        objective: Vec<T>,
        matrix: CscMatrix<T>,
        rhs: Vec<T>,
        senses: Vec<RowSense>,
        bounds: Vec<LowerBound>,
    ) -> Result<Self, LpError> {
        let (m, n) = (matrix.n_rows(), matrix.n_cols());
        if objective.len() != n || bounds.len() != n {
            return Err(LpError::Malformed(format!(
                "{n} columns but {} costs and {} bounds",
                objective.len(),
                bounds.len()
            )));
        }
        if rhs.len() != m || senses.len() != m {
            return Err(LpError::Malformed(format!("{m} rows but {} rhs and {} senses", rhs.len(), senses.len())));
        }
        if let Some(i) = objective.iter().position(|v| !v.is_finite()) {
            return Err(LpError::Malformed(format!("objective entry {i} is not finite")));
        }
        if let Some(i) = rhs.iter().position(|v| !v.is_finite()) {
            return Err(LpError::Malformed(format!("rhs entry {i} is not finite")));
        }
        if let Some((r, c, _)) = matrix.triplets().into_iter().find(|t| !t.2.is_finite()) {
            return Err(LpError::Malformed(format!("matrix entry ({r}, {c}) is not finite")));
        }
        Ok(Self { objective, matrix, rhs, senses, bounds })
    }

    pub fn n_rows(&self) -> usize {
        self.matrix.n_rows()
    }

    pub fn n_cols(&self) -> usize {
        self.matrix.n_cols()
    }

    pub fn objective(&self) -> &[T] {
        &self.objective
    }

    pub fn matrix(&self) -> &CscMatrix<T> {
        &self.matrix
    }

    pub fn rhs(&self) -> &[T] {
        &self.rhs
    }

    pub fn senses(&self) -> &[RowSense] {
        &self.senses
    }

    pub fn bounds(&self) -> &[LowerBound] {
        &self.bounds
    }

    /// Same program with the objective multiplied by `alpha`.
    pub fn with_scaled_objective(&self, alpha: T) -> Self {
        Self { objective: self.objective.iter().map(|&c| c * alpha).collect(), ..self.clone() }
    }

    pub fn objective_value(&self, x: &[T]) -> T {
        self.objective.iter().zip(x).map(|(&c, &v)| c * v).sum()
    }

    /// Largest violation of the row constraints and variable bounds at `x`.
    pub fn primal_residual(&self, x: &[T]) -> T {
        let ax = self.matrix.mul_vec(x);
        let mut worst = T::zero();
        for ((&v, &b), &s) in ax.iter().zip(&self.rhs).zip(&self.senses) {
            let r = match s {
                RowSense::Eq => (v - b).abs(),
                RowSense::Ge => (b - v).max(T::zero()),
            };
            worst = worst.max(r);
        }
        for (&v, &lb) in x.iter().zip(&self.bounds) {
            if lb == LowerBound::Zero {
                worst = worst.max(-v);
            }
        }
        worst
    }

    /// Largest violation of dual feasibility at multipliers `y`.
    pub fn dual_residual(&self, y: &[T]) -> T {
        let mut worst = T::zero();
        for (i, &s) in self.senses.iter().enumerate() {
            if s == RowSense::Ge {
                worst = worst.max(-y[i]);
            }
        }
        for c in 0..self.n_cols() {
            let d = self.objective[c] - self.matrix.col_dot(c, y);
            let r = match self.bounds[c] {
                LowerBound::Zero => -d,
                LowerBound::Free => d.abs(),
            };
            worst = worst.max(r);
        }
        worst
    }

    /// `bᵀy`.
    pub fn dual_objective(&self, y: &[T]) -> T {
        self.rhs.iter().zip(y).map(|(&b, &v)| b * v).sum()
    }

    /// Writes the program as plain-text sparse triplets for external cross-checking.
    ///
    /// Layout: a header `rows cols nnz`, then `c <col> <value>` cost lines,
    /// `b <row> <sense> <value>` rhs lines, `l <col> <zero|free>` bound lines
    /// and `a <row> <col> <value>` matrix lines.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{} {} {}", self.n_rows(), self.n_cols(), self.matrix.nnz())?;
        for (j, c) in self.objective.iter().enumerate() {
            writeln!(out, "c {j} {c}")?;
        }
        for (i, (b, s)) in self.rhs.iter().zip(&self.senses).enumerate() {
            let s = if *s == RowSense::Eq { "=" } else { ">=" };
            writeln!(out, "b {i} {s} {b}")?;
        }
        for (j, l) in self.bounds.iter().enumerate() {
            let l = if *l == LowerBound::Zero { "zero" } else { "free" };
            writeln!(out, "l {j} {l}")?;
        }
        for (r, c, v) in self.matrix.triplets() {
            writeln!(out, "a {r} {c} {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// One pivot of the simplex log.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub phase: u8,
    pub objective: f64,
    pub entering: usize,
    pub leaving: usize,
    pub step: f64,
    pub bland: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<T = f64> {
    pub status: LpStatus,
    pub primal: Vec<T>,
    pub dual: Vec<T>,
    pub objective: T,
    pub iterations: usize,
    /// Final basis as column ids: `0..n` structural, `n + i` the surplus of the
    /// `i`-th `≥` row. Can be passed back to [`solve_lp_warm`].
    pub basis: Vec<usize>,
    pub log: Vec<IterationRecord>,
}

/// Residuals of a solution against the acceptance bounds of an optimal solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolutionQuality<T = f64> {
    pub primal_residual: T,
    pub dual_residual: T,
    pub gap: T,
}

impl<T: Scalar> SolutionQuality<T> {
    pub fn evaluate(lp: &LinearProgram<T>, sol: &LpSolution<T>) -> Self {
        let primal = lp.objective_value(&sol.primal);
        Self {
            primal_residual: lp.primal_residual(&sol.primal),
            dual_residual: lp.dual_residual(&sol.dual),
            gap: (primal - lp.dual_objective(&sol.dual)).abs(),
        }
    }

    /// Primal `≤ 1e-9(1+‖b‖∞)`, dual `≤ 1e-9(1+‖c‖∞)`, gap `≤ 1e-8(1+|cᵀx|)`.
    pub fn within_bounds(&self, lp: &LinearProgram<T>, objective: T) -> bool {
        let bn = lp.rhs.iter().fold(T::zero(), |a, v| a.max(v.abs()));
        let cn = lp.objective.iter().fold(T::zero(), |a, v| a.max(v.abs()));
        self.primal_residual <= T::tol(1e-9) * (T::one() + bn)
            && self.dual_residual <= T::tol(1e-9) * (T::one() + cn)
            && self.gap <= T::tol(1e-8) * (T::one() + objective.abs())
    }
}

pub(crate) fn format_log(log: &[IterationRecord], tail: usize) -> Vec<String> {
    log.iter()
        .skip(log.len().saturating_sub(tail))
        .map(|r| {
            let mut s = String::new();
            let _ = write!(
                s,
                "it {} phase {} obj {:.12e} in {} out {} step {:.3e}{}",
                r.iteration,
                r.phase,
                r.objective,
                r.entering,
                r.leaving,
                r.step,
                if r.bland { " bland" } else { "" }
            );
            s
        })
        .collect()
}
