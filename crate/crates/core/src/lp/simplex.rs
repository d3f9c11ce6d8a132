//! Two-phase bounded-below revised simplex.
//!
//! Pricing is Dantzig's rule; after a run of degenerate pivots the solver
//! switches to Bland's rule (lowest eligible index enters, lowest index
//! leaves among ratio ties) until a pivot makes progress again. The ratio
//! test uses Harris' two-pass rule outside Bland mode. Every choice breaks
//! ties by lowest column id, so runs are reproducible.

use super::factor::BasisFactor;
use super::{format_log, CscMatrix, IterationRecord, LinearProgram, LowerBound, LpSolution, LpStatus, RowSense};
use crate::error::LpError;
use crate::scalar::Scalar;

const REFACTOR_EVERY: usize = 64;
const DEGENERATE_RUN: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Structural,
    Slack,
    Artificial,
}

struct Simplex<'a, T: Scalar> {
    lp: &'a LinearProgram<T>,
    m: usize,
    n: usize,
    n_slack: usize,
    aux: CscMatrix<T>,
    free: Vec<bool>,
    basis: Vec<usize>,
    position: Vec<usize>,
    factor: BasisFactor<T>,
    x_b: Vec<T>,
    iterations: usize,
    log: Vec<IterationRecord>,
    piv_tol: T,
    feas_tol: T,
}

const NONBASIC: usize = usize::MAX;

impl<'a, T: Scalar> Simplex<'a, T> {
    fn kind(&self, j: usize) -> Kind {
        if j < self.n {
            Kind::Structural
        } else if j < self.n + self.n_slack {
            Kind::Slack
        } else {
            Kind::Artificial
        }
    }

    fn n_total(&self) -> usize {
        self.n + self.aux.n_cols()
    }

    fn column(&self, j: usize) -> (&[usize], &[T]) {
        if j < self.n {
            self.lp.matrix().col(j)
        } else {
            self.aux.col(j - self.n)
        }
    }

    fn dense_column(&self, j: usize) -> Vec<T> {
        let mut a = vec![T::zero(); self.m];
        let (rows, vals) = self.column(j);
        for (&r, &v) in rows.iter().zip(vals) {
            a[r] = v;
        }
        a
    }

    fn cost(&self, phase: u8, j: usize) -> T {
        match (phase, self.kind(j)) {
            (1, Kind::Artificial) => T::one(),
            (2, Kind::Structural) => self.lp.objective()[j],
            _ => T::zero(),
        }
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let basis = self.basis.clone();
        let factor = BasisFactor::new(self.m, |p| self.column(basis[p])).map_err(|e| self.breakdown(format!("basis factorization failed: {e:?}")))?;
        self.factor = factor;
        self.x_b = self.factor.ftran(self.lp.rhs());
        Ok(())
    }

    fn breakdown(&self, reason: String) -> LpError {
        LpError::Breakdown { iterations: self.iterations, reason, log: format_log(&self.log, 50) }
    }

    fn objective(&self, phase: u8) -> T {
        self.basis.iter().zip(&self.x_b).map(|(&j, &v)| self.cost(phase, j) * v).sum()
    }

    fn duals(&self, phase: u8) -> Vec<T> {
        let cb: Vec<T> = self.basis.iter().map(|&j| self.cost(phase, j)).collect();
        self.factor.btran(&cb)
    }

    /// Entering column and its direction (+1 increase, -1 decrease).
    fn price(&self, phase: u8, y: &[T], bland: bool, opt_tol: T, rejected: &[bool]) -> Option<(usize, T)> {
        let mut best: Option<(usize, T, T)> = None;
        for j in 0..self.n_total() {
            if self.position[j] != NONBASIC || self.kind(j) == Kind::Artificial || rejected[j] {
                continue;
            }
            let (rows, vals) = self.column(j);
            let mut d = self.cost(phase, j);
            for (&r, &v) in rows.iter().zip(vals) {
                d = d - v * y[r];
            }
            let (score, dir) = if d < -opt_tol {
                (-d, T::one())
            } else if self.free[j] && d > opt_tol {
                (d, -T::one())
            } else {
                continue;
            };
            if bland {
                return Some((j, dir));
            }
            if best.map_or(true, |b| score > b.1) {
                best = Some((j, score, dir));
            }
        }
        best.map(|(j, _, dir)| (j, dir))
    }

    /// Leaving position and step length for direction `dir * alpha`.
    fn ratio_test(&self, phase: u8, alpha: &[T], dir: T, bland: bool) -> Option<(usize, T)> {
        let amax = alpha.iter().fold(T::zero(), |a, v| a.max(v.abs()));
        let piv_tol = self.piv_tol.max(T::tol(1e-7) * amax);
        let eligible = |p: usize| -> Option<T> {
            let j = self.basis[p];
            if self.free[j] {
                return None;
            }
            if phase == 2 && self.kind(j) == Kind::Artificial {
                return (alpha[p].abs() > piv_tol).then(|| alpha[p].abs());
            }
            let delta = dir * alpha[p];
            (delta > piv_tol).then_some(delta)
        };
        let value = |p: usize| -> T {
            if phase == 2 && self.kind(self.basis[p]) == Kind::Artificial {
                T::zero()
            } else {
                self.x_b[p].max(T::zero())
            }
        };
        if bland {
            let mut best: Option<(usize, T)> = None;
            for p in 0..self.m {
                if let Some(delta) = eligible(p) {
                    let ratio = value(p) / delta;
                    let better = match best {
                        None => true,
                        Some((bp, br)) => ratio < br || (ratio == br && self.basis[p] < self.basis[bp]),
                    };
                    if better {
                        best = Some((p, ratio));
                    }
                }
            }
            return best;
        }
        let mut bound = T::infinity();
        for p in 0..self.m {
            if let Some(delta) = eligible(p) {
                bound = bound.min((value(p) + self.feas_tol) / delta);
            }
        }
        if bound == T::infinity() {
            return None;
        }
        let mut best: Option<(usize, T)> = None;
        for p in 0..self.m {
            if let Some(delta) = eligible(p) {
                if value(p) / delta <= bound {
                    let better = match best {
                        None => true,
                        Some((bp, bd)) => delta > bd || (delta == bd && self.basis[p] < self.basis[bp]),
                    };
                    if better {
                        best = Some((p, delta));
                    }
                }
            }
        }
        best.map(|(p, delta)| (p, value(p) / delta))
    }

    /// Applies the basis change. Returns `false` (and leaves the basis as it
    /// was) when the new basis turns out to be numerically singular.
    fn pivot(&mut self, phase: u8, entering: usize, leave_pos: usize, alpha: &[T], dir: T, step: T, bland: bool) -> Result<bool, LpError> {
        let amax = alpha.iter().fold(T::zero(), |a, v| a.max(v.abs()));
        let suspicious = alpha[leave_pos].abs() < T::tol(1e-5) * amax;
        for p in 0..self.m {
            if p != leave_pos && alpha[p] != T::zero() {
                self.x_b[p] = self.x_b[p] - step * dir * alpha[p];
                if !self.free[self.basis[p]] && self.x_b[p] < T::zero() && self.x_b[p] > -self.feas_tol {
                    self.x_b[p] = T::zero();
                }
            }
        }
        let leaving = self.basis[leave_pos];
        self.x_b[leave_pos] = step * dir;
        self.position[leaving] = NONBASIC;
        self.position[entering] = leave_pos;
        self.basis[leave_pos] = entering;
        self.factor.update(leave_pos, alpha);
        self.iterations += 1;
        let objective = self.objective(phase).as_f64();
        self.log.push(IterationRecord {
            iteration: self.iterations,
            phase,
            objective,
            entering,
            leaving,
            step: step.as_f64(),
            bland,
        });
        if (suspicious || self.factor.eta_count() >= REFACTOR_EVERY) && self.refactor().is_err() {
            self.basis[leave_pos] = leaving;
            self.position[entering] = NONBASIC;
            self.position[leaving] = leave_pos;
            self.iterations -= 1;
            self.log.pop();
            self.refactor()?;
            return Ok(false);
        }
        Ok(true)
    }

    /// Runs one phase to optimality. Returns `false` if unbounded.
    fn run(&mut self, phase: u8, limit: usize) -> Result<bool, LpError> {
        let cmax = (0..self.n_total()).fold(T::zero(), |a, j| a.max(self.cost(phase, j).abs()));
        let opt_tol = T::tol(1e-11) * (T::one() + cmax);
        let mut degenerate_run = 0usize;
        let mut rejected = vec![false; self.n_total()];
        let mut any_rejected = false;
        loop {
            if self.iterations >= limit {
                return Err(LpError::IterationLimit { limit, log: format_log(&self.log, 50) });
            }
            let bland = degenerate_run >= DEGENERATE_RUN;
            let y = self.duals(phase);
            let Some((q, dir)) = self.price(phase, &y, bland, opt_tol, &rejected) else {
                if any_rejected {
                    return Err(self.breakdown("every improving column leads to a singular basis".into()));
                }
                return Ok(true);
            };
            let alpha = self.factor.ftran(&self.dense_column(q));
            let Some((r, step)) = self.ratio_test(phase, &alpha, dir, bland) else {
                if phase == 1 {
                    return Err(self.breakdown("phase one reported an unbounded ray".into()));
                }
                return Ok(false);
            };
            if alpha[r].abs() <= self.piv_tol {
                return Err(self.breakdown(format!("pivot element {} too small", alpha[r])));
            }
            if !self.pivot(phase, q, r, &alpha, dir, step, bland)? {
                rejected[q] = true;
                any_rejected = true;
                continue;
            }
            if step > self.feas_tol {
                degenerate_run = 0;
                if any_rejected {
                    rejected.iter_mut().for_each(|r| *r = false);
                    any_rejected = false;
                }
            } else {
                degenerate_run += 1;
            }
        }
    }

    /// Pivots basic artificials out where some structural or slack column can replace them.
    fn expel_artificials(&mut self) -> Result<(), LpError> {
        for p in 0..self.m {
            if self.kind(self.basis[p]) != Kind::Artificial {
                continue;
            }
            let mut e = vec![T::zero(); self.m];
            e[p] = T::one();
            let row = self.factor.btran(&e);
            let mut best: Option<(usize, T)> = None;
            for j in 0..self.n + self.n_slack {
                if self.position[j] != NONBASIC {
                    continue;
                }
                let v = self.lp_col_dot(j, &row).abs();
                if v > T::tol(1e-9) && best.map_or(true, |b| v > b.1) {
                    best = Some((j, v));
                }
            }
            if let Some((j, _)) = best {
                let alpha = self.factor.ftran(&self.dense_column(j));
                self.pivot(1, j, p, &alpha, T::one(), T::zero(), false)?;
            }
        }
        Ok(())
    }

    fn lp_col_dot(&self, j: usize, y: &[T]) -> T {
        let (rows, vals) = self.column(j);
        rows.iter().zip(vals).fold(T::zero(), |acc, (&r, &v)| acc + v * y[r])
    }
}

fn bnorm<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, x| a.max(x.abs()))
}

fn setup<T: Scalar>(lp: &LinearProgram<T>) -> (usize, CscMatrix<T>, Vec<usize>) {
    let (m, n) = (lp.n_rows(), lp.n_cols());
    let ge_rows: Vec<usize> = (0..m).filter(|&i| lp.senses()[i] == RowSense::Ge).collect();
    let n_slack = ge_rows.len();
    let mut trip: Vec<(usize, usize, T)> = ge_rows.iter().enumerate().map(|(k, &i)| (i, k, -T::one())).collect();
    // initial cold basis: feasible surplus where possible, artificial otherwise
    let mut slack_of_row = vec![usize::MAX; m];
    for (k, &i) in ge_rows.iter().enumerate() {
        slack_of_row[i] = k;
    }
    let mut cold = Vec::with_capacity(m);
    let mut n_art = 0;
    for i in 0..m {
        let b = lp.rhs()[i];
        if slack_of_row[i] != usize::MAX && b <= T::zero() {
            cold.push(n + slack_of_row[i]);
        } else {
            let sign = if b < T::zero() { -T::one() } else { T::one() };
            trip.push((i, n_slack + n_art, sign));
            cold.push(n + n_slack + n_art);
            n_art += 1;
        }
    }
    (n_slack, CscMatrix::from_triplets(m, n_slack + n_art, &trip), cold)
}

fn solve_impl<T: Scalar>(lp: &LinearProgram<T>, warm: Option<&[usize]>) -> Result<LpSolution<T>, LpError> {
    let (m, n) = (lp.n_rows(), lp.n_cols());
    let (n_slack, aux, cold) = setup(lp);
    let n_total = n + aux.n_cols();
    let mut free = vec![false; n_total];
    for (j, b) in lp.bounds().iter().enumerate() {
        free[j] = *b == LowerBound::Free;
    }
    let feas_tol = T::tol(1e-12) * (T::one() + bnorm(lp.rhs()));
    let limit = 50 * (m + n) + 1000;

    let empty_factor = BasisFactor::new(0, |_| (&[][..], &[][..])).expect("empty basis factors");
    let mut sx = Simplex {
        lp,
        m,
        n,
        n_slack,
        aux,
        free,
        basis: Vec::new(),
        position: vec![NONBASIC; n_total],
        factor: empty_factor,
        x_b: Vec::new(),
        iterations: 0,
        log: Vec::new(),
        piv_tol: T::tol(1e-9),
        feas_tol,
    };

    let install = |sx: &mut Simplex<'_, T>, basis: &[usize]| -> Result<(), LpError> {
        sx.position.iter_mut().for_each(|p| *p = NONBASIC);
        for (p, &j) in basis.iter().enumerate() {
            sx.position[j] = p;
        }
        sx.basis = basis.to_vec();
        sx.refactor()
    };

    let mut warm_ok = false;
    if let Some(hint) = warm {
        let valid = hint.len() == m && hint.iter().all(|&j| j < n + n_slack) && {
            let mut seen = vec![false; n + n_slack];
            hint.iter().all(|&j| !std::mem::replace(&mut seen[j], true))
        };
        if valid && install(&mut sx, hint).is_ok() {
            warm_ok = sx.basis.iter().zip(&sx.x_b).all(|(&j, &v)| sx.free[j] || v >= -feas_tol);
            if warm_ok {
                for (p, v) in sx.x_b.iter_mut().enumerate() {
                    if !sx.free[sx.basis[p]] && *v < T::zero() {
                        *v = T::zero();
                    }
                }
            }
        }
    }

    if !warm_ok {
        sx.iterations = 0;
        sx.log.clear();
        install(&mut sx, &cold)?;
        sx.run(1, limit)?;
        let infeas = sx.objective(1);
        if infeas > T::tol(1e-9) * (T::one() + bnorm(lp.rhs())) {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                primal: vec![T::zero(); n],
                dual: vec![T::zero(); m],
                objective: T::nan(),
                iterations: sx.iterations,
                basis: sx.basis.clone(),
                log: sx.log,
            });
        }
        sx.expel_artificials()?;
    }

    let bounded = sx.run(2, limit)?;
    sx.refactor()?;
    let mut primal = vec![T::zero(); n];
    for (p, &j) in sx.basis.iter().enumerate() {
        if j < n {
            primal[j] = sx.x_b[p];
        }
    }
    let dual = sx.duals(2);
    let status = if bounded { LpStatus::Optimal } else { LpStatus::Unbounded };
    let objective = if bounded { lp.objective_value(&primal) } else { -T::infinity() };
    Ok(LpSolution { status, primal, dual, objective, iterations: sx.iterations, basis: sx.basis, log: sx.log })
}

/// Solves from an all-surplus/artificial starting basis.
pub fn solve_lp<T: Scalar>(lp: &LinearProgram<T>) -> Result<LpSolution<T>, LpError> {
    solve_impl(lp, None)
}

/// Solves starting from `basis` (column ids as in [`LpSolution::basis`]).
///
/// Falls back to the cold start when the hint is singular, malformed or
/// primal infeasible, so the result never depends on hint quality beyond
/// the number of pivots.
pub fn solve_lp_warm<T: Scalar>(lp: &LinearProgram<T>, basis: &[usize]) -> Result<LpSolution<T>, LpError> {
    solve_impl(lp, Some(basis))
}
