//! Dual certificates and the Bellman subsolution LP.
//!
//! A certificate `ψ` lives on the time nodes. It is feasible when
//! `ψ[N] ≤ g` and, for every slab, state and action,
//!
//! ```text
//!   f(k,x,j) + (Σ_y P_{k,j}(x,y) ψ[k+1,y] − ψ[k,x]) / Δt ≥ 0.
//! ```
//!
//! These are exactly the columns of the occupation LP read as dual
//! constraints, so the dual LP is built as the negated transpose of the
//! primal matrix.

use serde::{Deserialize, Serialize};

use crate::discretize::DiscreteProblem;
use crate::error::{DiscretizeError, MeasureError};
use crate::lp::{LinearProgram, LowerBound, RowSense};
use crate::model::{GridSpec, MfgModel};
use crate::occupation::{MeanFieldFlow, PrimalLayout, PrimalProgram};
use crate::scalar::Scalar;

/// `ψ[k, x]` on nodes `0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate<T = f64> {
    n_states: usize,
    psi: Vec<T>,
}

impl<T: Scalar> DualCertificate<T> {
    pub fn from_flat(n_nodes: usize, n_states: usize, psi: Vec<T>) -> Result<Self, MeasureError> {
        if n_nodes == 0 || n_states == 0 || psi.len() != n_nodes * n_states {
            return Err(MeasureError::Shape(format!("{} values for {n_nodes} nodes x {n_states} states", psi.len())));
        }
        Ok(Self { n_states, psi })
    }

    pub fn constant(n_nodes: usize, n_states: usize, value: T) -> Self {
        Self { n_states, psi: vec![value; n_nodes * n_states] }
    }

    pub fn from_fn(grid: &GridSpec<T>, mut f: impl FnMut(usize, &[T]) -> T) -> Self {
        let s = grid.num_states();
        let mut psi = Vec::with_capacity((grid.n_time() + 1) * s);
        for k in 0..=grid.n_time() {
            psi.extend((0..s).map(|x| f(k, grid.point(x))));
        }
        Self { n_states: s, psi }
    }

    pub fn n_nodes(&self) -> usize {
        self.psi.len() / self.n_states
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn at(&self, k: usize, x: usize) -> T {
        self.psi[k * self.n_states + x]
    }

    pub fn row(&self, k: usize) -> &[T] {
        &self.psi[k * self.n_states..(k + 1) * self.n_states]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [T] {
        let s = self.n_states;
        &mut self.psi[k * s..(k + 1) * s]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.psi
    }

    /// `Σ_x ρ(x) ψ[0, x]`.
    pub fn value(&self, rho: &[T]) -> T {
        self.row(0).iter().zip(rho).map(|(&p, &r)| p * r).sum()
    }

    pub(crate) fn check_shape(&self, problem: &DiscreteProblem<T>) -> Result<(), MeasureError> {
        if self.n_nodes() != problem.n_time() + 1 || self.n_states != problem.n_states() {
            return Err(MeasureError::Shape(format!(
                "certificate is {}x{}, problem needs {}x{}",
                self.n_nodes(),
                self.n_states,
                problem.n_time() + 1,
                problem.n_states()
            )));
        }
        Ok(())
    }
}

/// Bellman slack `f + (P ψ[k+1] − ψ[k]) / Δt` at `(k, x, j)`.
pub fn bellman_slack<T: Scalar>(problem: &DiscreteProblem<T>, psi: &DualCertificate<T>, k: usize, x: usize, j: usize) -> T {
    let next = problem.kernel(k, j).row_dot(x, psi.row(k + 1));
    problem.cost(k, x, j) + (next - psi.at(k, x)) / problem.dt()
}

/// Largest terminal violation `(ψ[N] − g)₊` and Bellman violation `(−slack)₊`.
pub fn dual_violations<T: Scalar>(problem: &DiscreteProblem<T>, psi: &DualCertificate<T>) -> Result<(T, T), MeasureError> {
    psi.check_shape(problem)?;
    let n = problem.n_time();
    let terminal = psi.row(n).iter().zip(&problem.terminal).fold(T::zero(), |w, (&p, &g)| w.max(p - g));
    let mut bellman = T::zero();
    for k in 0..n {
        for x in 0..problem.n_states() {
            for j in 0..problem.n_actions() {
                bellman = bellman.max(-bellman_slack(problem, psi, k, x, j));
            }
        }
    }
    Ok((terminal, bellman))
}

/// Largest constraint violation of `psi`; zero means feasible.
pub fn check_dual_feasible<T: Scalar>(
    psi: &DualCertificate<T>,
    model: &MfgModel<T>,
    grid: &GridSpec<T>,
    flow: &MeanFieldFlow<T>,
) -> Result<T, crate::error::SolveError> {
    let problem = DiscreteProblem::new(model, grid, flow)?;
    let (t, b) = dual_violations(&problem, psi)?;
    Ok(t.max(b))
}

/// The subsolution LP in minimization form: minimize `−ρᵀψ[0]` subject to
/// `−Aᵀψ ≥ −c` with `ψ` free, where `(A, c)` come from the occupation LP.
/// Row `i` of this program is column `i` of the primal.
#[derive(Debug, Clone)]
pub struct DualProgram<T = f64> {
    pub lp: LinearProgram<T>,
    pub layout: PrimalLayout,
}

impl<T: Scalar> DualProgram<T> {
    pub fn from_primal(primal: &PrimalProgram<T>) -> Self {
        let p = &primal.lp;
        let lp = LinearProgram::new(
            p.rhs().iter().map(|&b| -b).collect(),
            p.matrix().transpose().scaled(-T::one()),
            p.objective().iter().map(|&c| -c).collect(),
            vec![RowSense::Ge; p.n_cols()],
            vec![LowerBound::Free; p.n_rows()],
        )
        .expect("transpose of a well-formed program is well formed");
        Self { lp, layout: primal.layout }
    }

    pub fn certificate(&self, psi: &[T]) -> DualCertificate<T> {
        DualCertificate { n_states: self.layout.n_states, psi: psi.to_vec() }
    }

    /// Basis of a deterministic policy: every `ψ` plus the surplus of each
    /// `(k, x, j)` row whose action is not chosen.
    pub fn policy_basis(&self, choice: &[usize]) -> Vec<usize> {
        let l = self.layout;
        let n_psi = l.n_rows();
        let mut basis: Vec<usize> = (0..n_psi).collect();
        for k in 0..l.n_time {
            for x in 0..l.n_states {
                for j in 0..l.n_actions {
                    if j != choice[k * l.n_states + x] {
                        basis.push(n_psi + l.xi_col(k, x, j));
                    }
                }
            }
        }
        basis
    }
}

/// Discretizes at `flow` and builds the dual LP.
pub fn build_dual<T: Scalar>(
    model: &MfgModel<T>,
    grid: &GridSpec<T>,
    flow: &MeanFieldFlow<T>,
) -> Result<DualProgram<T>, DiscretizeError> {
    let problem = DiscreteProblem::new(model, grid, flow)?;
    Ok(DualProgram::from_primal(&PrimalProgram::from_problem(&problem)))
}
