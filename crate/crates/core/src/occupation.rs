//! Mean-field flows, occupation measures and the occupation-measure LP.
//!
//! The LP for a frozen flow has one variable per `(slab k, state x, action j)`
//! (the occupation mass `ξ`) plus one per terminal state (`ν`), and one
//! flow-balance row per `(node k, state y)`:
//!
//! ```text
//!   node 0:      Σ_j ξ[0,y,j]/Δt                               = ρ(y)
//!   0 < k < N:   Σ_j ξ[k,y,j]/Δt − Σ_{x,j} ξ[k-1,x,j] P_{k-1,j}(x,y)/Δt = 0
//!   node N:      ν(y)            − Σ_{x,j} ξ[N-1,x,j] P_{N-1,j}(x,y)/Δt = 0
//! ```
//!
//! Summing the rows of a node shows every slab carries mass `Δt` and `ν` is a
//! probability vector.

use serde::{Deserialize, Serialize};

use crate::discretize::DiscreteProblem;
use crate::error::{DiscretizeError, MeasureError};
use crate::lp::{CscMatrix, LinearProgram, LowerBound, RowSense};
use crate::model::{GridSpec, MfgModel};
use crate::scalar::Scalar;

/// Probability vectors over the state grid at the time nodes `0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldFlow<T = f64> {
    n_states: usize,
    m: Vec<T>,
}

impl<T: Scalar> MeanFieldFlow<T> {
    /// Validates that every row is a probability vector within `1e-9`.
    pub fn new(rows: Vec<Vec<T>>) -> Result<Self, MeasureError> {
        let n_states = rows.first().map_or(0, |r| r.len());
        if n_states == 0 {
            return Err(MeasureError::Shape("flow needs at least one node and one state".into()));
        }
        if rows.iter().any(|r| r.len() != n_states) {
            return Err(MeasureError::Shape("flow rows have different lengths".into()));
        }
        Self::from_flat(rows.len(), n_states, rows.concat())
    }

    pub fn from_flat(n_nodes: usize, n_states: usize, m: Vec<T>) -> Result<Self, MeasureError> {
        if n_nodes == 0 || n_states == 0 || m.len() != n_nodes * n_states {
            return Err(MeasureError::Shape(format!("{} entries for {n_nodes} nodes x {n_states} states", m.len())));
        }
        let tol = T::tol(1e-9);
        for (k, row) in m.chunks(n_states).enumerate() {
            if let Some(x) = row.iter().position(|v| !v.is_finite() || *v < -tol) {
                return Err(MeasureError::Inconsistent(format!("flow node {k}, state {x} holds {}", row[x])));
            }
            let s: T = row.iter().copied().sum();
            if (s - T::one()).abs() > tol {
                return Err(MeasureError::Inconsistent(format!("flow node {k} has mass {s}")));
            }
        }
        Ok(Self { n_states, m })
    }

    /// `ρ` at every node.
    pub fn constant(rho: &[T], n_time: usize) -> Result<Self, MeasureError> {
        Self::from_flat(n_time + 1, rho.len(), rho.repeat(n_time + 1))
    }

    pub fn uniform(n_states: usize, n_time: usize) -> Self {
        let p = T::one() / T::from_usize_lossy(n_states);
        Self { n_states, m: vec![p; n_states * (n_time + 1)] }
    }

    pub fn n_nodes(&self) -> usize {
        self.m.len() / self.n_states
    }

    pub fn n_time(&self) -> usize {
        self.n_nodes() - 1
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn row(&self, k: usize) -> &[T] {
        &self.m[k * self.n_states..(k + 1) * self.n_states]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.m
    }

    /// `(1 − λ) self + λ other`.
    pub fn damped(&self, other: &Self, lambda: T) -> Self {
        let keep = T::one() - lambda;
        Self { n_states: self.n_states, m: self.m.iter().zip(&other.m).map(|(&a, &b)| keep * a + lambda * b).collect() }
    }

    /// Largest entrywise difference.
    pub fn sup_distance(&self, other: &Self) -> T {
        self.m.iter().zip(&other.m).fold(T::zero(), |d, (&a, &b)| d.max((a - b).abs()))
    }
}

/// Occupation masses `ξ[k,x,j]` (slab-integrated) and the terminal law `ν`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationMeasure<T = f64> {
    pub n_time: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub dt: T,
    /// Indexed `(k * n_states + x) * n_actions + j`.
    pub xi: Vec<T>,
    pub nu: Vec<T>,
}

impl<T: Scalar> OccupationMeasure<T> {
    pub fn xi(&self, k: usize, x: usize, j: usize) -> T {
        self.xi[(k * self.n_states + x) * self.n_actions + j]
    }

    /// `Σ_j ξ[k,x,j]`.
    pub fn state_mass(&self, k: usize, x: usize) -> T {
        let base = (k * self.n_states + x) * self.n_actions;
        self.xi[base..base + self.n_actions].iter().copied().sum()
    }

    pub fn slab_mass(&self, k: usize) -> T {
        let s = self.n_states * self.n_actions;
        self.xi[k * s..(k + 1) * s].iter().copied().sum()
    }

    /// Largest deviation of a slab mass from `Δt`.
    pub fn slab_mass_error(&self) -> T {
        (0..self.n_time).fold(T::zero(), |e, k| e.max((self.slab_mass(k) - self.dt).abs()))
    }

    fn check_shape(&self) -> Result<(), MeasureError> {
        if self.xi.len() != self.n_time * self.n_states * self.n_actions || self.nu.len() != self.n_states {
            return Err(MeasureError::Shape(format!(
                "occupation with {} xi and {} nu entries for {}x{}x{}",
                self.xi.len(),
                self.nu.len(),
                self.n_time,
                self.n_states,
                self.n_actions
            )));
        }
        Ok(())
    }
}

/// Relaxed Markov policy `γ[k,x,j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy<T = f64> {
    pub n_time: usize,
    pub n_states: usize,
    pub n_actions: usize,
    /// Indexed like [`OccupationMeasure::xi`].
    pub kernel: Vec<T>,
    /// Rows at states without occupation mass; filled uniformly.
    pub unconstrained: Vec<bool>,
}

impl<T: Scalar> Policy<T> {
    /// Deterministic policy from one action index per `(k, x)`.
    pub fn deterministic(n_time: usize, n_states: usize, n_actions: usize, choice: &[usize]) -> Self {
        assert_eq!(choice.len(), n_time * n_states, "one action per slab and state");
        let mut kernel = vec![T::zero(); n_time * n_states * n_actions];
        for (i, &j) in choice.iter().enumerate() {
            assert!(j < n_actions, "action index {j} out of range");
            kernel[i * n_actions + j] = T::one();
        }
        Self { n_time, n_states, n_actions, kernel, unconstrained: vec![false; n_time * n_states] }
    }

    /// The same state-to-action map at every slab.
    pub fn stationary(n_time: usize, n_actions: usize, choice: &[usize]) -> Self {
        Self::deterministic(n_time, choice.len(), n_actions, &choice.repeat(n_time))
    }

    pub fn row(&self, k: usize, x: usize) -> &[T] {
        let base = (k * self.n_states + x) * self.n_actions;
        &self.kernel[base..base + self.n_actions]
    }

    pub fn is_unconstrained(&self, k: usize, x: usize) -> bool {
        self.unconstrained[k * self.n_states + x]
    }

    /// Most likely action per `(k, x)`, lowest index on ties.
    pub fn argmax(&self) -> Vec<usize> {
        (0..self.n_time * self.n_states)
            .map(|i| {
                let row = &self.kernel[i * self.n_actions..(i + 1) * self.n_actions];
                let mut best = 0;
                for (j, &p) in row.iter().enumerate() {
                    if p > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

/// Column and row layout of the occupation LP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrimalLayout {
    pub n_time: usize,
    pub n_states: usize,
    pub n_actions: usize,
}

impl PrimalLayout {
    pub fn xi_col(&self, k: usize, x: usize, j: usize) -> usize {
        (k * self.n_states + x) * self.n_actions + j
    }

    pub fn nu_col(&self, y: usize) -> usize {
        self.n_time * self.n_states * self.n_actions + y
    }

    pub fn row(&self, k: usize, y: usize) -> usize {
        k * self.n_states + y
    }

    pub fn n_cols(&self) -> usize {
        self.nu_col(self.n_states)
    }

    pub fn n_rows(&self) -> usize {
        (self.n_time + 1) * self.n_states
    }

    /// Basis of the deterministic policy `choice[(k, x)]`: its `ξ` columns and
    /// every `ν` column. It is block-triangular in time, hence nonsingular, and
    /// primal feasible.
    pub fn policy_basis(&self, choice: &[usize]) -> Vec<usize> {
        let mut basis = Vec::with_capacity(self.n_rows());
        for k in 0..self.n_time {
            for x in 0..self.n_states {
                basis.push(self.xi_col(k, x, choice[k * self.n_states + x]));
            }
        }
        basis.extend((0..self.n_states).map(|y| self.nu_col(y)));
        basis
    }

    /// Deterministic policy read off a basis: at each `(k, x)` the basic
    /// action with the largest value, falling back to `fallback` where no
    /// action at that node is basic.
    pub fn basis_choice<T: Scalar>(&self, basis: &[usize], primal: &[T], fallback: &[usize]) -> Vec<usize> {
        let mut choice = fallback.to_vec();
        let mut best = vec![-T::infinity(); self.n_time * self.n_states];
        let n_xi = self.n_time * self.n_states * self.n_actions;
        for &col in basis.iter().filter(|&&c| c < n_xi) {
            let node = col / self.n_actions;
            let j = col % self.n_actions;
            if primal[col] > best[node] || (primal[col] == best[node] && j < choice[node]) {
                best[node] = primal[col];
                choice[node] = j;
            }
        }
        choice
    }
}

/// The occupation LP together with its layout.
#[derive(Debug, Clone)]
pub struct PrimalProgram<T = f64> {
    pub lp: LinearProgram<T>,
    pub layout: PrimalLayout,
    pub dt: T,
}

impl<T: Scalar> PrimalProgram<T> {
    pub fn from_problem(problem: &DiscreteProblem<T>) -> Self {
        let layout = PrimalLayout { n_time: problem.n_time(), n_states: problem.n_states(), n_actions: problem.n_actions() };
        let dt = problem.dt();
        let inv = T::one() / dt;
        let mut trip = Vec::new();
        let mut cost = vec![T::zero(); layout.n_cols()];
        for k in 0..layout.n_time {
            for x in 0..layout.n_states {
                for j in 0..layout.n_actions {
                    let c = layout.xi_col(k, x, j);
                    cost[c] = problem.cost(k, x, j);
                    trip.push((layout.row(k, x), c, inv));
                    for (y, p) in problem.kernel(k, j).row(x) {
                        trip.push((layout.row(k + 1, y), c, -p * inv));
                    }
                }
            }
        }
        for y in 0..layout.n_states {
            let c = layout.nu_col(y);
            cost[c] = problem.terminal[y];
            trip.push((layout.row(layout.n_time, y), c, T::one()));
        }
        let mut rhs = vec![T::zero(); layout.n_rows()];
        rhs[..layout.n_states].copy_from_slice(&problem.rho);
        let lp = LinearProgram::new(
            cost,
            CscMatrix::from_triplets(layout.n_rows(), layout.n_cols(), &trip),
            rhs,
            vec![RowSense::Eq; layout.n_rows()],
            vec![LowerBound::Zero; layout.n_cols()],
        )
        .expect("occupation LP is well formed for finite costs");
        Self { lp, layout, dt }
    }

    /// Splits an LP point into `(ξ, ν)`.
    pub fn unpack(&self, z: &[T]) -> OccupationMeasure<T> {
        let l = self.layout;
        let split = l.nu_col(0);
        OccupationMeasure {
            n_time: l.n_time,
            n_states: l.n_states,
            n_actions: l.n_actions,
            dt: self.dt,
            xi: z[..split].to_vec(),
            nu: z[split..].to_vec(),
        }
    }

    /// Inverse of [`PrimalProgram::unpack`].
    pub fn pack(&self, occ: &OccupationMeasure<T>) -> Vec<T> {
        let mut z = occ.xi.clone();
        z.extend_from_slice(&occ.nu);
        z
    }
}

/// Discretizes at `flow` and builds the occupation LP.
pub fn build_primal<T: Scalar>(
    model: &MfgModel<T>,
    grid: &GridSpec<T>,
    flow: &MeanFieldFlow<T>,
) -> Result<PrimalProgram<T>, DiscretizeError> {
    Ok(PrimalProgram::from_problem(&DiscreteProblem::new(model, grid, flow)?))
}

/// State marginals: `Σ_j ξ[k,·,j]/Δt` at nodes `k < N` and `ν` at node `N`.
pub fn marginals<T: Scalar>(occ: &OccupationMeasure<T>) -> Result<MeanFieldFlow<T>, MeasureError> {
    occ.check_shape()?;
    let err = occ.slab_mass_error();
    if err > T::tol(1e-9) {
        return Err(MeasureError::Inconsistent(format!("slab mass differs from the time step by {err}")));
    }
    let mut m = Vec::with_capacity((occ.n_time + 1) * occ.n_states);
    for k in 0..occ.n_time {
        m.extend((0..occ.n_states).map(|x| occ.state_mass(k, x) / occ.dt));
    }
    m.extend_from_slice(&occ.nu);
    MeanFieldFlow::from_flat(occ.n_time + 1, occ.n_states, m)
}

/// Disintegrates `ξ` into a policy kernel; rows with mass `≤ 1e-14` are
/// flagged unconstrained and filled uniformly.
pub fn disintegrate<T: Scalar>(occ: &OccupationMeasure<T>) -> Policy<T> {
    let (n, s, a) = (occ.n_time, occ.n_states, occ.n_actions);
    let uniform = T::one() / T::from_usize_lossy(a);
    let threshold = T::lit(1e-14);
    let mut kernel = Vec::with_capacity(n * s * a);
    let mut unconstrained = Vec::with_capacity(n * s);
    for k in 0..n {
        for x in 0..s {
            let mass = occ.state_mass(k, x);
            if mass > threshold {
                kernel.extend((0..a).map(|j| occ.xi(k, x, j).max(T::zero()) / mass));
                unconstrained.push(false);
            } else {
                kernel.extend(std::iter::repeat(uniform).take(a));
                unconstrained.push(true);
            }
        }
    }
    Policy { n_time: n, n_states: s, n_actions: a, kernel, unconstrained }
}

/// Runs the chain from `ρ` under `policy` and returns its occupation measure.
pub fn propagate_policy<T: Scalar>(problem: &DiscreteProblem<T>, policy: &Policy<T>) -> OccupationMeasure<T> {
    let (n, s, a) = (problem.n_time(), problem.n_states(), problem.n_actions());
    let dt = problem.dt();
    let mut m = problem.rho.clone();
    let mut xi = Vec::with_capacity(n * s * a);
    for k in 0..n {
        let mut next = vec![T::zero(); s];
        for x in 0..s {
            for (j, &g) in policy.row(k, x).iter().enumerate() {
                let w = m[x] * g;
                xi.push(w * dt);
                if w != T::zero() {
                    for (y, p) in problem.kernel(k, j).row(x) {
                        next[y] = next[y] + w * p;
                    }
                }
            }
        }
        m = next;
    }
    OccupationMeasure { n_time: n, n_states: s, n_actions: a, dt, xi, nu: m }
}

/// Largest flow-balance violation of `(ξ, terminal)` against the rows of the
/// occupation LP; `terminal` stands in for `ν`.
pub fn flow_balance_residual<T: Scalar>(problem: &DiscreteProblem<T>, xi: &OccupationMeasure<T>, terminal: &[T]) -> T {
    let (n, s) = (problem.n_time(), problem.n_states());
    let inv = T::one() / problem.dt();
    let mut inflow = problem.rho.clone();
    let mut worst = T::zero();
    for k in 0..n {
        let mut next = vec![T::zero(); s];
        for x in 0..s {
            let out = xi.state_mass(k, x) * inv;
            worst = worst.max((out - inflow[x]).abs());
            for j in 0..problem.n_actions() {
                let w = xi.xi(k, x, j);
                if w != T::zero() {
                    for (y, p) in problem.kernel(k, j).row(x) {
                        next[y] = next[y] + w * p * inv;
                    }
                }
            }
        }
        inflow = next;
    }
    for (y, &v) in terminal.iter().enumerate() {
        worst = worst.max((v - inflow[y]).abs());
    }
    worst
}
