//! Backward dynamic programming and forward propagation: the classical
//! HJB-FP pipeline, kept as an independent reference.
//!
//! The feedback is the lowest-index minimizer, and near-ties are flagged so
//! that selection-dependent fixed points can be spotted.

use serde::{Deserialize, Serialize};

use crate::discretize::DiscreteProblem;
use crate::error::SolveError;
use crate::model::{GridSpec, MfgModel};
use crate::occupation::MeanFieldFlow;
use crate::scalar::Scalar;
use crate::wasserstein::per_node_w1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction<T = f64> {
    pub n_time: usize,
    pub n_states: usize,
    /// `V[k, x]` at `k * n_states + x`.
    pub v: Vec<T>,
    /// Chosen action per `(k, x)` on slabs.
    pub feedback: Vec<usize>,
    pub minimizer_unique: Vec<bool>,
}

impl<T: Scalar> ValueFunction<T> {
    pub fn at(&self, k: usize, x: usize) -> T {
        self.v[k * self.n_states + x]
    }

    pub fn row(&self, k: usize) -> &[T] {
        &self.v[k * self.n_states..(k + 1) * self.n_states]
    }

    pub fn action(&self, k: usize, x: usize) -> usize {
        self.feedback[k * self.n_states + x]
    }

    pub fn is_unique(&self, k: usize, x: usize) -> bool {
        self.minimizer_unique[k * self.n_states + x]
    }

    /// `Σ ρ V[0]`.
    pub fn value(&self, rho: &[T]) -> T {
        self.row(0).iter().zip(rho).map(|(&v, &r)| v * r).sum()
    }
}

/// `V[k] = min_j (f Δt + P_{k,j} V[k+1])`, `V[N] = g`.
///
/// Two actions tie when their values differ by at most `1e-12 (1 + |V|)`.
pub fn solve_hjb<T: Scalar>(problem: &DiscreteProblem<T>) -> ValueFunction<T> {
    let (n, s, a) = (problem.n_time(), problem.n_states(), problem.n_actions());
    let dt = problem.dt();
    let tie = T::tol(1e-12);
    let mut v = vec![T::zero(); (n + 1) * s];
    v[n * s..].copy_from_slice(&problem.terminal);
    let mut feedback = vec![0; n * s];
    let mut unique = vec![true; n * s];
    for k in (0..n).rev() {
        let (head, tail) = v.split_at_mut((k + 1) * s);
        let next = &tail[..s];
        for x in 0..s {
            let mut best = T::infinity();
            let mut arg = 0;
            let mut values = Vec::with_capacity(a);
            for j in 0..a {
                let q = problem.cost(k, x, j) * dt + problem.kernel(k, j).row_dot(x, next);
                values.push(q);
                if q < best {
                    best = q;
                    arg = j;
                }
            }
            let band = tie * (T::one() + best.abs());
            unique[k * s + x] = values.iter().enumerate().all(|(j, &q)| j == arg || q - best > band);
            // lowest index within the tie band
            arg = values.iter().position(|&q| q - best <= band).unwrap_or(arg);
            feedback[k * s + x] = arg;
            head[k * s + x] = best;
        }
    }
    ValueFunction { n_time: n, n_states: s, v, feedback, minimizer_unique: unique }
}

/// `m[0] = ρ`, `m[k+1] = m[k] P_{k, feedback}`.
pub fn solve_fp<T: Scalar>(problem: &DiscreteProblem<T>, feedback: &[usize]) -> MeanFieldFlow<T> {
    let (n, s) = (problem.n_time(), problem.n_states());
    let mut m = problem.rho.clone();
    let mut all = m.clone();
    for k in 0..n {
        let mut next = vec![T::zero(); s];
        for x in 0..s {
            if m[x] != T::zero() {
                for (y, p) in problem.kernel(k, feedback[k * s + x]).row(x) {
                    next[y] = next[y] + m[x] * p;
                }
            }
        }
        all.extend_from_slice(&next);
        m = next;
    }
    MeanFieldFlow::from_flat(n + 1, s, all).expect("row-stochastic kernels preserve probability")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HjbFpOptions<T = f64> {
    pub damping: T,
    pub max_iter: usize,
    pub tol: T,
}

impl<T: Scalar> Default for HjbFpOptions<T> {
    fn default() -> Self {
        Self { damping: T::lit(0.5), max_iter: 200, tol: T::lit(1e-9) }
    }
}

#[derive(Debug, Clone)]
pub struct HjbFpResult<T = f64> {
    /// Flow the last value function was computed against.
    pub flow: MeanFieldFlow<T>,
    pub value: ValueFunction<T>,
    pub converged: bool,
    pub iterations: usize,
    /// `(k, x)` with mass where the minimizer was not unique, last iteration.
    pub ties_on_support: usize,
    /// Nodes `(k, x)` with zero mass, last iteration.
    pub zero_mass_nodes: usize,
}

/// Alternates [`solve_hjb`] and [`solve_fp`] with damped flow updates.
pub fn hjbfp_fixed_point<T: Scalar>(
    model: &MfgModel<T>,
    grid: &GridSpec<T>,
    options: &HjbFpOptions<T>,
    initial: Option<MeanFieldFlow<T>>,
) -> Result<HjbFpResult<T>, SolveError> {
    if !(options.damping > T::zero() && options.damping <= T::one()) {
        return Err(SolveError::Options(format!("damping {} outside (0, 1]", options.damping)));
    }
    let mut flow = match initial {
        Some(f) => f,
        None => MeanFieldFlow::constant(&model.initial_distribution(grid)?, grid.n_time())?,
    };
    let s = grid.num_states();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let problem = DiscreteProblem::new(model, grid, &flow)?;
        let value = solve_hjb(&problem);
        let next = solve_fp(&problem, &value.feedback);
        let change = next.sup_distance(&flow);
        if change <= options.tol || iterations >= options.max_iter {
            let ties_on_support = (0..grid.n_time() * s)
                .filter(|&i| !value.minimizer_unique[i] && next.as_slice()[i] > T::zero())
                .count();
            let zero_mass_nodes = next.as_slice().iter().filter(|&&v| v == T::zero()).count();
            return Ok(HjbFpResult {
                flow,
                value,
                converged: change <= options.tol,
                iterations,
                ties_on_support,
                zero_mass_nodes,
            });
        }
        flow = flow.damped(&next, options.damping);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison<T = f64> {
    pub per_node_w1: Vec<T>,
    pub max_w1: T,
    pub value_gap: T,
}

/// Node-wise `W₁` between two flows and the gap between two values.
pub fn compare<T: Scalar>(
    grid: &GridSpec<T>,
    flow: &MeanFieldFlow<T>,
    value: T,
    reference_flow: &MeanFieldFlow<T>,
    reference_value: T,
) -> Comparison<T> {
    let per_node_w1 = per_node_w1(grid, flow, reference_flow);
    let max_w1 = per_node_w1.iter().copied().fold(T::zero(), T::max);
    Comparison { per_node_w1, max_w1, value_gap: (value - reference_value).abs() }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::{builtin, Params};

    #[test]
    fn constant_terminal_cost_ties_everywhere() {
        let mut p = Params::new();
        p.insert("sigma".into(), 0.2);
        let mut model: MfgModel = builtin("example1", &p).unwrap();
        model.terminal_cost = Arc::new(|_, _| 3.0);
        let grid = GridSpec::uniform_1d(0.1, 4, 0.0, 1.0, 6, &[-1.0, 0.0, 1.0]).unwrap();
        let flow = MeanFieldFlow::uniform(6, 4);
        let problem = DiscreteProblem::new(&model, &grid, &flow).unwrap();
        let v = solve_hjb(&problem);
        assert!(v.v.iter().all(|&x| (x - 3.0).abs() < 1e-12));
        assert!(v.minimizer_unique.iter().all(|&u| !u));
        assert!(v.feedback.iter().all(|&a| a == 0));
    }

    #[test]
    fn identity_kernel_gives_constant_flow() {
        let mut p = Params::new();
        p.insert("sigma".into(), 0.0);
        let model: MfgModel = builtin("example1", &p).unwrap();
        let grid = GridSpec::uniform_1d(1.0, 4, 0.0, 1.0, 6, &[0.0]).unwrap();
        let flow = MeanFieldFlow::uniform(6, 4);
        let problem = DiscreteProblem::new(&model, &grid, &flow).unwrap();
        let m = solve_fp(&problem, &[0; 24]);
        for k in 0..5 {
            assert_eq!(m.row(k), problem.rho.as_slice());
        }
    }

    #[test]
    fn compare_identical_is_zero() {
        let grid = GridSpec::uniform_1d(1.0, 2, 0.0, 1.0, 3, &[0.0]).unwrap();
        let f = MeanFieldFlow::uniform(3, 2);
        let c = compare(&grid, &f, 1.5, &f, 1.5);
        assert_eq!(c.max_w1, 0.0);
        assert_eq!(c.value_gap, 0.0);
    }
}
