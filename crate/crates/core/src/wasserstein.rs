//! 1-Wasserstein distances between probability vectors on the state grid.
//!
//! On a one-dimensional grid with spacing `h`, `W₁(p, q) = h Σ |F_p − F_q|`
//! with `F` the cumulative sums. On a two-dimensional grid we return the
//! larger of the two axis-marginal distances, which is a lower bound for the
//! true distance (a sliced approximation).

use crate::model::GridSpec;
use crate::occupation::MeanFieldFlow;
use crate::scalar::Scalar;

/// Exact `W₁` for two distributions on a uniform line with spacing `h`.
pub fn w1_line<T: Scalar>(p: &[T], q: &[T], h: T) -> T {
    let mut cum = T::zero();
    let mut total = T::zero();
    for (&a, &b) in p.iter().zip(q) {
        cum = cum + a - b;
        total = total + cum.abs();
    }
    total * h
}

fn axis_marginal<T: Scalar>(grid: &GridSpec<T>, p: &[T], axis: usize) -> Vec<T> {
    let mut out = vec![T::zero(); grid.n_state()[axis]];
    for (i, &v) in p.iter().enumerate() {
        out[grid.multi_index(i)[axis]] = out[grid.multi_index(i)[axis]] + v;
    }
    out
}

/// `W₁` on the grid (exact in 1-D, max of axis marginals in 2-D).
pub fn w1_grid<T: Scalar>(grid: &GridSpec<T>, p: &[T], q: &[T]) -> T {
    if grid.state_dim() == 1 {
        return w1_line(p, q, grid.spacing(0));
    }
    (0..grid.state_dim()).fold(T::zero(), |d, axis| {
        d.max(w1_line(&axis_marginal(grid, p, axis), &axis_marginal(grid, q, axis), grid.spacing(axis)))
    })
}

/// `W₁` at every time node.
pub fn per_node_w1<T: Scalar>(grid: &GridSpec<T>, a: &MeanFieldFlow<T>, b: &MeanFieldFlow<T>) -> Vec<T> {
    (0..a.n_nodes().min(b.n_nodes())).map(|k| w1_grid(grid, a.row(k), b.row(k))).collect()
}

/// Largest `W₁` over time nodes.
pub fn flow_distance<T: Scalar>(grid: &GridSpec<T>, a: &MeanFieldFlow<T>, b: &MeanFieldFlow<T>) -> T {
    per_node_w1(grid, a, b).into_iter().fold(T::zero(), T::max)
}
