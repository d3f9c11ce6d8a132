//! Markov-chain approximation of the controlled generator on the grid.
//!
//! For slab `k` and action `j` the coefficients are frozen at
//! `(t_k, x, a_j, μ_k)`. Jump rates use the positive-coefficient stencil:
//! along axis `i` the rate towards `x ± h_i e_i` is `Σ_ii/(2h_i²) + (b_i)^±/h_i`,
//! and in two dimensions the cross term `Σ_01` is carried by the diagonal
//! neighbours. Jumps leaving the box are suppressed (reflecting boundary),
//! so every row of `Q` sums to zero and every kernel `P = I + Δt Q` is
//! row-stochastic.

use rayon::prelude::*;

use crate::error::DiscretizeError;
use crate::model::{evaluate, min_eigenvalue, GridSpec, Measure, MfgModel};
use crate::occupation::MeanFieldFlow;
use crate::scalar::{neg, pos, Scalar};

/// Compressed sparse rows over the state grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows<T = f64> {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Scalar> SparseRows<T> {
    fn with_rows(n: usize) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        Self { row_ptr, cols: Vec::new(), vals: Vec::new() }
    }

    fn push(&mut self, col: usize, val: T) {
        self.cols.push(col);
        self.vals.push(val);
    }

    fn finish_row(&mut self) {
        self.row_ptr.push(self.cols.len());
    }

    pub fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn row(&self, x: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_ptr[x]..self.row_ptr[x + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    /// `Σ_y M[x, y] v[y]`.
    pub fn row_dot(&self, x: usize, v: &[T]) -> T {
        self.row(x).fold(T::zero(), |acc, (y, p)| acc + p * v[y])
    }

    pub fn row_sum(&self, x: usize) -> T {
        self.row(x).fold(T::zero(), |acc, (_, p)| acc + p)
    }

    /// Dense copy, for tests and small debugging dumps.
    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let n = self.n_rows();
        let mut out = vec![vec![T::zero(); n]; n];
        for (x, row) in out.iter_mut().enumerate() {
            for (y, v) in self.row(x) {
                row[y] = row[y] + v;
            }
        }
        out
    }
}

/// Off-diagonal jump rates per `(slab, action)`; the diagonal is minus the row sum.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteGenerator<T = f64> {
    rates: Vec<SparseRows<T>>,
    n_time: usize,
    n_actions: usize,
    n_states: usize,
    dt: T,
}

impl<T: Scalar> DiscreteGenerator<T> {
    /// Off-diagonal rates of slab `k`, action `j`.
    pub fn rates(&self, k: usize, j: usize) -> &SparseRows<T> {
        &self.rates[k * self.n_actions + j]
    }

    /// Diagonal entry `Q[x][x]`.
    pub fn diagonal(&self, k: usize, j: usize, x: usize) -> T {
        -self.rates(k, j).row_sum(x)
    }

    /// `(Qψ)(x)` for slab `k`, action `j`.
    pub fn apply(&self, k: usize, j: usize, psi: &[T], x: usize) -> T {
        self.rates(k, j).row(x).fold(T::zero(), |acc, (y, r)| acc + r * (psi[y] - psi[x]))
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Largest total exit rate `max |Q[x][x]|`.
    pub fn max_exit_rate(&self) -> T {
        let mut m = T::zero();
        for r in &self.rates {
            for x in 0..r.n_rows() {
                m = m.max(r.row_sum(x));
            }
        }
        m
    }
}

/// One-step kernels `P = I + Δt Q` per `(slab, action)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernels<T = f64> {
    kernels: Vec<SparseRows<T>>,
    n_time: usize,
    n_actions: usize,
    n_states: usize,
}

impl<T: Scalar> TransitionKernels<T> {
    pub fn kernel(&self, k: usize, j: usize) -> &SparseRows<T> {
        &self.kernels[k * self.n_actions + j]
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }
}

fn check_flow<T: Scalar>(grid: &GridSpec<T>, flow: &MeanFieldFlow<T>) -> Result<(), DiscretizeError> {
    if flow.n_nodes() != grid.n_time() + 1 || flow.n_states() != grid.num_states() {
        return Err(DiscretizeError::InvalidFlow(format!(
            "flow is {}x{}, grid needs {}x{}",
            flow.n_nodes(),
            flow.n_states(),
            grid.n_time() + 1,
            grid.num_states()
        )));
    }
    Ok(())
}

fn assemble_rates<T: Scalar>(
    model: &MfgModel<T>,
    grid: &GridSpec<T>,
    mu: &Measure<'_, T>,
    t: T,
    action: &[T],
) -> Result<SparseRows<T>, DiscretizeError> {
    let n = grid.num_states();
    let dim = grid.state_dim();
    let two = T::lit(2.0);
    let h: Vec<T> = (0..dim).map(|d| grid.spacing(d)).collect();
    let slack = T::tol(1e-12);
    let mut rows = SparseRows::with_rows(n);
    for x in 0..n {
        let ev = evaluate(model, t, grid.point(x), action, mu)?;
        let cov = &ev.covariance;
        let scale = cov.iter().fold(T::one(), |m, v| m.max(v.abs()));
        if min_eigenvalue(cov, dim) < -slack * scale {
            return Err(DiscretizeError::Stencil { state: x, reason: "covariance is not positive semidefinite".into() });
        }
        let cross = if dim == 2 {
            let c = cov[1];
            let w = c.abs();
            if cov[0] * h[1] + slack * scale < w * h[0] || cov[3] * h[0] + slack * scale < w * h[1] {
                return Err(DiscretizeError::Stencil {
                    state: x,
                    reason: format!("|cov_01| = {w} exceeds the diagonal entries {} and {}", cov[0], cov[3]),
                });
            }
            c
        } else {
            T::zero()
        };
        let cross_rate = cross.abs() / (two * h[0] * h.get(1).copied().unwrap_or(T::one()));
        let mut push = |offset: &[isize], rate: T| {
            if rate > T::zero() {
                if let Some(y) = grid.neighbor(x, offset) {
                    rows.push(y, rate);
                }
            }
        };
        for d in 0..dim {
            let mut diffusive = cov[d * dim + d] / (two * h[d] * h[d]);
            if dim == 2 {
                diffusive = pos(diffusive - cross_rate);
            }
            let b = ev.drift[d];
            let mut up = [0isize; 2];
            up[d] = 1;
            let mut down = [0isize; 2];
            down[d] = -1;
            push(&down[..dim], diffusive + neg(b) / h[d]);
            push(&up[..dim], diffusive + pos(b) / h[d]);
        }
        if dim == 2 && cross_rate > T::zero() {
            if cross > T::zero() {
                push(&[1, 1], cross_rate);
                push(&[-1, -1], cross_rate);
            } else {
                push(&[1, -1], cross_rate);
                push(&[-1, 1], cross_rate);
            }
        }
        rows.finish_row();
    }
    Ok(rows)
}

/// Builds the jump-rate matrices for every slab and action, with coefficients
/// frozen at the slab start and the flow's node-`k` distribution.
pub fn build_generator<T: Scalar>(
    model: &MfgModel<T>,
    grid: &GridSpec<T>,
    flow: &MeanFieldFlow<T>,
) -> Result<DiscreteGenerator<T>, DiscretizeError> {
    check_flow(grid, flow)?;
    let n_actions = grid.num_actions();
    let rates = (0..grid.n_time() * n_actions)
        .into_par_iter()
        .map(|idx| {
            let (k, j) = (idx / n_actions, idx % n_actions);
            let mu = Measure::new(flow.row(k), grid);
            assemble_rates(model, grid, &mu, grid.time(k), grid.action(j))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let gen = DiscreteGenerator {
        rates,
        n_time: grid.n_time(),
        n_actions,
        n_states: grid.num_states(),
        dt: grid.dt(),
    };
    let max_rate = gen.max_exit_rate();
    if gen.dt * max_rate > T::one() + T::tol(1e-12) {
        return Err(DiscretizeError::Stability {
            dt: gen.dt.as_f64(),
            max_dt: (T::one() / max_rate).as_f64(),
            max_rate: max_rate.as_f64(),
        });
    }
    Ok(gen)
}

/// Forms `P = I + Δt Q` for every slab and action.
///
/// Diagonal entries in `[-1e-12, 0)` are rounding at the stability limit and
/// are clamped to zero; anything more negative is an error.
pub fn transition_kernel<T: Scalar>(gen: &DiscreteGenerator<T>) -> Result<TransitionKernels<T>, DiscretizeError> {
    let n = gen.n_states;
    let mut kernels = Vec::with_capacity(gen.rates.len());
    for (idx, rates) in gen.rates.iter().enumerate() {
        let mut p = SparseRows::with_rows(n);
        for x in 0..n {
            let mut exit = T::zero();
            for (_, r) in rates.row(x) {
                exit = exit + r;
            }
            let mut stay = T::one() - gen.dt * exit;
            if stay < T::zero() {
                if stay >= -T::tol(1e-12) {
                    stay = T::zero();
                } else {
                    return Err(DiscretizeError::NegativeProbability {
                        slab: idx / gen.n_actions,
                        action: idx % gen.n_actions,
                        state: x,
                        value: stay.as_f64(),
                    });
                }
            }
            if stay > T::zero() {
                p.push(x, stay);
            }
            for (y, r) in rates.row(x) {
                p.push(y, gen.dt * r);
            }
            p.finish_row();
        }
        kernels.push(p);
    }
    Ok(TransitionKernels { kernels, n_time: gen.n_time, n_actions: gen.n_actions, n_states: n })
}

/// Everything the builders, the certifier and the dynamic-programming
/// reference need for one frozen flow: kernels, tabulated costs and `ρ`.
#[derive(Debug, Clone)]
pub struct DiscreteProblem<T = f64> {
    pub grid: GridSpec<T>,
    pub kernels: TransitionKernels<T>,
    /// `f(t_k, x, a_j, μ_k)`, indexed `(k * S + x) * J + j`.
    pub running: Vec<T>,
    /// `g(x, μ_N)`.
    pub terminal: Vec<T>,
    pub rho: Vec<T>,
}

impl<T: Scalar> DiscreteProblem<T> {
    pub fn new(model: &MfgModel<T>, grid: &GridSpec<T>, flow: &MeanFieldFlow<T>) -> Result<Self, DiscretizeError> {
        let gen = build_generator(model, grid, flow)?;
        let kernels = transition_kernel(&gen)?;
        let (n, s, m) = (grid.n_time(), grid.num_states(), grid.num_actions());
        let running = (0..n)
            .into_par_iter()
            .map(|k| {
                let mu = Measure::new(flow.row(k), grid);
                let t = grid.time(k);
                let mut out = Vec::with_capacity(s * m);
                for x in 0..s {
                    for a in grid.actions() {
                        out.push(evaluate(model, t, grid.point(x), a, &mu)?.cost);
                    }
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>, DiscretizeError>>()?
            .concat();
        let mu_n = Measure::new(flow.row(n), grid);
        let terminal = (0..s).map(|x| model.terminal(grid.point(x), &mu_n)).collect::<Result<Vec<_>, _>>()?;
        let rho = model.initial_distribution(grid)?;
        Ok(Self { grid: grid.clone(), kernels, running, terminal, rho })
    }

    pub fn n_time(&self) -> usize {
        self.grid.n_time()
    }

    pub fn n_states(&self) -> usize {
        self.grid.num_states()
    }

    pub fn n_actions(&self) -> usize {
        self.grid.num_actions()
    }

    pub fn dt(&self) -> T {
        self.grid.dt()
    }

    /// Running cost of `(slab k, state x, action j)`.
    pub fn cost(&self, k: usize, x: usize, j: usize) -> T {
        self.running[(k * self.n_states() + x) * self.n_actions() + j]
    }

    pub fn kernel(&self, k: usize, j: usize) -> &SparseRows<T> {
        self.kernels.kernel(k, j)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::{builtin, Boundary, Params};

    fn constant_model(b: f64, cov: f64) -> MfgModel {
        let mut m = builtin::<f64>("example1", &Params::new()).unwrap();
        let s = cov.sqrt();
        m.drift = Arc::new(move |_, _, _, _, out: &mut [f64]| out.fill(b));
        m.diffusion = Arc::new(move |_, _, _, _, out: &mut [f64]| {
            let d = (out.len() as f64).sqrt() as usize;
            out.fill(0.0);
            for i in 0..d {
                out[i * d + i] = s;
            }
        });
        m
    }

    fn flow_for(_model: &MfgModel, grid: &GridSpec) -> MeanFieldFlow {
        MeanFieldFlow::uniform(grid.num_states(), grid.n_time())
    }

    #[test]
    fn pure_drift_moves_right_only() {
        let g = GridSpec::uniform_1d(0.1, 2, 0.0, 1.0, 11, &[0.0]).unwrap();
        let m = constant_model(1.0, 0.0);
        let gen = build_generator(&m, &g, &flow_for(&m, &g)).unwrap();
        let row: Vec<_> = gen.rates(0, 0).row(5).collect();
        assert_eq!(row.len(), 1);
        assert_eq!(row[0].0, 6);
        assert!((row[0].1 - 10.0).abs() < 1e-12);
    }

    #[test]
    fn pure_diffusion_central_stencil() {
        let g = GridSpec::uniform_1d(0.01, 2, 0.0, 1.0, 11, &[0.0]).unwrap();
        let m = constant_model(0.0, 2.0);
        let gen = build_generator(&m, &g, &flow_for(&m, &g)).unwrap();
        let row: Vec<_> = gen.rates(0, 0).row(5).collect();
        assert_eq!(row.len(), 2);
        for (_, r) in &row {
            assert!((r - 100.0).abs() < 1e-9);
        }
        assert!((gen.diagonal(0, 0, 5) + 200.0).abs() < 1e-9);
    }

    #[test]
    fn rows_are_conservative_and_boundary_reflects() {
        let g = GridSpec::uniform_1d(0.01, 3, -1.0, 1.0, 21, &[-1.0, 0.5]).unwrap();
        let m = builtin::<f64>("lq_crowd", &Params::new()).unwrap();
        let gen = build_generator(&m, &g, &flow_for(&m, &g)).unwrap();
        for k in 0..3 {
            for j in 0..2 {
                for x in 0..21 {
                    let q = gen.rates(k, j);
                    let sum = q.row_sum(x) + gen.diagonal(k, j, x);
                    assert!(sum.abs() < 1e-12);
                    assert!(q.row(x).all(|(y, r)| r >= 0.0 && y != x && y < 21));
                }
            }
        }
        // left boundary node has no jump further left
        assert!(gen.rates(0, 0).row(0).all(|(y, _)| y == 1));
    }

    #[test]
    fn stability_violation_reports_max_dt() {
        let g = GridSpec::uniform_1d(1.0, 2, 0.0, 1.0, 11, &[0.0]).unwrap();
        let m = constant_model(0.0, 2.0);
        match build_generator(&m, &g, &flow_for(&m, &g)) {
            Err(DiscretizeError::Stability { dt, max_dt, .. }) => {
                assert_eq!(dt, 0.5);
                assert!((max_dt - 0.005).abs() < 1e-12);
            }
            other => panic!("expected stability error, got {other:?}"),
        }
    }

    #[test]
    fn kernel_examples() {
        let g = GridSpec::uniform_1d(0.1, 2, 0.0, 1.0, 11, &[0.0]).unwrap();
        let zero = constant_model(0.0, 0.0);
        let gen = build_generator(&zero, &g, &flow_for(&zero, &g)).unwrap();
        let p = transition_kernel(&gen).unwrap();
        let dense = p.kernel(0, 0).to_dense();
        for (x, row) in dense.iter().enumerate() {
            for (y, v) in row.iter().enumerate() {
                assert_eq!(*v, if x == y { 1.0 } else { 0.0 });
            }
        }

        // rate 10 to the right, dt = 0.05
        let g = GridSpec::uniform_1d(0.1, 2, 0.0, 1.0, 11, &[0.0]).unwrap();
        let m = constant_model(1.0, 0.0);
        let gen = build_generator(&m, &g, &flow_for(&m, &g)).unwrap();
        let p = transition_kernel(&gen).unwrap();
        let row = &p.kernel(1, 0).to_dense()[4];
        assert!((row[4] - 0.5).abs() < 1e-12 && (row[5] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn aligned_transport_moves_exactly_one_cell() {
        let g = GridSpec::uniform_1d(0.5, 20, -1.0, 2.0, 121, &[-1.0, 1.0]).unwrap();
        let m = builtin::<f64>("example2", &Params::new()).unwrap();
        let gen = build_generator(&m, &g, &flow_for(&m, &g)).unwrap();
        let p = transition_kernel(&gen).unwrap();
        let row: Vec<_> = p.kernel(0, 1).row(60).collect();
        assert_eq!(row.len(), 1);
        assert_eq!(row[0].0, 61);
        assert!((row[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quadratic_consistency_first_order() {
        // (Q|x|^2)(x) should approach tr(Σ) + 2 b·x with O(h) error at interior nodes.
        let (b, cov) = (0.7, 0.5);
        let m = constant_model(b, cov);
        let mut errs = Vec::new();
        for n in [21, 41, 81] {
            let g = GridSpec::uniform_1d(1e-4, 1, -1.0, 1.0, n, &[0.0]).unwrap();
            let gen = build_generator(&m, &g, &flow_for(&m, &g)).unwrap();
            let psi: Vec<f64> = (0..n).map(|i| g.point(i)[0].powi(2)).collect();
            let mut worst: f64 = 0.0;
            for x in 1..n - 1 {
                let exact = cov + 2.0 * b * g.point(x)[0];
                worst = worst.max((gen.apply(0, 0, &psi, x) - exact).abs());
            }
            errs.push((g.spacing(0), worst));
        }
        for (h, e) in &errs {
            assert!(*e <= 1.0 * h + 1e-9, "error {e} at h = {h}");
        }
        assert!(errs[2].1 < errs[0].1);
    }

    #[test]
    fn two_dimensional_cross_stencil() {
        let g = GridSpec::new(
            1e-3,
            1,
            vec![(-1.0, 1.0), (-1.0, 1.0)],
            vec![11, 11],
            vec![vec![0.0, 0.0]],
            Boundary::Reflecting,
        )
        .unwrap();
        let mut m = constant_model(0.0, 0.0);
        // σ = [[1, 0], [0.5, sqrt(0.75)]] gives σσᵀ = [[1, 0.5], [0.5, 1]]
        m.diffusion = Arc::new(|_, _, _, _, out: &mut [f64]| {
            out.copy_from_slice(&[1.0, 0.0, 0.5, 0.75f64.sqrt()]);
        });
        let gen = build_generator(&m, &g, &flow_for(&m, &g)).unwrap();
        let x = g.flat_index(&[5, 5]).unwrap();
        let pts: Vec<Vec<f64>> = (0..g.num_states()).map(|i| g.point(i).to_vec()).collect();
        // second moments of the jump distribution reproduce the covariance
        let mut m2 = [0.0; 3];
        for (y, r) in gen.rates(0, 0).row(x) {
            let dx = pts[y][0] - pts[x][0];
            let dy = pts[y][1] - pts[x][1];
            m2[0] += r * dx * dx;
            m2[1] += r * dx * dy;
            m2[2] += r * dy * dy;
        }
        assert!((m2[0] - 1.0).abs() < 1e-12);
        assert!((m2[1] - 0.5).abs() < 1e-12);
        assert!((m2[2] - 1.0).abs() < 1e-12);

        m.diffusion = Arc::new(|_, _, _, _, out: &mut [f64]| {
            out.copy_from_slice(&[0.5, 0.0, 0.9, 0.1]);
        });
        assert!(matches!(
            build_generator(&m, &g, &flow_for(&m, &g)),
            Err(DiscretizeError::Stencil { .. })
        ));
    }
}
