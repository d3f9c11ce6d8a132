//! Residuals of the primal-dual equilibrium system, complementary slackness
//! and Monte-Carlo consistency checks.
//!
//! For a flow `μ`, occupation `(ξ, ν)` and certificate `ψ`:
//!
//! | residual        | quantity                                              |
//! |-----------------|-------------------------------------------------------|
//! | `r_value`       | `|Σ g μ_N + Σ f ξ − Σ ρ ψ[0]|`                          |
//! | `r_flow`        | largest flow-balance violation of `(ξ, μ_N)`           |
//! | `r_terminal_feas` | `max (ψ[N] − g)₊`                                    |
//! | `r_bellman_feas`  | `max (−slack)₊` over all `(k, x, j)`                 |
//! | `r_consistency` | `max |Σ_j ξ[k,·,j]/Δt − μ_k|` and `max |ν − μ_N|`      |
//!
//! The complementarity sums are `Σ (g − ψ[N]) μ_N` and `Σ slack · ξ`. Whenever
//! the flow-balance rows hold, their sum telescopes to the signed value gap.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretize::DiscreteProblem;
use crate::dual::{bellman_slack, dual_violations, DualCertificate};
use crate::error::{MeasureError, SolveError};
use crate::model::{GridSpec, MfgModel};
use crate::occupation::{flow_balance_residual, MeanFieldFlow, OccupationMeasure, Policy};
use crate::scalar::Scalar;
use crate::wasserstein::flow_distance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport<T = f64> {
    pub r_value: T,
    pub r_flow: T,
    pub r_terminal_feas: T,
    pub r_bellman_feas: T,
    pub r_consistency: T,
    pub r_comp_terminal: T,
    pub r_comp_running: T,
    pub comp_terminal_signed: T,
    pub comp_running_signed: T,
    pub primal_value: T,
    pub dual_value: T,
    pub tolerance: T,
    pub verdict: bool,
}

impl<T: Scalar> ResidualReport<T> {
    /// The residuals in declaration order, with their names.
    pub fn components(&self) -> [(&'static str, T); 7] {
        [
            ("r_value", self.r_value),
            ("r_flow", self.r_flow),
            ("r_terminal_feas", self.r_terminal_feas),
            ("r_bellman_feas", self.r_bellman_feas),
            ("r_consistency", self.r_consistency),
            ("r_comp_terminal", self.r_comp_terminal),
            ("r_comp_running", self.r_comp_running),
        ]
    }

    pub fn max_residual(&self) -> T {
        self.components().iter().fold(T::zero(), |m, c| m.max(c.1))
    }
}

fn check_shapes<T: Scalar>(
    problem: &DiscreteProblem<T>,
    flow: &MeanFieldFlow<T>,
    occ: &OccupationMeasure<T>,
    psi: &DualCertificate<T>,
) -> Result<(), MeasureError> {
    psi.check_shape(problem)?;
    let (n, s, a) = (problem.n_time(), problem.n_states(), problem.n_actions());
    if flow.n_nodes() != n + 1 || flow.n_states() != s {
        return Err(MeasureError::Shape(format!("flow is {}x{}, expected {}x{s}", flow.n_nodes(), flow.n_states(), n + 1)));
    }
    if occ.n_time != n || occ.n_states != s || occ.n_actions != a || occ.xi.len() != n * s * a || occ.nu.len() != s {
        return Err(MeasureError::Shape(format!(
            "occupation is {}x{}x{}, expected {n}x{s}x{a}",
            occ.n_time, occ.n_states, occ.n_actions
        )));
    }
    Ok(())
}

/// Signed complementarity sums `(Σ (g − ψ[N]) μ_N, Σ slack · ξ)`.
pub fn complementarity_signed<T: Scalar>(
    problem: &DiscreteProblem<T>,
    flow: &MeanFieldFlow<T>,
    occ: &OccupationMeasure<T>,
    psi: &DualCertificate<T>,
) -> Result<(T, T), MeasureError> {
    check_shapes(problem, flow, occ, psi)?;
    let n = problem.n_time();
    let terminal = flow.row(n).iter().zip(psi.row(n)).zip(&problem.terminal).map(|((&m, &p), &g)| (g - p) * m).sum();
    let mut running = T::zero();
    for k in 0..n {
        for x in 0..problem.n_states() {
            for j in 0..problem.n_actions() {
                let w = occ.xi(k, x, j);
                if w != T::zero() {
                    running = running + bellman_slack(problem, psi, k, x, j) * w;
                }
            }
        }
    }
    Ok((terminal, running))
}

/// Evaluates every residual against an already discretized problem.
pub fn verify_problem<T: Scalar>(
    problem: &DiscreteProblem<T>,
    flow: &MeanFieldFlow<T>,
    occ: &OccupationMeasure<T>,
    psi: &DualCertificate<T>,
    tol: T,
) -> Result<ResidualReport<T>, MeasureError> {
    let (comp_terminal_signed, comp_running_signed) = complementarity_signed(problem, flow, occ, psi)?;
    let n = problem.n_time();
    let mu_n = flow.row(n);
    let terminal_cost: T = problem.terminal.iter().zip(mu_n).map(|(&g, &m)| g * m).sum();
    let running_cost: T = occ.xi.iter().zip(&problem.running).map(|(&w, &f)| w * f).sum();
    let primal_value = terminal_cost + running_cost;
    let dual_value = psi.value(&problem.rho);
    let (r_terminal_feas, r_bellman_feas) = dual_violations(problem, psi)?;
    let mut r_consistency = T::zero();
    for k in 0..n {
        for (x, &m) in flow.row(k).iter().enumerate() {
            r_consistency = r_consistency.max((occ.state_mass(k, x) / occ.dt - m).abs());
        }
    }
    for (&v, &m) in occ.nu.iter().zip(mu_n) {
        r_consistency = r_consistency.max((v - m).abs());
    }
    let mut report = ResidualReport {
        r_value: (primal_value - dual_value).abs(),
        r_flow: flow_balance_residual(problem, occ, mu_n),
        r_terminal_feas,
        r_bellman_feas,
        r_consistency,
        r_comp_terminal: comp_terminal_signed.abs(),
        r_comp_running: comp_running_signed.abs(),
        comp_terminal_signed,
        comp_running_signed,
        primal_value,
        dual_value,
        tolerance: tol,
        verdict: false,
    };
    report.verdict = report.components().iter().all(|c| c.1 <= tol);
    Ok(report)
}

/// Discretizes at `flow` and evaluates the equilibrium residuals.
pub fn verify_ne<T: Scalar>(
    model: &MfgModel<T>,
    grid: &GridSpec<T>,
    flow: &MeanFieldFlow<T>,
    occ: &OccupationMeasure<T>,
    psi: &DualCertificate<T>,
    tol: T,
) -> Result<ResidualReport<T>, SolveError> {
    let problem = DiscreteProblem::new(model, grid, flow)?;
    Ok(verify_problem(&problem, flow, occ, psi, tol)?)
}

/// Terminal and running complementarity sums, as absolute values.
pub fn complementarity<T: Scalar>(
    model: &MfgModel<T>,
    grid: &GridSpec<T>,
    flow: &MeanFieldFlow<T>,
    occ: &OccupationMeasure<T>,
    psi: &DualCertificate<T>,
) -> Result<(T, T), SolveError> {
    let problem = DiscreteProblem::new(model, grid, flow)?;
    let (t, r) = complementarity_signed(&problem, flow, occ, psi)?;
    Ok((t.abs(), r.abs()))
}

const CHUNK: usize = 4096;

/// State counts per node from `n_paths` simulated chains.
///
/// Paths are split into fixed chunks of 4096, each with its own RNG stream
/// derived from `seed`, so the result does not depend on the thread count.
pub fn simulate_counts<T: Scalar>(problem: &DiscreteProblem<T>, policy: &Policy<T>, n_paths: usize, seed: u64) -> Vec<u64> {
    let (n, s) = (problem.n_time(), problem.n_states());
    let rho: Vec<f64> = problem.rho.iter().map(|v| v.as_f64().max(0.0)).collect();
    let start = WeightedIndex::new(&rho).expect("initial distribution has positive mass");
    let chunks = n_paths.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let mut counts = vec![0u64; (n + 1) * s];
            let paths = CHUNK.min(n_paths - c * CHUNK);
            let mut buf = Vec::new();
            for _ in 0..paths {
                let mut x = start.sample(&mut rng);
                counts[x] += 1;
                for k in 0..n {
                    let j = sample_index(policy.row(k, x).iter().map(|v| v.as_f64()), &mut rng, &mut buf);
                    x = sample_state(problem, k, j, x, &mut rng);
                    counts[(k + 1) * s + x] += 1;
                }
            }
            counts
        })
        .reduce(|| vec![0u64; (n + 1) * s], |mut a, b| {
            a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            a
        })
}

fn sample_index(weights: impl Iterator<Item = f64>, rng: &mut ChaCha8Rng, buf: &mut Vec<f64>) -> usize {
    use rand::Rng;
    buf.clear();
    let mut total = 0.0;
    for w in weights {
        total += w.max(0.0);
        buf.push(total);
    }
    let u = rng.gen::<f64>() * total;
    buf.iter().position(|&c| u < c).unwrap_or(buf.len() - 1)
}

fn sample_state<T: Scalar>(problem: &DiscreteProblem<T>, k: usize, j: usize, x: usize, rng: &mut ChaCha8Rng) -> usize {
    use rand::Rng;
    let row = problem.kernel(k, j);
    let u = rng.gen::<f64>() * row.row_sum(x).as_f64();
    let mut acc = 0.0;
    let mut last = x;
    for (y, p) in row.row(x) {
        acc += p.as_f64();
        last = y;
        if u < acc {
            return y;
        }
    }
    last
}

/// Empirical flow from simulation and its largest node-wise `W₁` distance to `flow`.
pub fn simulate_consistency<T: Scalar>(
    problem: &DiscreteProblem<T>,
    policy: &Policy<T>,
    flow: &MeanFieldFlow<T>,
    n_paths: usize,
    seed: u64,
) -> Result<(MeanFieldFlow<T>, T), MeasureError> {
    if n_paths == 0 {
        return Err(MeasureError::Shape("at least one path is needed".into()));
    }
    if policy.n_time != problem.n_time() || policy.n_states != problem.n_states() || policy.n_actions != problem.n_actions() {
        return Err(MeasureError::Shape("policy does not match the problem".into()));
    }
    let counts = simulate_counts(problem, policy, n_paths, seed);
    let total = T::from_usize_lossy(n_paths);
    let m: Vec<T> = counts.iter().map(|&c| T::from_u64(c).expect("count representable") / total).collect();
    let empirical = MeanFieldFlow::from_flat(problem.n_time() + 1, problem.n_states(), m)?;
    let d = flow_distance(&problem.grid, &empirical, flow);
    Ok((empirical, d))
}
