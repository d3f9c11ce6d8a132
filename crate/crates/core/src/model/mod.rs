//! Problem instances: coefficient evaluators, mean-field coupling and the
//! initial law of the representative player.
//!
//! A model is independent of any grid. The [`GridSpec`] supplies the
//! truncated state box, the time mesh and the finite action set; the model
//! supplies drift `b`, diffusion `σ`, running cost `f`, terminal cost `g`
//! and the initial law `ρ`, which is projected onto the grid on demand.

mod builtins;
mod grid;

use std::fmt;
use std::sync::Arc;

pub use builtins::{builtin, builtin_catalog, BuiltinInfo, Params};
pub use grid::{Boundary, GridSpec};

use crate::error::ModelError;
use crate::scalar::Scalar;

/// A probability vector on the state grid, with its mean precomputed.
#[derive(Debug, Clone)]
pub struct Measure<'a, T = f64> {
    probs: &'a [T],
    grid: &'a GridSpec<T>,
    mean: [T; 2],
}

impl<'a, T: Scalar> Measure<'a, T> {
    pub fn new(probs: &'a [T], grid: &'a GridSpec<T>) -> Self {
        let mut mean = [T::zero(); 2];
        for (i, &p) in probs.iter().enumerate() {
            if p != T::zero() {
                for (m, &c) in mean.iter_mut().zip(grid.point(i)) {
                    *m = *m + p * c;
                }
            }
        }
        Self { probs, grid, mean }
    }

    pub fn probs(&self) -> &'a [T] {
        self.probs
    }

    pub fn grid(&self) -> &'a GridSpec<T> {
        self.grid
    }

    /// First moment, one entry per state dimension.
    pub fn mean(&self) -> &[T] {
        &self.mean[..self.grid.state_dim()]
    }
}

/// How the flow enters the coefficient evaluators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingKind {
    None,
    MeanMoment,
    FullDensity,
}

/// Initial law `ρ`, projected onto a grid by [`MfgModel::initial_distribution`].
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw<T = f64> {
    /// Unit mass at the grid node nearest the point.
    PointMass(Vec<T>),
    /// Isotropic Gaussian weights, renormalized on the grid.
    Gaussian { mean: Vec<T>, std: T },
    Uniform,
    /// Explicit probability vector; must match the grid size.
    Explicit(Vec<T>),
}

pub type VectorFn<T> = dyn Fn(T, &[T], &[T], &Measure<'_, T>, &mut [T]) + Send + Sync;
pub type RunningCostFn<T> = dyn Fn(T, &[T], &[T], &Measure<'_, T>) -> T + Send + Sync;
pub type TerminalCostFn<T> = dyn Fn(&[T], &Measure<'_, T>) -> T + Send + Sync;

/// Mean field game instance.
///
/// `drift` writes `b(t, x, a, μ)` into a slice of length `state_dim`;
/// `diffusion` writes `σ(t, x, a, μ)` row-major into a `state_dim²` slice.
#[derive(Clone)]
pub struct MfgModel<T = f64> {
    pub name: String,
    pub drift: Arc<VectorFn<T>>,
    pub diffusion: Arc<VectorFn<T>>,
    pub running_cost: Arc<RunningCostFn<T>>,
    pub terminal_cost: Arc<TerminalCostFn<T>>,
    pub initial: InitialLaw<T>,
    pub coupling: CouplingKind,
}

impl<T: Scalar> fmt::Debug for MfgModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MfgModel")
            .field("name", &self.name)
            .field("initial", &self.initial)
            .field("coupling", &self.coupling)
            .finish_non_exhaustive()
    }
}

/// Coefficients at one `(t, x, a, μ)`; `covariance` is `σσᵀ`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<T = f64> {
    pub drift: Vec<T>,
    pub covariance: Vec<T>,
    pub cost: T,
}

impl<T: Scalar> MfgModel<T> {
    /// Projects the initial law onto `grid`.
    pub fn initial_distribution(&self, grid: &GridSpec<T>) -> Result<Vec<T>, ModelError> {
        let n = grid.num_states();
        let dim = grid.state_dim();
        let rho = match &self.initial {
            InitialLaw::PointMass(x) => {
                if x.len() != dim {
                    return Err(ModelError::InitialDistribution(format!(
                        "point mass has {} coordinates, grid has {dim}",
                        x.len()
                    )));
                }
                let mut rho = vec![T::zero(); n];
                rho[grid.nearest(x)] = T::one();
                rho
            }
            InitialLaw::Gaussian { mean, std } => {
                if mean.len() != dim {
                    return Err(ModelError::InitialDistribution(format!(
                        "gaussian mean has {} coordinates, grid has {dim}",
                        mean.len()
                    )));
                }
                if *std <= T::zero() {
                    let mut rho = vec![T::zero(); n];
                    rho[grid.nearest(mean)] = T::one();
                    return Ok(rho);
                }
                let two_var = T::lit(2.0) * *std * *std;
                let w: Vec<T> = (0..n)
                    .map(|i| {
                        let r2: T = grid.point(i).iter().zip(mean).map(|(&p, &m)| (p - m) * (p - m)).sum();
                        (-r2 / two_var).exp()
                    })
                    .collect();
                let total: T = w.iter().copied().sum();
                if !(total > T::zero()) {
                    return Err(ModelError::InitialDistribution("gaussian has no mass on the grid".into()));
                }
                w.into_iter().map(|v| v / total).collect()
            }
            InitialLaw::Uniform => vec![T::one() / T::from_usize_lossy(n); n],
            InitialLaw::Explicit(p) => {
                if p.len() != n {
                    return Err(ModelError::InitialDistribution(format!(
                        "explicit law has {} entries, grid has {n} states",
                        p.len()
                    )));
                }
                p.clone()
            }
        };
        validate_probability(&rho, T::tol(1e-12)).map_err(ModelError::InitialDistribution)?;
        Ok(rho)
    }

    /// Terminal cost `g(x, μ)` with a finiteness check.
    pub fn terminal(&self, x: &[T], mu: &Measure<'_, T>) -> Result<T, ModelError> {
        let g = (self.terminal_cost)(x, mu);
        if !g.is_finite() {
            return Err(non_finite("terminal cost", T::nan(), x, &[]));
        }
        Ok(g)
    }
}

/// Checks entries are nonnegative and sum to one within `tol`.
pub fn validate_probability<T: Scalar>(p: &[T], tol: T) -> Result<(), String> {
    if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !(**v >= T::zero()) || !v.is_finite()) {
        return Err(format!("entry {i} is {v}"));
    }
    let s: T = p.iter().copied().sum();
    if (s - T::one()).abs() > tol {
        return Err(format!("entries sum to {s}"));
    }
    Ok(())
}

fn non_finite<T: Scalar>(what: &'static str, t: T, x: &[T], a: &[T]) -> ModelError {
    ModelError::NonFinite {
        what,
        t: t.as_f64(),
        x: x.iter().map(|v| v.as_f64()).collect(),
        a: a.iter().map(|v| v.as_f64()).collect(),
    }
}

/// Evaluates drift, covariance `σσᵀ` and running cost at one point.
pub fn evaluate<T: Scalar>(
    model: &MfgModel<T>,
    t: T,
    x: &[T],
    a: &[T],
    mu: &Measure<'_, T>,
) -> Result<Evaluation<T>, ModelError> {
    let d = x.len();
    let mut drift = vec![T::zero(); d];
    let mut sigma = vec![T::zero(); d * d];
    (model.drift)(t, x, a, mu, &mut drift);
    if drift.iter().any(|v| !v.is_finite()) {
        return Err(non_finite("drift", t, x, a));
    }
    (model.diffusion)(t, x, a, mu, &mut sigma);
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(non_finite("diffusion", t, x, a));
    }
    let cost = (model.running_cost)(t, x, a, mu);
    if !cost.is_finite() {
        return Err(non_finite("running cost", t, x, a));
    }
    Ok(Evaluation { drift, covariance: outer_square(&sigma, d), cost })
}

/// `σσᵀ` for a row-major `d×d` matrix.
pub(crate) fn outer_square<T: Scalar>(sigma: &[T], d: usize) -> Vec<T> {
    let mut cov = vec![T::zero(); d * d];
    for i in 0..d {
        for j in 0..d {
            let mut s = T::zero();
            for k in 0..d {
                s = s + sigma[i * d + k] * sigma[j * d + k];
            }
            cov[i * d + j] = s;
        }
    }
    cov
}

/// Smallest eigenvalue of a symmetric 1×1 or 2×2 matrix.
pub(crate) fn min_eigenvalue<T: Scalar>(cov: &[T], d: usize) -> T {
    match d {
        1 => cov[0],
        _ => {
            let (a, b, c) = (cov[0], cov[1], cov[3]);
            let half_tr = (a + c) / T::lit(2.0);
            let disc = (((a - c) / T::lit(2.0)).powi(2) + b * b).sqrt();
            half_tr - disc
        }
    }
}

/// Result of [`check_nondegeneracy`].
#[derive(Debug, Clone, PartialEq)]
pub struct NondegeneracyReport<T = f64> {
    pub min_eigenvalue: T,
    pub lambda_min: T,
    pub passes: bool,
    /// `(time node, state, action)` where the minimum was found.
    pub location: (usize, usize, usize),
}

/// Samples `σσᵀ` over every slab start, grid node and action (with `μ = ρ`)
/// and compares its smallest eigenvalue against `lambda_min`.
///
/// Purely advisory: degenerate models remain solvable.
pub fn check_nondegeneracy<T: Scalar>(
    model: &MfgModel<T>,
    grid: &GridSpec<T>,
    lambda_min: T,
) -> Result<NondegeneracyReport<T>, ModelError> {
    let rho = model.initial_distribution(grid)?;
    let mu = Measure::new(&rho, grid);
    let d = grid.state_dim();
    let mut best = (T::infinity(), (0, 0, 0));
    for k in 0..grid.n_time() {
        let t = grid.time(k);
        for x in 0..grid.num_states() {
            for (j, a) in grid.actions().iter().enumerate() {
                let ev = evaluate(model, t, grid.point(x), a, &mu)?;
                let e = min_eigenvalue(&ev.covariance, d);
                if e < best.0 {
                    best = (e, (k, x, j));
                }
            }
        }
    }
    Ok(NondegeneracyReport {
        min_eigenvalue: best.0,
        lambda_min,
        passes: best.0 >= lambda_min,
        location: best.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_1d() -> GridSpec {
        GridSpec::uniform_1d(1.0, 4, -1.0, 1.0, 21, &[-1.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn gaussian_initial_law_is_a_probability_vector() {
        let g = grid_1d();
        let m = builtin::<f64>("lq_crowd", &Params::new()).unwrap();
        let rho = m.initial_distribution(&g).unwrap();
        assert!(validate_probability(&rho, 1e-12).is_ok());
    }

    #[test]
    fn explicit_initial_law_must_match_grid() {
        let g = grid_1d();
        let mut m = builtin::<f64>("example1", &Params::new()).unwrap();
        m.initial = InitialLaw::Explicit(vec![0.5, 0.5]);
        assert!(matches!(m.initial_distribution(&g), Err(ModelError::InitialDistribution(_))));
        m.initial = InitialLaw::Explicit(vec![0.1; 21]);
        assert!(m.initial_distribution(&g).is_err());
    }

    #[test]
    fn non_finite_drift_is_reported_with_location() {
        let g = grid_1d();
        let mut m = builtin::<f64>("example1", &Params::new()).unwrap();
        m.drift = Arc::new(|_, _, _, _, out: &mut [f64]| out[0] = f64::NAN);
        let rho = m.initial_distribution(&g).unwrap();
        let mu = Measure::new(&rho, &g);
        let err = evaluate(&m, 0.25, &[0.5], &[1.0], &mu).unwrap_err();
        match err {
            ModelError::NonFinite { what, t, x, a } => {
                assert_eq!(what, "drift");
                assert_eq!((t, x, a), (0.25, vec![0.5], vec![1.0]));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn two_by_two_eigenvalue() {
        let e = min_eigenvalue(&[2.0, 1.0, 1.0, 2.0], 2);
        assert!((e - 1.0f64).abs() < 1e-14);
    }

    #[test]
    fn measure_mean() {
        let g = grid_1d();
        let mut p = vec![0.0; 21];
        p[0] = 0.5;
        p[20] = 0.25;
        p[10] = 0.25;
        let mu = Measure::new(&p, &g);
        assert!((mu.mean()[0] - (-0.25)).abs() < 1e-15);
    }
}
