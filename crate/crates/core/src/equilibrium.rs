//! Best responses, damped fixed-point iteration on the flow and multi-start
//! equilibrium search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{verify_problem, ResidualReport};
use crate::discretize::DiscreteProblem;
use crate::dual::{DualCertificate, DualProgram};
use crate::error::SolveError;
use crate::lp::{solve_lp, solve_lp_warm, LpStatus};
use crate::model::{GridSpec, MfgModel};
use crate::occupation::{disintegrate, marginals, propagate_policy, MeanFieldFlow, OccupationMeasure, Policy, PrimalProgram};
use crate::scalar::Scalar;
use crate::wasserstein::flow_distance;

/// Where the certificate of a best response comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateSource {
    /// Multipliers of the occupation LP's flow-balance rows.
    #[default]
    PrimalMultipliers,
    /// A separate solve of the subsolution LP.
    DualLp,
}

#[derive(Debug, Clone)]
pub struct BestResponse<T = f64> {
    pub occupation: OccupationMeasure<T>,
    pub certificate: DualCertificate<T>,
    pub policy: Policy<T>,
    pub primal_value: T,
    pub dual_value: T,
    pub lp_iterations: usize,
    /// Deterministic policy read off the optimal basis, a warm start for nearby flows.
    pub basis_choice: Vec<usize>,
}

/// Solves the occupation LP at `flow`.
///
/// The simplex starts from the basis of `warm` (a deterministic policy, one
/// action per slab and state) or of the all-first-action policy. Policy
/// bases are always primal feasible, so no phase one is needed.
pub fn best_response_problem<T: Scalar>(
    problem: &DiscreteProblem<T>,
    source: CertificateSource,
    warm: Option<&[usize]>,
) -> Result<BestResponse<T>, SolveError> {
    let program = PrimalProgram::from_problem(problem);
    let default_choice;
    let choice = match warm {
        Some(c) => c,
        None => {
            default_choice = vec![0; problem.n_time() * problem.n_states()];
            &default_choice
        }
    };
    let sol = solve_lp_warm(&program.lp, &program.layout.policy_basis(choice))?;
    if sol.status != LpStatus::Optimal {
        return Err(SolveError::Status(format!("occupation LP reported {:?}", sol.status)));
    }
    let occupation = program.unpack(&sol.primal);
    let policy = disintegrate(&occupation);
    let basis_choice = program.layout.basis_choice(&sol.basis, &sol.primal, &policy.argmax());
    let mut lp_iterations = sol.iterations;
    let certificate = match source {
        CertificateSource::PrimalMultipliers => DualCertificate::from_flat(problem.n_time() + 1, problem.n_states(), sol.dual)?,
        CertificateSource::DualLp => {
            let dual = DualProgram::from_primal(&program);
            let d = solve_lp_warm(&dual.lp, &dual.policy_basis(&basis_choice))?;
            if d.status != LpStatus::Optimal {
                return Err(SolveError::Status(format!("subsolution LP reported {:?}", d.status)));
            }
            lp_iterations += d.iterations;
            dual.certificate(&d.primal)
        }
    };
    let dual_value = certificate.value(&problem.rho);
    Ok(BestResponse { policy, occupation, certificate, primal_value: sol.objective, dual_value, lp_iterations, basis_choice })
}

/// Best response at `flow`, certificate from the LP multipliers.
pub fn best_response<T: Scalar>(model: &MfgModel<T>, grid: &GridSpec<T>, flow: &MeanFieldFlow<T>) -> Result<BestResponse<T>, SolveError> {
    best_response_problem(&DiscreteProblem::new(model, grid, flow)?, CertificateSource::PrimalMultipliers, None)
}

/// Solves the occupation LP and the subsolution LP independently, both from
/// cold starts, and returns `(primal value, dual value)`.
pub fn independent_values<T: Scalar>(problem: &DiscreteProblem<T>) -> Result<(T, T), SolveError> {
    let program = PrimalProgram::from_problem(problem);
    let p = solve_lp(&program.lp)?;
    let dual = DualProgram::from_primal(&program);
    let d = solve_lp(&dual.lp)?;
    if p.status != LpStatus::Optimal || d.status != LpStatus::Optimal {
        return Err(SolveError::Status(format!("primal {:?}, dual {:?}", p.status, d.status)));
    }
    Ok((p.objective, -d.objective))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationOptions<T = f64> {
    pub damping: T,
    pub max_iter: usize,
    pub tol: T,
    pub source: CertificateSource,
}

impl<T: Scalar> Default for IterationOptions<T> {
    fn default() -> Self {
        Self { damping: T::lit(0.5), max_iter: 200, tol: T::lit(1e-9), source: CertificateSource::PrimalMultipliers }
    }
}

impl<T: Scalar> IterationOptions<T> {
    fn validate(&self) -> Result<(), SolveError> {
        if !(self.damping > T::zero() && self.damping <= T::one()) {
            return Err(SolveError::Options(format!("damping {} outside (0, 1]", self.damping)));
        }
        if self.max_iter == 0 {
            return Err(SolveError::Options("max_iter must be at least 1".into()));
        }
        if !(self.tol >= T::zero()) {
            return Err(SolveError::Options(format!("tolerance {} is negative", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumCandidate<T = f64> {
    /// The flow the final best response was computed against.
    pub flow: MeanFieldFlow<T>,
    pub occupation: OccupationMeasure<T>,
    pub certificate: DualCertificate<T>,
    pub policy: Policy<T>,
    pub primal_value: T,
    pub dual_value: T,
    pub iterations: usize,
    pub converged: bool,
    /// Sup-norm change of the flow at the last iteration.
    pub last_change: T,
    pub restart: Option<usize>,
    pub report: Option<ResidualReport<T>>,
}

/// Damped Picard iteration `μ ← (1 − λ) μ + λ m(BR(μ))`.
///
/// Stops once the best response's marginals are within `tol` of the current
/// flow (sup norm); the candidate then carries that flow and its best
/// response. `warm` seeds the first LP basis; later solves reuse the
/// previous best-response policy.
pub fn fixed_point_iterate<T: Scalar>(
    model: &MfgModel<T>,
    grid: &GridSpec<T>,
    flow0: &MeanFieldFlow<T>,
    options: &IterationOptions<T>,
    warm: Option<&[usize]>,
) -> Result<EquilibriumCandidate<T>, SolveError> {
    options.validate()?;
    let mut flow = flow0.clone();
    let mut hint: Option<Vec<usize>> = warm.map(<[usize]>::to_vec);
    let mut iterations = 0;
    loop {
        iterations += 1;
        let problem = DiscreteProblem::new(model, grid, &flow)?;
        let br = best_response_problem(&problem, options.source, hint.as_deref())?;
        let next = marginals(&br.occupation)?;
        let change = next.sup_distance(&flow);
        let converged = change <= options.tol;
        if converged || iterations >= options.max_iter {
            return Ok(EquilibriumCandidate {
                flow,
                occupation: br.occupation,
                certificate: br.certificate,
                policy: br.policy,
                primal_value: br.primal_value,
                dual_value: br.dual_value,
                iterations,
                converged,
                last_change: change,
                restart: None,
                report: None,
            });
        }
        hint = Some(br.basis_choice);
        flow = flow.damped(&next, options.damping);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions<T = f64> {
    pub n_restarts: usize,
    pub seed: u64,
    pub dedupe_eps: T,
    /// Residual tolerance a converged candidate must meet to be kept.
    pub certify_tol: T,
    pub iteration: IterationOptions<T>,
}

impl<T: Scalar> Default for SearchOptions<T> {
    fn default() -> Self {
        Self { n_restarts: 5, seed: 0, dedupe_eps: T::lit(0.1), certify_tol: T::lit(1e-6), iteration: IterationOptions::default() }
    }
}

/// Starting flow and policy of restart `r`: a random stationary
/// deterministic policy (ChaCha8, stream `r`) propagated from `ρ` with the
/// coefficients frozen at the constant-`ρ` flow.
pub fn restart_start<T: Scalar>(
    model: &MfgModel<T>,
    grid: &GridSpec<T>,
    seed: u64,
    r: usize,
) -> Result<(MeanFieldFlow<T>, Vec<usize>), SolveError> {
    let rho = model.initial_distribution(grid)?;
    let frozen = MeanFieldFlow::constant(&rho, grid.n_time())?;
    let problem = DiscreteProblem::new(model, grid, &frozen)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    let per_state: Vec<usize> = (0..grid.num_states()).map(|_| rng.gen_range(0..grid.num_actions())).collect();
    let policy = Policy::stationary(grid.n_time(), grid.num_actions(), &per_state);
    let occ = propagate_policy(&problem, &policy);
    Ok((marginals(&occ)?, policy.argmax()))
}

/// Multi-start search. Restarts run in parallel and are merged in restart
/// order; converged candidates passing certification are kept, a candidate
/// is dropped when it lies within `dedupe_eps` (max-node `W₁`) of an earlier
/// one, and the survivors are sorted by primal value, then restart index.
pub fn find_equilibria<T: Scalar>(
    model: &MfgModel<T>,
    grid: &GridSpec<T>,
    options: &SearchOptions<T>,
) -> Result<Vec<EquilibriumCandidate<T>>, SolveError> {
    if options.n_restarts == 0 {
        return Err(SolveError::Options("n_restarts must be at least 1".into()));
    }
    options.iteration.validate()?;
    let runs = (0..options.n_restarts)
        .into_par_iter()
        .map(|r| -> Result<EquilibriumCandidate<T>, SolveError> {
            let (flow0, choice) = restart_start(model, grid, options.seed, r)?;
            let mut cand = fixed_point_iterate(model, grid, &flow0, &options.iteration, Some(&choice))?;
            cand.restart = Some(r);
            if cand.converged {
                let problem = DiscreteProblem::new(model, grid, &cand.flow)?;
                cand.report = Some(verify_problem(&problem, &cand.flow, &cand.occupation, &cand.certificate, options.certify_tol)?);
            }
            Ok(cand)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut kept: Vec<EquilibriumCandidate<T>> = Vec::new();
    for cand in runs {
        if !cand.converged || !cand.report.as_ref().is_some_and(|r| r.verdict) {
            continue;
        }
        if kept.iter().all(|k| flow_distance(grid, &k.flow, &cand.flow) > options.dedupe_eps) {
            kept.push(cand);
        }
    }
    kept.sort_by(|a, b| a.primal_value.partial_cmp(&b.primal_value).unwrap_or(std::cmp::Ordering::Equal).then(a.restart.cmp(&b.restart)));
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin, Params};

    fn example2_grid() -> (MfgModel, GridSpec) {
        let model = builtin("example2", &Params::new()).unwrap();
        let grid = GridSpec::uniform_1d(0.5, 20, -1.0, 2.0, 121, &[-1.0, 1.0]).unwrap();
        (model, grid)
    }

    #[test]
    fn example2_best_response_moves_right() {
        let (model, grid) = example2_grid();
        let x0 = grid.nearest(&[0.5]);
        let rows: Vec<Vec<f64>> = (0..=20)
            .map(|k| {
                let mut r = vec![0.0; 121];
                r[x0 + k] = 1.0;
                r
            })
            .collect();
        let flow = MeanFieldFlow::new(rows).unwrap();
        let br = best_response(&model, &grid, &flow).unwrap();
        assert!((br.primal_value + 0.5).abs() < 1e-9, "{}", br.primal_value);
        assert!((br.dual_value + 0.5).abs() < 1e-9, "{}", br.dual_value);
        let m = marginals(&br.occupation).unwrap();
        assert!(m.sup_distance(&flow) < 1e-12);
    }

    #[test]
    fn certificate_sources_agree() {
        let mut p = Params::new();
        p.insert("sigma".into(), 0.5);
        let model: MfgModel = builtin("lq_crowd", &p).unwrap();
        let grid = GridSpec::uniform_1d(0.2, 4, -1.0, 1.0, 9, &[-1.0, 0.0, 1.0]).unwrap();
        let flow = MeanFieldFlow::uniform(9, 4);
        let problem = DiscreteProblem::new(&model, &grid, &flow).unwrap();
        let a = best_response_problem(&problem, CertificateSource::PrimalMultipliers, None).unwrap();
        let b = best_response_problem(&problem, CertificateSource::DualLp, None).unwrap();
        assert!((a.dual_value - b.dual_value).abs() < 1e-7);
        assert!((a.primal_value - a.dual_value).abs() < 1e-7);
        let (p, d) = independent_values(&problem).unwrap();
        assert!((p - d).abs() < 1e-7 && (p - a.primal_value).abs() < 1e-7);
    }

    #[test]
    fn bad_options_are_rejected() {
        let (model, grid) = example2_grid();
        let flow = MeanFieldFlow::uniform(121, 20);
        let opts = IterationOptions { damping: 0.0, ..IterationOptions::default() };
        assert!(matches!(fixed_point_iterate(&model, &grid, &flow, &opts, None), Err(SolveError::Options(_))));
        let search = SearchOptions { n_restarts: 0, ..SearchOptions::default() };
        assert!(matches!(find_equilibria(&model, &grid, &search), Err(SolveError::Options(_))));
    }
}
