use std::f64::consts::PI;

use mfg_core::certify::{simulate_consistency, verify_ne, verify_problem};
use mfg_core::discretize::DiscreteProblem;
use mfg_core::dual::{dual_violations, DualCertificate};
use mfg_core::equilibrium::{
    best_response, find_equilibria, fixed_point_iterate, restart_start, IterationOptions, SearchOptions,
};
use mfg_core::hjbfp::{compare, hjbfp_fixed_point, solve_fp, solve_hjb, HjbFpOptions};
use mfg_core::model::{builtin, GridSpec, MfgModel, Params};
use mfg_core::occupation::{marginals, propagate_policy, MeanFieldFlow, Policy};
use mfg_core::wasserstein::flow_distance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const X0: f64 = 0.5;

/// Aligned grid: `h = Δt = 0.025` with `x0` on a node.
fn example2() -> (MfgModel, GridSpec) {
    let model = builtin("example2", &Params::from([("x0".to_string(), X0)])).unwrap();
    let grid = GridSpec::uniform_1d(0.5, 20, -1.0, 2.0, 121, &[-1.0, 1.0]).unwrap();
    (model, grid)
}

fn example2_on(n_time: usize, n_state: usize) -> (MfgModel, GridSpec) {
    let model = builtin("example2", &Params::from([("x0".to_string(), X0)])).unwrap();
    let grid = GridSpec::uniform_1d(0.5, n_time, -1.0, 2.0, n_state, &[-1.0, 1.0]).unwrap();
    (model, grid)
}

fn transport_flow(grid: &GridSpec) -> MeanFieldFlow {
    let start = grid.nearest(&[X0]);
    let rows = (0..=grid.n_time())
        .map(|k| {
            let mut r = vec![0.0; grid.num_states()];
            r[start + k] = 1.0;
            r
        })
        .collect();
    MeanFieldFlow::new(rows).unwrap()
}

/// `ψ(x) = −x0 + ∫_{x0}^x φ` with `φ = 1` below 0, `cos(πy/x0)` on `[0, x0]`, `−1` above.
fn certificate_family(x: f64) -> f64 {
    if x >= X0 {
        -x
    } else if x >= 0.0 {
        -X0 + X0 / PI * (PI * x / X0).sin()
    } else {
        -X0 + x
    }
}

fn example1(sigma: f64) -> (MfgModel, GridSpec) {
    let model = builtin("example1", &Params::from([("sigma".to_string(), sigma)])).unwrap();
    let grid = GridSpec::uniform_1d(0.5, 10, -1.0, 1.0, 21, &[-1.0, 0.0, 1.0]).unwrap();
    (model, grid)
}

#[test]
fn example1_value_is_zero_for_any_flow() {
    let (model, grid) = example1(0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let rows: Vec<Vec<f64>> = (0..=10)
            .map(|_| {
                let r: Vec<f64> = (0..21).map(|_| rng.gen_range(0.0..1.0)).collect();
                let s: f64 = r.iter().sum();
                r.into_iter().map(|v| v / s).collect()
            })
            .collect();
        let br = best_response(&model, &grid, &MeanFieldFlow::new(rows).unwrap()).unwrap();
        assert!(br.primal_value.abs() < 1e-12);
        assert!(br.dual_value.abs() < 1e-12);
    }
}

#[test]
fn example1_iteration_stops_at_once_from_consistent_starts() {
    let (model, grid) = example1(0.3);
    let opts = IterationOptions { damping: 1.0, ..IterationOptions::default() };
    for r in 0..4 {
        let (flow0, choice) = restart_start(&model, &grid, 9, r).unwrap();
        let cand = fixed_point_iterate(&model, &grid, &flow0, &opts, Some(&choice)).unwrap();
        assert!(cand.converged);
        assert_eq!(cand.iterations, 1);
        assert!(cand.flow.sup_distance(&flow0) == 0.0);
    }
}

#[test]
fn example1_hjbfp_finds_one_equilibrium_among_many() {
    let (model, grid) = example1(0.3);
    let reference = hjbfp_fixed_point(&model, &grid, &HjbFpOptions::default(), None).unwrap();
    assert!(reference.converged);
    // every action ties, the lowest index is taken everywhere
    assert!(reference.value.minimizer_unique.iter().all(|&u| !u));
    assert!(reference.value.feedback.iter().all(|&a| a == 0));
    assert!(reference.value.v.iter().all(|&v| v == 0.0));

    let options = SearchOptions { n_restarts: 5, seed: 3, dedupe_eps: 0.05, certify_tol: 1e-10, ..SearchOptions::default() };
    let cands = find_equilibria(&model, &grid, &options).unwrap();
    assert!(cands.len() >= 2);
    let rho = model.initial_distribution(&grid).unwrap();
    let gaps: Vec<_> = cands
        .iter()
        .map(|c| compare(&grid, &c.flow, c.primal_value, &reference.flow, reference.value.value(&rho)))
        .collect();
    assert!(gaps.iter().all(|g| g.value_gap < 1e-12));
    assert!(gaps.iter().any(|g| g.max_w1 > 0.05), "all candidates coincide with the HJB-FP flow");
}

#[test]
fn example2_best_response_at_equilibrium_is_minus_x0() {
    let (model, grid) = example2();
    let flow = transport_flow(&grid);
    let br = best_response(&model, &grid, &flow).unwrap();
    assert!((br.primal_value + X0).abs() < 1e-10);
    assert!((br.dual_value + X0).abs() < 1e-10);
    let m = marginals(&br.occupation).unwrap();
    assert_eq!(m.sup_distance(&flow), 0.0);
}

#[test]
fn example2_equilibrium_start_is_a_fixed_point() {
    let (model, grid) = example2();
    let flow = transport_flow(&grid);
    let opts = IterationOptions { damping: 1.0, tol: 1e-12, ..IterationOptions::default() };
    let cand = fixed_point_iterate(&model, &grid, &flow, &opts, None).unwrap();
    assert_eq!(cand.iterations, 1);
    let report = verify_ne(&model, &grid, &cand.flow, &cand.occupation, &cand.certificate, 1e-6).unwrap();
    assert!(report.verdict);
    assert!(report.max_residual() <= 1e-10, "{report:?}");
}

#[test]
fn example2_has_a_single_equilibrium() {
    let (model, grid) = example2();
    let options = SearchOptions {
        n_restarts: 4,
        seed: 1,
        dedupe_eps: 0.1,
        iteration: IterationOptions { damping: 1.0, tol: 1e-12, ..IterationOptions::default() },
        ..SearchOptions::default()
    };
    let cands = find_equilibria(&model, &grid, &options).unwrap();
    assert_eq!(cands.len(), 1);
    assert!(flow_distance(&grid, &cands[0].flow, &transport_flow(&grid)) < 1e-12);
}

#[test]
fn example2_equilibrium_is_unique_among_all_policies_on_a_coarse_grid() {
    // 3 slabs, 7 states: enumerate every deterministic Markov policy on the states
    // reachable from x0 and check which are best responses to their own flow
    let model = builtin("example2", &Params::from([("x0".to_string(), X0)])).unwrap();
    let grid = GridSpec::uniform_1d(0.75, 3, -0.25, 1.25, 7, &[-1.0, 1.0]).unwrap();
    let start = grid.nearest(&[X0]);
    let (n, s) = (3, 7);
    let mut equilibria = Vec::new();
    for bits in 0u32..(1 << 6) {
        // slab k decides at the states reachable in k steps: x0 + {-k, .., k} by 2
        let mut choice = vec![0usize; n * s];
        let mut bit = 0;
        for k in 0..n {
            for step in 0..=k {
                let x = start + 2 * step - k;
                choice[k * s + x] = ((bits >> bit) & 1) as usize;
                bit += 1;
            }
        }
        let rho = model.initial_distribution(&grid).unwrap();
        let frozen = MeanFieldFlow::constant(&rho, n).unwrap();
        let p0 = DiscreteProblem::new(&model, &grid, &frozen).unwrap();
        let flow = marginals(&propagate_policy(&p0, &Policy::deterministic(n, s, 2, &choice))).unwrap();
        let problem = DiscreteProblem::new(&model, &grid, &flow).unwrap();
        let own = propagate_policy(&problem, &Policy::deterministic(n, s, 2, &choice));
        let own_value: f64 = own.xi.iter().zip(&problem.running).map(|(w, f)| w * f).sum::<f64>()
            + own.nu.iter().zip(&problem.terminal).map(|(m, g)| m * g).sum::<f64>();
        let br = best_response(&model, &grid, &flow).unwrap();
        if own_value <= br.primal_value + 1e-10 && !equilibria.iter().any(|f: &MeanFieldFlow| f.sup_distance(&flow) < 1e-12) {
            equilibria.push(flow);
        }
    }
    assert_eq!(equilibria.len(), 1);
    for k in 0..=n {
        assert_eq!(equilibria[0].row(k)[start + k], 1.0);
    }
}

#[test]
fn example2_certificate_family_is_feasible_and_tight() {
    let (model, grid) = example2();
    let flow = transport_flow(&grid);
    let problem = DiscreteProblem::new(&model, &grid, &flow).unwrap();
    let psi = DualCertificate::from_fn(&grid, |_, x| certificate_family(x[0]));
    assert!((psi.value(&problem.rho) + X0).abs() < 1e-12);

    let br = best_response(&model, &grid, &flow).unwrap();
    let report = verify_problem(&problem, &flow, &br.occupation, &psi, 1e-6).unwrap();
    assert!(report.verdict, "{report:?}");
    assert!(report.r_comp_terminal <= 1e-8);
    // slack vanishes on the support of the terminal law and nowhere left of x0
    let slack: Vec<f64> = (0..121).map(|x| problem.terminal[x] - psi.at(20, x)).collect();
    assert!(slack[grid.nearest(&[1.0])].abs() < 1e-12);
    assert!(slack[grid.nearest(&[0.0])] > 0.4);
    assert!(slack[grid.nearest(&[-0.5])] > 0.0);
}

#[test]
fn example2_certificate_family_violation_is_reported_and_small() {
    let mut last = f64::INFINITY;
    for (n_time, n_state) in [(10, 61), (20, 121), (40, 241)] {
        let (model, grid) = example2_on(n_time, n_state);
        let flow = transport_flow(&grid);
        let problem = DiscreteProblem::new(&model, &grid, &flow).unwrap();
        let psi = DualCertificate::from_fn(&grid, |_, x| certificate_family(x[0]));
        let (terminal, bellman) = dual_violations(&problem, &psi).unwrap();
        let h = grid.spacing(0);
        assert!(terminal <= 1e-12);
        assert!(bellman <= 10.0 * h, "violation {bellman} at h = {h}");
        assert!(bellman <= last + 1e-12);
        last = bellman;
    }
}

#[test]
fn example2_moving_mass_breaks_consistency() {
    let (model, grid) = example2();
    let flow = transport_flow(&grid);
    let br = best_response(&model, &grid, &flow).unwrap();
    let mut rows: Vec<Vec<f64>> = (0..=20).map(|k| flow.row(k).to_vec()).collect();
    let at = grid.nearest(&[X0]) + 7;
    rows[7][at] -= 0.1;
    rows[7][at + 1] += 0.1;
    let moved = MeanFieldFlow::new(rows).unwrap();
    let report = verify_ne(&model, &grid, &moved, &br.occupation, &br.certificate, 1e-6).unwrap();
    assert!(report.r_consistency >= 0.1 - 1e-12);
    assert!(!report.verdict);
}

#[test]
fn example2_value_and_flow_from_dynamic_programming() {
    let (model, grid) = example2();
    let flow = transport_flow(&grid);
    let problem = DiscreteProblem::new(&model, &grid, &flow).unwrap();
    let v = solve_hjb(&problem);
    let start = grid.nearest(&[X0]);
    assert!((v.at(0, start) + X0).abs() < 1e-12);
    // V[N] = g = -|x|, and the value is -|x| wherever moving outward stays on the grid
    for x in 0..121 {
        assert_eq!(v.at(20, x), -grid.point(x)[0].abs());
    }
    assert!((v.at(0, grid.nearest(&[-0.5])) + 0.5).abs() < 1e-12);
    // left of 0 the minimizer moves left, right of 0 it moves right
    assert_eq!(v.action(0, grid.nearest(&[-0.5])), 0);
    assert_eq!(v.action(0, grid.nearest(&[0.5])), 1);
    assert!(!v.is_unique(19, grid.nearest(&[0.0])));

    let m = solve_fp(&problem, &vec![1; 20 * 121]);
    assert_eq!(m.sup_distance(&flow), 0.0);
}

#[test]
fn deterministic_chain_simulates_exactly() {
    let (model, grid) = example2();
    let flow = transport_flow(&grid);
    let problem = DiscreteProblem::new(&model, &grid, &flow).unwrap();
    let policy = Policy::deterministic(20, 121, 2, &vec![1; 20 * 121]);
    let (empirical, distance) = simulate_consistency(&problem, &policy, &flow, 1000, 4).unwrap();
    assert_eq!(distance, 0.0);
    assert_eq!(empirical.sup_distance(&flow), 0.0);
}
