use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mfg_core::certify::{simulate_consistency, verify_ne, ResidualReport};
use mfg_core::discretize::DiscreteProblem;
use mfg_core::equilibrium::{best_response_problem, find_equilibria, fixed_point_iterate, EquilibriumCandidate};
use mfg_core::hjbfp::{compare, hjbfp_fixed_point, HjbFpOptions};
use mfg_core::io;
use mfg_core::model::builtin_catalog;
use mfg_core::occupation::{disintegrate, marginals, MeanFieldFlow};
use serde::Serialize;

use crate::config::RunConfig;

/// How a command ended, mapped to the process exit code by the caller.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Solver(anyhow::Error),
    Unverified(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Unverified(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Solver(_) => 3,
        }
    }
}

trait Classify<T> {
    fn solver(self) -> Result<T, Failure>;
    fn usage(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn solver(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Solver(e.into()))
    }
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).usage()
}

fn initial_flow(config: &RunConfig) -> Result<MeanFieldFlow, Failure> {
    let model = config.build_model().usage()?;
    let grid = config.build_grid().usage()?;
    let rho = model.initial_distribution(&grid).usage()?;
    MeanFieldFlow::constant(&rho, grid.n_time()).usage()
}

#[derive(Serialize)]
struct CandidateSummary {
    index: usize,
    directory: String,
    restart: Option<usize>,
    primal_value: f64,
    dual_value: f64,
    iterations: usize,
    converged: bool,
    last_change: f64,
    report: Option<ResidualReport>,
}

#[derive(Serialize)]
struct CandidatesFile {
    model: String,
    n_restarts: usize,
    seed: u64,
    candidates: Vec<CandidateSummary>,
}

fn write_candidate(dir: &Path, config: &RunConfig, cand: &EquilibriumCandidate) -> Result<()> {
    let grid = config.build_grid()?;
    std::fs::create_dir_all(dir)?;
    io::write_flow(&dir.join("flow.csv"), &grid, &cand.flow)?;
    io::write_occupation(&dir.join("occupation.csv"), &grid, &cand.occupation)?;
    io::write_terminal(&dir.join("terminal.csv"), &grid, &cand.occupation.nu)?;
    io::write_psi(&dir.join("psi.csv"), &grid, &cand.certificate)?;
    io::write_policy(&dir.join("policy.csv"), &grid, &cand.policy)?;
    Ok(())
}

pub fn solve(config: &RunConfig, output: &Path) -> Result<String, Failure> {
    let model = config.build_model().usage()?;
    let grid = config.build_grid().usage()?;
    ensure_dir(output)?;
    let candidates = find_equilibria(&model, &grid, &config.search_options()).solver()?;
    let mut summaries = Vec::new();
    for (i, cand) in candidates.iter().enumerate() {
        let name = format!("candidate_{i}");
        write_candidate(&output.join(&name), config, cand).solver()?;
        summaries.push(CandidateSummary {
            index: i,
            directory: name,
            restart: cand.restart,
            primal_value: cand.primal_value,
            dual_value: cand.dual_value,
            iterations: cand.iterations,
            converged: cand.converged,
            last_change: cand.last_change,
            report: cand.report.clone(),
        });
    }
    let file = CandidatesFile {
        model: config.model.name.clone(),
        n_restarts: config.solver.n_restarts,
        seed: config.solver.seed,
        candidates: summaries,
    };
    write_json(&output.join("candidates.json"), &file).solver()?;
    if candidates.is_empty() {
        return Err(Failure::Solver(anyhow::anyhow!("no restart produced a certified equilibrium")));
    }
    let values: Vec<String> = candidates.iter().map(|c| format!("{:.9}", c.primal_value)).collect();
    Ok(format!("{} certified equilibria, values [{}]", candidates.len(), values.join(", ")))
}

pub fn verify(config: &RunConfig, input: &Path, output: &Path) -> Result<String, Failure> {
    let model = config.build_model().usage()?;
    let grid = config.build_grid().usage()?;
    let flow = io::read_flow(&input.join("flow.csv"), &grid).usage()?;
    let occ = io::read_occupation(&input.join("occupation.csv"), &input.join("terminal.csv"), &grid).usage()?;
    let psi = io::read_psi(&input.join("psi.csv"), &grid).usage()?;
    let report = verify_ne(&model, &grid, &flow, &occ, &psi, config.verify.tolerance).solver()?;
    ensure_dir(output)?;
    write_json(&output.join("report.json"), &report).solver()?;
    let worst = report.components().into_iter().fold(("r_value", f64::NEG_INFINITY), |a, c| if c.1 > a.1 { c } else { a });
    let line = format!("verdict {}, largest residual {} = {:.3e}", report.verdict, worst.0, worst.1);
    if report.verdict {
        Ok(line)
    } else {
        Err(Failure::Unverified(line))
    }
}

#[derive(Serialize)]
struct BestResponseFile {
    flow: String,
    primal_value: f64,
    dual_value: f64,
    duality_gap: f64,
    lp_iterations: usize,
}

pub fn best_response(config: &RunConfig, flow_path: Option<&Path>, output: &Path) -> Result<String, Failure> {
    let model = config.build_model().usage()?;
    let grid = config.build_grid().usage()?;
    let flow_path = flow_path.map(Path::to_path_buf).or_else(|| config.best_response.flow.clone());
    let flow = match &flow_path {
        Some(p) => io::read_flow(p, &grid).usage()?,
        None => initial_flow(config)?,
    };
    let problem = DiscreteProblem::new(&model, &grid, &flow).solver()?;
    let br = best_response_problem(&problem, config.solver.certificate_source, None).solver()?;
    ensure_dir(output)?;
    let response = marginals(&br.occupation).solver()?;
    (|| -> Result<()> {
        io::write_flow(&output.join("response_flow.csv"), &grid, &response)?;
        io::write_occupation(&output.join("occupation.csv"), &grid, &br.occupation)?;
        io::write_terminal(&output.join("terminal.csv"), &grid, &br.occupation.nu)?;
        io::write_psi(&output.join("psi.csv"), &grid, &br.certificate)?;
        io::write_policy(&output.join("policy.csv"), &grid, &br.policy)?;
        write_json(
            &output.join("best_response.json"),
            &BestResponseFile {
                flow: flow_path.as_ref().map_or_else(|| "constant initial law".to_string(), |p| p.display().to_string()),
                primal_value: br.primal_value,
                dual_value: br.dual_value,
                duality_gap: (br.primal_value - br.dual_value).abs(),
                lp_iterations: br.lp_iterations,
            },
        )
    })()
    .solver()?;
    Ok(format!("primal {:.12}, dual {:.12}, {} pivots", br.primal_value, br.dual_value, br.lp_iterations))
}

#[derive(Serialize)]
struct CompareFile {
    max_w1: f64,
    value_gap: f64,
    per_node_w1: Vec<f64>,
    primal_dual_value: f64,
    primal_dual_iterations: usize,
    primal_dual_converged: bool,
    hjbfp_value: f64,
    hjbfp_iterations: usize,
    hjbfp_converged: bool,
    ties_on_support: usize,
    zero_mass_nodes: usize,
}

pub fn compare_hjbfp(config: &RunConfig, output: &Path) -> Result<String, Failure> {
    let model = config.build_model().usage()?;
    let grid = config.build_grid().usage()?;
    let flow0 = initial_flow(config)?;
    let cand = fixed_point_iterate(&model, &grid, &flow0, &config.iteration_options(), None).solver()?;
    let opts = HjbFpOptions { damping: config.solver.damping, max_iter: config.solver.max_iter, tol: config.solver.tol };
    let reference = hjbfp_fixed_point(&model, &grid, &opts, Some(flow0)).solver()?;
    let rho = model.initial_distribution(&grid).solver()?;
    let hj_value = reference.value.value(&rho);
    let cmp = compare(&grid, &cand.flow, cand.primal_value, &reference.flow, hj_value);
    ensure_dir(output)?;
    (|| -> Result<()> {
        io::write_flow(&output.join("flow_primal_dual.csv"), &grid, &cand.flow)?;
        io::write_flow(&output.join("flow_hjbfp.csv"), &grid, &reference.flow)?;
        io::write_psi(&output.join("psi.csv"), &grid, &cand.certificate)?;
        io::write_value(&output.join("value.csv"), &grid, &reference.value)?;
        io::write_feedback(&output.join("feedback.csv"), &grid, &reference.value)?;
        write_json(
            &output.join("compare.json"),
            &CompareFile {
                max_w1: cmp.max_w1,
                value_gap: cmp.value_gap,
                per_node_w1: cmp.per_node_w1.clone(),
                primal_dual_value: cand.primal_value,
                primal_dual_iterations: cand.iterations,
                primal_dual_converged: cand.converged,
                hjbfp_value: hj_value,
                hjbfp_iterations: reference.iterations,
                hjbfp_converged: reference.converged,
                ties_on_support: reference.ties_on_support,
                zero_mass_nodes: reference.zero_mass_nodes,
            },
        )
    })()
    .solver()?;
    Ok(format!("max W1 {:.3e}, value gap {:.3e}, {} ties on support", cmp.max_w1, cmp.value_gap, reference.ties_on_support))
}

#[derive(Serialize)]
struct SimulateFile {
    source: String,
    n_paths: usize,
    seed: u64,
    max_w1: f64,
}

pub fn simulate(config: &RunConfig, input: Option<&Path>, output: &Path) -> Result<String, Failure> {
    let model = config.build_model().usage()?;
    let grid = config.build_grid().usage()?;
    let (flow, policy, source) = match input {
        Some(dir) => {
            let flow = io::read_flow(&dir.join("flow.csv"), &grid).usage()?;
            let occ = io::read_occupation(&dir.join("occupation.csv"), &dir.join("terminal.csv"), &grid).usage()?;
            (flow, disintegrate(&occ), dir.display().to_string())
        }
        None => {
            let candidates = find_equilibria(&model, &grid, &config.search_options()).solver()?;
            let first = candidates
                .into_iter()
                .next()
                .ok_or_else(|| Failure::Solver(anyhow::anyhow!("no certified equilibrium to simulate")))?;
            (first.flow, first.policy, "lowest-value certified equilibrium".to_string())
        }
    };
    let problem = DiscreteProblem::new(&model, &grid, &flow).solver()?;
    let (empirical, distance) =
        simulate_consistency(&problem, &policy, &flow, config.simulate.n_paths, config.simulate.seed).solver()?;
    ensure_dir(output)?;
    (|| -> Result<()> {
        io::write_flow(&output.join("empirical_flow.csv"), &grid, &empirical)?;
        write_json(
            &output.join("simulate.json"),
            &SimulateFile { source, n_paths: config.simulate.n_paths, seed: config.simulate.seed, max_w1: distance },
        )
    })()
    .solver()?;
    Ok(format!("{} paths, max-node W1 to the flow {:.3e}", config.simulate.n_paths, distance))
}

pub fn list_models(json: bool) -> Result<String, Failure> {
    let catalog = builtin_catalog();
    if json {
        #[derive(Serialize)]
        struct Param<'a> {
            name: &'a str,
            default: f64,
            meaning: &'a str,
        }
        #[derive(Serialize)]
        struct Entry<'a> {
            name: &'a str,
            description: &'a str,
            params: Vec<Param<'a>>,
        }
        let entries: Vec<Entry> = catalog
            .iter()
            .map(|b| Entry {
                name: b.name,
                description: b.description,
                params: b.params.iter().map(|&(name, default, meaning)| Param { name, default, meaning }).collect(),
            })
            .collect();
        return serde_json::to_string_pretty(&entries).map_err(|e| Failure::Solver(e.into()));
    }
    let mut out = String::new();
    for b in catalog {
        out.push_str(&format!("{}\n    {}\n", b.name, b.description));
        for (name, default, meaning) in b.params {
            out.push_str(&format!("    {name:<16} {default:<10} {meaning}\n"));
        }
    }
    Ok(out.trim_end().to_string())
}

/// Default location of the artifacts `verify` and `simulate` read.
pub fn default_candidate_dir(config: &RunConfig) -> PathBuf {
    config.verify.input_dir.clone().unwrap_or_else(|| config.output_dir.join("candidate_0"))
}
