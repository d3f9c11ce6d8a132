//! The JSON run configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mfg_core::equilibrium::{CertificateSource, IterationOptions, SearchOptions};
use mfg_core::model::{builtin, builtin_catalog, Boundary, GridSpec, MfgModel, Params};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub best_response: BestResponseConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    #[serde(default)]
    pub params: Params,
}

/// Either an explicit action list or a tensor grid `lo..=hi` with `n` points per axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub n: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub n_time: usize,
    pub state_box: Vec<(f64, f64)>,
    pub n_state: Vec<usize>,
    #[serde(default)]
    pub actions: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub action_grid: Option<ActionGrid>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub damping: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub n_restarts: usize,
    pub seed: u64,
    pub dedupe_eps: f64,
    pub certify_tol: f64,
    pub certificate_source: CertificateSource,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SearchOptions::<f64>::default();
        Self {
            damping: s.iteration.damping,
            max_iter: s.iteration.max_iter,
            tol: s.iteration.tol,
            n_restarts: s.n_restarts,
            seed: s.seed,
            dedupe_eps: s.dedupe_eps,
            certify_tol: s.certify_tol,
            certificate_source: s.iteration.source,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Directory holding `flow.csv`, `occupation.csv`, `terminal.csv` and `psi.csv`.
    pub input_dir: Option<PathBuf>,
    pub tolerance: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { input_dir: None, tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BestResponseConfig {
    /// Flow CSV to respond to; the initial law held constant when absent.
    pub flow: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub n_paths: usize,
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { n_paths: 100_000, seed: 1 }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let config: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        config.validate().with_context(|| format!("validating {}", path.display()))?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !builtin_catalog().iter().any(|b| b.name == self.model.name) {
            bail!("model.name: unknown builtin `{}` (see `mfg list-models`)", self.model.name);
        }
        let s = &self.solver;
        if !(s.damping > 0.0 && s.damping <= 1.0) {
            bail!("solver.damping: {} is outside (0, 1]", s.damping);
        }
        if s.max_iter == 0 {
            bail!("solver.max_iter: must be at least 1");
        }
        if !(s.tol >= 0.0) {
            bail!("solver.tol: {} is negative", s.tol);
        }
        if s.n_restarts == 0 {
            bail!("solver.n_restarts: must be at least 1");
        }
        if !(s.dedupe_eps >= 0.0) {
            bail!("solver.dedupe_eps: {} is negative", s.dedupe_eps);
        }
        if !(s.certify_tol > 0.0) {
            bail!("solver.certify_tol: {} must be positive", s.certify_tol);
        }
        if !(self.verify.tolerance > 0.0) {
            bail!("verify.tolerance: {} must be positive", self.verify.tolerance);
        }
        if self.simulate.n_paths == 0 {
            bail!("simulate.n_paths: must be at least 1");
        }
        match (&self.grid.actions, &self.grid.action_grid) {
            (Some(_), Some(_)) => bail!("grid: give either `actions` or `action_grid`, not both"),
            (None, None) => bail!("grid: one of `actions` or `action_grid` is required"),
            _ => {}
        }
        self.build_grid()?;
        Ok(())
    }

    pub fn build_model(&self) -> Result<MfgModel> {
        builtin(&self.model.name, &self.model.params).with_context(|| "model.params".to_string())
    }

    pub fn build_grid(&self) -> Result<GridSpec> {
        let g = &self.grid;
        let actions = match (&g.actions, &g.action_grid) {
            (Some(a), _) => a.clone(),
            (None, Some(ag)) => expand_action_grid(ag)?,
            (None, None) => bail!("grid: no actions given"),
        };
        GridSpec::new(g.horizon, g.n_time, g.state_box.clone(), g.n_state.clone(), actions, Boundary::Reflecting).context("grid")
    }

    pub fn search_options(&self) -> SearchOptions {
        let s = &self.solver;
        SearchOptions {
            n_restarts: s.n_restarts,
            seed: s.seed,
            dedupe_eps: s.dedupe_eps,
            certify_tol: s.certify_tol,
            iteration: self.iteration_options(),
        }
    }

    pub fn iteration_options(&self) -> IterationOptions {
        let s = &self.solver;
        IterationOptions { damping: s.damping, max_iter: s.max_iter, tol: s.tol, source: s.certificate_source }
    }
}

fn expand_action_grid(ag: &ActionGrid) -> Result<Vec<Vec<f64>>> {
    if ag.lo.len() != ag.hi.len() || ag.lo.len() != ag.n.len() || ag.lo.is_empty() {
        bail!("grid.action_grid: lo, hi and n must have the same nonzero length");
    }
    let axes: Vec<Vec<f64>> = ag
        .lo
        .iter()
        .zip(&ag.hi)
        .zip(&ag.n)
        .map(|((&lo, &hi), &n)| match n {
            0 => Vec::new(),
            1 => vec![lo],
            _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
        })
        .collect();
    if axes.iter().any(Vec::is_empty) {
        bail!("grid.action_grid: every axis needs at least one point");
    }
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in &axes {
        out = out.iter().flat_map(|prefix| axis.iter().map(move |&v| [prefix.as_slice(), &[v]].concat())).collect();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> serde_json::Value {
        serde_json::json!({
            "model": {"name": "example2", "params": {"x0": 0.5}},
            "grid": {"horizon": 0.5, "n_time": 4, "state_box": [[-1.0, 2.0]], "n_state": [13], "actions": [[-1.0], [1.0]]},
            "output_dir": "out"
        })
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let c: RunConfig = serde_json::from_value(base()).unwrap();
        c.validate().unwrap();
        assert_eq!(c.solver.n_restarts, 5);
        assert_eq!(c.build_grid().unwrap().num_actions(), 2);
    }

    #[test]
    fn unknown_fields_and_models_are_rejected() {
        let mut v = base();
        v["grid"]["n_stat"] = serde_json::json!([3]);
        let err = serde_json::from_value::<RunConfig>(v).unwrap_err().to_string();
        assert!(err.contains("n_stat"), "{err}");
        let mut v = base();
        v["model"]["name"] = "nope".into();
        let c: RunConfig = serde_json::from_value(v).unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("model.name"));
    }

    #[test]
    fn action_grid_expands_as_tensor_product() {
        let ag = ActionGrid { lo: vec![-1.0, 0.0], hi: vec![1.0, 1.0], n: vec![3, 2] };
        let a = expand_action_grid(&ag).unwrap();
        assert_eq!(a.len(), 6);
        assert_eq!(a[0], vec![-1.0, 0.0]);
        assert_eq!(a[5], vec![1.0, 1.0]);
    }

    #[test]
    fn out_of_range_damping_names_the_field() {
        let mut v = base();
        v["solver"] = serde_json::json!({"damping": 1.5});
        let c: RunConfig = serde_json::from_value(v).unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("solver.damping"));
    }
}
