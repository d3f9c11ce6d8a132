#![allow(dead_code)]

use std::sync::Arc;

use mfg_core::model::{builtin, CouplingKind, GridSpec, InitialLaw, MfgModel, Params};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random bounded 1-D model with smooth coefficients, `σ² ≥ 0.5`, and a
/// mean-field coupling through the mean. Returns the model and its actions.
pub fn random_model(seed: u64) -> (MfgModel, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = [0.0; 10];
    for v in c.iter_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    let mut actions: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    actions.sort_by(f64::total_cmp);
    let mut model = builtin::<f64>("example1", &Params::new()).unwrap();
    model.name = format!("random-{seed}");
    model.drift = Arc::new(move |_, x, a, _, out| out[0] = a[0] + 0.3 * (c[0] * 3.0 * x[0]).sin());
    model.diffusion = Arc::new(move |_, x, _, _, out| out[0] = (0.5 + 0.2 * (1.0 + (c[1] * 2.0 * x[0]).sin())).sqrt());
    model.running_cost = Arc::new(move |t, x, a, mu| {
        let m = mu.mean()[0];
        (1.0 + c[2]) * (x[0] - m).powi(2) + 0.5 * (1.0 + c[3]) * a[0] * a[0] + c[4] * (x[0] * 2.0 + t).cos()
    });
    model.terminal_cost = Arc::new(move |x, mu| c[5] * x[0] * x[0] + c[6] * (3.0 * x[0]).sin() + c[7] * mu.mean()[0] * x[0]);
    model.initial = InitialLaw::Gaussian { mean: vec![0.5 * c[8]], std: 0.3 + 0.2 * c[9].abs() };
    model.coupling = CouplingKind::MeanMoment;
    (model, actions)
}

pub fn random_grid(actions: &[f64], horizon: f64, n_time: usize, n_state: usize) -> GridSpec {
    GridSpec::uniform_1d(horizon, n_time, -2.0, 2.0, n_state, actions).unwrap()
}
