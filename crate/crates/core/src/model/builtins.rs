use std::collections::BTreeMap;
use std::sync::Arc;

use super::{CouplingKind, InitialLaw, MfgModel};
use crate::error::ModelError;
use crate::scalar::Scalar;

/// Named numeric parameters of a builtin model.
pub type Params = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltinInfo {
    pub name: &'static str,
    pub description: &'static str,
    /// `(parameter, default, meaning)`.
    pub params: &'static [(&'static str, f64, &'static str)],
}

const EXAMPLE1_PARAMS: &[(&str, f64, &str)] = &[
    ("sigma", 0.0, "diffusion level, sigma * I"),
    ("x0", 0.0, "centre of the initial law"),
    ("init_std", 0.3, "standard deviation of the initial law (0 = point mass)"),
];
const EXAMPLE2_PARAMS: &[(&str, f64, &str)] = &[("x0", 0.5, "initial position (point mass)")];
const LQ_PARAMS: &[(&str, f64, &str)] = &[
    ("sigma", std::f64::consts::SQRT_2, "diffusion level, sigma * I"),
    ("control_weight", 1.0, "weight c in c*|a|^2/2"),
    ("crowd_weight", 1.0, "weight w in w*|x - mean(mu)|^2"),
    ("terminal_weight", 1.0, "weight q in q*|x|^2"),
    ("init_mean", 0.0, "mean of the Gaussian initial law (first axis)"),
    ("init_std", 0.5, "standard deviation of the initial law (0 = point mass)"),
];

pub fn builtin_catalog() -> Vec<BuiltinInfo> {
    vec![
        BuiltinInfo {
            name: "example1",
            description: "zero costs (f = g = 0), drift b = a; every policy is an equilibrium",
            params: EXAMPLE1_PARAMS,
        },
        BuiltinInfo {
            name: "example2",
            description: "deterministic transport b = a, f = 1 + (x0 + t - mean)^2, g = -|x|",
            params: EXAMPLE2_PARAMS,
        },
        BuiltinInfo {
            name: "lq_crowd",
            description: "b = a, sigma*I, f = c|a|^2/2 + w|x - mean|^2, g = q|x|^2",
            params: LQ_PARAMS,
        },
    ]
}

fn resolve(
    model: &str,
    spec: &'static [(&'static str, f64, &'static str)],
    given: &Params,
) -> Result<BTreeMap<&'static str, f64>, ModelError> {
    for key in given.keys() {
        if !spec.iter().any(|(k, _, _)| k == key) {
            return Err(ModelError::Parameter {
                model: model.into(),
                message: format!("unknown parameter `{key}`"),
            });
        }
    }
    let mut out = BTreeMap::new();
    for (k, default, _) in spec {
        let v = given.get(*k).copied().unwrap_or(*default);
        if !v.is_finite() {
            return Err(ModelError::Parameter { model: model.into(), message: format!("`{k}` is not finite") });
        }
        out.insert(*k, v);
    }
    Ok(out)
}

fn copy_action_into_drift<T: Scalar>(a: &[T], out: &mut [T]) {
    for (o, v) in out.iter_mut().zip(a.iter().chain(std::iter::repeat(&T::zero()))) {
        *o = *v;
    }
}

fn scaled_identity<T: Scalar>(level: T, out: &mut [T]) {
    let d = (out.len() as f64).sqrt() as usize;
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = if i == j { level } else { T::zero() };
        }
    }
}

/// Instantiates a builtin model by name.
pub fn builtin<T: Scalar>(name: &str, params: &Params) -> Result<MfgModel<T>, ModelError> {
    let spec = builtin_catalog()
        .into_iter()
        .find(|b| b.name == name)
        .ok_or_else(|| ModelError::UnknownModel(name.to_string()))?;
    let p = resolve(name, spec.params, params)?;
    let model = match name {
        "example1" => {
            let sigma = T::lit(p["sigma"]);
            let std = T::lit(p["init_std"]);
            if std < T::zero() || sigma < T::zero() {
                return Err(ModelError::Parameter { model: name.into(), message: "negative level".into() });
            }
            MfgModel {
                name: name.to_string(),
                drift: Arc::new(|_, _, a, _, out: &mut [T]| copy_action_into_drift(a, out)),
                diffusion: Arc::new(move |_, _, _, _, out: &mut [T]| scaled_identity(sigma, out)),
                running_cost: Arc::new(|_, _, _, _| T::zero()),
                terminal_cost: Arc::new(|_, _| T::zero()),
                initial: InitialLaw::Gaussian { mean: vec![T::lit(p["x0"])], std },
                coupling: CouplingKind::None,
            }
        }
        "example2" => {
            let x0 = T::lit(p["x0"]);
            MfgModel {
                name: name.to_string(),
                drift: Arc::new(|_, _, a, _, out: &mut [T]| copy_action_into_drift(a, out)),
                diffusion: Arc::new(|_, _, _, _, out: &mut [T]| out.fill(T::zero())),
                running_cost: Arc::new(move |t, _, _, mu| {
                    let gap = x0 + t - mu.mean()[0];
                    T::one() + gap * gap
                }),
                terminal_cost: Arc::new(|x, _| -x.iter().map(|v| *v * *v).sum::<T>().sqrt()),
                initial: InitialLaw::PointMass(vec![x0]),
                coupling: CouplingKind::MeanMoment,
            }
        }
        "lq_crowd" => {
            let sigma = T::lit(p["sigma"]);
            let c = T::lit(p["control_weight"]);
            let w = T::lit(p["crowd_weight"]);
            let q = T::lit(p["terminal_weight"]);
            let std = T::lit(p["init_std"]);
            if std < T::zero() {
                return Err(ModelError::Parameter { model: name.into(), message: "negative init_std".into() });
            }
            let half = T::lit(0.5);
            MfgModel {
                name: name.to_string(),
                drift: Arc::new(|_, _, a, _, out: &mut [T]| copy_action_into_drift(a, out)),
                diffusion: Arc::new(move |_, _, _, _, out: &mut [T]| scaled_identity(sigma, out)),
                running_cost: Arc::new(move |_, x, a, mu| {
                    let control: T = a.iter().map(|v| *v * *v).sum();
                    let crowd: T = x.iter().zip(mu.mean()).map(|(&xi, &m)| (xi - m) * (xi - m)).sum();
                    c * control * half + w * crowd
                }),
                terminal_cost: Arc::new(move |x, _| q * x.iter().map(|v| *v * *v).sum::<T>()),
                initial: InitialLaw::Gaussian { mean: vec![T::lit(p["init_mean"])], std },
                coupling: CouplingKind::MeanMoment,
            }
        }
        _ => unreachable!("catalog and constructor list agree"),
    };
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{evaluate, GridSpec, Measure};

    #[test]
    fn unknown_names_and_parameters_are_rejected() {
        assert!(matches!(builtin::<f64>("nope", &Params::new()), Err(ModelError::UnknownModel(_))));
        let mut p = Params::new();
        p.insert("bogus".into(), 1.0);
        assert!(matches!(builtin::<f64>("example2", &p), Err(ModelError::Parameter { .. })));
    }

    #[test]
    fn example2_coefficients() {
        let g = GridSpec::uniform_1d(0.5, 20, -1.0, 2.0, 121, &[-1.0, 1.0]).unwrap();
        let m = builtin::<f64>("example2", &Params::new()).unwrap();
        let mut p = vec![0.0; 121];
        p[44] = 0.5;
        p[84] = 0.5;
        let mu = Measure::new(&p, &g);
        let mean = mu.mean()[0];
        for &(t, x) in &[(0.0, 0.5), (0.3, -0.2), (0.45, 1.7)] {
            let ev = evaluate(&m, t, &[x], &[1.0], &mu).unwrap();
            assert_eq!(ev.drift, vec![1.0]);
            assert_eq!(ev.covariance, vec![0.0]);
            assert_eq!(ev.cost, 1.0 + (0.5 + t - mean).powi(2));
        }
        assert_eq!(m.terminal(&[-0.75], &mu).unwrap(), -0.75);
    }

    #[test]
    fn example1_costs_vanish() {
        let g = GridSpec::uniform_1d(1.0, 4, -1.0, 1.0, 11, &[-1.0, 0.0, 1.0]).unwrap();
        let m = builtin::<f64>("example1", &Params::new()).unwrap();
        let rho = m.initial_distribution(&g).unwrap();
        let mu = Measure::new(&rho, &g);
        for x in 0..11 {
            for a in g.actions() {
                let ev = evaluate(&m, 0.5, g.point(x), a, &mu).unwrap();
                assert_eq!(ev.cost, 0.0);
            }
            assert_eq!(m.terminal(g.point(x), &mu).unwrap(), 0.0);
        }
    }

    #[test]
    fn lq_crowd_at_origin() {
        let g = GridSpec::uniform_1d(1.0, 4, -1.0, 1.0, 11, &[-1.0, 0.0, 1.0]).unwrap();
        let m = builtin::<f64>("lq_crowd", &Params::new()).unwrap();
        let mut p = vec![0.0; 11];
        p[5] = 1.0;
        let mu = Measure::new(&p, &g);
        let ev = evaluate(&m, 0.0, &[0.0], &[0.0], &mu).unwrap();
        assert_eq!(ev.drift, vec![0.0]);
        assert!((ev.covariance[0] - 2.0).abs() < 1e-15);
        assert_eq!(ev.cost, 0.0);
    }

    #[test]
    fn lq_crowd_two_dimensional_covariance_is_scaled_identity() {
        let g = GridSpec::new(
            1.0,
            2,
            vec![(-1.0, 1.0), (-1.0, 1.0)],
            vec![5, 5],
            vec![vec![0.0, 0.0]],
            crate::model::Boundary::Reflecting,
        )
        .unwrap();
        let m = builtin::<f64>("lq_crowd", &Params::new()).unwrap();
        let p = vec![1.0 / 25.0; 25];
        let mu = Measure::new(&p, &g);
        let ev = evaluate(&m, 0.0, &[0.0, 0.0], &[0.0, 0.0], &mu).unwrap();
        assert_eq!(ev.covariance.len(), 4);
        assert!((ev.covariance[0] - 2.0).abs() < 1e-15 && ev.covariance[1] == 0.0);
    }

    #[test]
    fn evaluation_is_bit_deterministic() {
        let g = GridSpec::uniform_1d(1.0, 4, -1.0, 1.0, 11, &[-1.0, 0.5]).unwrap();
        for name in ["example1", "example2", "lq_crowd"] {
            let m = builtin::<f64>(name, &Params::new()).unwrap();
            let rho = m.initial_distribution(&g).unwrap();
            let mu = Measure::new(&rho, &g);
            let a = evaluate(&m, 0.3, &[0.2], &[0.5], &mu).unwrap();
            let b = evaluate(&m, 0.3, &[0.2], &[0.5], &mu).unwrap();
            assert_eq!(a, b);
        }
    }
}
