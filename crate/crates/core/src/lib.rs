//! Primal-dual solver and certifier for finite-horizon mean field games.
//!
//! A model is discretized into a controlled Markov chain on a grid. For a
//! frozen mean-field flow the representative player's problem becomes a
//! linear program over occupation measures, whose dual is the discrete
//! Bellman subsolution program. A flow is a Nash equilibrium of the
//! discrete game exactly when the best-response occupation measure
//! reproduces it and a feasible dual certificate closes the duality gap.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the common double-precision case.

pub mod certify;
pub mod discretize;
pub mod dual;
pub mod equilibrium;
pub mod error;
pub mod hjbfp;
pub mod io;
pub mod lp;
pub mod model;
pub mod occupation;
pub mod scalar;
pub mod wasserstein;

pub use error::{DiscretizeError, IoError, LpError, MeasureError, ModelError, SolveError};
pub use scalar::Scalar;

pub type Model = model::MfgModel<f64>;
pub type Grid = model::GridSpec<f64>;
pub type Flow = occupation::MeanFieldFlow<f64>;
pub type Occupation = occupation::OccupationMeasure<f64>;
pub type Certificate = dual::DualCertificate<f64>;
pub type Candidate = equilibrium::EquilibriumCandidate<f64>;
pub type Report = certify::ResidualReport<f64>;
pub type Program = lp::LinearProgram<f64>;

pub type Model32 = model::MfgModel<f32>;
pub type Grid32 = model::GridSpec<f32>;
pub type Flow32 = occupation::MeanFieldFlow<f32>;
pub type Program32 = lp::LinearProgram<f32>;
