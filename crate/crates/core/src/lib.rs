//! Regime-switching SIRS epidemic model driven by a finite Markov chain,
//! simulated as a piecewise-deterministic Markov process.
//!
//! The numerical core is generic over the scalar type (`f32` or `f64`); the
//! aliases at the crate root fix it to one precision. Reports, JSON and CSV
//! output are always `f64`.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the matrix notation.
#![allow(clippy::needless_range_loop)]

pub mod analysis;
pub mod commands;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod lie;
pub mod linalg;
pub mod markov;
pub mod model;
pub mod ode;
pub mod rng;
pub mod scalar;
pub mod sim;

pub use analysis::{
    basic_reproduction_number, classify_threshold, invariant_region, persistence_lower_bound, regime_drift,
    Classification, ThresholdReport,
};
pub use dynamics::{deterministic_r0, find_equilibrium, flow, vector_field};
pub use error::{Error, Result};
pub use lie::{
    condition_h_rank, det_bracket_2regime, find_condition_h_witness, lie_bracket, sample_gamma, BracketWord,
};
pub use markov::{sample_path, stationary_distribution};
pub use model::validate_assumptions;
pub use scalar::Scalar;
pub use sim::{ensemble, simulate, PathSeed};

pub type ModelParams64 = model::ModelParams<f64>;
pub type ModelParams32 = model::ModelParams<f32>;
pub type EpidemicState64 = model::EpidemicState<f64>;
pub type EpidemicState32 = model::EpidemicState<f32>;
pub type Incidence64 = model::Incidence<f64>;
pub type Incidence32 = model::Incidence<f32>;
pub type CtmcGenerator64 = markov::CtmcGenerator<f64>;
pub type CtmcGenerator32 = markov::CtmcGenerator<f32>;
pub type StationaryDist64 = markov::StationaryDist<f64>;
pub type StationaryDist32 = markov::StationaryDist<f32>;
pub type RegimePath64 = markov::RegimePath<f64>;
pub type RegimePath32 = markov::RegimePath<f32>;
pub type OdeTolerances64 = ode::OdeTolerances<f64>;
pub type OdeTolerances32 = ode::OdeTolerances<f32>;
pub type Equilibrium64 = dynamics::Equilibrium<f64>;
pub type Equilibrium32 = dynamics::Equilibrium<f32>;
pub type GammaSample64 = lie::GammaSample<f64>;
pub type GammaSample32 = lie::GammaSample<f32>;
pub type SimSettings64 = sim::SimSettings<f64>;
pub type SimSettings32 = sim::SimSettings<f32>;
pub type Trajectory64 = sim::Trajectory<f64>;
pub type Trajectory32 = sim::Trajectory<f32>;
