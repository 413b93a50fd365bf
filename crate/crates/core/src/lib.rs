//! Numerical toolkit for the kinetic rock-paper-scissors wealth-exchange
//! equation in a measure setting.
//!
//! * [`measure`]: grid measures, weighted and flat norms, density ingestion.
//! * [`dynamics`]: explicit solver for the nonlinear equation and its
//!   time-rescaled linear counterpart.
//! * [`dual`]: the adjoint equation per wealth class (ODE and Picard routes).
//! * [`asymptotics`]: the large-time projection, decay envelope and
//!   wealth-loss accounting.
//! * [`harris`]: explicit subgeometric decay constants.
//! * [`montecarlo`]: agent-based simulation of the underlying game.
//! * [`io`]: CSV formats shared with the command-line front end.
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`); the
//! `*64` aliases below are what the CLI uses.

pub mod asymptotics;
pub mod dual;
pub mod dynamics;
pub mod error;
pub mod harris;
pub mod io;
pub mod measure;
pub mod montecarlo;
pub mod real;

pub use error::{Error, Result};
pub use real::Real;

pub type ModelParams64 = measure::ModelParams<f64>;
pub type GridSpec64 = measure::GridSpec<f64>;
pub type GridMeasure64 = measure::GridMeasure<f64>;
pub type GridMeasure32 = measure::GridMeasure<f32>;
pub type AtomicMeasure64 = measure::AtomicMeasure<f64>;
pub type Density64 = measure::Density<f64>;
pub type SolverConfig64 = dynamics::SolverConfig<f64>;
pub type Trajectory64 = dynamics::Trajectory<f64>;
pub type ClassFunction64 = dual::ClassFunction<f64>;
pub type RateFunction64 = dual::RateFunction<f64>;
pub type HarrisEnvelope64 = asymptotics::HarrisEnvelope<f64>;
pub type HarrisInputs64 = harris::HarrisInputs<f64>;
pub type HarrisConstants64 = harris::HarrisConstants<f64>;
pub type AgentPopulation64 = montecarlo::AgentPopulation<f64>;
