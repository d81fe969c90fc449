//! Multiscale stochastic control with a fast Ornstein–Uhlenbeck factor
//! driven by a pure-jump stable Lévy process.
//!
//! The crate covers the whole pipeline: Lévy measures and their integral
//! functionals, simulation of the fast factor and of the controlled slow
//! state, the invariant law of the factor, the nonlocal generator and
//! approximate correctors, finite-difference solvers for the
//! epsilon-dependent HJB integro-differential equation and for its
//! averaged limit, and the two financial applications (pricing with a
//! mean historical volatility and Merton investment with a harmonic
//! effective volatility).

pub mod control;
pub mod ergodicity;
pub mod error;
pub mod finance;
pub mod generator;
pub mod harness;
pub mod hjb;
pub mod jump;
pub mod levy;
pub mod quadrature;
pub mod rng;
pub mod stats;

pub use control::{hamiltonian_eval, ControlProblemSpec, Payoff, VolatilityModel};
pub use ergodicity::{InvariantMeasure, MeasureProvenance};
pub use error::{Error, Result};
pub use jump::{FastProcessConfig, PathSample};
pub use levy::{AssumptionReport, LevyFamily, LevyMeasureModel, Moment};
pub use stats::Estimate;
