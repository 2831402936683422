//! Numerical engine for sublinear (G-)expectation calculus: a monotone
//! finite-difference solver for the fully nonlinear backward PDE, a
//! volatility-controlled Monte-Carlo engine with common random numbers, a
//! Markovian backward-equation layer, the penalization scheme constructing
//! supermartingale decompositions, and the verification harness tying the
//! probabilistic and PDE viewpoints together.
//!
//! Everything numeric is generic over the scalar type through [`real::Real`]
//! (`f32` or `f64`); the concrete aliases below fix `f64`, the precision the
//! command-line tool and the stated tolerances use.

pub mod cli;
pub mod config;
pub mod core;
pub mod csvio;
pub mod decompose;
pub mod error;
pub mod gbsde;
pub mod pde;
pub mod real;
pub mod scenario;
pub mod verify;

pub use error::{GxError, Result};
pub use real::Real;

/// Concrete `f64` aliases for the main domain types.
pub type GCoefficients = core::GCoefficients<f64>;
pub type SpaceGrid = core::SpaceGrid<f64>;
pub type TimeGrid = core::TimeGrid<f64>;
pub type ScalarField = core::ScalarField<f64>;
pub type SpaceTimeField = core::SpaceTimeField<f64>;
pub type GeneratorSpec = core::GeneratorSpec<f64>;
pub type CoefficientSpec = core::CoefficientSpec<f64>;
pub type GBsdeSolution = gbsde::GBsdeSolution<f64>;
pub type DecompositionResult = decompose::DecompositionResult<f64>;
pub type PenalizationReport = decompose::PenalizationReport<f64>;
pub type ScenarioPath = scenario::ScenarioPath<f64>;
pub type VolatilityControl = scenario::VolatilityControl<f64>;
pub type ExpectationEstimate = scenario::ExpectationEstimate<f64>;
pub type SupermartingaleReport = verify::SupermartingaleReport<f64>;
