//! Performance metrics for cloud/edge/IoT telemetry traces.
//!
//! Numeric kernels are generic over [`Field`] (exact rationals included) or
//! [`Real`] (floating point); the aliases below fix the common choices.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod causality;
pub mod classic;
pub mod equilibrium;
pub mod error;
pub mod novel;
pub mod quality;
pub mod report;
pub mod scalar;
pub mod simulator;
pub mod stats;
pub mod telemetry;

pub use error::{MetricsError, Result};
pub use scalar::{Field, Real};

/// Exact rational scalar for reference computations.
pub type Exact = num_rational::Ratio<i128>;

pub type ThermalParamsF64 = novel::ThermalParams<f64>;
pub type ThermalParamsF32 = novel::ThermalParams<f32>;
pub type CoolingFitF64 = novel::CoolingFit<f64>;
pub type CarbonConfigF64 = novel::CarbonConfig<f64>;
pub type AdaptationF64 = novel::Adaptation<f64>;
pub type AdaptationExact = novel::Adaptation<Exact>;
pub type CausalMatrixF64 = causality::CausalMatrix<f64>;
pub type CausalMatrixExact = causality::CausalMatrix<Exact>;
pub type ExplainabilityF64 = causality::ExplainabilityVector<f64>;
pub type ObservabilityScoreF64 = causality::ObservabilityScore<f64>;
pub type EquilibriumProblemF64 = equilibrium::EquilibriumProblem<f64>;
pub type EquilibriumProblemExact = equilibrium::EquilibriumProblem<Exact>;
pub type EquilibriumSolutionF64 = equilibrium::EquilibriumSolution<f64>;
