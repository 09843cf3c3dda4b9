//! Pairwise causal influence between nodes and the observability score
//! built on it.

pub mod granger;
mod lstsq;
pub mod matrix;
pub mod observability;

pub use granger::granger_influence;
pub use matrix::{
    build_causal_matrix, load_explainability, CausalEstimate, CausalMatrix, CausalSignal,
    ExplainabilityVector,
};
pub use observability::{observability_score, ObservabilityScore};
