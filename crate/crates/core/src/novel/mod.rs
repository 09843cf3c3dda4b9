//! Continuum-oriented metrics: carbon, Newton-cooling thermal model, Jain
//! fairness, adaptivity quotient and Amdahl speedup.

pub mod adaptivity;
pub mod amdahl;
pub mod carbon;
pub mod fairness;
pub mod thermal;

pub use adaptivity::{adaptivity_quotient, trace_adaptivity, Adaptation};
pub use amdahl::{amdahl_speedup, evaluate_scenario, AmdahlOutcome, AmdahlScenario};
pub use carbon::{carbon_emissions, CarbonConfig, DEFAULT_INTENSITY_G_PER_KWH, JOULES_PER_KWH};
pub use fairness::{
    fairness_by_resource, jain_fairness, FairnessInput, FairnessLabel, FairnessResource,
    ResourceFairness,
};
pub use thermal::{fit_cooling, predict_temperature, CoolingFit, ThermalParams};
