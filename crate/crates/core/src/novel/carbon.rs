use serde::{Deserialize, Serialize};

use crate::error::{MetricsError, Result};
use crate::scalar::Field;

pub const JOULES_PER_KWH: u32 = 3_600_000;

/// Grid intensity used when none is configured, gCO₂e/kWh.
pub const DEFAULT_INTENSITY_G_PER_KWH: f64 = 400.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarbonConfig<T> {
    pub intensity_g_per_kwh: T,
}

impl<T: Field> CarbonConfig<T> {
    pub fn new(intensity_g_per_kwh: T) -> Result<Self> {
        if !(intensity_g_per_kwh > T::zero()) {
            return Err(MetricsError::arg("carbon intensity must be positive"));
        }
        Ok(CarbonConfig { intensity_g_per_kwh })
    }
}

impl Default for CarbonConfig<f64> {
    fn default() -> Self {
        CarbonConfig {
            intensity_g_per_kwh: DEFAULT_INTENSITY_G_PER_KWH,
        }
    }
}

/// Operational emissions in grams CO₂e: `energy_kwh * intensity`.
pub fn carbon_emissions<T: Field>(energy_j: T, config: &CarbonConfig<T>) -> Result<T> {
    if !(energy_j >= T::zero()) {
        return Err(MetricsError::arg(format!("energy must be non-negative, got {energy_j:?}")));
    }
    if !(config.intensity_g_per_kwh > T::zero()) {
        return Err(MetricsError::arg("carbon intensity must be positive"));
    }
    Ok(energy_j / T::int(JOULES_PER_KWH) * config.intensity_g_per_kwh)
}
