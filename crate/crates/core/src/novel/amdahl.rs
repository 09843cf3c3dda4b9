use serde::{Deserialize, Serialize};

use crate::error::{MetricsError, Result};
use crate::scalar::Field;

/// Overall speedup when a fraction `f_enhanced` of the work runs
/// `s_enhanced` times faster: `1 / ((1 - F) + F / S)`.
pub fn amdahl_speedup<T: Field>(f_enhanced: T, s_enhanced: T) -> Result<T> {
    if !(f_enhanced >= T::zero() && f_enhanced <= T::one()) {
        return Err(MetricsError::arg(format!("enhanced fraction {f_enhanced:?} outside [0,1]")));
    }
    if !(s_enhanced > T::zero()) {
        return Err(MetricsError::arg(format!("enhanced speedup {s_enhanced:?} must be positive")));
    }
    Ok(T::one() / ((T::one() - f_enhanced) + f_enhanced / s_enhanced))
}

/// A named what-if for the report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmdahlScenario {
    pub f_enhanced: f64,
    pub s_enhanced: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AmdahlOutcome {
    pub f_enhanced: f64,
    pub s_enhanced: f64,
    pub overall_speedup: f64,
    /// `1 / (1 - F)`, the limit as the enhanced part becomes free.
    pub ceiling: Option<f64>,
}

pub fn evaluate_scenario(s: &AmdahlScenario) -> Result<AmdahlOutcome> {
    Ok(AmdahlOutcome {
        f_enhanced: s.f_enhanced,
        s_enhanced: s.s_enhanced,
        overall_speedup: amdahl_speedup(s.f_enhanced, s.s_enhanced)?,
        ceiling: (s.f_enhanced < 1.0).then(|| 1.0 / (1.0 - s.f_enhanced)),
    })
}
