use serde::Serialize;

use crate::error::{MetricsError, Result};
use crate::scalar::Field;
use crate::telemetry::{AdaptationEvent, Polarity};

/// One adaptation event in scalar form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Adaptation<T> {
    pub p_base: T,
    pub p_post: T,
    pub t_adapt_s: T,
    pub polarity: Polarity,
}

impl From<&AdaptationEvent> for Adaptation<f64> {
    fn from(e: &AdaptationEvent) -> Self {
        Adaptation {
            p_base: e.p_base,
            p_post: e.p_post,
            t_adapt_s: e.t_adapt_s,
            polarity: e.polarity,
        }
    }
}

impl<T: Field> Adaptation<T> {
    /// Improvement ratio (oriented so that > 1 is better) per second of
    /// adaptation time.
    pub fn term(&self) -> Result<T> {
        let positive = |v: T, name: &str| {
            if v > T::zero() {
                Ok(v)
            } else {
                Err(MetricsError::arg(format!("{name} must be positive, got {v:?}")))
            }
        };
        let base = positive(self.p_base, "p_base")?;
        let post = positive(self.p_post, "p_post")?;
        let time = positive(self.t_adapt_s, "t_adapt_s")?;
        let ratio = match self.polarity {
            Polarity::HigherBetter => post / base,
            Polarity::LowerBetter => base / post,
        };
        Ok(ratio / time)
    }
}

/// Mean over events of `(P_post / P_base) / T_adapt`, in 1/s.
///
/// Terms are summed in sorted order so the result does not depend on the order
/// events were recorded in.
pub fn adaptivity_quotient<T: Field>(events: &[Adaptation<T>]) -> Result<T> {
    if events.is_empty() {
        return Err(MetricsError::arg("adaptivity quotient needs at least one event"));
    }
    let mut terms = events.iter().map(Adaptation::term).collect::<Result<Vec<T>>>()?;
    terms.sort_by(|a, b| a.partial_cmp(b).expect("terms are finite"));
    let sum = terms.into_iter().fold(T::zero(), |acc, t| acc + t);
    Ok(sum / T::count(events.len()))
}

/// Adaptivity quotient of a trace's adaptation events.
pub fn trace_adaptivity(events: &[AdaptationEvent]) -> Result<f64> {
    let scalar: Vec<Adaptation<f64>> = events.iter().map(Adaptation::from).collect();
    adaptivity_quotient(&scalar)
}
