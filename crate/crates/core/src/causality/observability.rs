use serde::Serialize;

use crate::error::{MetricsError, Result};
use crate::scalar::Field;

use super::matrix::{CausalMatrix, ExplainabilityVector};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservabilityScore<T> {
    /// `Σ γ_i E_i / N`.
    pub mean_explainability: T,
    /// `Σ_{i≠j} |C_ij - C_ji| / Σ_{i,j} C_ij` over ordered pairs; undefined
    /// for an all-zero matrix.
    pub asymmetry_penalty: Option<T>,
    /// Literal product, negative whenever the penalty exceeds 1.
    pub raw: T,
    /// `raw` clamped to `[0, mean_explainability]`.
    pub clamped: T,
    pub warning: Option<String>,
}

/// Weighted mean explainability discounted by causal asymmetry.
pub fn observability_score<T: Field>(
    ev: &ExplainabilityVector<T>,
    cm: &CausalMatrix<T>,
) -> Result<ObservabilityScore<T>> {
    let n = cm.n();
    if ev.len() != n {
        return Err(MetricsError::arg(format!(
            "explainability covers {} nodes, causal matrix {n}",
            ev.len()
        )));
    }
    if n == 0 {
        return Err(MetricsError::arg("observability needs at least one node"));
    }
    let weighted = ev
        .e_local()
        .iter()
        .zip(ev.weights())
        .fold(T::zero(), |acc, (&e, &g)| acc + g * e);
    let first = weighted / T::count(n);

    let mut total = T::zero();
    let mut asym = T::zero();
    for i in 0..n {
        for j in 0..n {
            total = total + cm.get(i, j);
            if i != j {
                asym = asym + cm.get(i, j).abs_diff(cm.get(j, i));
            }
        }
    }
    if total == T::zero() {
        return Ok(ObservabilityScore {
            mean_explainability: first,
            asymmetry_penalty: None,
            raw: first,
            clamped: first,
            warning: Some("causal matrix is all zero; asymmetry penalty undefined".into()),
        });
    }
    let penalty = asym / total;
    let raw = first * (T::one() - penalty);
    let clamped = raw.max_of(T::zero()).min_of(first);
    Ok(ObservabilityScore {
        mean_explainability: first,
        asymmetry_penalty: Some(penalty),
        raw,
        clamped,
        warning: None,
    })
}
