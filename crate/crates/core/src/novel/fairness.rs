//! Jain's fairness index: `(Σx)² / (n · Σx²)`, bounded to `[1/n, 1]`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{MetricsError, Result};
use crate::scalar::Field;
use crate::stats::time_weighted_mean;
use crate::telemetry::Trace;

/// What the per-node values measure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FairnessLabel {
    CpuLoad,
    Energy,
    Bandwidth,
    Custom(String),
}

/// Validated fairness input: non-negative, non-empty, not all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FairnessInput<T> {
    values: Vec<T>,
    label: FairnessLabel,
}

impl<T: Field> FairnessInput<T> {
    pub fn new(values: Vec<T>, label: FairnessLabel) -> Result<Self> {
        if values.is_empty() {
            return Err(MetricsError::arg("fairness needs at least one value"));
        }
        if values.iter().any(|&v| !(v >= T::zero())) {
            return Err(MetricsError::arg("fairness values must be non-negative"));
        }
        if values.iter().all(|&v| v == T::zero()) {
            return Err(MetricsError::arg("fairness values are all zero"));
        }
        Ok(FairnessInput { values, label })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn label(&self) -> &FairnessLabel {
        &self.label
    }

    pub fn index(&self) -> T {
        jain_index(&self.values)
    }
}

fn jain_index<T: Field>(values: &[T]) -> T {
    let n = T::count(values.len());
    if values.iter().all(|&v| v == values[0]) {
        return T::one();
    }
    let (sum, sum_sq) = values
        .iter()
        .fold((T::zero(), T::zero()), |(s, q), &v| (s + v, q + v * v));
    let f = sum * sum / (n * sum_sq);
    // rounding may step outside the analytic bounds by an ulp
    f.max_of(T::one() / n).min_of(T::one())
}

/// Jain's index of `values`. Errors on empty, negative or all-zero input.
pub fn jain_fairness<T: Field>(values: &[T]) -> Result<T> {
    FairnessInput::new(values.to_vec(), FairnessLabel::Custom("values".into())).map(|i| i.index())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FairnessResource {
    Cpu,
    Energy,
    Bandwidth,
}

impl FairnessResource {
    pub const ALL: [FairnessResource; 3] = [
        FairnessResource::Cpu,
        FairnessResource::Energy,
        FairnessResource::Bandwidth,
    ];

    pub fn label(self) -> FairnessLabel {
        match self {
            FairnessResource::Cpu => FairnessLabel::CpuLoad,
            FairnessResource::Energy => FairnessLabel::Energy,
            FairnessResource::Bandwidth => FairnessLabel::Bandwidth,
        }
    }
}

impl std::str::FromStr for FairnessResource {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cpu" => Ok(FairnessResource::Cpu),
            "energy" => Ok(FairnessResource::Energy),
            "bandwidth" => Ok(FairnessResource::Bandwidth),
            other => Err(MetricsError::arg(format!(
                "unknown fairness resource `{other}` (cpu|energy|bandwidth)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResourceFairness {
    pub resource: FairnessResource,
    pub node_ids: Vec<String>,
    pub values: Vec<f64>,
    /// Undefined when no node carries data for the resource.
    pub index: Option<f64>,
}

/// Per-node resource values of a trace and their fairness index.
///
/// cpu: time-weighted mean `cpu_util`; energy: total `energy_j`; bandwidth:
/// total bytes on links incident to the node.
pub fn fairness_by_resource(trace: &Trace, resource: FairnessResource) -> ResourceFairness {
    let per_node: BTreeMap<&str, f64> = match resource {
        FairnessResource::Cpu => trace
            .node_series()
            .into_iter()
            .filter_map(|(id, s)| {
                time_weighted_mean(&s.iter().map(|x| (x.timestamp, x.cpu_util)).collect::<Vec<_>>())
                    .map(|m| (id, m))
            })
            .collect(),
        FairnessResource::Energy => trace
            .node_series()
            .into_iter()
            .map(|(id, s)| (id, s.iter().map(|x| x.energy_j).sum()))
            .collect(),
        FairnessResource::Bandwidth => {
            let mut acc: BTreeMap<&str, f64> = BTreeMap::new();
            for s in &trace.net_samples {
                *acc.entry(s.src.as_str()).or_default() += s.bytes_delivered as f64;
                *acc.entry(s.dst.as_str()).or_default() += s.bytes_delivered as f64;
            }
            acc
        }
    };
    let (node_ids, values): (Vec<String>, Vec<f64>) =
        per_node.into_iter().map(|(k, v)| (k.to_string(), v)).unzip();
    let index = FairnessInput::new(values.clone(), resource.label())
        .ok()
        .map(|i| i.index());
    ResourceFairness {
        resource,
        node_ids,
        values,
        index,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::fixtures::node;
    use crate::telemetry::DEFAULT_EPOCH;
    use num_rational::Ratio;
    use proptest::prelude::*;

    /// Direct evaluation with no shortcut or clamping.
    fn oracle(xs: &[f64]) -> f64 {
        let s: f64 = xs.iter().sum();
        let q: f64 = xs.iter().map(|x| x * x).sum();
        s * s / (xs.len() as f64 * q)
    }

    #[test]
    fn hand_cases() {
        assert_eq!(jain_fairness(&[1.0, 1.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(jain_fairness(&[4.0, 0.0, 0.0, 0.0]).unwrap(), 0.25);
        let f: f64 = jain_fairness(&[1.0, 2.0, 3.0]).unwrap();
        assert!((f - 36.0 / 42.0).abs() < 1e-12);
        assert!((f - 0.857142857).abs() < 1e-9);
        assert!((f - oracle(&[1.0, 2.0, 3.0])).abs() < 1e-15);
    }

    #[test]
    fn exact_rational_evaluation() {
        let xs: Vec<Ratio<i64>> = [1, 2, 3].iter().map(|&v| Ratio::from_integer(v)).collect();
        assert_eq!(jain_fairness(&xs).unwrap(), Ratio::new(6, 7));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(jain_fairness::<f64>(&[]).unwrap_err().is_argument_error());
        assert!(jain_fairness(&[0.0, 0.0]).unwrap_err().is_argument_error());
        assert!(jain_fairness(&[1.0, -1.0]).is_err());
    }

    proptest! {
        #[test]
        fn bounded_and_scale_invariant(xs in proptest::collection::vec(0.0f64..100.0, 1..64), c in 1e-3f64..1e6) {
            prop_assume!(xs.iter().any(|&x| x > 0.0));
            let n = xs.len() as f64;
            let f = jain_fairness(&xs).unwrap();
            prop_assert!(f >= 1.0 / n && f <= 1.0);
            let scaled: Vec<f64> = xs.iter().map(|x| x * c).collect();
            prop_assert!((f - jain_fairness(&scaled).unwrap()).abs() <= 1e-12);
            prop_assert!((f - oracle(&xs)).abs() <= 1e-12);
        }

        #[test]
        fn one_only_for_equal(xs in proptest::collection::vec(1u32..5, 2..8)) {
            let v: Vec<f64> = xs.iter().map(|&x| x as f64).collect();
            let f = jain_fairness(&v).unwrap();
            let all_equal = v.iter().all(|&x| x == v[0]);
            prop_assert_eq!(all_equal, (f - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn trace_resources() {
        let mut samples = Vec::new();
        for (id, cpu) in [("a", 0.5), ("b", 0.5)] {
            for t in 0..3 {
                let mut s = node(id, t as f64, cpu);
                s.energy_j = 10.0;
                samples.push(s);
            }
        }
        let trace = Trace::from_records(DEFAULT_EPOCH, samples, vec![], vec![], vec![]);
        assert_eq!(fairness_by_resource(&trace, FairnessResource::Cpu).index, Some(1.0));
        assert_eq!(fairness_by_resource(&trace, FairnessResource::Energy).index, Some(1.0));
        let bw = fairness_by_resource(&trace, FairnessResource::Bandwidth);
        assert_eq!(bw.index, None);

        let single = Trace::from_records(DEFAULT_EPOCH, vec![node("solo", 0.0, 0.3)], vec![], vec![], vec![]);
        assert_eq!(fairness_by_resource(&single, FairnessResource::Cpu).index, Some(1.0));
    }
}
