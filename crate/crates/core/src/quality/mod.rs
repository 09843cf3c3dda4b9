//! Perturbation experiments that score how well a metric behaves:
//! sensitivity, repeatability, consistency and independence.

pub mod fields;
pub mod registry;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{MetricsError, Result};
use crate::stats::{mean, std_dev};
use crate::telemetry::Trace;

pub use fields::TraceField;
pub use registry::{MetricDef, MetricHandle, MetricListing, MetricRegistry, Params, NEGATIVE_CONTROL};

/// `|m(perturbed) - m(trace)| / |delta|` with `delta` added to `field`.
/// `None` when the metric is undefined on either trace.
pub fn sensitivity(
    registry: &MetricRegistry,
    handle: &MetricHandle,
    trace: &Trace,
    field: TraceField,
    delta: f64,
) -> Result<Option<f64>> {
    if delta == 0.0 || !delta.is_finite() {
        return Err(MetricsError::arg("perturbation delta must be finite and non-zero"));
    }
    let (def, params) = registry.resolve(handle)?;
    let base = def.eval(trace, &params, 0);
    let moved = def.eval(&field.perturb(trace, delta), &params, 0);
    Ok(base.zip(moved).map(|(a, b)| (b - a).abs() / delta.abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Repeatability {
    pub repeats: usize,
    /// Runs that produced a defined value.
    pub defined_runs: usize,
    /// `std / |mean|` over defined runs; 0 when they all agree (including
    /// 0/0), undefined for a zero mean with spread.
    pub cv: Option<f64>,
}

/// Evaluates the metric `repeats` times on the same trace.
pub fn repeatability(
    registry: &MetricRegistry,
    handle: &MetricHandle,
    trace: &Trace,
    repeats: usize,
) -> Result<Repeatability> {
    if repeats < 2 {
        return Err(MetricsError::arg("repeatability needs at least 2 repeats"));
    }
    let (def, params) = registry.resolve(handle)?;
    let values: Vec<f64> = (0..repeats as u64).filter_map(|run| def.eval(trace, &params, run)).collect();
    let identical = values.windows(2).all(|w| w[0] == w[1]);
    let cv = match (mean(&values), std_dev(&values)) {
        _ if identical => Some(0.0),
        (None, _) | (_, None) => Some(0.0),
        (Some(m), Some(s)) => (m != 0.0).then(|| s / m.abs()),
    };
    Ok(Repeatability {
        repeats,
        defined_runs: values.len(),
        cv,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Consistency {
    pub consistent: bool,
    pub unit: String,
    pub fingerprint_a: String,
    pub fingerprint_b: String,
    pub annotation: Option<String>,
}

/// Same declared unit and definition fingerprint when the metric is taken
/// from `registry_a` on `trace_a` and from `registry_b` on `trace_b`.
pub fn consistency_across(
    registry_a: &MetricRegistry,
    registry_b: &MetricRegistry,
    handle: &MetricHandle,
    trace_a: &Trace,
    trace_b: &Trace,
) -> Result<Consistency> {
    let (a, pa) = registry_a.resolve(handle)?;
    let (b, pb) = registry_b.resolve(handle)?;
    let (fa, fb) = (a.fingerprint(), b.fingerprint());
    let consistent = a.unit == b.unit && fa == fb && pa == pb;
    let undefined: Vec<&str> = [("a", a.eval(trace_a, &pa, 0)), ("b", b.eval(trace_b, &pb, 0))]
        .into_iter()
        .filter(|(_, v)| v.is_none())
        .map(|(n, _)| n)
        .collect();
    let annotation = (!undefined.is_empty()).then(|| format!("undefined on trace {}", undefined.join(" and ")));
    Ok(Consistency {
        consistent,
        unit: a.unit.clone(),
        fingerprint_a: fa,
        fingerprint_b: fb,
        annotation,
    })
}

pub fn consistency(
    registry: &MetricRegistry,
    handle: &MetricHandle,
    trace_a: &Trace,
    trace_b: &Trace,
) -> Result<Consistency> {
    consistency_across(registry, registry, handle, trace_a, trace_b)
}

/// `|m(trace with field randomized) - m(trace)|`; undefined on exactly one
/// side counts as infinite.
fn measured_delta(def: &MetricDef, params: &Params, trace: &Trace, base: Option<f64>, field: TraceField, seed: u64) -> f64 {
    match (base, def.eval(&field.randomize(trace, seed), params, 0)) {
        (Some(a), Some(b)) => (a - b).abs(),
        (None, None) => 0.0,
        _ => f64::INFINITY,
    }
}

/// Confirms that randomizing a field outside the metric's declared inputs
/// leaves the metric unchanged; returns the measured delta (always 0).
pub fn independence(
    registry: &MetricRegistry,
    handle: &MetricHandle,
    trace: &Trace,
    field: TraceField,
    seed: u64,
) -> Result<f64> {
    let (def, params) = registry.resolve(handle)?;
    if def.reads(field) {
        return Err(MetricsError::Declaration(format!(
            "{} declares {} as an input",
            def.name, field
        )));
    }
    let delta = measured_delta(def, &params, trace, def.eval(trace, &params, 0), field, seed);
    if delta != 0.0 {
        return Err(MetricsError::Declaration(format!(
            "{} changed by {delta} when undeclared field {field} was randomized",
            def.name
        )));
    }
    Ok(delta)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualitySettings {
    pub delta: f64,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for QualitySettings {
    fn default() -> Self {
        QualitySettings {
            delta: 0.01,
            repeats: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityReport {
    pub metric: String,
    pub unit: String,
    pub version: u32,
    pub fingerprint: String,
    pub parameters: Params,
    pub value: Option<f64>,
    pub sensitivity: Option<f64>,
    pub sensitivity_field: &'static str,
    pub sensitivity_delta: f64,
    pub repeatability_cv: Option<f64>,
    pub repeats: usize,
    /// Against the same metric on the perturbed trace.
    pub consistency_ok: bool,
    pub consistency_note: Option<String>,
    /// Largest delta over every numeric field outside the declared inputs.
    pub independence_delta: f64,
    pub independence_seed: u64,
    pub independence_fields: Vec<&'static str>,
    /// Undeclared fields whose randomization moved the metric.
    pub undeclared_dependencies: Vec<&'static str>,
}

/// Runs every experiment on one metric. The sensitivity perturbation targets
/// the first declared input (CPU utilization for metrics without inputs);
/// integer fields are moved by at least one unit.
pub fn assess(
    registry: &MetricRegistry,
    handle: &MetricHandle,
    trace: &Trace,
    settings: &QualitySettings,
) -> Result<QualityReport> {
    let (def, params) = registry.resolve(handle)?;
    let field = def.inputs.first().copied().unwrap_or(TraceField::CpuUtil);
    let delta = if field.is_integer() {
        settings.delta.signum() * settings.delta.abs().round().max(1.0)
    } else {
        settings.delta
    };
    let perturbed = field.perturb(trace, delta);
    let value = def.eval(trace, &params, 0);
    let sens = sensitivity(registry, handle, trace, field, delta)?;
    let rep = repeatability(registry, handle, trace, settings.repeats)?;
    let cons = consistency(registry, handle, trace, &perturbed)?;
    let others: Vec<TraceField> = TraceField::ALL.into_iter().filter(|f| !def.reads(*f)).collect();
    let deltas: Vec<f64> = others
        .iter()
        .map(|&f| measured_delta(def, &params, trace, value, f, settings.seed))
        .collect();
    Ok(QualityReport {
        metric: def.name.clone(),
        unit: def.unit.clone(),
        version: def.version,
        fingerprint: def.fingerprint(),
        parameters: params,
        value,
        sensitivity: sens,
        sensitivity_field: field.name(),
        sensitivity_delta: delta,
        repeatability_cv: rep.cv,
        repeats: settings.repeats,
        consistency_ok: cons.consistent,
        consistency_note: cons.annotation,
        independence_delta: deltas.iter().copied().fold(0.0, f64::max),
        independence_seed: settings.seed,
        independence_fields: others.iter().map(|f| f.name()).collect(),
        undeclared_dependencies: others
            .iter()
            .zip(&deltas)
            .filter(|(_, &d)| d != 0.0)
            .map(|(f, _)| f.name())
            .collect(),
    })
}

/// `assess` for every registry metric at default parameters, in registry
/// order.
pub fn assess_all(registry: &MetricRegistry, trace: &Trace, settings: &QualitySettings) -> Vec<QualityReport> {
    registry
        .metrics()
        .par_iter()
        .map(|m| assess(registry, &MetricHandle::new(&m.name), trace, settings).expect("registry metric resolves"))
        .collect()
}
