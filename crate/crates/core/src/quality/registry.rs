use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::causality::{build_causal_matrix, observability_score, CausalSignal, ExplainabilityVector};
use crate::classic::{energy_summary, max_concurrency, network_kpis, response_stats, utilization, Resource};
use crate::error::{MetricsError, Result};
use crate::novel::{
    carbon_emissions, fairness_by_resource, fit_cooling, trace_adaptivity, CarbonConfig, FairnessResource,
    DEFAULT_INTENSITY_G_PER_KWH,
};
use crate::stats::mean;
use crate::telemetry::Trace;

use super::fields::TraceField;

pub type Params = BTreeMap<String, f64>;

/// Computes a scalar from a trace. `run` distinguishes repeated evaluations;
/// deterministic metrics ignore it.
pub type MetricFn = dyn Fn(&Trace, &Params, u64) -> Option<f64> + Send + Sync;

#[derive(Clone)]
pub struct MetricDef {
    pub name: String,
    pub unit: String,
    pub description: String,
    pub version: u32,
    pub inputs: Vec<TraceField>,
    pub defaults: Params,
    compute: Arc<MetricFn>,
}

impl std::fmt::Debug for MetricDef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MetricDef")
            .field("name", &self.name)
            .field("unit", &self.unit)
            .field("version", &self.version)
            .field("inputs", &self.inputs)
            .finish_non_exhaustive()
    }
}

impl MetricDef {
    pub fn new(
        name: &str,
        unit: &str,
        description: &str,
        inputs: &[TraceField],
        compute: impl Fn(&Trace, &Params, u64) -> Option<f64> + Send + Sync + 'static,
    ) -> Self {
        MetricDef {
            name: name.to_string(),
            unit: unit.to_string(),
            description: description.to_string(),
            version: 1,
            inputs: inputs.to_vec(),
            defaults: Params::new(),
            compute: Arc::new(compute),
        }
    }

    pub fn with_default(mut self, key: &str, value: f64) -> Self {
        self.defaults.insert(key.to_string(), value);
        self
    }

    /// Hex SHA-256 over name, unit, version, inputs and default parameters.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.name.as_bytes());
        h.update(b"\n");
        h.update(self.unit.as_bytes());
        h.update(format!("\nv{}\n", self.version).as_bytes());
        for f in &self.inputs {
            h.update(f.name().as_bytes());
            h.update(b",");
        }
        for (k, v) in &self.defaults {
            h.update(format!("\n{k}={v}").as_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn reads(&self, field: TraceField) -> bool {
        self.inputs.contains(&field)
    }

    pub(crate) fn eval(&self, trace: &Trace, params: &Params, run: u64) -> Option<f64> {
        (self.compute)(trace, params, run).filter(|v| v.is_finite())
    }
}

/// A registry metric together with parameter overrides.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricHandle {
    pub name: String,
    pub parameters: Params,
}

impl MetricHandle {
    pub fn new(name: &str) -> Self {
        MetricHandle {
            name: name.to_string(),
            parameters: Params::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.parameters.insert(key.to_string(), value);
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricListing {
    pub name: String,
    pub unit: String,
    pub version: u32,
    pub description: String,
    pub inputs: Vec<&'static str>,
    pub parameters: Params,
    pub fingerprint: String,
}

#[derive(Debug, Clone)]
pub struct MetricRegistry {
    metrics: Vec<MetricDef>,
}

pub const NEGATIVE_CONTROL: &str = "control.randomized";

impl MetricRegistry {
    pub fn empty() -> Self {
        MetricRegistry { metrics: Vec::new() }
    }

    /// Every scalar metric the engine reports.
    pub fn builtin() -> Self {
        let mut r = MetricRegistry::empty();
        for def in builtin_metrics() {
            r.register(def).expect("builtin names are unique");
        }
        r
    }

    /// Adds a metric that draws uniformly from [0.9, 1.1] with a generator
    /// seeded by the run index, for checking that repeatability detects
    /// nondeterminism.
    pub fn with_negative_control(mut self) -> Self {
        let def = MetricDef::new(
            NEGATIVE_CONTROL,
            "1",
            "Seeded random draw on [0.9, 1.1]; not a system metric",
            &[],
            |_, _, run| Some(ChaCha8Rng::seed_from_u64(run).random_range(0.9..=1.1)),
        );
        self.register(def).expect("control registered once");
        self
    }

    pub fn register(&mut self, def: MetricDef) -> Result<()> {
        if self.get(&def.name).is_some() {
            return Err(MetricsError::arg(format!("metric `{}` already registered", def.name)));
        }
        self.metrics.push(def);
        Ok(())
    }

    /// Copy of the registry with `name`'s version incremented.
    pub fn with_version_bump(&self, name: &str) -> Result<Self> {
        let mut out = self.clone();
        let def = out
            .metrics
            .iter_mut()
            .find(|m| m.name == name)
            .ok_or_else(|| unknown(name))?;
        def.version += 1;
        Ok(out)
    }

    pub fn get(&self, name: &str) -> Option<&MetricDef> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn lookup(&self, name: &str) -> Result<&MetricDef> {
        self.get(name).ok_or_else(|| unknown(name))
    }

    pub fn metrics(&self) -> &[MetricDef] {
        &self.metrics
    }

    pub fn names(&self) -> Vec<&str> {
        self.metrics.iter().map(|m| m.name.as_str()).collect()
    }

    pub fn listing(&self) -> Vec<MetricListing> {
        self.metrics
            .iter()
            .map(|m| MetricListing {
                name: m.name.clone(),
                unit: m.unit.clone(),
                version: m.version,
                description: m.description.clone(),
                inputs: m.inputs.iter().map(|f| f.name()).collect(),
                parameters: m.defaults.clone(),
                fingerprint: m.fingerprint(),
            })
            .collect()
    }

    /// Resolves a handle to its definition and effective parameters.
    pub fn resolve(&self, handle: &MetricHandle) -> Result<(&MetricDef, Params)> {
        let def = self.lookup(&handle.name)?;
        let mut params = def.defaults.clone();
        for (k, v) in &handle.parameters {
            if !params.contains_key(k) {
                return Err(MetricsError::arg(format!("metric `{}` has no parameter `{k}`", def.name)));
            }
            params.insert(k.clone(), *v);
        }
        Ok((def, params))
    }

    pub fn evaluate(&self, handle: &MetricHandle, trace: &Trace) -> Result<Option<f64>> {
        let (def, params) = self.resolve(handle)?;
        Ok(def.eval(trace, &params, 0))
    }
}

fn unknown(name: &str) -> MetricsError {
    MetricsError::arg(format!("unknown metric `{name}`"))
}

fn fleet(trace: &Trace, r: Resource) -> Option<f64> {
    utilization(&trace.node_samples, r).fleet
}

fn fairness(trace: &Trace, r: FairnessResource) -> Option<f64> {
    fairness_by_resource(trace, r).index
}

fn builtin_metrics() -> Vec<MetricDef> {
    use TraceField::*;
    vec![
        MetricDef::new("cpu_util.fleet_mean", "fraction", "Mean over nodes of time-weighted CPU utilization", &[CpuUtil], |t, _, _| fleet(t, Resource::Cpu)),
        MetricDef::new("mem_util.fleet_mean", "fraction", "Mean over nodes of time-weighted memory utilization", &[MemUtil], |t, _, _| fleet(t, Resource::Mem)),
        MetricDef::new("busy.fleet_fraction", "fraction", "Mean over nodes of busy seconds per observed second", &[BusyS], |t, _, _| fleet(t, Resource::Busy)),
        MetricDef::new("energy.total_j", "J", "Energy consumed by all nodes", &[EnergyJ], |t, _, _| Some(energy_summary(&t.node_samples).total_j)),
        MetricDef::new("energy.mean_power_w", "W", "Fleet energy over the fleet's observed span", &[EnergyJ], |t, _, _| energy_summary(&t.node_samples).mean_power_w),
        MetricDef::new("concurrency.max", "requests", "Largest number of requests in service at once", &[], |t, _, _| Some(max_concurrency(&t.requests) as f64)),
        MetricDef::new("network.mean_latency_ms", "ms", "Mean latency over all link samples", &[LatencyMs], |t, _, _| {
            mean(&t.net_samples.iter().map(|s| s.latency_ms).collect::<Vec<_>>())
        }),
        MetricDef::new("network.pdr", "fraction", "Packets delivered over packets sent, all links", &[PacketsSent, PacketsDelivered], |t, _, _| {
            let sent: u64 = t.net_samples.iter().map(|s| s.packets_sent).sum();
            let delivered: u64 = t.net_samples.iter().map(|s| s.packets_delivered).sum();
            (sent > 0).then(|| delivered as f64 / sent as f64)
        }),
        MetricDef::new("network.throughput_bps", "bit/s", "Summed per-link delivered throughput", &[BytesDelivered], |t, _, _| {
            let links = network_kpis(&t.net_samples).links;
            let thr: Vec<f64> = links.iter().filter_map(|l| l.throughput_bps).collect();
            (!thr.is_empty()).then(|| thr.iter().sum())
        }),
        MetricDef::new("network.bandwidth_util", "fraction", "Aggregate throughput over aggregate capacity", &[BytesDelivered, CapacityBps], |t, _, _| {
            network_kpis(&t.net_samples).net_util
        }),
        MetricDef::new("response.mean_s", "s", "Mean request response time", &[], |t, _, _| {
            response_stats(&t.requests).ok().map(|r| r.mean_response_s)
        }),
        MetricDef::new("response.error_rate", "fraction", "Share of requests not completed ok", &[], |t, _, _| {
            response_stats(&t.requests).ok().map(|r| r.error_rate)
        }),
        MetricDef::new("cost.total_units", "cost units", "Summed request cost", &[CostUnits], |t, _, _| {
            Some(t.requests.iter().map(|r| r.cost_units).sum())
        }),
        MetricDef::new("fairness.cpu", "1", "Jain index of per-node mean CPU utilization", &[CpuUtil], |t, _, _| fairness(t, FairnessResource::Cpu)),
        MetricDef::new("fairness.energy", "1", "Jain index of per-node energy", &[EnergyJ], |t, _, _| fairness(t, FairnessResource::Energy)),
        MetricDef::new("fairness.bandwidth", "1", "Jain index of per-node delivered bytes", &[BytesDelivered], |t, _, _| fairness(t, FairnessResource::Bandwidth)),
        MetricDef::new("carbon.total_g", "gCO2", "Fleet energy times grid carbon intensity", &[EnergyJ], |t, p, _| {
            let cfg = CarbonConfig::new(p["intensity_g_per_kwh"]).ok()?;
            carbon_emissions(energy_summary(&t.node_samples).total_j, &cfg).ok()
        })
        .with_default("intensity_g_per_kwh", DEFAULT_INTENSITY_G_PER_KWH),
        MetricDef::new("adaptivity.quotient", "1/s", "Mean relative improvement per adaptation second", &[PBase, PPost, TAdaptS], |t, _, _| {
            trace_adaptivity(&t.adaptations).ok()
        }),
        MetricDef::new("thermal.mean_fitted_k", "1/s", "Mean cooling constant fitted per node, ambient estimated", &[TemperatureC], |t, _, _| {
            let ks: Vec<f64> = t
                .node_series()
                .values()
                .filter_map(|s| {
                    let pts: Option<Vec<(f64, f64)>> = s.iter().map(|x| x.temperature_c.map(|c| (x.timestamp, c))).collect();
                    fit_cooling(&pts?, None).ok().map(|f| f.params.k)
                })
                .collect();
            mean(&ks)
        }),
        MetricDef::new("observability.score", "1", "Observability score with uniform explainability over the CPU causal matrix", &[CpuUtil], |t, p, _| {
            let lag = p["lag"];
            if !(lag >= 1.0 && lag.fract() == 0.0) {
                return None;
            }
            let est = build_causal_matrix(t, CausalSignal::CpuUtil, lag as usize).ok()?;
            let ev = ExplainabilityVector::uniform(est.matrix.n());
            observability_score(&ev, &est.matrix).ok().map(|s| s.clamped)
        })
        .with_default("lag", 2.0),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_names_and_fingerprints() {
        let r = MetricRegistry::builtin();
        assert!(r.get(NEGATIVE_CONTROL).is_none());
        let names = r.names();
        let mut sorted = names.clone();
        sorted.dedup();
        assert_eq!(names.len(), sorted.len());
        let bumped = r.with_version_bump("fairness.cpu").unwrap();
        assert_ne!(r.lookup("fairness.cpu").unwrap().fingerprint(), bumped.lookup("fairness.cpu").unwrap().fingerprint());
        assert_eq!(r.lookup("energy.total_j").unwrap().fingerprint(), bumped.lookup("energy.total_j").unwrap().fingerprint());
        assert_eq!(r.lookup("fairness.cpu").unwrap().fingerprint().len(), 64);
    }

    #[test]
    fn handles_resolve_parameters() {
        let r = MetricRegistry::builtin();
        let (_, p) = r.resolve(&MetricHandle::new("carbon.total_g").with("intensity_g_per_kwh", 100.0)).unwrap();
        assert_eq!(p["intensity_g_per_kwh"], 100.0);
        assert!(r.resolve(&MetricHandle::new("carbon.total_g").with("bogus", 1.0)).unwrap_err().is_argument_error());
        assert!(r.resolve(&MetricHandle::new("nope")).unwrap_err().is_argument_error());
        let mut r2 = MetricRegistry::builtin();
        assert!(r2.register(r.lookup("fairness.cpu").unwrap().clone()).is_err());
    }

    #[test]
    fn negative_control_varies_by_run() {
        let r = MetricRegistry::builtin().with_negative_control();
        let def = r.lookup(NEGATIVE_CONTROL).unwrap();
        let t = Trace::default();
        let a = def.eval(&t, &Params::new(), 0).unwrap();
        let b = def.eval(&t, &Params::new(), 1).unwrap();
        assert_ne!(a, b);
        assert!((0.9..=1.1).contains(&a));
        assert_eq!(a, def.eval(&t, &Params::new(), 0).unwrap());
    }
}
