//! Computing-, network- and application-level metrics over a trace.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{MetricsError, Result};
use crate::scalar::Field;
use crate::stats::{mean, median, nearest_rank, time_weighted_mean};
use crate::telemetry::{NetSample, NodeSample, RequestRecord, Trace};

/// Ratio of baseline to parallel execution time.
pub fn speedup<T: Field>(t_baseline: T, t_parallel: T) -> Result<T> {
    if !(t_baseline > T::zero()) || !(t_parallel > T::zero()) {
        return Err(MetricsError::arg(format!(
            "speedup needs positive durations, got {t_baseline:?} and {t_parallel:?}"
        )));
    }
    Ok(t_baseline / t_parallel)
}

/// Parallel efficiency `speedup(n) / n` for each node count.
pub fn scaling_efficiency<T: Field>(speedups: &BTreeMap<u32, T>) -> Result<BTreeMap<u32, T>> {
    speedups
        .iter()
        .map(|(&n, &s)| {
            if n == 0 {
                return Err(MetricsError::arg("node count must be at least 1"));
            }
            if !(s > T::zero()) {
                return Err(MetricsError::arg(format!("speedup for {n} nodes must be positive")));
            }
            Ok((n, s / T::int(n)))
        })
        .collect()
}

/// Symmetric tracking score `1 - mean|p - d| / mean max(p, d)` of provisioned
/// against demanded capacity. Both series must share timestamps.
pub fn elasticity<T: Field>(provisioned: &[(T, T)], demanded: &[(T, T)]) -> Result<T> {
    if provisioned.len() != demanded.len() {
        return Err(MetricsError::arg(format!(
            "elasticity series differ in length ({} vs {})",
            provisioned.len(),
            demanded.len()
        )));
    }
    if provisioned.is_empty() {
        return Err(MetricsError::arg("elasticity needs at least one point"));
    }
    let mut mismatch = T::zero();
    let mut envelope = T::zero();
    for (&(tp, p), &(td, d)) in provisioned.iter().zip(demanded) {
        if tp != td {
            return Err(MetricsError::arg(format!(
                "elasticity series misaligned at {tp:?} vs {td:?}"
            )));
        }
        if p < T::zero() || d < T::zero() {
            return Err(MetricsError::arg("elasticity values must be non-negative"));
        }
        mismatch = mismatch + p.abs_diff(d);
        envelope = envelope + p.max_of(d);
    }
    if envelope == T::zero() {
        return Err(MetricsError::arg(
            "provisioned and demanded are both zero everywhere",
        ));
    }
    Ok(T::one() - mismatch / envelope)
}

/// Fraction of `span` covered by the union of `up` intervals.
pub fn availability<T: Field>(up: &[(T, T)], span: (T, T)) -> Result<T> {
    let (t0, t1) = span;
    if !(t1 > t0) {
        return Err(MetricsError::arg("availability span must have positive length"));
    }
    let mut intervals = up.to_vec();
    for &(a, b) in &intervals {
        if b < a {
            return Err(MetricsError::arg(format!("interval ({a:?}, {b:?}) ends before it starts")));
        }
        if a < t0 || b > t1 {
            return Err(MetricsError::arg(format!("interval ({a:?}, {b:?}) leaves the span")));
        }
    }
    intervals.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("ordered scalars"));
    let mut covered = T::zero();
    let mut current: Option<(T, T)> = None;
    for (a, b) in intervals {
        current = match current {
            Some((ca, cb)) if a <= cb => Some((ca, cb.max_of(b))),
            Some((ca, cb)) => {
                covered = covered + (cb - ca);
                Some((a, b))
            }
            None => Some((a, b)),
        };
    }
    if let Some((ca, cb)) = current {
        covered = covered + (cb - ca);
    }
    Ok(covered / (t1 - t0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Resource {
    Cpu,
    Mem,
    Busy,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeValue {
    pub node_id: String,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Utilization {
    pub resource: Resource,
    pub per_node: Vec<NodeValue>,
    /// Mean over nodes with a defined value.
    pub fleet: Option<f64>,
}

fn group_nodes(samples: &[NodeSample]) -> BTreeMap<&str, Vec<&NodeSample>> {
    let mut out: BTreeMap<&str, Vec<&NodeSample>> = BTreeMap::new();
    for s in samples {
        out.entry(s.node_id.as_str()).or_default().push(s);
    }
    for v in out.values_mut() {
        v.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    }
    out
}

fn fleet_mean(per_node: &[NodeValue]) -> Option<f64> {
    mean(&per_node.iter().filter_map(|n| n.value).collect::<Vec<_>>())
}

/// Per-node time-weighted utilization. `Busy` is `sum(busy_s) / span`.
pub fn utilization(samples: &[NodeSample], resource: Resource) -> Utilization {
    let per_node: Vec<NodeValue> = group_nodes(samples)
        .into_iter()
        .map(|(id, series)| {
            let value = match resource {
                Resource::Cpu => time_weighted_mean(
                    &series.iter().map(|s| (s.timestamp, s.cpu_util)).collect::<Vec<_>>(),
                ),
                Resource::Mem => time_weighted_mean(
                    &series.iter().map(|s| (s.timestamp, s.mem_util)).collect::<Vec<_>>(),
                ),
                Resource::Busy => {
                    let span = series[series.len() - 1].timestamp - series[0].timestamp;
                    let busy: f64 = series.iter().map(|s| s.busy_s).sum();
                    (span > 0.0).then(|| busy / span)
                }
            };
            NodeValue {
                node_id: id.to_string(),
                value,
            }
        })
        .collect();
    Utilization {
        resource,
        fleet: fleet_mean(&per_node),
        per_node,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeEnergy {
    pub node_id: String,
    pub total_j: f64,
    pub mean_power_w: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergySummary {
    pub total_j: f64,
    /// Fleet energy over the fleet's observed span.
    pub mean_power_w: Option<f64>,
    pub per_node: Vec<NodeEnergy>,
}

fn power(total_j: f64, span_s: f64) -> Option<f64> {
    if total_j == 0.0 {
        Some(0.0)
    } else if span_s > 0.0 {
        Some(total_j / span_s)
    } else {
        None
    }
}

pub fn energy_summary(samples: &[NodeSample]) -> EnergySummary {
    let per_node: Vec<NodeEnergy> = group_nodes(samples)
        .into_iter()
        .map(|(id, series)| {
            let total_j: f64 = series.iter().map(|s| s.energy_j).sum();
            let span = series[series.len() - 1].timestamp - series[0].timestamp;
            NodeEnergy {
                node_id: id.to_string(),
                total_j,
                mean_power_w: power(total_j, span),
            }
        })
        .collect();
    let total_j: f64 = samples.iter().map(|s| s.energy_j).sum();
    let span = samples
        .iter()
        .map(|s| s.timestamp)
        .fold(None, |acc: Option<(f64, f64)>, t| {
            Some(acc.map_or((t, t), |(lo, hi)| (lo.min(t), hi.max(t))))
        })
        .map_or(0.0, |(lo, hi)| hi - lo);
    EnergySummary {
        total_j,
        mean_power_w: power(total_j, span),
        per_node,
    }
}

/// Largest number of requests whose `[start_ts, finish_ts)` intervals overlap.
pub fn max_concurrency(requests: &[RequestRecord]) -> usize {
    let mut events: Vec<(f64, i32)> = Vec::with_capacity(requests.len() * 2);
    for r in requests.iter().filter(|r| r.finish_ts > r.start_ts) {
        events.push((r.start_ts, 1));
        events.push((r.finish_ts, -1));
    }
    // ends sort before starts at the same instant: intervals are half-open
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut current = 0i64;
    let mut best = 0i64;
    for (_, delta) in events {
        current += i64::from(delta);
        best = best.max(current);
    }
    best as usize
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkKpis {
    pub src: String,
    pub dst: String,
    pub samples: usize,
    pub mean_latency_ms: f64,
    pub p95_latency_ms: f64,
    pub throughput_bps: Option<f64>,
    pub mean_capacity_bps: f64,
    /// Throughput over mean capacity, clamped to 1.
    pub bandwidth_util: Option<f64>,
    pub over_capacity: bool,
    pub pdr: Option<f64>,
    pub plr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkKpis {
    pub links: Vec<LinkKpis>,
    /// Aggregate throughput over aggregate capacity across links.
    pub net_util: Option<f64>,
    pub warnings: Vec<String>,
}

fn link_kpis(src: &str, dst: &str, series: &[&NetSample]) -> LinkKpis {
    let mut latencies: Vec<f64> = series.iter().map(|s| s.latency_ms).collect();
    latencies.sort_by(f64::total_cmp);
    let span = series[series.len() - 1].timestamp - series[0].timestamp;
    let bytes: f64 = series.iter().map(|s| s.bytes_delivered as f64).sum();
    let throughput_bps = (span > 0.0).then(|| 8.0 * bytes / span);
    let mean_capacity_bps = series.iter().map(|s| s.capacity_bps).sum::<f64>() / series.len() as f64;
    let raw_util = throughput_bps.map(|t| t / mean_capacity_bps);
    let sent: u64 = series.iter().map(|s| s.packets_sent).sum();
    let delivered: u64 = series.iter().map(|s| s.packets_delivered).sum();
    let pdr = (sent > 0).then(|| delivered as f64 / sent as f64);
    LinkKpis {
        src: src.to_string(),
        dst: dst.to_string(),
        samples: series.len(),
        mean_latency_ms: mean(&latencies).expect("link has samples"),
        p95_latency_ms: nearest_rank(&latencies, 95.0).expect("link has samples"),
        throughput_bps,
        mean_capacity_bps,
        bandwidth_util: raw_util.map(|u| u.min(1.0)),
        over_capacity: raw_util.is_some_and(|u| u > 1.0),
        pdr,
        plr: pdr.map(|p| 1.0 - p),
    }
}

pub fn network_kpis(samples: &[NetSample]) -> NetworkKpis {
    let mut grouped: BTreeMap<(&str, &str), Vec<&NetSample>> = BTreeMap::new();
    for s in samples {
        grouped.entry((s.src.as_str(), s.dst.as_str())).or_default().push(s);
    }
    let mut warnings = Vec::new();
    let links: Vec<LinkKpis> = grouped
        .into_iter()
        .map(|((src, dst), mut series)| {
            series.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
            let k = link_kpis(src, dst, &series);
            if k.over_capacity {
                warnings.push(format!(
                    "link {src}->{dst} throughput exceeds mean capacity; bandwidth_util clamped to 1"
                ));
            }
            if k.pdr.is_none() {
                warnings.push(format!("link {src}->{dst} sent no packets; pdr undefined"));
            }
            k
        })
        .collect();
    let (thr, cap) = links
        .iter()
        .filter_map(|l| l.throughput_bps.map(|t| (t, l.mean_capacity_bps)))
        .fold((0.0, 0.0), |(a, b), (t, c)| (a + t, b + c));
    NetworkKpis {
        net_util: (cap > 0.0).then(|| (thr / cap).min(1.0)),
        links,
        warnings,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResponseStats {
    pub requests: usize,
    pub mean_response_s: f64,
    pub p50_response_s: f64,
    pub p95_response_s: f64,
    pub p99_response_s: f64,
    pub mean_service_s: f64,
    pub error_rate: f64,
    /// Share of ok requests marked correct; absent when no request carries
    /// a `correct` flag.
    pub accuracy: Option<f64>,
    pub total_cost: f64,
}

pub fn response_stats(requests: &[RequestRecord]) -> Result<ResponseStats> {
    if requests.is_empty() {
        return Err(MetricsError::arg("response_stats needs at least one request"));
    }
    let mut response: Vec<f64> = requests.iter().map(|r| r.finish_ts - r.arrival_ts).collect();
    response.sort_by(f64::total_cmp);
    let service: Vec<f64> = requests.iter().map(|r| r.finish_ts - r.start_ts).collect();
    let n = requests.len() as f64;
    let failed = requests.iter().filter(|r| !r.ok).count();
    let accuracy = if requests.iter().any(|r| r.correct.is_some()) {
        let ok: Vec<&RequestRecord> = requests.iter().filter(|r| r.ok).collect();
        let correct = ok.iter().filter(|r| r.correct == Some(true)).count();
        (!ok.is_empty()).then(|| correct as f64 / ok.len() as f64)
    } else {
        None
    };
    Ok(ResponseStats {
        requests: requests.len(),
        mean_response_s: mean(&response).expect("non-empty"),
        p50_response_s: nearest_rank(&response, 50.0).expect("non-empty"),
        p95_response_s: nearest_rank(&response, 95.0).expect("non-empty"),
        p99_response_s: nearest_rank(&response, 99.0).expect("non-empty"),
        mean_service_s: mean(&service).expect("non-empty"),
        error_rate: failed as f64 / n,
        accuracy,
        total_cost: requests.iter().map(|r| r.cost_units).sum(),
    })
}

/// Node availability derived from sampling gaps: a gap longer than 1.5x the
/// node's median gap counts as downtime. Span is the fleet's sampling span.
pub fn sampling_availability(trace: &Trace) -> (Vec<NodeValue>, Option<f64>) {
    let Some((t0, t1)) = trace.node_span() else {
        return (Vec::new(), None);
    };
    let per_node: Vec<NodeValue> = trace
        .node_series()
        .into_iter()
        .map(|(id, series)| {
            let gaps: Vec<f64> = series.windows(2).map(|w| w[1].timestamp - w[0].timestamp).collect();
            let value = median(&gaps).and_then(|m| {
                let up: Vec<(f64, f64)> = series
                    .windows(2)
                    .filter(|w| w[1].timestamp - w[0].timestamp <= 1.5 * m)
                    .map(|w| (w[0].timestamp, w[1].timestamp))
                    .collect();
                availability(&up, (t0, t1)).ok()
            });
            NodeValue {
                node_id: id.to_string(),
                value,
            }
        })
        .collect();
    let fleet = fleet_mean(&per_node);
    (per_node, fleet)
}

/// Inputs the trace cannot supply: measured run times and provisioning series.
#[derive(Debug, Clone, Default, PartialEq, serde::Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassicInputs {
    /// `(baseline_s, parallel_s)` for a single speedup measurement.
    pub speedup: Option<(f64, f64)>,
    /// Measured speedup per node count.
    pub scaling: BTreeMap<u32, f64>,
    pub provisioned: Vec<(f64, f64)>,
    pub demanded: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtilizationSummary {
    pub cpu: Utilization,
    pub mem: Utilization,
    pub busy: Utilization,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AvailabilitySummary {
    pub per_node: Vec<NodeValue>,
    pub fleet: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassicReport {
    pub utilization: UtilizationSummary,
    pub speedup: Option<f64>,
    pub scaling_efficiency: BTreeMap<u32, f64>,
    pub elasticity: Option<f64>,
    pub availability: AvailabilitySummary,
    pub energy: EnergySummary,
    pub max_concurrency: usize,
    pub network: NetworkKpis,
    pub response: Option<ResponseStats>,
    /// Metrics whose formula is this tool's own operationalization.
    pub derived_definitions: Vec<&'static str>,
    pub warnings: Vec<String>,
}

pub fn classic_report(trace: &Trace, inputs: &ClassicInputs) -> ClassicReport {
    let mut warnings = Vec::new();
    let speedup = inputs.speedup.and_then(|(b, p)| {
        speedup(b, p)
            .map_err(|e| warnings.push(format!("speedup: {e}")))
            .ok()
    });
    let scaling_efficiency = scaling_efficiency(&inputs.scaling).unwrap_or_else(|e| {
        warnings.push(format!("scaling_efficiency: {e}"));
        BTreeMap::new()
    });
    let elasticity = if inputs.provisioned.is_empty() && inputs.demanded.is_empty() {
        None
    } else {
        elasticity(&inputs.provisioned, &inputs.demanded)
            .map_err(|e| warnings.push(format!("elasticity: {e}")))
            .ok()
    };
    let (per_node, fleet) = sampling_availability(trace);
    let response = if trace.requests.is_empty() {
        None
    } else {
        response_stats(&trace.requests).ok()
    };
    let network = network_kpis(&trace.net_samples);
    ClassicReport {
        utilization: UtilizationSummary {
            cpu: utilization(&trace.node_samples, Resource::Cpu),
            mem: utilization(&trace.node_samples, Resource::Mem),
            busy: utilization(&trace.node_samples, Resource::Busy),
        },
        speedup,
        scaling_efficiency,
        elasticity,
        availability: AvailabilitySummary { per_node, fleet },
        energy: energy_summary(&trace.node_samples),
        max_concurrency: max_concurrency(&trace.requests),
        network,
        response,
        derived_definitions: vec!["scaling_efficiency", "elasticity", "availability"],
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::fixtures::{net, node, request};
    use num_rational::Ratio;
    use proptest::prelude::*;

    #[test]
    fn speedup_cases() {
        assert_eq!(speedup(100.0, 100.0).unwrap(), 1.0);
        assert_eq!(speedup(100.0, 25.0).unwrap(), 4.0);
        assert!(speedup(100.0, 0.0).unwrap_err().is_argument_error());
        assert!(speedup(-1.0, 2.0).is_err());
        let exact = speedup(Ratio::<i64>::new(10, 1), Ratio::new(3, 1)).unwrap();
        assert_eq!(exact, Ratio::new(10, 3));
    }

    #[test]
    fn scaling_cases() {
        let eff = |n: u32, s: f64| scaling_efficiency(&BTreeMap::from([(n, s)])).unwrap()[&n];
        assert_eq!(eff(4, 4.0), 1.0);
        assert_eq!(eff(4, 2.0), 0.5);
        assert_eq!(eff(1, 1.0), 1.0);
        assert!(scaling_efficiency(&BTreeMap::from([(0, 1.0)])).is_err());
    }

    fn series(vals: &[f64]) -> Vec<(f64, f64)> {
        vals.iter().enumerate().map(|(i, &v)| (i as f64, v)).collect()
    }

    #[test]
    fn elasticity_cases() {
        let d = series(&[1.0, 3.0, 2.0]);
        assert_eq!(elasticity(&d, &d).unwrap(), 1.0);
        let d = series(&[2.0, 2.0, 2.0]);
        let p = series(&[4.0, 4.0, 4.0]);
        assert_eq!(elasticity(&p, &d).unwrap(), 0.5);
        let zero = series(&[0.0, 0.0, 0.0]);
        assert_eq!(elasticity(&zero, &d).unwrap(), 0.0);
        assert!(elasticity(&zero, &zero).is_err());
        let shifted: Vec<(f64, f64)> = d.iter().map(|&(t, v)| (t + 0.5, v)).collect();
        assert!(elasticity(&p, &shifted).unwrap_err().is_argument_error());
    }

    #[test]
    fn availability_cases() {
        assert_eq!(availability(&[(0.0, 100.0)], (0.0, 100.0)).unwrap(), 1.0);
        assert_eq!(availability(&[(0.0, 99.0)], (0.0, 100.0)).unwrap(), 0.99);
        assert_eq!(availability::<f64>(&[], (0.0, 100.0)).unwrap(), 0.0);
        // overlapping intervals merge
        assert_eq!(availability(&[(0.0, 60.0), (50.0, 80.0)], (0.0, 100.0)).unwrap(), 0.8);
        assert!(availability(&[(0.0, 1.0)], (5.0, 5.0)).is_err());
        let exact = availability(
            &[(Ratio::<i64>::new(0, 1), Ratio::new(1, 3))],
            (Ratio::new(0, 1), Ratio::new(1, 1)),
        )
        .unwrap();
        assert_eq!(exact, Ratio::new(1, 3));
    }

    #[test]
    fn utilization_cases() {
        let zeros = vec![node("a", 0.0, 0.0), node("a", 1.0, 0.0)];
        assert_eq!(utilization(&zeros, Resource::Cpu).fleet, Some(0.0));
        let two = vec![node("a", 0.0, 0.2), node("a", 10.0, 0.8)];
        assert_eq!(utilization(&two, Resource::Cpu).per_node[0].value, Some(0.5));
        let mut busy = vec![node("a", 0.0, 0.5), node("a", 60.0, 0.5)];
        busy[1].busy_s = 30.0;
        assert_eq!(utilization(&busy, Resource::Busy).fleet, Some(0.5));
        assert!(utilization(&[], Resource::Cpu).per_node.is_empty());
    }

    #[test]
    fn energy_cases() {
        let zeros = vec![node("a", 0.0, 0.0), node("a", 60.0, 0.0)];
        let e = energy_summary(&zeros);
        assert_eq!((e.total_j, e.mean_power_w), (0.0, Some(0.0)));
        let mut s = vec![node("a", 0.0, 0.0), node("a", 60.0, 0.0)];
        s[1].energy_j = 3600.0;
        assert_eq!(energy_summary(&s).mean_power_w, Some(60.0));
        let mut single = vec![node("a", 5.0, 0.0)];
        single[0].energy_j = 100.0;
        let e = energy_summary(&single);
        assert_eq!(e.total_j, 100.0);
        assert_eq!(e.mean_power_w, None);
    }

    #[test]
    fn concurrency_cases() {
        assert_eq!(max_concurrency(&[]), 0);
        assert_eq!(max_concurrency(&[request("a", 0.0, 0.0, 10.0)]), 1);
        let reqs = vec![
            request("a", 0.0, 0.0, 10.0),
            request("b", 5.0, 5.0, 15.0),
            request("c", 20.0, 20.0, 30.0),
        ];
        assert_eq!(max_concurrency(&reqs), 2);
        // touching intervals do not overlap
        let touching = vec![request("a", 0.0, 0.0, 10.0), request("b", 10.0, 10.0, 20.0)];
        assert_eq!(max_concurrency(&touching), 1);
    }

    fn brute_force_concurrency(reqs: &[RequestRecord]) -> usize {
        reqs.iter()
            .flat_map(|r| [r.start_ts, r.finish_ts])
            .map(|t| reqs.iter().filter(|r| r.start_ts <= t && t < r.finish_ts).count())
            .max()
            .unwrap_or(0)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn concurrency_matches_brute_force(
            spans in proptest::collection::vec((0u32..500, 0u32..60), 0..1000)
        ) {
            let reqs: Vec<RequestRecord> = spans
                .iter()
                .enumerate()
                .map(|(i, &(s, d))| request(&i.to_string(), s as f64, s as f64, (s + d) as f64))
                .collect();
            prop_assert_eq!(max_concurrency(&reqs), brute_force_concurrency(&reqs));
        }

        #[test]
        fn speedup_ratio_transitivity(a in 1e-3f64..1e6, b in 1e-3f64..1e6, c in 1e-3f64..1e6) {
            let lhs = speedup(a, b).unwrap() * speedup(b, c).unwrap();
            let rhs = speedup(a, c).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
        }

        #[test]
        fn elasticity_symmetric_and_bounded(
            pairs in proptest::collection::vec((0.0f64..10.0, 0.0f64..10.0), 1..50)
        ) {
            let p: Vec<(f64, f64)> = pairs.iter().enumerate().map(|(i, x)| (i as f64, x.0)).collect();
            let d: Vec<(f64, f64)> = pairs.iter().enumerate().map(|(i, x)| (i as f64, x.1)).collect();
            if let Ok(e) = elasticity(&p, &d) {
                prop_assert_eq!(e, elasticity(&d, &p).unwrap());
                prop_assert!((0.0..=1.0).contains(&e));
            }
        }

        #[test]
        fn pdr_plr_complementary(sent in 0u64..10_000, frac in 0.0f64..=1.0) {
            let mut link = net("a", "b", 0.0);
            link.packets_sent = sent;
            link.packets_delivered = (sent as f64 * frac) as u64;
            let k = network_kpis(&[link]);
            let l = &k.links[0];
            match (l.pdr, l.plr) {
                (Some(pdr), Some(plr)) => {
                    prop_assert!((0.0..=1.0).contains(&pdr));
                    prop_assert_eq!(plr, 1.0 - pdr);
                    prop_assert!((pdr + plr - 1.0).abs() <= 1e-12);
                }
                (None, None) => prop_assert_eq!(sent, 0),
                _ => prop_assert!(false, "pdr and plr disagree on definedness"),
            }
        }

        #[test]
        fn response_dominates_service(
            spans in proptest::collection::vec((0.0f64..100.0, 0.0f64..10.0, 0.0f64..10.0), 1..100)
        ) {
            let reqs: Vec<RequestRecord> = spans
                .iter()
                .map(|&(a, q, s)| request("r", a, a + q, a + q + s))
                .collect();
            let st = response_stats(&reqs).unwrap();
            prop_assert!(st.mean_response_s >= st.mean_service_s);
            prop_assert!(st.p50_response_s <= st.p95_response_s);
            prop_assert!(st.p95_response_s <= st.p99_response_s);
            for r in &reqs {
                prop_assert!(r.finish_ts - r.arrival_ts >= r.finish_ts - r.start_ts);
            }
        }
    }

    #[test]
    fn network_cases() {
        let mut a = net("a", "b", 0.0);
        let mut b = net("a", "b", 10.0);
        a.packets_sent = 500;
        a.packets_delivered = 450;
        b.packets_sent = 500;
        b.packets_delivered = 450;
        b.bytes_delivered = 1_000_000;
        let k = network_kpis(&[a, b]);
        let l = &k.links[0];
        assert_eq!(l.pdr, Some(0.9));
        assert!((l.plr.unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(l.throughput_bps, Some(8e5));
        assert_eq!(l.bandwidth_util, Some(0.8));
        assert!(!l.over_capacity);

        let silent = network_kpis(&[net("a", "b", 0.0)]);
        assert_eq!(silent.links[0].pdr, None);
        assert_eq!(silent.warnings.len(), 1);
    }

    #[test]
    fn over_capacity_clamps_with_warning() {
        let a = net("a", "b", 0.0);
        let mut b = net("a", "b", 1.0);
        b.bytes_delivered = 1_000_000; // 8 Mbit/s on a 1 Mbit/s link
        b.packets_sent = 1;
        let k = network_kpis(&[a, b]);
        assert_eq!(k.links[0].bandwidth_util, Some(1.0));
        assert!(k.links[0].over_capacity);
        assert!(k.warnings.iter().any(|w| w.contains("clamped")));
    }

    #[test]
    fn response_cases() {
        let st = response_stats(&[request("a", 0.0, 1.0, 3.0)]).unwrap();
        assert_eq!(st.mean_response_s, 3.0);
        assert_eq!(st.mean_service_s, 2.0);
        assert_eq!(st.accuracy, None);

        let mut failing = vec![request("a", 0.0, 0.0, 1.0), request("b", 0.0, 0.0, 1.0)];
        for r in &mut failing {
            r.ok = false;
        }
        assert_eq!(response_stats(&failing).unwrap().error_rate, 1.0);

        let mut costs: Vec<RequestRecord> = (0..3).map(|_| request("c", 0.0, 0.0, 1.0)).collect();
        for (i, r) in costs.iter_mut().enumerate() {
            r.cost_units = (i + 1) as f64;
        }
        costs[0].correct = Some(true);
        costs[1].correct = Some(false);
        let st = response_stats(&costs).unwrap();
        assert_eq!(st.total_cost, 6.0);
        assert_eq!(st.accuracy, Some(1.0 / 3.0));

        assert!(response_stats(&[]).unwrap_err().is_argument_error());
    }
}
