//! Trace data model: per-node samples, per-link samples, request records and
//! adaptation events over a trace-relative time axis.
//!
//! Timestamps are seconds since the trace epoch. `energy_j`, `busy_s` and
//! `bytes_delivered` are deltas since the previous sample of the same entity,
//! so summing them over any window needs no differentiation.

mod io;
pub(crate) mod validate;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{MetricsError, Result};

pub use io::{load_trace, parse_records, to_jsonl, write_trace, Loaded, Strictness};
pub use validate::{validate_trace, RecordCounts, ValidationReport, Violation};

/// Epoch used when a trace carries no meta record.
pub const DEFAULT_EPOCH: &str = "1970-01-01T00:00:00Z";

/// Slack allowed when comparing `busy_s` against the inter-sample gap.
pub const BUSY_TOLERANCE_S: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Cloud,
    Edge,
    Iot,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Cloud, Tier::Edge, Tier::Iot];

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Cloud => "cloud",
            Tier::Edge => "edge",
            Tier::Iot => "iot",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSample {
    pub node_id: String,
    pub timestamp: f64,
    pub tier: Tier,
    pub cpu_util: f64,
    pub mem_util: f64,
    pub energy_j: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature_c: Option<f64>,
    pub busy_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSample {
    pub src: String,
    pub dst: String,
    pub timestamp: f64,
    pub latency_ms: f64,
    pub capacity_bps: f64,
    pub bytes_delivered: u64,
    pub packets_sent: u64,
    pub packets_delivered: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub request_id: String,
    pub arrival_ts: f64,
    pub start_ts: f64,
    pub finish_ts: f64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    pub cost_units: f64,
}

/// Whether a larger value of the adapted metric is an improvement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    HigherBetter,
    LowerBetter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationEvent {
    pub event_id: String,
    /// Metric value before the adaptation.
    pub p_base: f64,
    /// Metric value once the system has adapted.
    pub p_post: f64,
    /// Time taken to complete the adaptation, in seconds.
    pub t_adapt_s: f64,
    pub polarity: Polarity,
    /// Optional trace-relative time of the event; untimed events survive
    /// every window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub epoch: String,
    pub node_samples: Vec<NodeSample>,
    pub net_samples: Vec<NetSample>,
    pub requests: Vec<RequestRecord>,
    pub adaptations: Vec<AdaptationEvent>,
    /// Sorted, unique ids of every node referenced by node or net samples.
    pub node_ids: Vec<String>,
}

impl Default for Trace {
    fn default() -> Self {
        Trace {
            epoch: DEFAULT_EPOCH.to_string(),
            node_samples: Vec::new(),
            net_samples: Vec::new(),
            requests: Vec::new(),
            adaptations: Vec::new(),
            node_ids: Vec::new(),
        }
    }
}

impl Trace {
    /// Builds a trace from raw records, sorting each sequence by time and
    /// deriving `node_ids`. Does not validate.
    pub fn from_records(
        epoch: impl Into<String>,
        mut node_samples: Vec<NodeSample>,
        mut net_samples: Vec<NetSample>,
        mut requests: Vec<RequestRecord>,
        adaptations: Vec<AdaptationEvent>,
    ) -> Trace {
        node_samples.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        net_samples.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        requests.sort_by(|a, b| a.arrival_ts.total_cmp(&b.arrival_ts));
        let mut trace = Trace {
            epoch: epoch.into(),
            node_samples,
            net_samples,
            requests,
            adaptations,
            node_ids: Vec::new(),
        };
        trace.node_ids = trace.referenced_node_ids();
        trace
    }

    pub(crate) fn referenced_node_ids(&self) -> Vec<String> {
        let mut ids: BTreeSet<&str> = BTreeSet::new();
        ids.extend(self.node_samples.iter().map(|s| s.node_id.as_str()));
        for s in &self.net_samples {
            ids.insert(&s.src);
            ids.insert(&s.dst);
        }
        ids.into_iter().map(str::to_string).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.node_samples.is_empty()
            && self.net_samples.is_empty()
            && self.requests.is_empty()
            && self.adaptations.is_empty()
    }

    /// Node samples grouped per node, each group in timestamp order.
    pub fn node_series(&self) -> BTreeMap<&str, Vec<&NodeSample>> {
        let mut out: BTreeMap<&str, Vec<&NodeSample>> = BTreeMap::new();
        for s in &self.node_samples {
            out.entry(s.node_id.as_str()).or_default().push(s);
        }
        out
    }

    /// Net samples grouped per directed link.
    pub fn link_series(&self) -> BTreeMap<(&str, &str), Vec<&NetSample>> {
        let mut out: BTreeMap<(&str, &str), Vec<&NetSample>> = BTreeMap::new();
        for s in &self.net_samples {
            out.entry((s.src.as_str(), s.dst.as_str())).or_default().push(s);
        }
        out
    }

    /// Earliest and latest node-sample timestamps.
    pub fn node_span(&self) -> Option<(f64, f64)> {
        let first = self.node_samples.first()?.timestamp;
        let last = self.node_samples.last()?.timestamp;
        Some((first, last))
    }

    /// Earliest and latest timestamp over every timestamped record.
    pub fn span(&self) -> Option<(f64, f64)> {
        let stamps = self
            .node_samples
            .iter()
            .map(|s| s.timestamp)
            .chain(self.net_samples.iter().map(|s| s.timestamp))
            .chain(self.requests.iter().flat_map(|r| [r.arrival_ts, r.finish_ts]))
            .chain(self.adaptations.iter().filter_map(|a| a.timestamp));
        stamps.fold(None, |acc, t| match acc {
            None => Some((t, t)),
            Some((lo, hi)) => Some((lo.min(t), hi.max(t))),
        })
    }
}

/// Restricts a trace to records stamped in `[t_start, t_end)`.
///
/// Requests are kept iff their arrival falls in the window. Deltas carried by
/// boundary samples are kept whole. `node_ids` is carried over unchanged.
pub fn window(trace: &Trace, t_start: f64, t_end: f64) -> Result<Trace> {
    if !(t_start < t_end) {
        return Err(MetricsError::arg(format!(
            "window start {t_start} must be before end {t_end}"
        )));
    }
    let inside = |t: f64| t >= t_start && t < t_end;
    Ok(Trace {
        epoch: trace.epoch.clone(),
        node_samples: trace
            .node_samples
            .iter()
            .filter(|s| inside(s.timestamp))
            .cloned()
            .collect(),
        net_samples: trace
            .net_samples
            .iter()
            .filter(|s| inside(s.timestamp))
            .cloned()
            .collect(),
        requests: trace
            .requests
            .iter()
            .filter(|r| inside(r.arrival_ts))
            .cloned()
            .collect(),
        adaptations: trace
            .adaptations
            .iter()
            .filter(|a| a.timestamp.is_none_or(inside))
            .cloned()
            .collect(),
        node_ids: trace.node_ids.clone(),
    })
}

/// Parses a `start:end` window.
pub fn parse_window(text: &str) -> Result<(f64, f64)> {
    let (a, b) = text
        .split_once(':')
        .ok_or_else(|| MetricsError::arg(format!("window `{text}` is not start:end")))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| MetricsError::arg(format!("window bound `{s}` is not a number")))
    };
    let (a, b) = (parse(a)?, parse(b)?);
    if !(a < b) {
        return Err(MetricsError::arg(format!("window start {a} must be before end {b}")));
    }
    Ok((a, b))
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn node(id: &str, t: f64, cpu: f64) -> NodeSample {
        NodeSample {
            node_id: id.to_string(),
            timestamp: t,
            tier: Tier::Edge,
            cpu_util: cpu,
            mem_util: 0.5,
            energy_j: 0.0,
            temperature_c: None,
            busy_s: 0.0,
        }
    }

    pub fn net(src: &str, dst: &str, t: f64) -> NetSample {
        NetSample {
            src: src.to_string(),
            dst: dst.to_string(),
            timestamp: t,
            latency_ms: 10.0,
            capacity_bps: 1e6,
            bytes_delivered: 0,
            packets_sent: 0,
            packets_delivered: 0,
        }
    }

    pub fn request(id: &str, arrival: f64, start: f64, finish: f64) -> RequestRecord {
        RequestRecord {
            request_id: id.to_string(),
            arrival_ts: arrival,
            start_ts: start,
            finish_ts: finish,
            ok: true,
            correct: None,
            cost_units: 1.0,
        }
    }
}
