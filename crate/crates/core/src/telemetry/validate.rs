use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use super::{AdaptationEvent, NetSample, NodeSample, RequestRecord, Trace, BUSY_TOLERANCE_S};

type Issue = (String, String);

fn issue(field: &str, message: impl Into<String>) -> Issue {
    (field.to_string(), message.into())
}

fn unit_interval(field: &str, v: f64, out: &mut Vec<Issue>) {
    if !(0.0..=1.0).contains(&v) {
        out.push(issue(field, format!("{field} out of [0,1]")));
    }
}

fn non_negative(field: &str, v: f64, out: &mut Vec<Issue>) {
    if !(v >= 0.0 && v.is_finite()) {
        out.push(issue(field, format!("{field} must be a finite non-negative number")));
    }
}

pub(crate) fn parse_epoch(epoch: &str) -> Result<(), chrono::ParseError> {
    chrono::DateTime::parse_from_rfc3339(epoch).map(|_| ())
}

pub(crate) fn node_issues(s: &NodeSample) -> Vec<Issue> {
    let mut out = Vec::new();
    if s.node_id.is_empty() {
        out.push(issue("node_id", "node_id is empty"));
    }
    non_negative("timestamp", s.timestamp, &mut out);
    unit_interval("cpu_util", s.cpu_util, &mut out);
    unit_interval("mem_util", s.mem_util, &mut out);
    non_negative("energy_j", s.energy_j, &mut out);
    non_negative("busy_s", s.busy_s, &mut out);
    if let Some(t) = s.temperature_c {
        if !t.is_finite() {
            out.push(issue("temperature_c", "temperature_c is not finite"));
        }
    }
    out
}

pub(crate) fn net_issues(s: &NetSample) -> Vec<Issue> {
    let mut out = Vec::new();
    if s.src == s.dst {
        out.push(issue("dst", format!("link {} -> {} is a self loop", s.src, s.dst)));
    }
    non_negative("timestamp", s.timestamp, &mut out);
    non_negative("latency_ms", s.latency_ms, &mut out);
    if !(s.capacity_bps > 0.0 && s.capacity_bps.is_finite()) {
        out.push(issue("capacity_bps", "capacity_bps must be positive"));
    }
    if s.packets_delivered > s.packets_sent {
        out.push(issue(
            "packets_delivered",
            format!(
                "packets_delivered {} exceeds packets_sent {}",
                s.packets_delivered, s.packets_sent
            ),
        ));
    }
    out
}

pub(crate) fn request_issues(r: &RequestRecord) -> Vec<Issue> {
    let mut out = Vec::new();
    non_negative("arrival_ts", r.arrival_ts, &mut out);
    non_negative("start_ts", r.start_ts, &mut out);
    non_negative("finish_ts", r.finish_ts, &mut out);
    if r.start_ts < r.arrival_ts {
        out.push(issue("start_ts", "start_ts precedes arrival_ts"));
    }
    if r.finish_ts < r.start_ts {
        out.push(issue("finish_ts", "finish_ts precedes start_ts"));
    }
    non_negative("cost_units", r.cost_units, &mut out);
    out
}

pub(crate) fn adaptation_issues(a: &AdaptationEvent) -> Vec<Issue> {
    let mut out = Vec::new();
    for (field, v) in [("p_base", a.p_base), ("p_post", a.p_post), ("t_adapt_s", a.t_adapt_s)] {
        if !(v > 0.0 && v.is_finite()) {
            out.push(issue(field, format!("{field} must be positive")));
        }
    }
    if let Some(t) = a.timestamp {
        non_negative("timestamp", t, &mut out);
    }
    out
}

fn first(issues: Vec<Issue>) -> Result<(), Issue> {
    issues.into_iter().next().map_or(Ok(()), Err)
}

pub(crate) fn check_node(s: &NodeSample) -> Result<(), Issue> {
    first(node_issues(s))
}
pub(crate) fn check_net(s: &NetSample) -> Result<(), Issue> {
    first(net_issues(s))
}
pub(crate) fn check_request(r: &RequestRecord) -> Result<(), Issue> {
    first(request_issues(r))
}
pub(crate) fn check_adaptation(a: &AdaptationEvent) -> Result<(), Issue> {
    first(adaptation_issues(a))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RecordCounts {
    pub node: usize,
    pub net: usize,
    pub request: usize,
    pub adaptation: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Field or invariant that failed.
    pub invariant: String,
    /// Human-readable locator of the offending record.
    pub record: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub counts: RecordCounts,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every trace invariant and lists violations. Never fails.
pub fn validate_trace(trace: &Trace) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |invariant: String, record: String, detail: String| {
        violations.push(Violation {
            invariant,
            record,
            detail,
        })
    };

    if parse_epoch(&trace.epoch).is_err() {
        push("epoch".into(), "meta".into(), format!("epoch `{}` is not ISO-8601", trace.epoch));
    }

    let mut last: HashMap<&str, f64> = HashMap::new();
    for (i, s) in trace.node_samples.iter().enumerate() {
        let record = format!("node[{i}] {} @ {}", s.node_id, s.timestamp);
        for (field, detail) in node_issues(s) {
            push(field, record.clone(), detail);
        }
        if let Some(&prev) = last.get(s.node_id.as_str()) {
            if s.timestamp <= prev {
                push(
                    "timestamp".into(),
                    record.clone(),
                    format!("not after previous sample at {prev}"),
                );
            } else if s.busy_s > s.timestamp - prev + BUSY_TOLERANCE_S {
                push(
                    "busy_s".into(),
                    record.clone(),
                    format!("busy_s {} exceeds gap {}", s.busy_s, s.timestamp - prev),
                );
            }
        }
        last.insert(&s.node_id, s.timestamp);
    }
    for (i, s) in trace.net_samples.iter().enumerate() {
        let record = format!("net[{i}] {}->{} @ {}", s.src, s.dst, s.timestamp);
        for (field, detail) in net_issues(s) {
            push(field, record.clone(), detail);
        }
    }
    for (i, r) in trace.requests.iter().enumerate() {
        let record = format!("request[{i}] {}", r.request_id);
        for (field, detail) in request_issues(r) {
            push(field, record.clone(), detail);
        }
    }
    for (i, a) in trace.adaptations.iter().enumerate() {
        let record = format!("adaptation[{i}] {}", a.event_id);
        for (field, detail) in adaptation_issues(a) {
            push(field, record.clone(), detail);
        }
    }

    let sorted = |ts: Vec<f64>| ts.windows(2).all(|w| w[0] <= w[1]);
    if !sorted(trace.node_samples.iter().map(|s| s.timestamp).collect()) {
        push("order".into(), "node_samples".into(), "not sorted by timestamp".into());
    }
    if !sorted(trace.net_samples.iter().map(|s| s.timestamp).collect()) {
        push("order".into(), "net_samples".into(), "not sorted by timestamp".into());
    }
    if !sorted(trace.requests.iter().map(|r| r.arrival_ts).collect()) {
        push("order".into(), "requests".into(), "not sorted by arrival_ts".into());
    }

    let listed: BTreeSet<&str> = trace.node_ids.iter().map(String::as_str).collect();
    if listed.len() != trace.node_ids.len() {
        push("node_ids".into(), "trace".into(), "node_ids contains duplicates".into());
    }
    for id in trace.referenced_node_ids() {
        if !listed.contains(id.as_str()) {
            push("node_ids".into(), "trace".into(), format!("node `{id}` missing from node_ids"));
        }
    }

    ValidationReport {
        counts: RecordCounts {
            node: trace.node_samples.len(),
            net: trace.net_samples.len(),
            request: trace.requests.len(),
            adaptation: trace.adaptations.len(),
        },
        violations,
    }
}
