//! JSON Lines reading and writing.
//!
//! Every line is one object with a `kind` discriminator: `meta`, `node`,
//! `net`, `request` or `adaptation`. The optional `meta` line carries the
//! trace epoch.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use super::validate::{check_adaptation, check_net, check_node, check_request, parse_epoch};
use super::{
    AdaptationEvent, NetSample, NodeSample, RequestRecord, Trace, BUSY_TOLERANCE_S, DEFAULT_EPOCH,
};
use crate::error::{MetricsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    /// Unknown fields and invariant violations are errors.
    #[default]
    Strict,
    /// Unknown fields are stripped and violating records dropped, each
    /// counted as a warning.
    Lenient,
}

/// A loaded trace plus the warnings produced in lenient mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub trace: Trace,
    pub warnings: Vec<String>,
}

impl Loaded {
    pub fn warning_count(&self) -> usize {
        self.warnings.len()
    }
}

const META_FIELDS: &[&str] = &["kind", "epoch"];
const NODE_FIELDS: &[&str] = &[
    "kind",
    "node_id",
    "timestamp",
    "tier",
    "cpu_util",
    "mem_util",
    "energy_j",
    "temperature_c",
    "busy_s",
];
const NET_FIELDS: &[&str] = &[
    "kind",
    "src",
    "dst",
    "timestamp",
    "latency_ms",
    "capacity_bps",
    "bytes_delivered",
    "packets_sent",
    "packets_delivered",
];
const REQUEST_FIELDS: &[&str] = &[
    "kind",
    "request_id",
    "arrival_ts",
    "start_ts",
    "finish_ts",
    "ok",
    "correct",
    "cost_units",
];
const ADAPTATION_FIELDS: &[&str] = &[
    "kind",
    "event_id",
    "p_base",
    "p_post",
    "t_adapt_s",
    "polarity",
    "timestamp",
];

#[derive(Default)]
struct Raw {
    epoch: Option<(usize, String)>,
    nodes: Vec<(usize, NodeSample)>,
    nets: Vec<(usize, NetSample)>,
    requests: Vec<(usize, RequestRecord)>,
    adaptations: Vec<(usize, AdaptationEvent)>,
}

enum Issue {
    /// Fatal regardless of strictness.
    Parse(MetricsError),
    /// Error in strict mode, warning in lenient mode.
    Soft { field: String, message: String },
}

struct Reader {
    strictness: Strictness,
    warnings: Vec<String>,
}

impl Reader {
    /// Strict: turn into an error. Lenient: record a warning.
    fn soft(&mut self, line: usize, field: String, message: String) -> Result<()> {
        match self.strictness {
            Strictness::Strict => Err(MetricsError::Validation {
                line,
                field,
                message,
            }),
            Strictness::Lenient => {
                self.warnings.push(format!("{message} at line {line}"));
                Ok(())
            }
        }
    }

    fn strip_unknown(&mut self, line: usize, obj: &mut Map<String, Value>, known: &[&str]) -> Result<()> {
        let unknown: Vec<String> = obj
            .keys()
            .filter(|k| !known.contains(&k.as_str()))
            .cloned()
            .collect();
        for key in unknown {
            obj.remove(&key);
            self.soft(line, key.clone(), format!("unknown field `{key}`"))?;
        }
        Ok(())
    }

    fn read(&mut self, source: impl BufRead) -> Result<Raw> {
        let mut raw = Raw::default();
        for (idx, line) in source.lines().enumerate() {
            let line_no = idx + 1;
            let text = line.map_err(|e| MetricsError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            if text.trim().is_empty() {
                continue;
            }
            match self.read_line(line_no, &text, &mut raw) {
                Ok(()) => {}
                Err(Issue::Parse(e)) => return Err(e),
                Err(Issue::Soft { field, message }) => self.soft(line_no, field, message)?,
            }
        }
        Ok(raw)
    }

    fn read_line(&mut self, line: usize, text: &str, raw: &mut Raw) -> Result<(), Issue> {
        let parse_err = |message: String| Issue::Parse(MetricsError::Parse { line, message });
        let value: Value = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        let Value::Object(mut obj) = value else {
            return Err(parse_err("record is not a JSON object".into()));
        };
        let kind = obj
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| parse_err("missing string field `kind`".into()))?
            .to_string();
        let known = match kind.as_str() {
            "meta" => META_FIELDS,
            "node" => NODE_FIELDS,
            "net" => NET_FIELDS,
            "request" => REQUEST_FIELDS,
            "adaptation" => ADAPTATION_FIELDS,
            other => return Err(parse_err(format!("unknown record kind `{other}`"))),
        };
        self.strip_unknown(line, &mut obj, known).map_err(Issue::Parse)?;
        obj.remove("kind");
        let soft = |(field, message): (String, String)| Issue::Soft { field, message };
        match kind.as_str() {
            "meta" => {
                if raw.epoch.is_some() {
                    return Err(parse_err("duplicate meta record".into()));
                }
                let epoch = obj
                    .get("epoch")
                    .and_then(Value::as_str)
                    .ok_or_else(|| parse_err("meta record needs string field `epoch`".into()))?
                    .to_string();
                if parse_epoch(&epoch).is_err() {
                    return Err(Issue::Soft {
                        field: "epoch".into(),
                        message: format!("epoch `{epoch}` is not ISO-8601 UTC"),
                    });
                }
                raw.epoch = Some((line, epoch));
            }
            "node" => {
                let rec: NodeSample = decode(line, obj).map_err(Issue::Parse)?;
                check_node(&rec).map_err(soft)?;
                raw.nodes.push((line, rec));
            }
            "net" => {
                let rec: NetSample = decode(line, obj).map_err(Issue::Parse)?;
                check_net(&rec).map_err(soft)?;
                raw.nets.push((line, rec));
            }
            "request" => {
                let rec: RequestRecord = decode(line, obj).map_err(Issue::Parse)?;
                check_request(&rec).map_err(soft)?;
                raw.requests.push((line, rec));
            }
            _ => {
                let rec: AdaptationEvent = decode(line, obj).map_err(Issue::Parse)?;
                check_adaptation(&rec).map_err(soft)?;
                raw.adaptations.push((line, rec));
            }
        }
        Ok(())
    }
}

fn decode<T: DeserializeOwned>(line: usize, obj: Map<String, Value>) -> Result<T> {
    serde_json::from_value(Value::Object(obj)).map_err(|e| MetricsError::Parse {
        line,
        message: e.to_string(),
    })
}

/// Reads and validates a JSONL trace.
///
/// Record order within each kind is normalized to timestamp order. Per-node
/// timestamps must be strictly increasing and `busy_s` may not exceed the gap
/// to the previous sample of the same node.
pub fn load_trace(source: impl BufRead, strictness: Strictness) -> Result<Loaded> {
    let mut reader = Reader {
        strictness,
        warnings: Vec::new(),
    };
    let mut raw = reader.read(source)?;
    sort_raw(&mut raw);

    // Cross-record node invariants, checked against the last kept sample.
    let mut last: HashMap<String, f64> = HashMap::new();
    let mut nodes = Vec::with_capacity(raw.nodes.len());
    for (line, s) in raw.nodes {
        if let Some(&prev) = last.get(&s.node_id) {
            let issue = if s.timestamp <= prev {
                Some((
                    "timestamp",
                    format!(
                        "timestamp {} not after previous sample {} of node {}",
                        s.timestamp, prev, s.node_id
                    ),
                ))
            } else if s.busy_s > s.timestamp - prev + BUSY_TOLERANCE_S {
                Some((
                    "busy_s",
                    format!(
                        "busy_s {} exceeds sample gap {}",
                        s.busy_s,
                        s.timestamp - prev
                    ),
                ))
            } else {
                None
            };
            if let Some((field, message)) = issue {
                reader.soft(line, field.to_string(), message)?;
                continue;
            }
        }
        last.insert(s.node_id.clone(), s.timestamp);
        nodes.push(s);
    }

    let epoch = raw
        .epoch
        .map(|(_, e)| e)
        .unwrap_or_else(|| DEFAULT_EPOCH.to_string());
    let trace = Trace::from_records(
        epoch,
        nodes,
        raw.nets.into_iter().map(|(_, r)| r).collect(),
        raw.requests.into_iter().map(|(_, r)| r).collect(),
        raw.adaptations.into_iter().map(|(_, r)| r).collect(),
    );
    Ok(Loaded {
        trace,
        warnings: reader.warnings,
    })
}

fn sort_raw(raw: &mut Raw) {
    raw.nodes.sort_by(|a, b| a.1.timestamp.total_cmp(&b.1.timestamp));
    raw.nets.sort_by(|a, b| a.1.timestamp.total_cmp(&b.1.timestamp));
    raw.requests.sort_by(|a, b| a.1.arrival_ts.total_cmp(&b.1.arrival_ts));
}

/// Parses records without enforcing any data invariant, so that
/// [`validate_trace`](super::validate_trace) can report every violation.
/// Malformed JSON and unknown fields are still errors.
pub fn parse_records(source: impl BufRead) -> Result<Trace> {
    let mut reader = Reader {
        strictness: Strictness::Strict,
        warnings: Vec::new(),
    };
    let mut raw = Raw::default();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        match reader.read_line(line_no, &text, &mut raw) {
            Ok(()) => {}
            Err(Issue::Parse(e)) => return Err(e),
            // Keep the record: re-decode it without checks.
            Err(Issue::Soft { field, .. }) if field == "epoch" => {
                let v: Value = serde_json::from_str(&text).expect("parsed once already");
                let epoch = v["epoch"].as_str().unwrap_or_default().to_string();
                raw.epoch = Some((line_no, epoch));
            }
            Err(Issue::Soft { .. }) => push_unchecked(line_no, &text, &mut raw)?,
        }
    }
    sort_raw(&mut raw);
    let epoch = raw
        .epoch
        .map(|(_, e)| e)
        .unwrap_or_else(|| DEFAULT_EPOCH.to_string());
    Ok(Trace::from_records(
        epoch,
        raw.nodes.into_iter().map(|(_, r)| r).collect(),
        raw.nets.into_iter().map(|(_, r)| r).collect(),
        raw.requests.into_iter().map(|(_, r)| r).collect(),
        raw.adaptations.into_iter().map(|(_, r)| r).collect(),
    ))
}

fn push_unchecked(line: usize, text: &str, raw: &mut Raw) -> Result<()> {
    let Value::Object(mut obj) = serde_json::from_str(text).expect("parsed once already") else {
        unreachable!("non-object lines fail before checks")
    };
    let kind = obj.remove("kind").and_then(|k| k.as_str().map(str::to_string));
    match kind.as_deref() {
        Some("node") => raw.nodes.push((line, decode(line, obj)?)),
        Some("net") => raw.nets.push((line, decode(line, obj)?)),
        Some("request") => raw.requests.push((line, decode(line, obj)?)),
        Some("adaptation") => raw.adaptations.push((line, decode(line, obj)?)),
        _ => unreachable!("kind was checked by read_line"),
    }
    Ok(())
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum RecordRef<'a> {
    Meta { epoch: &'a str },
    Node(&'a NodeSample),
    Net(&'a NetSample),
    Request(&'a RequestRecord),
    Adaptation(&'a AdaptationEvent),
}

/// Writes a trace as JSONL: one meta line, then nodes, links, requests and
/// adaptations.
pub fn write_trace(trace: &Trace, mut out: impl Write) -> Result<()> {
    let mut emit = |rec: RecordRef<'_>| -> Result<()> {
        serde_json::to_writer(&mut out, &rec).map_err(|e| MetricsError::Io(e.to_string()))?;
        out.write_all(b"\n")?;
        Ok(())
    };
    emit(RecordRef::Meta {
        epoch: &trace.epoch,
    })?;
    for s in &trace.node_samples {
        emit(RecordRef::Node(s))?;
    }
    for s in &trace.net_samples {
        emit(RecordRef::Net(s))?;
    }
    for r in &trace.requests {
        emit(RecordRef::Request(r))?;
    }
    for a in &trace.adaptations {
        emit(RecordRef::Adaptation(a))?;
    }
    Ok(())
}

pub fn to_jsonl(trace: &Trace) -> String {
    let mut buf = Vec::new();
    write_trace(trace, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    const NODE_LINES: &str = r#"{"kind":"node","node_id":"a","timestamp":0,"tier":"edge","cpu_util":0.2,"mem_util":0.1,"energy_j":0,"busy_s":0}
{"kind":"node","node_id":"a","timestamp":1,"tier":"edge","cpu_util":1.5,"mem_util":0.1,"energy_j":5,"busy_s":0.5}
{"kind":"node","node_id":"a","timestamp":2,"tier":"edge","cpu_util":0.4,"mem_util":0.1,"energy_j":5,"busy_s":0.5}
"#;

    fn good_lines() -> String {
        NODE_LINES.replace("1.5", "0.3")
    }

    #[test]
    fn loads_three_node_lines() {
        let loaded = load_trace(good_lines().as_bytes(), Strictness::Strict).unwrap();
        assert_eq!(loaded.trace.node_samples.len(), 3);
        assert_eq!(loaded.trace.node_ids, vec!["a".to_string()]);
        assert_eq!(loaded.trace.epoch, DEFAULT_EPOCH);
        assert_eq!(loaded.warning_count(), 0);
    }

    #[test]
    fn strict_rejects_out_of_range_cpu() {
        let err = load_trace(NODE_LINES.as_bytes(), Strictness::Strict).unwrap_err();
        assert_eq!(err.to_string(), "cpu_util out of [0,1] at line 2");
        match err {
            MetricsError::Validation { line, field, .. } => {
                assert_eq!(line, 2);
                assert_eq!(field, "cpu_util");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lenient_drops_violating_record() {
        let lenient = load_trace(NODE_LINES.as_bytes(), Strictness::Lenient).unwrap();
        assert_eq!(lenient.warning_count(), 1);
        assert_eq!(lenient.trace.node_samples.len(), 2);
        // the survivors are exactly what strict mode accepts once line 2 is gone
        let without_line_2: String = NODE_LINES
            .lines()
            .enumerate()
            .filter(|(i, _)| *i != 1)
            .map(|(_, l)| format!("{l}\n"))
            .collect();
        let strict = load_trace(without_line_2.as_bytes(), Strictness::Strict).unwrap();
        assert_eq!(strict.trace, lenient.trace);
    }

    #[test]
    fn malformed_json_reports_line() {
        let text = format!("{}{{not json\n", good_lines());
        for mode in [Strictness::Strict, Strictness::Lenient] {
            match load_trace(text.as_bytes(), mode).unwrap_err() {
                MetricsError::Parse { line, .. } => assert_eq!(line, 4),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn unknown_fields_strict_vs_lenient() {
        let text = good_lines().replacen("\"busy_s\":0}", "\"busy_s\":0,\"colour\":\"red\"}", 1);
        let err = load_trace(text.as_bytes(), Strictness::Strict).unwrap_err();
        assert!(matches!(err, MetricsError::Validation { line: 1, .. }));
        let loaded = load_trace(text.as_bytes(), Strictness::Lenient).unwrap();
        assert_eq!(loaded.warning_count(), 1);
        assert_eq!(loaded.trace.node_samples.len(), 3);
    }

    #[test]
    fn records_are_sorted_by_time() {
        let reversed: String = good_lines().lines().rev().map(|l| format!("{l}\n")).collect();
        let loaded = load_trace(reversed.as_bytes(), Strictness::Strict).unwrap();
        let ts: Vec<f64> = loaded.trace.node_samples.iter().map(|s| s.timestamp).collect();
        assert_eq!(ts, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn duplicate_timestamps_and_busy_overflow() {
        let dup = good_lines().replace("\"timestamp\":2", "\"timestamp\":1");
        let err = load_trace(dup.as_bytes(), Strictness::Strict).unwrap_err();
        assert!(matches!(err, MetricsError::Validation { ref field, .. } if field == "timestamp"));

        let busy = good_lines().replace("\"busy_s\":0.5}", "\"busy_s\":1.5}");
        let err = load_trace(busy.as_bytes(), Strictness::Strict).unwrap_err();
        assert!(matches!(err, MetricsError::Validation { ref field, .. } if field == "busy_s"));
        // line 2 is dropped; line 3 is then checked against line 1 (gap 2 s)
        let loaded = load_trace(busy.as_bytes(), Strictness::Lenient).unwrap();
        assert_eq!(loaded.trace.node_samples.len(), 2);
        assert_eq!(loaded.warning_count(), 1);
    }

    #[test]
    fn meta_line_sets_epoch() {
        let text = format!(
            "{{\"kind\":\"meta\",\"epoch\":\"2025-03-01T12:00:00Z\"}}\n{}",
            good_lines()
        );
        let loaded = load_trace(text.as_bytes(), Strictness::Strict).unwrap();
        assert_eq!(loaded.trace.epoch, "2025-03-01T12:00:00Z");
        let bad = text.replace("2025-03-01T12:00:00Z", "yesterday");
        assert!(load_trace(bad.as_bytes(), Strictness::Strict).is_err());
    }

    #[test]
    fn missing_field_is_parse_error() {
        let text = r#"{"kind":"net","src":"a","dst":"b","timestamp":1}"#;
        assert!(matches!(
            load_trace(text.as_bytes(), Strictness::Lenient).unwrap_err(),
            MetricsError::Parse { line: 1, .. }
        ));
    }

    #[test]
    fn parse_records_keeps_violations() {
        let trace = parse_records(NODE_LINES.as_bytes()).unwrap();
        assert_eq!(trace.node_samples.len(), 3);
    }
}
