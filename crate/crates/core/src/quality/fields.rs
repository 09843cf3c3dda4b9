use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{MetricsError, Result};
use crate::telemetry::{NodeSample, Trace};

/// A numeric record field that experiments may perturb or randomize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TraceField {
    CpuUtil,
    MemUtil,
    EnergyJ,
    TemperatureC,
    BusyS,
    LatencyMs,
    CapacityBps,
    BytesDelivered,
    PacketsSent,
    PacketsDelivered,
    CostUnits,
    PBase,
    PPost,
    TAdaptS,
}

impl TraceField {
    pub const ALL: [TraceField; 14] = [
        TraceField::CpuUtil,
        TraceField::MemUtil,
        TraceField::EnergyJ,
        TraceField::TemperatureC,
        TraceField::BusyS,
        TraceField::LatencyMs,
        TraceField::CapacityBps,
        TraceField::BytesDelivered,
        TraceField::PacketsSent,
        TraceField::PacketsDelivered,
        TraceField::CostUnits,
        TraceField::PBase,
        TraceField::PPost,
        TraceField::TAdaptS,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TraceField::CpuUtil => "node.cpu_util",
            TraceField::MemUtil => "node.mem_util",
            TraceField::EnergyJ => "node.energy_j",
            TraceField::TemperatureC => "node.temperature_c",
            TraceField::BusyS => "node.busy_s",
            TraceField::LatencyMs => "net.latency_ms",
            TraceField::CapacityBps => "net.capacity_bps",
            TraceField::BytesDelivered => "net.bytes_delivered",
            TraceField::PacketsSent => "net.packets_sent",
            TraceField::PacketsDelivered => "net.packets_delivered",
            TraceField::CostUnits => "request.cost_units",
            TraceField::PBase => "adaptation.p_base",
            TraceField::PPost => "adaptation.p_post",
            TraceField::TAdaptS => "adaptation.t_adapt_s",
        }
    }

    /// Fields stored as whole numbers; perturbations are rounded.
    pub fn is_integer(self) -> bool {
        matches!(
            self,
            TraceField::BytesDelivered | TraceField::PacketsSent | TraceField::PacketsDelivered
        )
    }

    /// Value bounds that keep the perturbed record valid.
    fn bounds(self) -> (f64, f64) {
        match self {
            TraceField::CpuUtil | TraceField::MemUtil => (0.0, 1.0),
            TraceField::TemperatureC => (f64::NEG_INFINITY, f64::INFINITY),
            TraceField::CapacityBps | TraceField::PBase | TraceField::PPost | TraceField::TAdaptS => {
                (f64::MIN_POSITIVE, f64::INFINITY)
            }
            _ => (0.0, f64::INFINITY),
        }
    }

    /// Adds `delta` to this field of every record carrying it, clamping to the
    /// field's bounds. Integer fields are rounded; packet counts stay
    /// consistent (`delivered <= sent`); `busy_s` stays within the gap to the
    /// node's previous sample.
    pub fn perturb(self, trace: &Trace, delta: f64) -> Trace {
        self.map_values(trace, |v, _| v + delta)
    }

    /// Replaces this field with seeded random values inside its bounds.
    pub fn randomize(self, trace: &Trace, seed: u64) -> Trace {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = self.bounds();
        self.map_values(trace, move |v, _| {
            if hi.is_finite() {
                rng.random_range(lo..=hi)
            } else if lo.is_finite() {
                (v * rng.random_range(0.5..1.5)).max(lo) + rng.random_range(0.0..1.0)
            } else {
                v + rng.random_range(-5.0..5.0)
            }
        })
    }

    fn map_values(self, trace: &Trace, mut f: impl FnMut(f64, usize) -> f64) -> Trace {
        let (lo, hi) = self.bounds();
        let mut clamp = |v: f64, i: usize| f(v, i).clamp(lo, hi);
        let mut out = trace.clone();
        let count = |v: f64| v.round().max(0.0) as u64;
        match self {
            TraceField::CpuUtil => out.node_samples.iter_mut().enumerate().for_each(|(i, s)| s.cpu_util = clamp(s.cpu_util, i)),
            TraceField::MemUtil => out.node_samples.iter_mut().enumerate().for_each(|(i, s)| s.mem_util = clamp(s.mem_util, i)),
            TraceField::EnergyJ => out.node_samples.iter_mut().enumerate().for_each(|(i, s)| s.energy_j = clamp(s.energy_j, i)),
            TraceField::TemperatureC => out.node_samples.iter_mut().enumerate().for_each(|(i, s)| {
                if let Some(t) = s.temperature_c {
                    s.temperature_c = Some(clamp(t, i));
                }
            }),
            TraceField::BusyS => {
                let gaps = busy_limits(&out.node_samples);
                for (i, s) in out.node_samples.iter_mut().enumerate() {
                    s.busy_s = clamp(s.busy_s, i).min(gaps[i]);
                }
            }
            TraceField::LatencyMs => out.net_samples.iter_mut().enumerate().for_each(|(i, s)| s.latency_ms = clamp(s.latency_ms, i)),
            TraceField::CapacityBps => out.net_samples.iter_mut().enumerate().for_each(|(i, s)| s.capacity_bps = clamp(s.capacity_bps, i)),
            TraceField::BytesDelivered => out.net_samples.iter_mut().enumerate().for_each(|(i, s)| {
                s.bytes_delivered = count(clamp(s.bytes_delivered as f64, i))
            }),
            TraceField::PacketsSent => out.net_samples.iter_mut().enumerate().for_each(|(i, s)| {
                s.packets_sent = count(clamp(s.packets_sent as f64, i)).max(s.packets_delivered)
            }),
            TraceField::PacketsDelivered => out.net_samples.iter_mut().enumerate().for_each(|(i, s)| {
                s.packets_delivered = count(clamp(s.packets_delivered as f64, i)).min(s.packets_sent)
            }),
            TraceField::CostUnits => out.requests.iter_mut().enumerate().for_each(|(i, r)| r.cost_units = clamp(r.cost_units, i)),
            TraceField::PBase => out.adaptations.iter_mut().enumerate().for_each(|(i, a)| a.p_base = clamp(a.p_base, i)),
            TraceField::PPost => out.adaptations.iter_mut().enumerate().for_each(|(i, a)| a.p_post = clamp(a.p_post, i)),
            TraceField::TAdaptS => out.adaptations.iter_mut().enumerate().for_each(|(i, a)| a.t_adapt_s = clamp(a.t_adapt_s, i)),
        }
        out
    }
}

/// Largest valid `busy_s` per sample: the gap to the node's previous sample.
fn busy_limits(samples: &[NodeSample]) -> Vec<f64> {
    let mut last: BTreeMap<&str, f64> = BTreeMap::new();
    samples
        .iter()
        .map(|s| {
            let limit = last.get(s.node_id.as_str()).map_or(f64::INFINITY, |&t| s.timestamp - t);
            last.insert(&s.node_id, s.timestamp);
            limit
        })
        .collect()
}

impl fmt::Display for TraceField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TraceField {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self> {
        TraceField::ALL
            .into_iter()
            .find(|f| f.name() == s || f.name().split_once('.').is_some_and(|(_, short)| short == s))
            .ok_or_else(|| MetricsError::arg(format!("unknown trace field `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::fixtures::node;
    use crate::telemetry::{validate_trace, DEFAULT_EPOCH};

    #[test]
    fn names_round_trip() {
        for f in TraceField::ALL {
            assert_eq!(f.name().parse::<TraceField>().unwrap(), f);
        }
        assert_eq!("cpu_util".parse::<TraceField>().unwrap(), TraceField::CpuUtil);
        assert!("node.timestamp".parse::<TraceField>().is_err());
    }

    #[test]
    fn perturbation_respects_bounds() {
        let trace = Trace::from_records(
            DEFAULT_EPOCH,
            vec![node("a", 0.0, 0.95), node("a", 1.0, 0.5)],
            vec![],
            vec![],
            vec![],
        );
        let p = TraceField::CpuUtil.perturb(&trace, 0.1);
        assert_eq!(p.node_samples[0].cpu_util, 1.0);
        assert!((p.node_samples[1].cpu_util - 0.6).abs() < 1e-15);
        let b = TraceField::BusyS.perturb(&trace, 10.0);
        assert_eq!(b.node_samples[1].busy_s, 1.0);
        for f in TraceField::ALL {
            assert!(validate_trace(&f.randomize(&trace, 3)).is_clean(), "{f}");
            assert!(validate_trace(&f.perturb(&trace, -1e6)).is_clean(), "{f}");
        }
    }
}
