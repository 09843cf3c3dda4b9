//! Seeded synthetic traces with known structure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{MetricsError, Result};
use crate::novel::{jain_fairness, ThermalParams};
use crate::telemetry::{
    validate::adaptation_issues, AdaptationEvent, NetSample, NodeSample, RequestRecord, Tier, Trace,
    DEFAULT_EPOCH,
};

const MAX_NODES: usize = 1000;
const PACKET_BYTES: u64 = 1500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierCounts {
    pub cloud: usize,
    pub edge: usize,
    pub iot: usize,
}

impl TierCounts {
    pub fn total(&self) -> usize {
        self.cloud + self.edge + self.iot
    }

    fn get(&self, tier: Tier) -> usize {
        match tier {
            Tier::Cloud => self.cloud,
            Tier::Edge => self.edge,
            Tier::Iot => self.iot,
        }
    }
}

/// Lagged linear coupling of CPU deviations between two nodes, by node index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CausalEdge {
    pub src: usize,
    pub dst: usize,
    pub coefficient: f64,
    pub lag: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalConfig {
    pub cloud: ThermalParams<f64>,
    pub edge: ThermalParams<f64>,
    pub iot: ThermalParams<f64>,
    /// Heating rate per unit of CPU utilization, °C/s.
    pub heat_per_util: f64,
}

impl ThermalConfig {
    pub fn for_tier(&self, tier: Tier) -> &ThermalParams<f64> {
        match tier {
            Tier::Cloud => &self.cloud,
            Tier::Edge => &self.edge,
            Tier::Iot => &self.iot,
        }
    }
}

impl Default for ThermalConfig {
    fn default() -> Self {
        ThermalConfig {
            cloud: ThermalParams { t0_c: 45.0, te_c: 22.0, k: 0.02 },
            edge: ThermalParams { t0_c: 50.0, te_c: 25.0, k: 0.05 },
            iot: ThermalParams { t0_c: 40.0, te_c: 25.0, k: 0.1 },
            heat_per_util: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseStd {
    pub cpu: f64,
    pub temperature: f64,
    pub latency: f64,
}

impl Default for NoiseStd {
    fn default() -> Self {
        NoiseStd { cpu: 0.05, temperature: 0.2, latency: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub cloud_edge_capacity_bps: f64,
    pub edge_iot_capacity_bps: f64,
    pub cloud_edge_latency_ms: f64,
    pub edge_iot_latency_ms: f64,
    /// Fraction of capacity offered per link at full utilization of both ends.
    pub load_fraction: f64,
    pub loss_rate: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            cloud_edge_capacity_bps: 1e9,
            edge_iot_capacity_bps: 1e8,
            cloud_edge_latency_ms: 20.0,
            edge_iot_latency_ms: 5.0,
            load_fraction: 0.3,
            loss_rate: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RequestConfig {
    pub rate_per_s: f64,
    pub mean_service_s: f64,
    pub servers: usize,
    pub success_prob: f64,
    pub accuracy: f64,
    pub cost_per_s: f64,
}

impl Default for RequestConfig {
    fn default() -> Self {
        RequestConfig {
            rate_per_s: 2.0,
            mean_service_s: 0.2,
            servers: 4,
            success_prob: 0.99,
            accuracy: 0.95,
            cost_per_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerConfig {
    pub idle_w: f64,
    pub max_w: f64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig { idle_w: 50.0, max_w: 200.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub duration_s: f64,
    pub sample_period_s: f64,
    pub tiers: TierCounts,
    /// Mean CPU utilization of the most loaded node.
    pub base_load: f64,
    /// Zipf exponent over node index; 0 gives every node the same load.
    pub load_skew: f64,
    pub causal_edges: Vec<CausalEdge>,
    pub thermal: ThermalConfig,
    pub noise_std: NoiseStd,
    pub adaptation_plan: Vec<AdaptationEvent>,
    pub network: NetworkConfig,
    pub requests: RequestConfig,
    pub power: PowerConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            duration_s: 600.0,
            sample_period_s: 1.0,
            tiers: TierCounts { cloud: 2, edge: 2, iot: 4 },
            base_load: 0.4,
            load_skew: 0.0,
            causal_edges: Vec::new(),
            thermal: ThermalConfig::default(),
            noise_std: NoiseStd::default(),
            adaptation_plan: Vec::new(),
            network: NetworkConfig::default(),
            requests: RequestConfig::default(),
            power: PowerConfig::default(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(MetricsError::arg(format!("{name} must be positive, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(MetricsError::arg(format!("{name} must be non-negative, got {v}")))
    }
}

fn probability(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(MetricsError::arg(format!("{name} must lie in [0,1], got {v}")))
    }
}

impl SimConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| MetricsError::arg(format!("simulator config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        positive("duration_s", self.duration_s)?;
        positive("sample_period_s", self.sample_period_s)?;
        let n = self.tiers.total();
        if n == 0 || n > MAX_NODES {
            return Err(MetricsError::arg(format!("node count must be in 1..={MAX_NODES}, got {n}")));
        }
        probability("base_load", self.base_load)?;
        non_negative("load_skew", self.load_skew)?;
        let mut inflow = vec![0.0; n];
        for (k, e) in self.causal_edges.iter().enumerate() {
            if e.src >= n || e.dst >= n {
                return Err(MetricsError::arg(format!("causal edge {k} references a node outside 0..{n}")));
            }
            if e.src == e.dst {
                return Err(MetricsError::arg(format!("causal edge {k} is a self loop")));
            }
            if e.lag == 0 {
                return Err(MetricsError::arg(format!("causal edge {k} needs lag >= 1")));
            }
            if !e.coefficient.is_finite() {
                return Err(MetricsError::arg(format!("causal edge {k} coefficient is not finite")));
            }
            inflow[e.dst] += e.coefficient.abs();
        }
        if let Some(dst) = inflow.iter().position(|&s| s >= 1.0) {
            return Err(MetricsError::arg(format!(
                "absolute coupling into node {dst} sums to {} (must stay below 1)",
                inflow[dst]
            )));
        }
        for tier in Tier::ALL {
            self.thermal.for_tier(tier).check()?;
        }
        non_negative("thermal.heat_per_util", self.thermal.heat_per_util)?;
        non_negative("noise_std.cpu", self.noise_std.cpu)?;
        non_negative("noise_std.temperature", self.noise_std.temperature)?;
        non_negative("noise_std.latency", self.noise_std.latency)?;
        for (k, a) in self.adaptation_plan.iter().enumerate() {
            if let Some((_, msg)) = adaptation_issues(a).into_iter().next() {
                return Err(MetricsError::arg(format!("adaptation_plan[{k}]: {msg}")));
            }
        }
        let net = &self.network;
        positive("network.cloud_edge_capacity_bps", net.cloud_edge_capacity_bps)?;
        positive("network.edge_iot_capacity_bps", net.edge_iot_capacity_bps)?;
        non_negative("network.cloud_edge_latency_ms", net.cloud_edge_latency_ms)?;
        non_negative("network.edge_iot_latency_ms", net.edge_iot_latency_ms)?;
        probability("network.load_fraction", net.load_fraction)?;
        probability("network.loss_rate", net.loss_rate)?;
        let req = &self.requests;
        non_negative("requests.rate_per_s", req.rate_per_s)?;
        positive("requests.mean_service_s", req.mean_service_s)?;
        if req.servers == 0 {
            return Err(MetricsError::arg("requests.servers must be at least 1"));
        }
        probability("requests.success_prob", req.success_prob)?;
        probability("requests.accuracy", req.accuracy)?;
        non_negative("requests.cost_per_s", req.cost_per_s)?;
        non_negative("power.idle_w", self.power.idle_w)?;
        if !(self.power.max_w >= self.power.idle_w && self.power.max_w.is_finite()) {
            return Err(MetricsError::arg("power.max_w must be at least power.idle_w"));
        }
        Ok(())
    }

    /// Tier of every node, in node-index order (cloud, then edge, then iot).
    pub fn node_tiers(&self) -> Vec<Tier> {
        Tier::ALL
            .iter()
            .flat_map(|&t| std::iter::repeat_n(t, self.tiers.get(t)))
            .collect()
    }

    /// Node ids in index order; they also sort lexicographically in this order.
    pub fn node_ids(&self) -> Vec<String> {
        self.node_tiers()
            .iter()
            .enumerate()
            .map(|(i, t)| format!("n{i:03}-{}", t.as_str()))
            .collect()
    }

    /// Relative load of each node, largest (node 0) equal to 1.
    pub fn load_weights(&self) -> Vec<f64> {
        (0..self.tiers.total())
            .map(|i| ((i + 1) as f64).powf(-self.load_skew))
            .collect()
    }

    fn sample_count(&self) -> usize {
        (self.duration_s / self.sample_period_s + 1e-9).floor() as usize + 1
    }
}

#[derive(Clone, Copy)]
#[repr(u64)]
enum Stream {
    Cpu = 1,
    Temperature = 2,
    Latency = 3,
    Loss = 4,
    Requests = 5,
}

/// Independent generator per (signal, index) so that adding a stream leaves
/// the others untouched.
fn stream(seed: u64, signal: Stream, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((signal as u64) << 32) | index as u64);
    rng
}

fn normal(std: f64) -> Normal<f64> {
    Normal::new(0.0, std).expect("std validated")
}

fn cpu_series(cfg: &SimConfig, len: usize) -> Vec<Vec<f64>> {
    let n = cfg.tiers.total();
    let means: Vec<f64> = cfg.load_weights().iter().map(|w| cfg.base_load * w).collect();
    let noise = normal(cfg.noise_std.cpu);
    let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|i| stream(cfg.seed, Stream::Cpu, i)).collect();
    let mut dev = vec![vec![0.0; len]; n];
    for t in 0..len {
        for i in 0..n {
            dev[i][t] = noise.sample(&mut rngs[i]);
        }
        for e in &cfg.causal_edges {
            if t >= e.lag {
                dev[e.dst][t] += e.coefficient * dev[e.src][t - e.lag];
            }
        }
    }
    (0..n)
        .map(|i| dev[i].iter().map(|d| (means[i] + d).clamp(0.0, 1.0)).collect())
        .collect()
}

/// Produces a trace from `cfg`. Identical configs give identical traces.
pub fn simulate(cfg: &SimConfig) -> Result<Trace> {
    cfg.validate()?;
    let len = cfg.sample_count();
    let period = cfg.sample_period_s;
    let tiers = cfg.node_tiers();
    let ids = cfg.node_ids();
    let cpu = cpu_series(cfg, len);
    let time = |k: usize| k as f64 * period;

    let mut node_samples = Vec::with_capacity(len * ids.len());
    let temp_noise = normal(cfg.noise_std.temperature);
    for (i, id) in ids.iter().enumerate() {
        let th = cfg.thermal.for_tier(tiers[i]);
        let decay = (-th.k * period).exp();
        let mut rng = stream(cfg.seed, Stream::Temperature, i);
        let mut temp = th.t0_c;
        for (k, &u) in cpu[i].iter().enumerate().take(len) {
            if k > 0 {
                // exact step of dT/dt = -k (T - Te) + h u with u held constant
                let steady = th.te_c + cfg.thermal.heat_per_util * u / th.k;
                temp = steady + (temp - steady) * decay;
            }
            let (busy, energy) = if k == 0 {
                (0.0, 0.0)
            } else {
                let p = cfg.power.idle_w + (cfg.power.max_w - cfg.power.idle_w) * u;
                (u * period, p * period)
            };
            let observed = if cfg.noise_std.temperature > 0.0 {
                temp + temp_noise.sample(&mut rng)
            } else {
                temp
            };
            node_samples.push(NodeSample {
                node_id: id.clone(),
                timestamp: time(k),
                tier: tiers[i],
                cpu_util: u,
                mem_util: (0.3 + 0.4 * u).clamp(0.0, 1.0),
                energy_j: energy,
                temperature_c: Some(observed),
                busy_s: busy.min(period),
            });
        }
    }

    let mut links = Vec::new();
    for (a, b, cap, lat) in [
        (Tier::Cloud, Tier::Edge, cfg.network.cloud_edge_capacity_bps, cfg.network.cloud_edge_latency_ms),
        (Tier::Edge, Tier::Iot, cfg.network.edge_iot_capacity_bps, cfg.network.edge_iot_latency_ms),
    ] {
        for i in (0..ids.len()).filter(|&i| tiers[i] == a) {
            for j in (0..ids.len()).filter(|&j| tiers[j] == b) {
                links.push((i, j, cap, lat));
                links.push((j, i, cap, lat));
            }
        }
    }
    let lat_noise = normal(cfg.noise_std.latency);
    let mut net_samples = Vec::with_capacity(links.len() * len.saturating_sub(1));
    for (l, &(i, j, cap, base_lat)) in links.iter().enumerate() {
        let mut lat_rng = stream(cfg.seed, Stream::Latency, l);
        let mut loss_rng = stream(cfg.seed, Stream::Loss, l);
        for (k, (&ui, &uj)) in cpu[i].iter().zip(&cpu[j]).enumerate().take(len).skip(1) {
            let load = 0.5 * (ui + uj);
            let offered = cap * cfg.network.load_fraction * load * period / 8.0;
            let sent = (offered / PACKET_BYTES as f64).floor() as u64;
            let delivered = if sent == 0 || cfg.network.loss_rate == 0.0 {
                sent
            } else {
                Binomial::new(sent, 1.0 - cfg.network.loss_rate)
                    .expect("loss rate validated")
                    .sample(&mut loss_rng)
            };
            let jitter = lat_noise.sample(&mut lat_rng);
            net_samples.push(NetSample {
                src: ids[i].clone(),
                dst: ids[j].clone(),
                timestamp: time(k),
                latency_ms: (base_lat * (1.0 + load) + jitter).max(0.0),
                capacity_bps: cap,
                bytes_delivered: delivered * PACKET_BYTES,
                packets_sent: sent,
                packets_delivered: delivered,
            });
        }
    }

    let requests = simulate_requests(cfg, time(len - 1));
    Ok(Trace::from_records(
        DEFAULT_EPOCH,
        node_samples,
        net_samples,
        requests,
        cfg.adaptation_plan.clone(),
    ))
}

/// Poisson arrivals on `[0, horizon)` served FIFO by a fixed server pool.
fn simulate_requests(cfg: &SimConfig, horizon: f64) -> Vec<RequestRecord> {
    let rc = &cfg.requests;
    if rc.rate_per_s == 0.0 {
        return Vec::new();
    }
    let mut rng = stream(cfg.seed, Stream::Requests, 0);
    let gap = Exp::new(rc.rate_per_s).expect("rate validated");
    let service = Exp::new(1.0 / rc.mean_service_s).expect("service mean validated");
    let mut free_at = vec![0.0f64; rc.servers];
    let mut out = Vec::new();
    let mut t = gap.sample(&mut rng);
    while t < horizon {
        let dur: f64 = service.sample(&mut rng);
        let (slot, &free) = free_at
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("at least one server");
        let start = t.max(free);
        let finish = start + dur;
        free_at[slot] = finish;
        let ok = rng.random::<f64>() < rc.success_prob;
        let correct = ok.then(|| rng.random::<f64>() < rc.accuracy);
        out.push(RequestRecord {
            request_id: format!("r{:06}", out.len()),
            arrival_ts: t,
            start_ts: start,
            finish_ts: finish,
            ok,
            correct,
            cost_units: dur * rc.cost_per_s,
        });
        t += gap.sample(&mut rng);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlantedEdge {
    pub src: usize,
    pub dst: usize,
    pub src_id: String,
    pub dst_id: String,
    pub coefficient: f64,
    pub lag: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub node_ids: Vec<String>,
    pub planted_edges: Vec<PlantedEdge>,
    pub load_skew: f64,
    pub load_weights: Vec<f64>,
    /// Long-run mean CPU utilization per node after clamping to [0,1].
    pub expected_cpu_means: Vec<f64>,
    pub thermal: ThermalConfig,
    /// Interval expected to contain the CPU fairness index of a simulated
    /// trace.
    pub expected_cpu_fairness: [f64; 2],
}

/// Band half-width around the expected CPU fairness index, checked against a
/// 100-seed pilot.
pub const FAIRNESS_BAND_HALF_WIDTH: f64 = 0.05;

/// Stationary standard deviation of each node's CPU deviation under the
/// planted coupling.
fn stationary_std(cfg: &SimConfig) -> Vec<f64> {
    let n = cfg.tiers.total();
    let s2 = cfg.noise_std.cpu * cfg.noise_std.cpu;
    let mut var = vec![s2; n];
    for _ in 0..200 {
        let mut next = vec![s2; n];
        for e in &cfg.causal_edges {
            next[e.dst] += e.coefficient * e.coefficient * var[e.src];
        }
        var = next;
    }
    var.into_iter().map(f64::sqrt).collect()
}

/// `E[clamp(X, 0, 1)]` for `X ~ N(mu, s)`.
fn clamped_normal_mean(mu: f64, s: f64) -> f64 {
    if s == 0.0 {
        return mu.clamp(0.0, 1.0);
    }
    let tail = |a: f64| {
        let z = (mu - a) / s;
        let cdf = 0.5 * libm::erfc(-z / std::f64::consts::SQRT_2);
        let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        (mu - a) * cdf + s * pdf
    };
    tail(0.0) - tail(1.0)
}

/// The structure `simulate` plants for `cfg`.
pub fn describe_ground_truth(cfg: &SimConfig) -> Result<GroundTruth> {
    cfg.validate()?;
    let ids = cfg.node_ids();
    let weights = cfg.load_weights();
    let sd = stationary_std(cfg);
    let means: Vec<f64> = weights
        .iter()
        .zip(&sd)
        .map(|(w, s)| clamped_normal_mean(cfg.base_load * w, *s))
        .collect();
    let n = ids.len() as f64;
    let band = if cfg.load_skew == 0.0 {
        [0.99, 1.0]
    } else {
        let centre = jain_fairness(&means).unwrap_or(1.0);
        [
            (centre - FAIRNESS_BAND_HALF_WIDTH).max(1.0 / n),
            (centre + FAIRNESS_BAND_HALF_WIDTH).min(1.0),
        ]
    };
    Ok(GroundTruth {
        seed: cfg.seed,
        planted_edges: cfg
            .causal_edges
            .iter()
            .map(|e| PlantedEdge {
                src: e.src,
                dst: e.dst,
                src_id: ids[e.src].clone(),
                dst_id: ids[e.dst].clone(),
                coefficient: e.coefficient,
                lag: e.lag,
            })
            .collect(),
        node_ids: ids,
        load_skew: cfg.load_skew,
        load_weights: weights,
        expected_cpu_means: means,
        thermal: cfg.thermal,
        expected_cpu_fairness: band,
    })
}
