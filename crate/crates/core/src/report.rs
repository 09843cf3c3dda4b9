//! Full metric report over one trace, plus its JSON and CSV renderings.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::causality::{
    build_causal_matrix, observability_score, CausalSignal, ExplainabilityVector, ObservabilityScore,
};
use crate::classic::{classic_report, ClassicInputs, ClassicReport};
use crate::equilibrium::{equilibrium_report, solve_equilibrium, EquilibriumProblem, EquilibriumReport};
use crate::error::{MetricsError, Result};
use crate::novel::{
    carbon_emissions, evaluate_scenario, fairness_by_resource, fit_cooling, trace_adaptivity, AmdahlOutcome,
    AmdahlScenario, CarbonConfig, FairnessResource, ResourceFairness, DEFAULT_INTENSITY_G_PER_KWH,
};
use crate::quality::{assess_all, MetricRegistry, QualityReport, QualitySettings};
use crate::simulator::GroundTruth;
use crate::telemetry::{Tier, Trace};

pub const SIGNIFICANT_DIGITS: usize = 12;
pub const DEFAULT_LAG: usize = 2;

/// Where the carbon intensity in effect came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntensitySource {
    Default,
    Env,
    Config,
    Flag,
}

/// First defined of flag, config file, environment, built-in default.
pub fn resolve_intensity(flag: Option<f64>, config: Option<f64>, env: Option<&str>) -> Result<(f64, IntensitySource)> {
    let (value, source) = if let Some(v) = flag {
        (v, IntensitySource::Flag)
    } else if let Some(v) = config {
        (v, IntensitySource::Config)
    } else if let Some(raw) = env {
        let v = raw
            .trim()
            .parse::<f64>()
            .map_err(|_| MetricsError::arg(format!("carbon intensity from environment is not a number: `{raw}`")))?;
        (v, IntensitySource::Env)
    } else {
        (DEFAULT_INTENSITY_G_PER_KWH, IntensitySource::Default)
    };
    CarbonConfig::new(value)?;
    Ok((value, source))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmbientConfig {
    pub cloud: Option<f64>,
    pub edge: Option<f64>,
    pub iot: Option<f64>,
}

impl AmbientConfig {
    pub fn for_tier(&self, tier: Tier) -> Option<f64> {
        match tier {
            Tier::Cloud => self.cloud,
            Tier::Edge => self.edge,
            Tier::Iot => self.iot,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualityConfig {
    pub delta: f64,
    pub repeats: usize,
    pub seed: u64,
    pub enabled: bool,
}

impl Default for QualityConfig {
    fn default() -> Self {
        let d = QualitySettings::default();
        QualityConfig {
            delta: d.delta,
            repeats: d.repeats,
            seed: d.seed,
            enabled: true,
        }
    }
}

/// Settings read from the report config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub classic: ClassicInputs,
    pub carbon_intensity_g_per_kwh: Option<f64>,
    pub lag: Option<usize>,
    pub signal: Option<String>,
    pub ambient_c: AmbientConfig,
    pub amdahl: Vec<AmdahlScenario>,
    pub quality: QualityConfig,
}

impl ReportConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| MetricsError::arg(format!("report config: {e}")))
    }
}

/// Effective settings after merging flags, config file and environment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSettings {
    pub classic: ClassicInputs,
    pub carbon_intensity_g_per_kwh: f64,
    pub carbon_source: IntensitySource,
    pub lag: usize,
    pub signal: String,
    pub ambient_c: AmbientConfig,
    pub amdahl: Vec<AmdahlScenario>,
    pub quality: QualityConfig,
    pub window: Option<[f64; 2]>,
    pub explainability: String,
    pub lenient: bool,
}

impl ReportSettings {
    /// Hex SHA-256 of the serialized settings.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("settings serialize");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Inputs that are not plain settings.
#[derive(Debug, Clone, Default)]
pub struct ReportInputs {
    pub explainability: Option<ExplainabilityVector<f64>>,
    pub problem: Option<EquilibriumProblem<f64>>,
    pub ground_truth: Option<GroundTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Meta {
    pub tool: String,
    pub tool_version: String,
    pub trace_epoch: String,
    pub window: Option<[f64; 2]>,
    pub config_digest: String,
    pub settings: ReportSettings,
    pub generated_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThermalNodeFit {
    pub node_id: String,
    pub samples: usize,
    pub te_source: &'static str,
    pub t0_c: Option<f64>,
    pub te_c: Option<f64>,
    pub k: Option<f64>,
    pub rms_residual_c: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CarbonSection {
    pub intensity_g_per_kwh: f64,
    pub intensity_source: IntensitySource,
    pub energy_j: f64,
    pub total_g: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptivitySection {
    pub events: usize,
    pub quotient: Option<f64>,
    pub unit: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NovelSection {
    pub fairness: Vec<ResourceFairness>,
    pub thermal: Vec<ThermalNodeFit>,
    pub carbon: CarbonSection,
    pub adaptivity: AdaptivitySection,
    pub amdahl: Vec<AmdahlOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservabilitySection {
    pub signal: String,
    pub lag: usize,
    pub grid_step_s: Option<f64>,
    pub grid_points: usize,
    pub node_ids: Vec<String>,
    pub causal_matrix: Vec<Vec<f64>>,
    pub undefined_nodes: Vec<String>,
    pub explainability: String,
    pub score: ObservabilityScore<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub meta: Meta,
    pub classic: ClassicReport,
    pub novel: NovelSection,
    pub observability: Option<ObservabilitySection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub equilibrium: Option<EquilibriumReport<f64>>,
    pub metric_quality: Vec<QualityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruth>,
    pub warnings: Vec<String>,
}

/// Per-node cooling fits. Nodes missing any temperature reading are skipped.
pub fn thermal_fits(trace: &Trace, ambient: &AmbientConfig) -> Vec<ThermalNodeFit> {
    trace
        .node_series()
        .into_iter()
        .filter_map(|(id, series)| {
            let pts: Vec<(f64, f64)> = series
                .iter()
                .map(|s| s.temperature_c.map(|c| (s.timestamp, c)))
                .collect::<Option<_>>()?;
            let te = ambient.for_tier(series[0].tier);
            let mut out = ThermalNodeFit {
                node_id: id.to_string(),
                samples: pts.len(),
                te_source: if te.is_some() { "config" } else { "estimated" },
                t0_c: None,
                te_c: None,
                k: None,
                rms_residual_c: None,
                error: None,
            };
            match fit_cooling(&pts, te) {
                Ok(fit) => {
                    out.t0_c = Some(fit.params.t0_c);
                    out.te_c = Some(fit.params.te_c);
                    out.k = Some(fit.params.k);
                    out.rms_residual_c = Some(fit.rms_residual_c);
                }
                Err(e) => out.error = Some(e.to_string()),
            }
            Some(out)
        })
        .collect()
}

/// Observability section for `trace`; explainability defaults to uniform.
pub fn observability_section(
    trace: &Trace,
    signal: CausalSignal,
    lag: usize,
    explainability: Option<&ExplainabilityVector<f64>>,
) -> Result<(ObservabilitySection, Vec<String>)> {
    let est = build_causal_matrix(trace, signal, lag)?;
    let uniform = ExplainabilityVector::uniform(est.matrix.n());
    let ev = explainability.unwrap_or(&uniform);
    let score = observability_score(ev, &est.matrix)?;
    let mut warnings = est.warnings.clone();
    warnings.extend(score.warning.clone());
    Ok((
        ObservabilitySection {
            signal: signal.name().to_string(),
            lag,
            grid_step_s: est.grid_step_s,
            grid_points: est.grid_points,
            node_ids: est.matrix.node_ids().to_vec(),
            causal_matrix: est.matrix.rows(),
            undefined_nodes: est.matrix.undefined_nodes().iter().map(|s| s.to_string()).collect(),
            explainability: if explainability.is_some() { "file" } else { "uniform" }.to_string(),
            score,
        },
        warnings,
    ))
}

/// Builds the report. `generated_at` is the only field that does not follow
/// from the inputs.
pub fn build_report(
    trace: &Trace,
    settings: &ReportSettings,
    inputs: &ReportInputs,
    tool_version: &str,
    generated_at: &str,
) -> Result<MetricReport> {
    let mut warnings = Vec::new();
    let classic = classic_report(trace, &settings.classic);
    warnings.extend(classic.warnings.iter().map(|w| format!("classic: {w}")));
    warnings.extend(classic.network.warnings.iter().map(|w| format!("network: {w}")));

    let fairness: Vec<ResourceFairness> = FairnessResource::ALL
        .iter()
        .map(|&r| fairness_by_resource(trace, r))
        .collect();
    for f in fairness.iter().filter(|f| f.index.is_none()) {
        warnings.push(format!("fairness {:?}: no node carries data", f.resource));
    }
    let thermal = thermal_fits(trace, &settings.ambient_c);
    for t in thermal.iter().filter(|t| t.error.is_some()) {
        warnings.push(format!("thermal {}: {}", t.node_id, t.error.as_deref().unwrap_or_default()));
    }
    let carbon_cfg = CarbonConfig::new(settings.carbon_intensity_g_per_kwh)?;
    let energy_j = classic.energy.total_j;
    let carbon = CarbonSection {
        intensity_g_per_kwh: settings.carbon_intensity_g_per_kwh,
        intensity_source: settings.carbon_source,
        energy_j,
        total_g: carbon_emissions(energy_j, &carbon_cfg).ok(),
    };
    let quotient = match trace_adaptivity(&trace.adaptations) {
        Ok(q) => Some(q),
        Err(e) => {
            warnings.push(format!("adaptivity: {e}"));
            None
        }
    };
    let amdahl = settings
        .amdahl
        .iter()
        .filter_map(|s| {
            evaluate_scenario(s)
                .map_err(|e| warnings.push(format!("amdahl F={} S={}: {e}", s.f_enhanced, s.s_enhanced)))
                .ok()
        })
        .collect();

    let signal: CausalSignal = settings.signal.parse()?;
    let observability = match observability_section(trace, signal, settings.lag, inputs.explainability.as_ref()) {
        Ok((section, w)) => {
            warnings.extend(w.into_iter().map(|w| format!("observability: {w}")));
            Some(section)
        }
        Err(e) => {
            warnings.push(format!("observability: {e}"));
            None
        }
    };

    let equilibrium = match &inputs.problem {
        Some(p) => match solve_equilibrium(p) {
            Ok(sol) => Some(equilibrium_report(p, &sol)),
            Err(e) => {
                warnings.push(format!("equilibrium: {e}"));
                None
            }
        },
        None => None,
    };

    let metric_quality = if settings.quality.enabled {
        let qs = QualitySettings {
            delta: settings.quality.delta,
            repeats: settings.quality.repeats,
            seed: settings.quality.seed,
        };
        if qs.repeats < 2 || qs.delta == 0.0 || !qs.delta.is_finite() {
            return Err(MetricsError::arg("quality needs repeats >= 2 and a finite non-zero delta"));
        }
        assess_all(&MetricRegistry::builtin(), trace, &qs)
    } else {
        Vec::new()
    };

    Ok(MetricReport {
        meta: Meta {
            tool: "dccm".to_string(),
            tool_version: tool_version.to_string(),
            trace_epoch: trace.epoch.clone(),
            window: settings.window,
            config_digest: settings.digest(),
            settings: settings.clone(),
            generated_at: generated_at.to_string(),
        },
        classic,
        novel: NovelSection {
            fairness,
            thermal,
            carbon,
            adaptivity: AdaptivitySection {
                events: trace.adaptations.len(),
                quotient,
                unit: "1/s",
            },
            amdahl,
        },
        observability,
        equilibrium,
        metric_quality,
        ground_truth: inputs.ground_truth.clone(),
        warnings,
    })
}

/// Rounds to `digits` significant digits.
pub fn round_significant(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x).parse().expect("formatted float parses")
}

/// Serializes `value` to a JSON tree with floats rounded and missing values
/// spelled `"undefined"`.
pub fn to_report_value<S: Serialize>(value: &S) -> Value {
    fn walk(v: Value) -> Value {
        match v {
            Value::Null => Value::String("undefined".into()),
            Value::Number(n) if n.is_f64() => {
                let x = round_significant(n.as_f64().expect("f64"), SIGNIFICANT_DIGITS);
                serde_json::Number::from_f64(x).map_or(Value::String("undefined".into()), Value::Number)
            }
            Value::Array(a) => Value::Array(a.into_iter().map(walk).collect()),
            Value::Object(m) => Value::Object(m.into_iter().map(|(k, v)| (k, walk(v))).collect()),
            other => other,
        }
    }
    walk(serde_json::to_value(value).expect("report serializes"))
}

pub fn render_json<S: Serialize>(value: &S) -> String {
    let mut s = serde_json::to_string_pretty(&to_report_value(value)).expect("json renders");
    s.push('\n');
    s
}

/// `path,value` lines for every numeric, boolean or undefined leaf.
pub fn render_csv<S: Serialize>(value: &S) -> String {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
        let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
        match v {
            Value::Object(m) => m.iter().for_each(|(k, v)| walk(&join(k), v, out)),
            Value::Array(a) => a.iter().enumerate().for_each(|(i, v)| walk(&join(&i.to_string()), v, out)),
            Value::Number(n) => out.push((prefix.to_string(), n.to_string())),
            Value::Bool(b) => out.push((prefix.to_string(), b.to_string())),
            Value::String(s) if s == "undefined" => out.push((prefix.to_string(), s.clone())),
            _ => {}
        }
    }
    let mut rows = Vec::new();
    walk("", &to_report_value(value), &mut rows);
    let mut out = String::from("metric,value\n");
    for (k, v) in rows {
        out.push_str(&k);
        out.push(',');
        out.push_str(&v);
        out.push('\n');
    }
    out
}

/// Removes `meta.generated_at` so two renderings can be compared.
pub fn strip_generated_at(report_json: &str) -> Result<Value> {
    let mut v: Value = serde_json::from_str(report_json).map_err(|e| MetricsError::data(format!("report: {e}")))?;
    if let Some(Value::Object(meta)) = v.get_mut("meta") {
        meta.remove("generated_at");
    }
    Ok(v)
}
