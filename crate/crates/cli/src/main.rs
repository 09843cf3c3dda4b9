use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dcc_metrics::causality::{load_explainability, CausalSignal, ExplainabilityVector};
use dcc_metrics::equilibrium::{equilibrium_report, parse_problem, solve_equilibrium};
use dcc_metrics::novel::{fairness_by_resource, trace_adaptivity, FairnessResource};
use dcc_metrics::quality::{
    assess, consistency, independence, repeatability, sensitivity, MetricHandle, MetricRegistry,
    QualitySettings, TraceField,
};
use dcc_metrics::report::{
    build_report, observability_section, render_csv, render_json, resolve_intensity, thermal_fits,
    AmbientConfig, ReportConfig, ReportInputs, ReportSettings, DEFAULT_LAG,
};
use dcc_metrics::simulator::{describe_ground_truth, simulate, SimConfig};
use dcc_metrics::telemetry::{
    load_trace, parse_records, parse_window, validate_trace, window, write_trace, Strictness, Trace,
};
use dcc_metrics::{MetricsError, Result};

const INTENSITY_ENV: &str = "CM_CARBON_INTENSITY";

#[derive(Parser)]
#[command(name = "dccm", version, about = "Metrics for cloud/edge/IoT telemetry traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic trace from a simulator config
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the planted ground truth as JSON
        #[arg(long)]
        ground_truth: Option<PathBuf>,
    },
    /// Check every record and cross-record invariant of a trace
    Validate {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Compute the full metric report
    Report(ReportArgs),
    /// Jain fairness index of one resource
    Fairness {
        #[command(flatten)]
        trace: TraceArgs,
        #[arg(long, default_value = "cpu")]
        resource: String,
    },
    /// Causal matrix and observability score
    Observability {
        #[command(flatten)]
        trace: TraceArgs,
        #[arg(long)]
        explainability: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_LAG)]
        lag: usize,
        #[arg(long, default_value = "cpu_util")]
        signal: String,
    },
    /// Fit a cooling curve to each node's temperature series
    ThermalFit {
        #[command(flatten)]
        trace: TraceArgs,
        /// Fit only this node
        #[arg(long)]
        node: Option<String>,
        /// Known ambient temperature (°C); estimated when omitted
        #[arg(long)]
        ambient: Option<f64>,
    },
    /// Adaptivity quotient of the trace's adaptation events
    Adaptivity {
        #[command(flatten)]
        trace: TraceArgs,
    },
    /// Solve a QoS/cost/resource trade-off problem
    Equilibrium {
        #[arg(long)]
        problem: PathBuf,
    },
    /// Metric registry and quality experiments
    Quality(QualityArgs),
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Restrict to `start:end` seconds
    #[arg(long)]
    window: Option<String>,
    /// Drop invalid records with a warning instead of failing
    #[arg(long)]
    lenient: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    trace: TraceArgs,
    /// Report settings (JSON)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Simulator config the trace came from; adds ground truth and ambient temperatures
    #[arg(long)]
    seed_config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<PathBuf>,
    #[arg(long)]
    explainability: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid carbon intensity, gCO2/kWh
    #[arg(long)]
    carbon_intensity: Option<f64>,
    #[arg(long)]
    lag: Option<usize>,
    #[arg(long)]
    signal: Option<String>,
    /// Skip the metric-quality experiments
    #[arg(long)]
    no_quality: bool,
}

#[derive(Args)]
struct QualityArgs {
    /// List registry metrics and exit
    #[arg(long)]
    list: bool,
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Second trace for the consistency check
    #[arg(long)]
    other: Option<PathBuf>,
    /// Metric to assess; all metrics when omitted
    #[arg(long)]
    metric: Option<String>,
    /// Field perturbed by the sensitivity experiment
    #[arg(long)]
    field: Option<String>,
    /// Field randomized by the independence experiment
    #[arg(long)]
    irrelevant: Option<String>,
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    lenient: bool,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| MetricsError::Io(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| MetricsError::Io(format!("{}: {e}", path.display())))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| MetricsError::Io(format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn load(path: &Path, lenient: bool) -> Result<Trace> {
    let strictness = if lenient { Strictness::Lenient } else { Strictness::Strict };
    let loaded = load_trace(open(path)?, strictness)?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    Ok(loaded.trace)
}

fn load_windowed(args: &TraceArgs) -> Result<(Trace, Option<[f64; 2]>)> {
    let trace = load(&args.input, args.lenient)?;
    match &args.window {
        Some(w) => {
            let (a, b) = parse_window(w)?;
            Ok((window(&trace, a, b)?, Some([a, b])))
        }
        None => Ok((trace, None)),
    }
}

fn print_json<S: Serialize>(value: &S) -> Result<()> {
    write_output(None, &render_json(value))
}

fn explainability_for(path: Option<&Path>, trace: &Trace) -> Result<Option<ExplainabilityVector<f64>>> {
    path.map(|p| load_explainability(open(p)?, &trace.node_ids)).transpose()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out, ground_truth } => {
            let cfg = SimConfig::from_json(&read_text(&config)?)?;
            let trace = simulate(&cfg)?;
            let gt = ground_truth.map(|p| describe_ground_truth(&cfg).map(|g| (p, g))).transpose()?;
            match out {
                Some(p) => {
                    let file = File::create(&p).map_err(|e| MetricsError::Io(format!("{}: {e}", p.display())))?;
                    let mut w = io::BufWriter::new(file);
                    write_trace(&trace, &mut w)?;
                    w.flush()?;
                }
                None => write_trace(&trace, io::stdout().lock())?,
            }
            if let Some((p, g)) = gt {
                write_output(Some(&p), &render_json(&g))?;
            }
            Ok(())
        }
        Command::Validate { input } => {
            let trace = parse_records(open(&input)?)?;
            let report = validate_trace(&trace);
            for v in &report.violations {
                eprintln!("{}: {} ({})", v.invariant, v.detail, v.record);
            }
            write_output(None, &format!("{} violations\n", report.violations.len()))?;
            if report.is_clean() {
                Ok(())
            } else {
                Err(MetricsError::Data(format!("{} violations", report.violations.len())))
            }
        }
        Command::Report(args) => report(args),
        Command::Fairness { trace, resource } => {
            let resource: FairnessResource = resource.parse()?;
            let (trace, _) = load_windowed(&trace)?;
            print_json(&fairness_by_resource(&trace, resource))
        }
        Command::Observability { trace, explainability, lag, signal } => {
            let signal: CausalSignal = signal.parse()?;
            let (trace, _) = load_windowed(&trace)?;
            let ev = explainability_for(explainability.as_deref(), &trace)?;
            let (section, warnings) = observability_section(&trace, signal, lag, ev.as_ref())?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            print_json(&section)
        }
        Command::ThermalFit { trace, node, ambient } => {
            let (trace, _) = load_windowed(&trace)?;
            let ambient_cfg = AmbientConfig { cloud: ambient, edge: ambient, iot: ambient };
            let fits: Vec<_> = thermal_fits(&trace, &ambient_cfg)
                .into_iter()
                .filter(|f| node.as_ref().is_none_or(|n| *n == f.node_id))
                .collect();
            if let Some(n) = &node {
                if fits.is_empty() {
                    return Err(MetricsError::Argument(format!("no temperature series for node `{n}`")));
                }
            }
            print_json(&fits)
        }
        Command::Adaptivity { trace } => {
            let (trace, _) = load_windowed(&trace)?;
            let q = trace_adaptivity(&trace.adaptations)?;
            print_json(&serde_json::json!({
                "events": trace.adaptations.len(),
                "quotient": q,
                "unit": "1/s",
            }))
        }
        Command::Equilibrium { problem } => {
            let p = parse_problem(&read_text(&problem)?)?;
            let sol = solve_equilibrium(&p)?;
            print_json(&equilibrium_report(&p, &sol))
        }
        Command::Quality(args) => quality(args),
    }
}

fn report(args: ReportArgs) -> Result<()> {
    let config = match &args.config {
        Some(p) => ReportConfig::from_json(&read_text(p)?)?,
        None => ReportConfig::default(),
    };
    let env = std::env::var(INTENSITY_ENV).ok();
    let (intensity, source) =
        resolve_intensity(args.carbon_intensity, config.carbon_intensity_g_per_kwh, env.as_deref())?;
    let sim = args
        .seed_config
        .as_ref()
        .map(|p| SimConfig::from_json(&read_text(p)?))
        .transpose()?;
    let mut ambient = config.ambient_c.clone();
    if let Some(cfg) = &sim {
        ambient.cloud = ambient.cloud.or(Some(cfg.thermal.cloud.te_c));
        ambient.edge = ambient.edge.or(Some(cfg.thermal.edge.te_c));
        ambient.iot = ambient.iot.or(Some(cfg.thermal.iot.te_c));
    }
    let mut quality = config.quality.clone();
    if args.no_quality {
        quality.enabled = false;
    }
    let (trace, win) = load_windowed(&args.trace)?;
    let settings = ReportSettings {
        classic: config.classic.clone(),
        carbon_intensity_g_per_kwh: intensity,
        carbon_source: source,
        lag: args.lag.or(config.lag).unwrap_or(DEFAULT_LAG),
        signal: args.signal.clone().or(config.signal.clone()).unwrap_or_else(|| "cpu_util".into()),
        ambient_c: ambient,
        amdahl: config.amdahl.clone(),
        quality,
        window: win,
        explainability: if args.explainability.is_some() { "file" } else { "uniform" }.into(),
        lenient: args.trace.lenient,
    };
    let inputs = ReportInputs {
        explainability: explainability_for(args.explainability.as_deref(), &trace)?,
        problem: args.problem.as_ref().map(|p| parse_problem(&read_text(p)?)).transpose()?,
        ground_truth: sim.as_ref().map(describe_ground_truth).transpose()?,
    };
    let generated_at = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let report = build_report(&trace, &settings, &inputs, env!("CARGO_PKG_VERSION"), &generated_at)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let text = match args.format {
        Format::Json => render_json(&report),
        Format::Csv => render_csv(&report),
    };
    write_output(args.out.as_deref(), &text)
}

fn quality(args: QualityArgs) -> Result<()> {
    let registry = MetricRegistry::builtin();
    if args.list {
        return print_json(&registry.listing());
    }
    let input = args
        .input
        .as_ref()
        .ok_or_else(|| MetricsError::Argument("quality needs --in (or --list)".into()))?;
    let trace = load(input, args.lenient)?;
    let settings = QualitySettings { delta: args.delta, repeats: args.repeats, seed: args.seed };
    let Some(name) = &args.metric else {
        let reports: Vec<_> = registry
            .metrics()
            .iter()
            .map(|m| assess(&registry, &MetricHandle::new(&m.name), &trace, &settings))
            .collect::<Result<_>>()?;
        return print_json(&reports);
    };
    let handle = MetricHandle::new(name);
    let def = registry.lookup(name)?;
    let field: TraceField = match &args.field {
        Some(f) => f.parse()?,
        None => def.inputs.first().copied().unwrap_or(TraceField::CpuUtil),
    };
    let other = args.other.as_ref().map(|p| load(p, args.lenient)).transpose()?;
    let mut out = serde_json::json!({
        "metric": name,
        "unit": def.unit,
        "sensitivity": {
            "field": field.name(),
            "delta": args.delta,
            "value": sensitivity(&registry, &handle, &trace, field, args.delta)?,
        },
        "repeatability": repeatability(&registry, &handle, &trace, args.repeats)?,
        "consistency": consistency(&registry, &handle, &trace, other.as_ref().unwrap_or(&trace))?,
    });
    if let Some(f) = &args.irrelevant {
        let field: TraceField = f.parse()?;
        out["independence"] = serde_json::json!({
            "field": field.name(),
            "seed": args.seed,
            "delta": independence(&registry, &handle, &trace, field, args.seed)?,
        });
    }
    print_json(&out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_argument_error() { 2 } else { 1 })
        }
    }
}
