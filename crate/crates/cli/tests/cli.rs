use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use dcc_metrics::novel::{fairness_by_resource, trace_adaptivity, FairnessResource};
use dcc_metrics::report::round_significant;
use dcc_metrics::telemetry::{load_trace, Strictness};

fn dccm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dccm"))
        .args(args)
        .env_remove("CM_CARBON_INTENSITY")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let f = Fixture { dir: tempfile::tempdir().unwrap() };
        std::fs::write(
            f.path("sim.json"),
            r#"{"seed": 11, "duration_s": 60, "load_skew": 1.5,
                "adaptation_plan": [{"event_id": "e1", "p_base": 1, "p_post": 2, "t_adapt_s": 1, "polarity": "higher_better"}]}"#,
        )
        .unwrap();
        let o = dccm(&["simulate", "--config", &f.arg("sim.json"), "--out", &f.arg("trace.jsonl"), "--ground-truth", &f.arg("gt.json")]);
        assert!(o.status.success(), "{}", stderr(&o));
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn write(&self, name: &str, text: &str) -> String {
        std::fs::write(self.path(name), text).unwrap();
        self.arg(name)
    }
}

fn load(path: &Path) -> dcc_metrics::telemetry::Trace {
    load_trace(std::io::BufReader::new(std::fs::File::open(path).unwrap()), Strictness::Strict)
        .unwrap()
        .trace
}

#[test]
fn validate_reports_violation_count() {
    let f = Fixture::new();
    let o = dccm(&["validate", "--in", &f.arg("trace.jsonl")]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "0 violations\n");

    let bad = f.write(
        "bad.jsonl",
        concat!(
            r#"{"kind":"node","node_id":"a","timestamp":0,"tier":"edge","cpu_util":0.5,"mem_util":0.1,"energy_j":0,"busy_s":0}"#, "\n",
            r#"{"kind":"node","node_id":"a","timestamp":1,"tier":"edge","cpu_util":1.5,"mem_util":0.1,"energy_j":1,"busy_s":0.5}"#, "\n",
        ),
    );
    let o = dccm(&["validate", "--in", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o), "1 violations\n");

    let o = dccm(&["fairness", "--in", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cpu_util out of [0,1] at line 2"), "{}", stderr(&o));
    let o = dccm(&["fairness", "--in", &bad, "--lenient"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("warning"));
}

#[test]
fn usage_errors_exit_two() {
    let f = Fixture::new();
    assert_eq!(dccm(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(dccm(&["validate", "--nope"]).status.code(), Some(2));
    assert_eq!(dccm(&["report"]).status.code(), Some(2));
    let t = f.arg("trace.jsonl");
    for args in [
        vec!["fairness", "--in", &t, "--resource", "gpu"],
        vec!["fairness", "--in", &t, "--window", "10"],
        vec!["fairness", "--in", &t, "--window", "20:10"],
        vec!["observability", "--in", &t, "--lag", "0"],
        vec!["thermal-fit", "--in", &t, "--node", "missing"],
        vec!["quality", "--metric", "fairness.cpu"],
        vec!["quality", "--in", &t, "--metric", "nope"],
    ] {
        let o = dccm(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(stdout(&o).is_empty());
    }
    assert_eq!(dccm(&["--help"]).status.code(), Some(0));
}

#[test]
fn fairness_and_adaptivity_match_library() {
    let f = Fixture::new();
    let trace = load(&f.path("trace.jsonl"));
    for (flag, resource) in [("cpu", FairnessResource::Cpu), ("bandwidth", FairnessResource::Bandwidth)] {
        let o = dccm(&["fairness", "--in", &f.arg("trace.jsonl"), "--resource", flag]);
        assert!(o.status.success());
        let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
        let expect = fairness_by_resource(&trace, resource).index.unwrap();
        assert_eq!(v["index"].as_f64().unwrap(), round_significant(expect, 12));
    }
    let o = dccm(&["adaptivity", "--in", &f.arg("trace.jsonl")]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["quotient"].as_f64(), Some(trace_adaptivity(&trace.adaptations).unwrap()));
    assert_eq!(v["quotient"].as_f64(), Some(2.0));
}

#[test]
fn report_formats_and_carbon_precedence() {
    let f = Fixture::new();
    let t = f.arg("trace.jsonl");
    let cfg = f.write("report.json", r#"{"carbon_intensity_g_per_kwh": 300, "amdahl": [{"f_enhanced": 0.5, "s_enhanced": 2}], "quality": {"enabled": false}}"#);

    let run = |extra: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_dccm"));
        cmd.args(["report", "--in", &t, "--no-quality"]).args(extra).env_remove("CM_CARBON_INTENSITY");
        if let Some(v) = env {
            cmd.env("CM_CARBON_INTENSITY", v);
        }
        let o = cmd.output().unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        serde_json::from_str::<Value>(&stdout(&o)).unwrap()
    };
    let source = |v: &Value| (v["novel"]["carbon"]["intensity_source"].clone(), v["novel"]["carbon"]["intensity_g_per_kwh"].as_f64());
    assert_eq!(source(&run(&[], None)), ("default".into(), Some(400.0)));
    assert_eq!(source(&run(&[], Some("123"))), ("env".into(), Some(123.0)));
    assert_eq!(source(&run(&["--config", &cfg], Some("123"))), ("config".into(), Some(300.0)));
    assert_eq!(source(&run(&["--config", &cfg, "--carbon-intensity", "50"], Some("123"))), ("flag".into(), Some(50.0)));

    let v = run(&["--config", &cfg], None);
    assert_eq!(v["novel"]["amdahl"][0]["overall_speedup"].as_f64(), Some(1.33333333333));
    assert_eq!(v["metric_quality"].as_array().unwrap().len(), 0);

    let o = dccm(&["report", "--in", &t, "--no-quality", "--format", "csv", "--window", "10:40"]);
    assert!(o.status.success());
    let csv = stdout(&o);
    assert!(csv.starts_with("metric,value\n"));
    assert!(csv.contains("meta.window.0,10.0\n"));
    assert!(csv.lines().skip(1).all(|l| l.split(',').count() == 2));
}

#[test]
fn report_with_problem_and_ground_truth() {
    let f = Fixture::new();
    let problem = f.write(
        "problem.json",
        r#"{"r_axis":[1,2,3],"c_axis":[1,2],"q_surface":[[1,0],[3,1],[2,9]],"c_max":1.5,"r_min":1}"#,
    );
    let out = f.arg("r.json");
    let o = dccm(&["report", "--in", &f.arg("trace.jsonl"), "--seed-config", &f.arg("sim.json"), "--problem", &problem, "--no-quality", "--out", &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["equilibrium"]["solution"]["q_star"].as_f64(), Some(3.0));
    let gt: Value = serde_json::from_str(&std::fs::read_to_string(f.path("gt.json")).unwrap()).unwrap();
    assert_eq!(v["ground_truth"], gt);
    assert!(v["novel"]["thermal"].as_array().unwrap().iter().all(|n| n["te_source"] == "config"));

    let o = dccm(&["equilibrium", "--problem", &problem]);
    let eq: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(eq, v["equilibrium"]);

    let infeasible = f.write(
        "inf.json",
        r#"{"r_axis":[1,2],"c_axis":[5,6],"q_surface":[1,2,3,4],"c_max":1,"r_min":0}"#,
    );
    let o = dccm(&["equilibrium", "--problem", &infeasible]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("c_max"));
}

#[test]
fn observability_with_explainability_file() {
    let f = Fixture::new();
    let ev = f.write("ev.jsonl", "{\"node_id\":\"n000-cloud\",\"e_local\":0.5,\"gamma\":2}\n");
    let o = dccm(&["observability", "--in", &f.arg("trace.jsonl"), "--explainability", &ev]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["explainability"], "file");
    // (2 * 0.5 + 7 * 1) / 8
    assert_eq!(v["score"]["mean_explainability"].as_f64(), Some(1.0));
    let bad = f.write("bad_ev.jsonl", "{\"node_id\":\"ghost\",\"e_local\":0.5}\n");
    assert_eq!(dccm(&["observability", "--in", &f.arg("trace.jsonl"), "--explainability", &bad]).status.code(), Some(1));
}

#[test]
fn quality_subcommand() {
    let f = Fixture::new();
    let o = dccm(&["quality", "--list"]);
    let list: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let list = list.as_array().unwrap();
    assert_eq!(list.len(), 20);
    assert!(list.iter().all(|m| m["unit"].is_string() && m["fingerprint"].as_str().unwrap().len() == 64));

    let t = f.arg("trace.jsonl");
    let o = dccm(&["quality", "--in", &t, "--metric", "fairness.cpu", "--irrelevant", "temperature_c", "--repeats", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["independence"]["delta"].as_f64(), Some(0.0));
    assert_eq!(v["repeatability"]["cv"].as_f64(), Some(0.0));
    assert_eq!(v["consistency"]["consistent"], true);

    let o = dccm(&["quality", "--in", &t, "--metric", "fairness.cpu", "--irrelevant", "cpu_util"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("declares node.cpu_util"));

    let o = dccm(&["quality", "--in", &t, "--metric", "cpu_util.fleet_mean", "--delta", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_to_stdout_is_deterministic() {
    let f = Fixture::new();
    let a = dccm(&["simulate", "--config", &f.arg("sim.json")]);
    let b = dccm(&["simulate", "--config", &f.arg("sim.json")]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout(&a), std::fs::read_to_string(f.path("trace.jsonl")).unwrap());
    let bad = f.write("bad_sim.json", r#"{"sample_period_s": -1}"#);
    let o = dccm(&["simulate", "--config", &bad, "--out", &f.arg("never.jsonl")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!f.path("never.jsonl").exists());
}
