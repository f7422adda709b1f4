use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use regretctl::config::parse_system;
use regretctl::files::{ControllerFile, InstanceFile};
use regretctl_core::lifting::{evaluate_cost, lift_system};
use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_regretctl"));
    c.env_remove("REGRETCTL_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn field(out: &str, key: &str) -> f64 {
    out.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no `{key}` in {out}"))
        .parse()
        .unwrap()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, v: &Value) -> String {
        let p = self.path(name);
        std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
        p.to_str().unwrap().to_string()
    }

    fn p(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }
}

fn two_state(horizon: usize) -> Value {
    json!({
        "horizon": horizon,
        "lti": {
            "A": [[0.9, 0.3], [-0.2, 1.0]],
            "Bu": [[0.0], [1.0]],
            "Bw": [[1.0, 0.0], [0.0, 0.5]],
            "C": [[1.0, 0.0]],
            "Q": [[1.0, 0.0], [0.0, 1.0]],
            "QT": [[3.0, 0.0], [0.0, 3.0]],
            "R": [[2.0]]
        },
        "labels": {"name": "two-state"}
    })
}

fn read_json<T: serde::de::DeserializeOwned>(p: &str) -> T {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn synth_then_eval_round_trip() {
    let ws = Workspace::new();
    let sys = ws.write("sys.json", &two_state(6));
    let kc = ws.p("kc.json");
    let o = run(&["synth", "--system", &sys, "--out", &kc]);
    assert!(o.status.success(), "{}", stderr(&o));
    let gamma = field(&stdout(&o), "gamma_opt");
    let cert = field(&stdout(&o), "certificate_lambda_max");
    assert!(cert <= gamma * gamma * (1.0 + 1e-6));
    let file: ControllerFile = read_json(&kc);
    assert_eq!(file.gamma_opt, Some(gamma));
    assert!(file.causal);
    assert_eq!(file.origin, "regret_optimal");

    let inst = ws.write("z.json", &json!({"w": (0..12).map(|i| (i as f64 * 0.37).sin()).collect::<Vec<_>>(),
                                          "v": (0..6).map(|i| (i as f64 * 0.11).cos()).collect::<Vec<_>>()}));
    let o = run(&["eval", "--system", &sys, "--controller", &kc, "--instance", &inst]);
    assert!(o.status.success(), "{}", stderr(&o));
    let printed = field(&stdout(&o), "cost");

    // same cost in memory, bit for bit
    let loaded = parse_system(&std::fs::read_to_string(&sys).unwrap()).unwrap();
    let lift = lift_system(&loaded.system).unwrap();
    let c = file.into_controller(&loaded, &lift, false).unwrap();
    let z = read_json::<InstanceFile>(&inst).instance().unwrap();
    assert_eq!(printed, evaluate_cost(&lift, c.youla(), &z).unwrap());
    assert!(field(&stdout(&o), "regret_ratio") <= gamma * gamma * (1.0 + 1e-6));
}

#[test]
fn single_step_synthesis_is_zero() {
    let ws = Workspace::new();
    let sys = ws.write(
        "sys.json",
        &json!({"horizon": 1, "lti": {"A": [[1]], "Bu": [[1]], "Bw": [[1]], "C": [[1]], "Q": [[1]], "QT": [[1]], "R": [[1]]}}),
    );
    let kc = ws.p("kc.json");
    let o = run(&["synth", "--system", &sys, "--out", &kc]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(field(&stdout(&o), "gamma_opt") <= 1e-10);
    let file: ControllerFile = read_json(&kc);
    assert_eq!(file.youla_q, vec![vec![0.0]]);
}

#[test]
fn zero_instance_has_zero_cost_and_regret() {
    let ws = Workspace::new();
    let sys = ws.write("sys.json", &two_state(3));
    let k = ws.p("k.json");
    assert!(run(&["benchmark", "--system", &sys, "--kind", "causal-h2", "--out", &k]).status.success());
    let inst = ws.write("z.json", &json!({"w": vec![0.0; 6], "v": vec![0.0; 3]}));
    let o = run(&["eval", "--system", &sys, "--controller", &k, "--instance", &inst]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(field(&stdout(&o), "cost"), 0.0);
    assert_eq!(field(&stdout(&o), "regret"), 0.0);
}

#[test]
fn digest_mismatch_needs_force() {
    let ws = Workspace::new();
    let sys = ws.write("sys.json", &two_state(3));
    let mut other = two_state(3);
    other["lti"]["R"] = json!([[5.0]]);
    let other = ws.write("other.json", &other);
    let k = ws.p("k.json");
    assert!(run(&["benchmark", "--system", &sys, "--kind", "noncausal-h2", "--out", &k]).status.success());
    let inst = ws.write("z.json", &json!({"w": vec![1.0; 6], "v": vec![1.0; 3]}));
    let o = run(&["eval", "--system", &other, "--controller", &k, "--instance", &inst]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("system_digest"), "{}", stderr(&o));
    let o = run(&["eval", "--system", &other, "--controller", &k, "--instance", &inst, "--force"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn invalid_inputs_exit_3() {
    let ws = Workspace::new();
    let mut bad = two_state(3);
    bad["lti"]["Q"] = json!([[1.0, 0.0], [0.0, -1.0]]);
    let bad = ws.write("bad.json", &bad);
    let o = run(&["benchmark", "--system", &bad, "--kind", "causal-h2", "--out", &ws.p("k.json")]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("Q"), "{}", stderr(&o));

    let o = run(&["benchmark", "--system", &ws.p("missing.json"), "--kind", "causal-h2", "--out", &ws.p("k.json")]);
    assert_eq!(o.status.code(), Some(3));

    let o = run(&["synth", "--bogus"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn fixed_level_below_optimum_exits_2() {
    let ws = Workspace::new();
    let sys = ws.write("sys.json", &two_state(5));
    let kc = ws.p("kc.json");
    let o = run(&["synth", "--system", &sys, "--out", &kc]);
    let gamma = field(&stdout(&o), "gamma_opt");
    let low = format!("{}", 0.9 * gamma);
    let o = run(&["synth", "--system", &sys, "--gamma", &low, "--out", &ws.p("low.json")]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let high = format!("{}", 1.1 * gamma);
    let o = run(&["synth", "--system", &sys, "--gamma", &high, "--out", &ws.p("high.json")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let file: ControllerFile = read_json(&ws.p("high.json"));
    assert_eq!(file.gamma_opt, Some(1.1 * gamma));
}

#[test]
fn noncausal_simulation_is_rejected() {
    let ws = Workspace::new();
    let sys = ws.write("sys.json", &two_state(3));
    let k = ws.p("k.json");
    run(&["benchmark", "--system", &sys, "--kind", "noncausal-h2", "--out", &k]);
    let d = ws.write("d.json", &json!({"kind": "gaussian", "sigma_w": 1.0, "sigma_v": 1.0}));
    let o = run(&["simulate", "--system", &sys, "--controller", &k, "--disturbance", &d, "--seed", "1", "--csv", &ws.p("t.csv")]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("evaluate_cost"), "{}", stderr(&o));
}

fn read_csv(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(p).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect();
    (header, rows)
}

#[test]
fn simulate_csv_round_trips_and_seed_env_matches_flag() {
    let ws = Workspace::new();
    let sys = ws.write("sys.json", &two_state(4));
    let k = ws.p("k.json");
    run(&["benchmark", "--system", &sys, "--kind", "causal-h2", "--out", &k]);
    let d = ws.write("d.json", &json!({"kind": "gaussian", "sigma_w": 1.0, "sigma_v": 0.3, "seed": 99}));
    let a = ws.p("a.csv");
    let o = run(&["simulate", "--system", &sys, "--controller", &k, "--disturbance", &d, "--seed", "5", "--csv", &a]);
    assert!(o.status.success(), "{}", stderr(&o));
    let total = field(&stdout(&o), "total_cost");

    let (header, rows) = read_csv(Path::new(&a));
    assert_eq!(header[0], "t");
    assert_eq!(header.last().unwrap(), "stage_cost");
    assert_eq!(header.len(), 1 + 2 + 1 + 1 + 2 + 1 + 1);
    assert_eq!(rows.len(), 5);
    let stage_sum: f64 = rows.iter().map(|r| r.last().unwrap().parse::<f64>().unwrap()).sum();
    assert!((stage_sum - total).abs() <= 1e-12 * total.max(1.0));

    // lossless: the CSV agrees with an in-memory simulation bit for bit
    use regretctl::files::{DisturbanceFile, Resolver};
    let loaded = parse_system(&std::fs::read_to_string(&sys).unwrap()).unwrap();
    let lift = lift_system(&loaded.system).unwrap();
    let c = read_json::<ControllerFile>(&k).into_controller(&loaded, &lift, false).unwrap();
    let resolver = Resolver { loaded: &loaded, lift: &lift, base_dir: ws.dir.path().to_path_buf(), force: false };
    let spec = read_json::<DisturbanceFile>(&d).resolve(&resolver, Some(5)).unwrap();
    let inst = regretctl_core::sim::gen_disturbance(&lift, &spec).unwrap();
    let traj = regretctl_core::sim::simulate_controller(&loaded.system, &lift, &c, &inst).unwrap();
    for (t, row) in rows.iter().enumerate() {
        assert_eq!(row[1].parse::<f64>().unwrap(), traj.x[t][0]);
        assert_eq!(row.last().unwrap().parse::<f64>().unwrap(), traj.stage_costs[t]);
    }
    assert_eq!(rows[0][3].parse::<f64>().unwrap(), traj.u[0][0]);

    let b = ws.p("b.csv");
    let o = bin()
        .args(["simulate", "--system", &sys, "--controller", &k, "--disturbance", &d, "--csv", &b])
        .env("REGRETCTL_SEED", "5")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn compare_on_worst_case_reaches_certified_ratio() {
    let ws = Workspace::new();
    let sys = ws.write("sys.json", &two_state(6));
    let kc = ws.p("kc.json");
    let o = run(&["synth", "--system", &sys, "--out", &kc]);
    let gamma = field(&stdout(&o), "gamma_opt");
    let h2 = ws.p("h2.json");
    run(&["benchmark", "--system", &sys, "--kind", "causal-h2", "--out", &h2]);
    let d = ws.write("d.json", &json!({"kind": "worst_case", "target": "kc.json", "benchmark": "noncausal-h2", "normalize_to": 2.0}));
    let table = ws.p("table.csv");
    let o = run(&["compare", "--system", &sys, "--controllers", &kc, &h2, "--disturbance", &d, "--reps", "2", "--csv", &table]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_csv(Path::new(&table));
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let ratio: f64 = rows[0][col("max_regret_ratio")].parse().unwrap();
    assert!((ratio - gamma * gamma).abs() <= 1e-6 * gamma * gamma, "{ratio} vs {}", gamma * gamma);
    assert_eq!(rows[0][col("bound_violations")], "0");
    let h2_ratio: f64 = rows[1][col("max_regret_ratio")].parse().unwrap();
    assert!(h2_ratio >= ratio * (1.0 - 1e-9));
}

#[test]
fn switching_disturbance_with_bad_segments_exits_3() {
    let ws = Workspace::new();
    let sys = ws.write("sys.json", &two_state(4));
    let k = ws.p("k.json");
    run(&["benchmark", "--system", &sys, "--kind", "causal-h2", "--out", &k]);
    let g = json!({"kind": "gaussian", "sigma_w": 1.0, "sigma_v": 1.0});
    let d = ws.write("d.json", &json!({"kind": "switching", "segments": [
        {"start": 0, "end": 2, "spec": g}, {"start": 3, "end": 4, "spec": g}]}));
    let o = run(&["compare", "--system", &sys, "--controllers", &k, "--disturbance", &d, "--csv", &ws.p("t.csv")]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}
