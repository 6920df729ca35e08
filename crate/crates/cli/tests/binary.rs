use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const HEADER: &str = r#"
[physics]
p = 3.0
alpha = 0.5
[grid]
dx = 0.1
half_len = 30.0
[time]
dt = 0.05
t_max = 40.0
"#;

fn nlkg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlkg")).args(args).env("NLKG_LOG", "error").output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, scenario: &str, section: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, format!("scenario = \"{scenario}\"\n{HEADER}\n[{scenario}]\n{section}\n")).unwrap();
    path
}

/// Every file under `dir`, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for run in std::fs::read_dir(dir).unwrap() {
        let run = run.unwrap().path();
        for f in std::fs::read_dir(&run).unwrap() {
            let f = f.unwrap().path();
            let key = f.strip_prefix(dir).unwrap().display().to_string();
            out.insert(key, std::fs::read(&f).unwrap());
        }
    }
    out
}

fn only_run(dir: &Path) -> PathBuf {
    let runs: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).filter(|p| p.is_dir()).collect();
    assert_eq!(runs.len(), 1, "{runs:?}");
    runs[0].clone()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

#[test]
fn toy_ode_run_is_byte_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "toy.toml", "toy_ode", "t_end = 2e7");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = nlkg(&["toyode", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    assert_eq!(sa, sb);
    let keys: Vec<&str> = sa.keys().map(|k| k.rsplit('/').next().unwrap()).collect();
    assert_eq!(keys, ["manifest.json", "toy.csv", "toy.json"]);

    let dir = only_run(&a);
    let toy: Value = serde_json::from_slice(&std::fs::read(dir.join("toy.json")).unwrap()).unwrap();
    let runs = toy["runs"].as_array().unwrap();
    assert!(runs[0]["crossing_time"].is_null());
    assert_eq!(runs[0]["max_angle_drift"], 0.0);
    for r in &runs[1..] {
        let t = r["crossing_time"].as_f64().unwrap();
        assert!((1e7..1.5e7).contains(&t), "{t}");
    }
}

#[test]
fn manifest_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "toy.toml", "toy_ode", "eps = [0.3]\nt_end = 100.0");
    let o = nlkg(&["run", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("runs").to_str().unwrap(), "--seed", "42"]);
    assert!(o.status.success());
    let dir = only_run(&tmp.path().join("runs"));
    let m: Value = serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["status"], "ok");
    assert_eq!(m["seed"], 42);
    assert_eq!(m["config"]["seed"], 42);
    assert_eq!(m["run"], dir.file_name().unwrap().to_str().unwrap());
    assert!(m["code_version"]["nlkg"].is_string());
    let files: Vec<&str> = m["artifacts"].as_array().unwrap().iter().map(|a| a["file"].as_str().unwrap()).collect();
    assert_eq!(files, ["toy.csv", "toy.json"]);
    // the recorded configuration alone yields the same id
    let cfg: nlkg_cli::ExperimentConfig = {
        let text = std::fs::read_to_string(tmp.path().join("toy.toml")).unwrap();
        let mut c = nlkg_cli::parse_str(&text).unwrap();
        c.seed = 42;
        c
    };
    assert_eq!(serde_json::to_value(&cfg).unwrap(), m["config"]);
}

#[test]
fn dichotomy_battery_on_a_coarse_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "d.toml", "dichotomy", "lambdas = [0.5, 2.0]");
    let o = nlkg(&["run", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    let runs = v["runs"].as_array().unwrap();
    assert_eq!(runs[0]["kind"], "Decay");
    assert!(runs[0]["log_norm_fit"]["slope"].as_f64().unwrap() < 0.0);
    assert_eq!(runs[1]["kind"], "Blowup");
    assert_eq!(runs[1]["blowup_certificate_persistent"], true);
    let dir = only_run(tmp.path());
    assert!(dir.join("trajectory_00.ndjson").exists() && dir.join("trajectory_01.ndjson").exists());
    let first = std::fs::read_to_string(dir.join("trajectory_00.ndjson")).unwrap();
    let rec: Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    assert!(rec["E"].is_f64() && rec["t"].is_f64());
}

#[test]
fn classify_prints_one_outcome_object() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.toml", "single_soliton", "h = [0.05]");
    let o = nlkg(&["classify", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 1);
    let v = stdout_json(&o);
    assert_eq!(v["kind"], "Blowup");
    assert!(only_run(tmp.path()).join("outcome.json").exists());
}

#[test]
fn evolve_and_output_formats() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("e.toml");
    // Q itself is unstable, so roundoff is only guaranteed to stay small for a while
    let header = HEADER.replace("t_max = 40.0", "t_max = 20.0");
    let text = format!("scenario = \"single_soliton\"\n{header}\n[output]\nformats = [\"ndjson\"]\n[single_soliton]\nh = [0.0]\n");
    std::fs::write(&path, text).unwrap();
    let o = nlkg(&["evolve", "--config", path.to_str().unwrap(), "--out", tmp.path().join("r").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["event"], "tmax");
    let dir = only_run(&tmp.path().join("r"));
    assert!(dir.file_name().unwrap().to_str().unwrap().starts_with("evolve-"));
    let mut names: Vec<String> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["manifest.json", "trajectory.ndjson"]);
    let lines = std::fs::read_to_string(dir.join("trajectory.ndjson")).unwrap();
    // 20 time units sampled every 10 steps of 0.05
    assert!(lines.lines().count() >= 40, "{}", lines.lines().count());
}

#[test]
fn reduced_flow_separates_the_pair() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "r.toml", "reduced_flow", "signs = [1.0, -1.0]\nz = [-7.0, 7.0]\nt_end = 20.0\ndt = 0.05");
    let o = nlkg(&["reduced", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    let z = v["final_centers"].as_array().unwrap();
    assert!(z[0].as_f64().unwrap() < -7.0 && z[1].as_f64().unwrap() > 7.0);
    assert!(v["inv_eta_fit"]["correlation"].as_f64().unwrap() > 0.999);
    let csv = std::fs::read_to_string(only_run(tmp.path()).join("reduced.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,z1,z2,eta0"));
    assert_eq!(csv.lines().count(), 402);
}

#[test]
fn phase_map_is_independent_of_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "m.toml",
        "two_soliton_map",
        "signs = [1.0, -1.0]\nz = [-8.0, 8.0]\nh1_range = [-0.08, 0.08]\nn1 = 2",
    );
    let mut csvs = Vec::new();
    for w in ["1", "2"] {
        let out = tmp.path().join(format!("w{w}"));
        let o = nlkg(&["phasemap", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", w]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        csvs.push(std::fs::read_to_string(only_run(&out).join("map.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    let lines: Vec<&str> = csvs[0].lines().collect();
    assert_eq!(lines[0], "h1,h2,kind,T3_or_blank,Dz_final");
    assert_eq!(lines.len(), 5);
    // the (-, -) corner decays
    assert!(lines[1].contains(",Decay,"), "{}", lines[1]);
}

#[test]
fn configuration_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, format!("scenario = \"toy_ode\"\n{}\n[toy_ode]\n", HEADER.replace("p = 3.0", "p = 1.5").replace("dt = 0.05", "dt = 0.1"))).unwrap();
    let o = nlkg(&["run", "--config", bad.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("p > 2") && err.contains("CFL"), "{err}");

    let toy = write_config(tmp.path(), "toy.toml", "toy_ode", "");
    let o = nlkg(&["classify", "--config", toy.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(nlkg(&["run"]).status.code(), Some(2));
    assert_eq!(nlkg(&["run", "--config", tmp.path().join("nope.toml").to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(nlkg(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_3_and_leaves_a_record() {
    let tmp = tempfile::tempdir().unwrap();
    // a center this close to the boundary is rejected when the data are built
    let cfg = write_config(tmp.path(), "f.toml", "single_soliton", "z = [25.0]\nh = [0.0]");
    let o = nlkg(&["classify", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("r").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let dir = only_run(&tmp.path().join("r"));
    let f: Value = serde_json::from_slice(&std::fs::read(dir.join("failure.json")).unwrap()).unwrap();
    assert!(f["error"].as_str().unwrap().contains("25"), "{f}");
    let m: Value = serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["status"], "failed");
}

#[test]
fn groundstate_table_and_spectrum_block() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("q.txt");
    let o = nlkg(&["groundstate", "--dim", "1", "--power", "3", "--rmax", "30", "--tol", "1e-12", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().any(|l| l.starts_with("# q0: ")));
    let mut rows = text.lines().filter(|l| !l.starts_with('#')).map(|l| {
        let mut it = l.split_whitespace().map(|x| x.parse::<f64>().unwrap());
        (it.next().unwrap(), it.next().unwrap())
    });
    let (r0, q0) = rows.next().unwrap();
    assert_eq!(r0, 0.0);
    assert!((q0 - 2f64.sqrt()).abs() < 1e-8);
    for (r, q) in rows.step_by(997) {
        assert!((q - 2f64.sqrt() / r.cosh()).abs() < 1e-8, "r = {r}");
    }

    let o = nlkg(&["spectrum", "--dim", "1", "--power", "3", "--alpha", "0.5"]);
    assert!(o.status.success());
    let kv: BTreeMap<String, f64> = String::from_utf8_lossy(&o.stdout)
        .lines()
        .map(|l| {
            let (k, v) = l.split_once(": ").unwrap();
            (k.to_string(), v.parse().unwrap())
        })
        .collect();
    assert!((kv["nu0_sq"] - 3.0).abs() < 1e-6);
    assert!((kv["nu_plus"] * kv["nu_minus"] + kv["nu0_sq"]).abs() < 1e-12);
    assert!((kv["c_omega_plus"] - 2.0 * (0.25f64 + kv["nu0_sq"]).sqrt()).abs() < 1e-8);

    assert_eq!(nlkg(&["groundstate", "--dim", "5"]).status.code(), Some(2));
}
