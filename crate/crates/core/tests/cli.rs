use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_adfgof");

const SMALL: &str = "model = ou\ntheta = 1\nhorizon = 100\ndt = 0.01\nlimit_n_mc = 10000\nlimit_kl_terms = 100\n";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.cfg");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn simulate_fit_test_round_trip() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), SMALL);
    ok(&run(d.path(), &["--config", &cfg, "--seed", "3", "simulate", "--rep", "2"]));
    let path = d.path().join("out/path.csv");
    let head = std::fs::read_to_string(&path).unwrap();
    assert!(head.starts_with("t,x\n"));
    assert_eq!(head.lines().count(), 1 + 10_001);

    let fit: serde_json::Value = serde_json::from_str(&ok(&run(d.path(), &["--config", &cfg, "fit", "--path", "out/path.csv"]))).unwrap();
    let theta = fit["fit"]["theta_hat"][0].as_f64().unwrap();
    assert!((theta - 1.0).abs() < 0.5, "{theta}");
    assert!(fit["density_sup_error"].as_f64().unwrap() < 0.2);
    assert!(d.path().join("out/fit.json").exists());

    let report: serde_json::Value =
        serde_json::from_str(&ok(&run(d.path(), &["--config", &cfg, "test", "--path", "out/path.csv"]))).unwrap();
    assert_eq!(report["model"], "ou");
    assert_eq!(report["variant"], "theorem");
    assert_eq!(report["reading"], "inner");
    let delta = report["delta_t"].as_f64().unwrap();
    let c = report["c_eps"].as_f64().unwrap();
    assert!(delta >= 0.0);
    assert_eq!(report["reject"].as_bool().unwrap(), delta > c);
    assert_eq!(report["theta_hat"][0].as_f64().unwrap(), theta);
    let curve = std::fs::read_to_string(d.path().join("out/curve.csv")).unwrap();
    assert!(curve.starts_with("x,value\n"));
    assert!(d.path().join("out/report.json").exists());
}

#[test]
fn simple_variant_on_constant_path_accepts() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), &format!("{SMALL}variant = simple\n"));
    let rows: String = (0..=1000).map(|k| format!("{},0\n", k as f64 * 0.01)).collect();
    std::fs::write(d.path().join("zero.csv"), format!("t,x\n{rows}")).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&ok(&run(d.path(), &["--config", &cfg, "test", "--path", "zero.csv"]))).unwrap();
    assert_eq!(report["delta_t"].as_f64().unwrap(), 0.0);
    assert_eq!(report["reject"], false);
}

#[test]
fn calibrate_prints_quantiles_and_reuses_cache() {
    let d = tempfile::tempdir().unwrap();
    let args = ["calibrate", "--n-mc", "10000", "--kl-terms", "100", "--cache", "t.csv"];
    let first: serde_json::Value = serde_json::from_str(&ok(&run(d.path(), &args))).unwrap();
    assert_eq!(first["n_mc"], 10000);
    let q = &first["quantiles"];
    let c10 = q["0.1"]["c_eps"].as_f64().unwrap();
    let c05 = q["0.05"]["c_eps"].as_f64().unwrap();
    let c01 = q["0.01"]["c_eps"].as_f64().unwrap();
    assert!(c10 < c05 && c05 < c01);
    assert!(q["0.05"]["se"].as_f64().unwrap() > 0.0);
    assert!(d.path().join("t.csv").exists());
    let second: serde_json::Value = serde_json::from_str(&ok(&run(d.path(), &args))).unwrap();
    assert_eq!(first, second);
}

#[test]
fn experiment_writes_both_tables_reproducibly() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), &format!("{SMALL}replications = 1\n"));
    let read = |dir: &str| {
        ok(&run(d.path(), &["--config", &cfg, "--out", dir, "experiment"]));
        let reps = std::fs::read(d.path().join(dir).join("replications.csv")).unwrap();
        let summary = std::fs::read(d.path().join(dir).join("summary.csv")).unwrap();
        (reps, summary)
    };
    let a = read("a");
    let b = read("b");
    assert_eq!(a, b);
    let reps = String::from_utf8(a.0).unwrap();
    assert!(reps.starts_with("rep,seed,theta_hat,delta_T,reject,failure\n"));
    assert_eq!(reps.lines().count(), 2);
}

#[test]
fn boundary_failures_exit_with_two() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(
        d.path(),
        "model = linear_tanh\ntrue_model = ou\ntheta = 0.05\nhorizon = 50\nreplications = 10\nlimit_n_mc = 10000\nlimit_kl_terms = 100\n",
    );
    let out = run(d.path(), &["--config", &cfg, "experiment"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("boundary"));
    // the per-replication table is still written
    let reps = std::fs::read_to_string(d.path().join("out/replications.csv")).unwrap();
    assert_eq!(reps.lines().filter(|l| l.ends_with(",boundary")).count(), 10);
}

#[test]
fn bad_configuration_exits_with_one() {
    let d = tempfile::tempdir().unwrap();
    for body in ["model = nosuch\n", "horizon = -1\n", "theta = 1\nbogus_key = 3\n", "epsilon = 2\n"] {
        let cfg = write_config(d.path(), body);
        let out = run(d.path(), &["--config", &cfg, "experiment"]);
        assert_eq!(out.status.code(), Some(1), "{body}");
        assert!(!out.stderr.is_empty());
    }
    let out = run(d.path(), &["test", "--path", "missing.csv"]);
    assert_eq!(out.status.code(), Some(1));
}
