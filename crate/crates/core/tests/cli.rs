//! End-to-end runs of the `dmbp` binary.

use std::path::PathBuf;
use std::process::{Command, Output};

use delayed_branching::parse_config;
use serde_json::Value;

fn config(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "configs", name]
        .iter()
        .collect();
    p.to_string_lossy().into_owned()
}

fn dmbp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmbp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", stderr(o));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn fibonacci_malthusian() {
    let v = json(&dmbp(&["malthusian", "--config", &config("fib.json")]));
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    assert!((v["rho_hat"].as_f64().unwrap() - phi).abs() < 1e-12);
    assert!((v["theta"].as_f64().unwrap() - 0.4812118250596).abs() < 1e-12);
    assert_eq!(v["regime"], "supercritical");
}

#[test]
fn fibonacci_evolve_column() {
    let o = dmbp(&["evolve", "--config", &config("fib.json"), "--horizon", "10"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("s,type,ex,ez,ey,wx,wz,wy"));
    let ex: Vec<f64> = lines.map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(ex, vec![1.0, 1.0, 2.0, 3.0, 5.0, 8.0, 13.0, 21.0, 34.0, 55.0, 89.0]);
}

#[test]
fn fibonacci_limits() {
    let v = json(&dmbp(&["limits", "--config", &config("fib.json"), "--horizon", "300"]));
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let want = phi / 5f64.sqrt();
    assert!((v["limit_x"][0].as_f64().unwrap() - want).abs() < 1e-12);
    assert!((v["limit_z"][0].as_f64().unwrap() - 2.0 * want).abs() < 1e-12);
    assert!(v["empirical_gap"]["x"].as_f64().unwrap() < 1e-12);
}

#[test]
fn two_step_runs() {
    let v = json(&dmbp(&["paths", "--delays", "1,2", "--s", "4"]));
    assert!((v["runs"]["min_mixed_fraction"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-15);
    let csv = stdout(&dmbp(&["paths", "--delays", "2,1", "--s", "4", "--format", "csv"]));
    assert!(csv.lines().count() > 1);
}

#[test]
fn sampled_kernel_needs_seed() {
    let o = dmbp(&[
        "paths",
        "--config",
        &config("shared.json"),
        "--s",
        "8",
        "--samples",
        "100",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[usage]"));
    let v = json(&dmbp(&[
        "paths",
        "--config",
        &config("shared.json"),
        "--s",
        "8",
        "--samples",
        "2000",
        "--seed",
        "3",
    ]));
    let (kernel, est) = (&v["xi"]["kernel"], &v["xi"]["estimate"]);
    for i in 0..3 {
        for j in 0..3 {
            let exact = kernel[i][j].as_f64().unwrap();
            let mean = est["mean"][i][j].as_f64().unwrap();
            let se = est["std_error"][i][j].as_f64().unwrap();
            assert!((mean - exact).abs() < 6.0 * se, "{i},{j}: {mean} vs {exact}");
        }
    }
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        vec!["evolve", "--config", "x.json", "--horizon", "ten"],
        vec!["nonsense"],
        vec!["paths", "--s", "4"],
    ] {
        let o = dmbp(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let err = stderr(&o);
        assert!(err.starts_with("error[usage]"), "{err}");
        assert_eq!(err.trim_end().lines().count(), 1, "{err}");
        assert!(o.stdout.is_empty());
    }
}

#[test]
fn domain_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"types": ["a"], "delays": [1]}"#).unwrap();
    let bad = bad.to_string_lossy().into_owned();
    let two_stage = config("two_stage.json");
    let cases: Vec<(Vec<&str>, &str)> = vec![
        (vec!["paths", "--delays", "2,2", "--s", "4"], "error[duplicate-delay]"),
        (vec!["spectral", "--config", &bad], "error[schema]"),
        (vec!["validate", "--config", "/nonexistent/model.json"], "error[io]"),
        (vec!["limits", "--config", &two_stage], "error[not-shared]"),
    ];
    for (args, prefix) in cases {
        let o = dmbp(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(stderr(&o).starts_with(prefix), "{}", stderr(&o));
    }
}

#[test]
fn help_and_version() {
    for flag in ["--help", "--version"] {
        let o = dmbp(&[flag]);
        assert_eq!(o.status.code(), Some(0));
        assert!(!o.stdout.is_empty());
    }
}

#[test]
fn simulate_is_reproducible() {
    let args = [
        "simulate",
        "--config",
        &config("two_stage.json"),
        "--horizon",
        "15",
        "--replicas",
        "300",
    ];
    let a = dmbp(&args);
    let b = dmbp(&args);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let c = dmbp(&[&args[..], &["--seed", "1"]].concat());
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn simulate_without_seed_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let fib = std::fs::read_to_string(config("fib.json")).unwrap();
    let v: Value = serde_json::from_str(&fib).unwrap();
    let mut obj = v.as_object().unwrap().clone();
    obj.remove("run");
    let path = dir.path().join("noseed.json");
    std::fs::write(&path, Value::Object(obj).to_string()).unwrap();
    let o = dmbp(&["simulate", "--config", &path.to_string_lossy(), "--horizon", "5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[usage]"));
}

#[test]
fn out_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("spectral.json");
    let direct = dmbp(&["spectral", "--config", &config("shared.json")]);
    let o = dmbp(&[
        "spectral",
        "--config",
        &config("shared.json"),
        "--out",
        &out.to_string_lossy(),
    ]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    assert_eq!(std::fs::read(&out).unwrap(), direct.stdout);
    assert_eq!(json(&direct)["shared"], true);
}

#[test]
fn generated_configs_parse_and_share() {
    for kind in ["shared", "reversed", "polynomial"] {
        let o = dmbp(&[
            "generate", "--kind", kind, "--types", "3", "--delays", "1,3", "--seed", "9",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let cfg = parse_config(&stdout(&o)).unwrap();
        assert_eq!(cfg.model.n_types(), 3);
        let again = dmbp(&[
            "generate", "--kind", kind, "--types", "3", "--delays", "1,3", "--seed", "9",
        ]);
        assert_eq!(o.stdout, again.stdout);
    }
}

#[test]
fn validate_reports_failures() {
    let v = json(&dmbp(&["validate", "--config", &config("subcritical.json")]));
    assert!(v["checks"].as_array().unwrap().iter().any(|c| c["name"] == "gcd"));
    let dir = tempfile::tempdir().unwrap();
    let fib = std::fs::read_to_string(config("fib.json")).unwrap();
    let even = dir.path().join("even.json");
    std::fs::write(&even, fib.replace("[1, 2]", "[2, 4]")).unwrap();
    let o = dmbp(&["validate", "--config", &even.to_string_lossy()]);
    assert_eq!(o.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    let gcd = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "gcd")
        .unwrap();
    assert_eq!(gcd["status"], "warn");

    let reducible = dir.path().join("reducible.json");
    std::fs::write(&reducible, fib.replace("[[[1.0]], [[1.0]]]", "[[[1.0]], [[0.0]]]")).unwrap();
    let o = dmbp(&["validate", "--config", &reducible.to_string_lossy()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error["));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    let irr = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "irreducible_2")
        .unwrap();
    assert_eq!(irr["status"], "fail");
}
