use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cdistab"))
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin().arg(sub).arg("--config").arg(config).arg("--out").arg(out).args(extra).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("terminated by signal")
}

const HURWITZ: &str = r#"{ "seed": 42, "verify": { "suite": "hurwitz" } }"#;

#[test]
fn verify_pass_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), HURWITZ);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&run("verify", &cfg, &a, &[])), 0);
    assert_eq!(code(&run("verify", &cfg, &b, &[])), 0);
    let ra = fs::read(a.join("verify-hurwitz.json")).unwrap();
    assert_eq!(ra, fs::read(b.join("verify-hurwitz.json")).unwrap());

    let report: Value = serde_json::from_slice(&ra).unwrap();
    assert_eq!(report["tool"], "cdistab");
    assert_eq!(report["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(report["seed"], 42);
    assert_eq!(report["passed"], true);
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 64);
    assert!(report["checks"].as_array().unwrap().iter().all(|c| c["name"].as_str().unwrap().starts_with("hurwitz/")));
}

#[test]
fn seed_override_changes_report() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), HURWITZ);
    let out = dir.path().join("o");
    assert_eq!(code(&run("verify", &cfg, &out, &["--seed", "7"])), 0);
    let report: Value = serde_json::from_slice(&fs::read(out.join("verify-hurwitz.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 7);
}

#[test]
fn verify_failure_exits_one() {
    // too short a horizon for the slow endgame to reach the target
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "seed": 1, "verify": { "suite": "stabilization",
             "stabilization": { "count": 1, "t_max": 20.0 } } }"#,
    );
    let out = dir.path().join("o");
    let o = run("verify", &cfg, &out, &[]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_slice(&fs::read(out.join("verify-stabilization.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], false);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn usage_and_config_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("o");
    let missing = dir.path().join("missing.json");
    assert_eq!(code(&run("verify", &missing, &out, &[])), 2);
    assert_eq!(code(&bin().arg("frobnicate").output().unwrap()), 2);
    assert_eq!(code(&bin().arg("simulate").output().unwrap()), 2);
    assert_eq!(code(&bin().arg("--help").output().unwrap()), 0);

    let bad = [
        r#"{ "seed": 1, "verify": { "suite": "hurwitz" }, "colour": 3 }"#,
        r#"{ "seed": 1, "verify": { "suite": "hurwitz", "hurwitz": { "eps": [1.0], "tol": 1 } } }"#,
        r#"{ "seed": 1, "simulate": { "system": { "type": "t0", "eps": 1 }, "t_end": 1, "sample_dt": 0.1 } }"#,
        r#"{ "seed": 1, "verify": { "suite": "nonexistent" } }"#,
        r#"{ "verify": { "suite": "hurwitz" } }"#,
        r#"{ "seed": 1, "verify": "#,
    ];
    for text in bad {
        let cfg = write_config(dir.path(), text);
        let o = run("verify", &cfg, &out, &[]);
        assert_eq!(code(&o), 2, "{text}: {}", String::from_utf8_lossy(&o.stderr));
        let o = run("simulate", &cfg, &out, &[]);
        assert_eq!(code(&o), 2, "{text}");
    }
}

#[test]
fn divergence_exits_three_with_partial_output() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "seed": 1, "simulate": {
             "system": { "type": "linear", "a": [[5,0,0,0],[0,5,0,0],[0,0,5,0],[0,0,0,5]] },
             "x0": [1, 0, 0, 0], "t_end": 20, "sample_dt": 0.1 } }"#,
    );
    let out = dir.path().join("o");
    assert_eq!(code(&run("simulate", &cfg, &out, &[])), 3);
    let summary: Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    let t = summary["diverged_at"].as_f64().unwrap();
    assert!(t > 4.0 && t < 6.0, "{t}");
    assert!(fs::read_to_string(out.join("trajectory.csv")).unwrap().lines().count() > 10);
}

#[test]
fn simulate_zero_state_stays_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "seed": 3, "simulate": { "system": { "type": "s1", "eps": 0.05 },
             "x0": [0, 0, 0, 0], "t_end": 5, "sample_dt": 1 } }"#,
    );
    let out = dir.path().join("o");
    assert_eq!(code(&run("simulate", &cfg, &out, &[])), 0);
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,x1_1,x1_2,x2_1,x2_2");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 6);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0], i as f64);
        assert!(r[1..].iter().all(|&v| v == 0.0));
    }
}

#[test]
fn simulate_t0_is_reproducible_and_decreasing() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "seed": 9, "simulate": { "system": { "type": "t0" },
             "x0_radius": 5, "t_end": 20, "sample_dt": 0.5,
             "step": { "mode": { "mode": "fixed", "h": 0.025 } } } }"#,
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&run("simulate", &cfg, &a, &[])), 0);
    assert_eq!(code(&run("simulate", &cfg, &b, &[])), 0);
    for f in ["trajectory.csv", "summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let summary: Value = serde_json::from_slice(&fs::read(a.join("summary.json")).unwrap()).unwrap();
    let x0: Vec<f64> = serde_json::from_value(summary["x0"].clone()).unwrap();
    let r = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(r > 0.0 && r <= 5.0, "{r}");
    assert_eq!(summary["diagnostics"]["V0_strictly_decreasing"], true);
}

#[test]
fn sweep_writes_grid_and_exits_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "seed": 42, "sweep": { "eps": [0.1, 0.05], "rho": [0.1], "r_level": [50],
             "sampler": { "count": 2, "radii": [10], "adversarial": 1 } } }"#,
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&run("sweep", &cfg, &a, &[])), 0);
    assert_eq!(code(&run("sweep", &cfg, &b, &[])), 0);
    let ra = fs::read(a.join("sweep.json")).unwrap();
    assert_eq!(ra, fs::read(b.join("sweep.json")).unwrap());
    assert_eq!(fs::read(a.join("sweep.csv")).unwrap(), fs::read(b.join("sweep.csv")).unwrap());
    let csv = fs::read_to_string(a.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let report: Value = serde_json::from_slice(&ra).unwrap();
    assert_eq!(report["empirical_eps0"].as_array().unwrap().len(), 1);
}
