use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const MINIMAL: &str = r#"
[env]
name = "ackley2"

[cost]
kind = "euclidean"

[acquisition]
kind = "ei"
restarts = 4
baseline_steps = 20
mc_samples = 256

[surrogate.fit]
steps = 30

[run]
n_init = 5
n_steps = 5
"#;

fn lookahes(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lookahes"))
        .args(args)
        .env_remove("LOOKAHES_THREADS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn run_to(cfg: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", cfg, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    lookahes(&args)
}

#[test]
fn minimal_run_writes_all_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "min.toml", MINIMAL);
    let out = tmp.path().join("out");
    let o = run_to(&cfg, &out, &["--seed", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let csv = fs::read_to_string(out.join("records.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "step,x0,x1,y,step_cost,cum_cost,acq_value,a0,a1,regret,wall_ms");
    assert_eq!(lines.count(), 5);

    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 1);
    assert_eq!(summary["config"]["acquisition"]["kind"], "ei");
    // Defaults are written out too.
    assert_eq!(summary["config"]["acquisition"]["beta"], 2.0);
    assert!(summary["version"].is_string());

    let svg = fs::read_to_string(out.join("trace.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.trim_end().ends_with("</svg>"));
    assert!(!svg.contains("href"));
}

#[test]
fn same_seed_gives_identical_records() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "min.toml", MINIMAL);
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    assert!(run_to(&cfg, &a, &["--seed", "1", "--threads", "1"]).status.success());
    assert!(run_to(&cfg, &b, &["--seed", "1", "--threads", "1"]).status.success());
    assert!(run_to(&cfg, &c, &["--seed", "1", "--threads", "8"]).status.success());
    let ra = fs::read(a.join("records.csv")).unwrap();
    assert_eq!(ra, fs::read(b.join("records.csv")).unwrap());
    assert_eq!(ra, fs::read(c.join("records.csv")).unwrap());
}

#[test]
fn summary_json_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "min.toml", MINIMAL);
    let a = tmp.path().join("a");
    assert!(run_to(&cfg, &a, &["--seed", "4"]).status.success());
    let b = tmp.path().join("b");
    let again = a.join("summary.json");
    assert!(run_to(again.to_str().unwrap(), &b, &[]).status.success());
    assert_eq!(fs::read(a.join("records.csv")).unwrap(), fs::read(b.join("records.csv")).unwrap());
}

#[test]
fn malformed_toml_exits_2_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", "[env\nname = ");
    let out = tmp.path().join("out");
    let o = run_to(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn unknown_key_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", "[acquisition]\nhorizn = 3\n");
    let o = run_to(&cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("horizn"));
}

#[test]
fn invalid_value_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", "[cost]\nlambda = -1.0\n");
    let o = run_to(&cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lambda"));
}

#[test]
fn missing_image_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "img.toml",
        "[env]\nname = \"image\"\nimage_path = \"/nonexistent/lights.pgm\"\n[run]\nn_init = 3\nn_steps = 1\n",
    );
    let o = run_to(&cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lights.pgm"));
}

#[test]
fn sweep_runs_every_cell_and_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "min.toml", &MINIMAL.replace("n_steps = 5", "n_steps = 2"));
    let out = tmp.path().join("sweep");
    let o = lookahes(&[
        "sweep",
        &cfg,
        "--grid",
        "acquisition.kind=ei,ucb",
        "--seed",
        "1",
        "--seed",
        "2",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dirs = fs::read_dir(&out).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count();
    assert_eq!(dirs, 6);
    let summary = fs::read_to_string(out.join("sweep_summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert!(lines.next().unwrap().starts_with("cell,acquisition.kind,seed,final_value"));
    assert_eq!(lines.count(), 6);
}

#[test]
fn empty_grid_runs_the_base_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "min.toml", &MINIMAL.replace("n_steps = 5", "n_steps = 1"));
    let out = tmp.path().join("sweep");
    let o = lookahes(&["sweep", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("base_seed-0").join("records.csv").exists());
    assert_eq!(fs::read_to_string(out.join("sweep_summary.csv")).unwrap().lines().count(), 2);
}

#[test]
fn sweep_rejects_unknown_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "min.toml", MINIMAL);
    let out = tmp.path().join("sweep");
    let o = lookahes(&["sweep", &cfg, "--grid", "acquisition.horizn=1,2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("horizn"));
    assert!(!out.exists());
}

#[test]
fn validate_costs_passes() {
    let o = lookahes(&["validate", "--suite", "costs"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().count() >= 10);
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}
