use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

const IDENTITY: &str = r#"
[problem]
name = "decoupled_identity"
x0 = [0.7]

[constants]
c1 = 1.0
beta1 = 1.0
beta2 = 1.0
mu1 = 1.0

[discretization]
num_steps = 20
num_paths = 1000
basis_degree = 1
seed = 5

[schedule]
mode = "direct"

[ppde]
functional = "constant"
constant = 2.5
num_paths = 12
min_steps = 5
max_steps = 60
step = 1e-2
feynman_kac = false

[ito]
step_counts = [10, 20, 40]
num_paths = 200
"#;

const EX31: &str = r#"
[problem]
name = "example31"
x0 = [1.0]

[constants]
c1 = 22.0
beta1 = 1.0
beta2 = 1.0
mu1 = 1.0

[discretization]
num_steps = 20
num_paths = 2000
basis_degree = 1
seed = 42

[schedule]
mode = "direct"
relaxation = 0.125
min_relaxation = 0.125

[check]
trials = 500
"#;

fn ffbsde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ffbsde")).args(args).output().unwrap()
}

fn setup(text: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, text).unwrap();
    (dir, cfg)
}

fn run(sub: &[&str], cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = sub.to_vec();
    args.extend(["--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    args.extend(extra);
    ffbsde(&args)
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn csv_column(path: &Path, name: &str) -> Vec<f64> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect()
}

#[test]
fn solve_identity_recovers_x0() {
    let (dir, cfg) = setup(IDENTITY);
    let out = dir.path().join("out");
    let o = run(&["solve"], &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let y = csv_column(&out.join("solution.csv"), "mean_Y1");
    assert!((y[0] - 0.7).abs() < 1e-8);
    assert!(out.join("trace.json").exists());
    assert!(String::from_utf8_lossy(&o.stdout).contains("y0[0] = 0.7"));
}

#[test]
fn manifest_checksums_match_files() {
    let (dir, cfg) = setup(IDENTITY);
    let out = dir.path().join("out");
    assert_eq!(code(&run(&["solve"], &cfg, &out, &["--seed", "9"])), 0);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["exit_status"], 0);
    assert!(manifest["config"].as_str().unwrap().contains("seed = 9"));
    let files = manifest["files"].as_array().unwrap();
    assert_eq!(files.len(), 2);
    for f in files {
        let data = fs::read(out.join(f["name"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&data)));
    }
}

#[test]
fn echoed_config_reproduces_the_run() {
    let (dir, cfg) = setup(IDENTITY);
    let first = dir.path().join("first");
    assert_eq!(code(&run(&["solve"], &cfg, &first, &["--seed", "3"])), 0);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(first.join("manifest.json")).unwrap()).unwrap();
    let echo = dir.path().join("echo.toml");
    fs::write(&echo, manifest["config"].as_str().unwrap()).unwrap();
    let second = dir.path().join("second");
    assert_eq!(code(&run(&["solve"], &echo, &second, &[])), 0);
    assert_eq!(fs::read(first.join("solution.csv")).unwrap(), fs::read(second.join("solution.csv")).unwrap());
}

#[test]
fn thread_count_does_not_change_output() {
    let (dir, cfg) = setup(EX31);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&run(&["solve"], &cfg, &a, &["--threads", "1"])), 0);
    assert_eq!(code(&run(&["solve"], &cfg, &b, &["--threads", "3"])), 0);
    for name in ["solution.csv", "trace.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn invalid_schedule_exits_3_naming_the_field() {
    let text = IDENTITY.replace("mode = \"direct\"", "mode = \"direct\"\ndelta_init = 0.1\ndelta_min = 0.2");
    let (dir, cfg) = setup(&text);
    let o = run(&["solve"], &cfg, &dir.path().join("out"), &[]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("delta_min"));
}

#[test]
fn malformed_and_misspelled_configs_exit_3() {
    let (dir, cfg) = setup("[problem\nname = ");
    assert_eq!(code(&run(&["check"], &cfg, &dir.path().join("out"), &[])), 3);
    let (dir, cfg) = setup(&IDENTITY.replace("num_paths = 1000", "num_path = 1000"));
    assert_eq!(code(&run(&["solve"], &cfg, &dir.path().join("out"), &[])), 3);
    let (dir, cfg) = setup(&IDENTITY.replace("decoupled_identity", "no_such_problem"));
    assert_eq!(code(&run(&["solve"], &cfg, &dir.path().join("out"), &[])), 3);
}

#[test]
fn non_convergence_exits_2_and_keeps_trace() {
    let text = EX31.replace("min_relaxation = 0.125", "min_relaxation = 0.125\nmax_inner_iters = 2");
    let (dir, cfg) = setup(&text);
    let out = dir.path().join("out");
    assert_eq!(code(&run(&["solve"], &cfg, &out, &[])), 2);
    assert!(out.join("trace.json").exists());
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"exit_status\": 2"));
}

#[test]
fn check_example31_passes_strict() {
    let (dir, cfg) = setup(EX31);
    let out = dir.path().join("out");
    let o = run(&["check"], &cfg, &out, &["--strict"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let report = fs::read_to_string(out.join("check_report.txt")).unwrap();
    assert!(report.contains("[monotonicity]\ntrials = 500"));
}

#[test]
fn strict_check_flags_large_beta1() {
    let (dir, cfg) = setup(&EX31.replace("beta1 = 1.0", "beta1 = 4.0"));
    assert_eq!(code(&run(&["check"], &cfg, &dir.path().join("lax"), &[])), 0);
    assert_eq!(code(&run(&["check"], &cfg, &dir.path().join("strict"), &["--strict"])), 4);
}

#[test]
fn ppde_constant_functional_has_zero_residual() {
    let (dir, cfg) = setup(IDENTITY);
    let out = dir.path().join("out");
    let o = run(&["ppde"], &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let res = csv_column(&out.join("ppde_residuals.csv"), "residual_1");
    assert_eq!(res.len(), 12);
    assert!(res.iter().all(|r| *r == 0.0));
}

#[test]
fn ppde_rejects_c0_functional() {
    let (dir, cfg) = setup(&IDENTITY.replace("functional = \"constant\"", "functional = \"constant\"\nsmoothness = \"c0\""));
    assert_eq!(code(&run(&["ppde"], &cfg, &dir.path().join("out"), &[])), 3);
}

#[test]
fn ito_demo_table_shrinks_with_k() {
    let (dir, cfg) = setup(IDENTITY);
    let out = dir.path().join("out");
    assert_eq!(code(&run(&["ito-demo"], &cfg, &out, &[])), 0);
    let text = fs::read_to_string(out.join("ito_table.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let rms = |name: &str| -> Vec<f64> {
        rows.iter().filter(|r| r[0] == name).map(|r| r[2].parse().unwrap()).collect()
    };
    let square = rms("last_value_squared");
    assert_eq!(square.len(), 3);
    assert!(square.windows(2).all(|w| w[1] < w[0]), "{square:?}");
    assert!(rms("running_integral").iter().all(|r| *r < 1e-12));
}

#[test]
fn ito_demo_needs_two_step_counts() {
    let (dir, cfg) = setup(&IDENTITY.replace("step_counts = [10, 20, 40]", "step_counts = [10]"));
    assert_eq!(code(&run(&["ito-demo"], &cfg, &dir.path().join("out"), &[])), 3);
}

#[test]
fn missing_output_directory_is_a_config_error() {
    let (_dir, cfg) = setup(IDENTITY);
    let o = ffbsde(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
}
