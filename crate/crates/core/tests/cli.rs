use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use woundnet::cli::{execute, main_with_args, Cli};

const CONFIG: &str = r#"
seed = 3

[geometry]
kind = "ellipse"
x_cut = 1.5
y_cut = 1.0

[sim]
t_end = 4.0
dt = 0.2
target_nodes = 150

[data]
n_sims = 2
test_sims = 1
times_per_sim = 3
points_per_time = 8

[train]
epochs = 3
batch_size = 8
p = 4
hidden_width = 8
"#;

fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.toml");
    fs::write(&cfg, CONFIG).unwrap();
    (dir, cfg)
}

fn run(root: &Path, cfg: &Path, args: &[&str]) -> PathBuf {
    let out = root.join("runs");
    let mut argv = vec!["woundnet", "--out", out.to_str().unwrap(), "--config", cfg.to_str().unwrap()];
    argv.extend_from_slice(args);
    execute(&Cli::try_parse_from(argv).unwrap()).unwrap()
}

#[test]
fn simulate_writes_a_result_directory() {
    let (dir, cfg) = setup();
    let run_dir = run(dir.path(), &cfg, &["simulate"]);
    let name = run_dir.file_name().unwrap().to_str().unwrap();
    assert!(name.starts_with("simulate-"), "{name}");
    let rsaw = fs::read_to_string(run_dir.join("rsaw.csv")).unwrap();
    assert_eq!(rsaw.lines().nth(1), Some("0,1.0"));
    assert!(run_dir.join("config.toml").exists() && run_dir.join("meta").exists());
    // a second run never reuses the directory
    let again = run(dir.path(), &cfg, &["simulate"]);
    assert_ne!(again, run_dir);
}

#[test]
fn training_is_reproducible_from_the_cli() {
    let (dir, cfg) = setup();
    let data = run(dir.path(), &cfg, &["gen-train"]);
    assert_eq!(fs::read_to_string(data.join("records.csv")).unwrap().lines().count(), 1 + 2 * 3 * 8);
    let d = data.to_str().unwrap();
    let a = run(dir.path(), &cfg, &["train", "--data", d]);
    let b = run(dir.path(), &cfg, &["train", "--data", d]);
    assert_eq!(fs::read(a.join("model.json")).unwrap(), fs::read(b.join("model.json")).unwrap());
    assert_eq!(fs::read(a.join("loss.csv")).unwrap(), fs::read(b.join("loss.csv")).unwrap());
    assert!(fs::read_to_string(a.join("loss.csv")).unwrap().starts_with("epoch,train,val\n"));

    let model = a.join("model.json");
    let m = model.to_str().unwrap();
    let p = run(dir.path(), &cfg, &["predict", "--model", m, "--times", "0,2"]);
    let rsaw = fs::read_to_string(p.join("rsaw.csv")).unwrap();
    let first: Vec<f64> = rsaw.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!(first[0] == 0.0 && first[1].is_finite(), "{rsaw}");
    assert!(fs::read_to_string(p.join("field.csv")).unwrap().starts_with("t,x,y,u1,u2\n"));

    let test = run(dir.path(), &cfg, &["gen-test"]);
    let e = run(dir.path(), &cfg, &["eval", "--data", test.to_str().unwrap(), "--model", m]);
    let report = fs::read_to_string(e.join("report")).unwrap();
    assert!(report.contains("r2 = "), "{report}");
    assert!(e.join("abs_error_profile.csv").exists());
}

#[test]
fn failures_map_to_exit_codes() {
    let (dir, _) = setup();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[sim]\nwhatever = 1\n").unwrap();
    let out = dir.path().join("runs");
    let code = main_with_args(["woundnet", "--out", out.to_str().unwrap(), "--config", bad.to_str().unwrap(), "simulate"]);
    assert_eq!(code, ExitCode::from(2));
    let missing = dir.path().join("nowhere");
    let code = main_with_args(["woundnet", "--out", out.to_str().unwrap(), "train", "--data", missing.to_str().unwrap()]);
    assert_eq!(code, ExitCode::from(4));
}
