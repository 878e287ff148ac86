use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "seed = 3\n[synth]\nn_assets = 12\nn_days = 120\n";

fn hiquant(dir: &Path, args: &[&str], seed_env: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hiquant"));
    cmd.args(args).arg("--config").arg(dir.join("config.toml")).arg("--out").arg(dir.join("run"));
    match seed_env {
        Some(s) => cmd.env("HIQUANT_SEED", s),
        None => cmd.env_remove("HIQUANT_SEED"),
    };
    cmd.output().expect("binary runs")
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("config.toml"), config).unwrap();
    dir
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn synth_writes_data_and_manifest() {
    let dir = setup(SMALL);
    let o = hiquant(dir.path(), &["synth"], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let run = dir.path().join("run");
    for f in ["prices.csv", "fundamentals.csv", "industry_map.csv", "text_signals.csv", "macro.csv", "industry_returns.csv"] {
        assert!(run.join("data").join(f).is_file(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(run.join("manifest_synth.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "synth");
    assert_eq!(manifest["seed"], 3);
    assert!(manifest["outputs"]["data/prices.csv"].as_str().unwrap().len() == 64);
    assert!(manifest["config"].as_str().unwrap().contains("lambda = 0.25"));
    assert!(!run.join(".hiquant.lock").exists());
    let log = fs::read_to_string(run.join("run.log")).unwrap();
    assert!(log.contains("stage=generate status=ok wall_clock_s="), "{log}");
}

#[test]
fn seed_variable_and_overrides_apply() {
    let dir = setup("[synth]\nn_assets = 12\nn_days = 120\n");
    let o = hiquant(dir.path(), &["synth", "--set", "synth.n_assets=7"], Some("11"));
    assert!(o.status.success(), "{}", stderr(&o));
    let run = dir.path().join("run");
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(run.join("manifest_synth.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 11);
    let map = fs::read_to_string(run.join("data/industry_map.csv")).unwrap();
    assert_eq!(map.lines().count(), 1 + 7);
}

#[test]
fn missing_seed_exits_two() {
    let dir = setup("[synth]\nn_assets = 12\nn_days = 120\n");
    let o = hiquant(dir.path(), &["synth"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("hiquant: error kind=config exit=2 message="), "{}", stderr(&o));
}

#[test]
fn unknown_key_exits_two_and_names_it() {
    let dir = setup("seed = 1\n[risk]\nsigma_targt = 0.1\n");
    let o = hiquant(dir.path(), &["synth"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sigma_targt"), "{}", stderr(&o));
}

#[test]
fn backtest_without_data_or_parameters_exits_two() {
    let dir = setup(SMALL);
    let o = hiquant(dir.path(), &["backtest"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kind=precondition"), "{}", stderr(&o));
    assert!(hiquant(dir.path(), &["synth"], None).status.success());
    let o = hiquant(dir.path(), &["backtest"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tune"), "{}", stderr(&o));
    let o = hiquant(dir.path(), &["report"], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn locked_directory_exits_two_and_is_left_alone() {
    let dir = setup(SMALL);
    let run = dir.path().join("run");
    fs::create_dir_all(&run).unwrap();
    fs::write(run.join(".hiquant.lock"), "1\n").unwrap();
    let o = hiquant(dir.path(), &["synth"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kind=locked"), "{}", stderr(&o));
    assert!(run.join(".hiquant.lock").exists());
    assert!(!run.join("data").exists());
}

#[test]
fn invalid_override_exits_two() {
    let dir = setup(SMALL);
    let o = hiquant(dir.path(), &["synth", "--set", "macro.lambda=1.5"], None);
    assert_eq!(o.status.code(), Some(2));
    let o = hiquant(dir.path(), &["synth", "--set", "novalue"], None);
    assert_eq!(o.status.code(), Some(2));
}
