use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sketchguard"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

const SMALL: &str = r#"
[task]
features = 6
classes = 3
samples_per_client = 30
test_samples = 60

[topology]
nodes = 8

[attack]
kind = "gaussian"
byz_fraction = 0.25

[run]
rounds = 2
local_epochs = 1
batch_size = 16
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn missing_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["run", "--config", "does/not/exist.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_alpha_exits_2_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[aggregator]\nalpha = 1.5\n");
    let out = cli(&["run", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("aggregator.alpha"));
}

#[test]
fn divergence_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[task]\nkind = \"quadratic\"\nfeatures = 5\n[topology]\nnodes = 4\n[run]\nlr = 10000.0\nrounds = 10\n",
    );
    let out = cli(&["run", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn run_writes_metrics_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = cli(&["run", "--config", &cfg, "--out", "res"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("res/metrics.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "run_id,seed,byz_fraction,round,mean_ter,params_tx_mean,screen_ops_mean,accept_frac,byz_accept_frac,verify_fail,fallback_count"
    );
    assert_eq!(csv.lines().count(), 3);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("res/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["byzantine"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["config"]["seeds"]["sketch"], 42);
}

#[test]
fn sweep_enumerates_fractions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = cli(&["sweep", "--config", &cfg, "--byz", "0:0.8:0.1", "--seeds", "1", "--out", "res"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("res/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 9 * 2);
    let out = cli(&["sweep", "--config", &cfg, "--byz", "0:0.9:0.1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = cli(&["bench", "--mode", "degree", "--config", &cfg, "--out", "res"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("res/bench.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "mode,x_value,aggregator,screen_ops,agg_ops,params_tx");
    assert_eq!(lines.count(), 6);
    let out = cli(&["bench", "--mode", "width", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn check_suite_reports_pass_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["check", "--suite", "sketch"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("distance_band") && text.contains("linearity") && text.contains("determinism"));
    assert!(text.contains("4/4 passed"), "{text}");
    assert_eq!(cli(&["check", "--suite", "bogus"], dir.path()).status.code(), Some(2));
}

#[test]
fn calibrate_matches_checked_in_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["calibrate", "--out", "k.csv"], dir.path());
    assert!(out.status.success());
    let fresh = std::fs::read_to_string(dir.path().join("k.csv")).unwrap();
    let checked_in = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../calibration/k_epsilon.csv")).unwrap();
    assert_eq!(fresh, checked_in);
}
