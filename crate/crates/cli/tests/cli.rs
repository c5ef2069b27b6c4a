use std::path::Path;
use std::process::{Command, Output};

use constel::harness::{self, AxisSpec, GridSearchConfig, HyperGrid, LandscapeConfig, OptimizerConfig, TargetSource};
use constel::optim::AdamWConfig;

fn constel(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_constel")).args(args).env("CONSTEL_THREADS", "1").output().unwrap();
    assert!(
        out.status.success(),
        "constel {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn tiny_config(dir: &Path) -> harness::ExperimentConfig {
    let mut cfg = harness::exp2();
    cfg.id = "tiny".into();
    cfg.targets = TargetSource::Grid { n_lat: 6, n_lon: 12, lat_max_deg: 70.0 };
    cfg.window.steps = 24;
    cfg.optimizer = OptimizerConfig::Adamw(AdamWConfig { iterations: 6, ..Default::default() });
    cfg.output.dir = Some(dir.join("run"));
    cfg.landscape = Some(LandscapeConfig {
        x: AxisSpec { slot: 0, lower: 0.0, upper: 360.0, n: 3, degrees: true },
        y: AxisSpec { slot: 6, lower: 0.0, upper: 360.0, n: 4, degrees: true },
        trace: Some(dir.join("run")),
    });
    cfg
}

#[test]
fn walker_and_eval() {
    let out = stdout(&constel(&["walker", "24/6/1"]));
    let sats: Vec<serde_json::Value> = serde_json::from_str(&out).unwrap();
    assert_eq!(sats.len(), 24);
    assert_eq!(sats[4]["plane"], 1);
    assert!((sats[4]["raan_deg"].as_f64().unwrap() - 60.0).abs() < 1e-9);
    assert!((sats[4]["ma_deg"].as_f64().unwrap() - 15.0).abs() < 1e-9);

    let report: serde_json::Value = serde_json::from_str(&stdout(&constel(&["eval", "--walker", "4/2/1"]))).unwrap();
    let cov = report["hard_coverage"].as_f64().unwrap();
    assert!(cov > 0.0 && cov < 1.0);
}

#[test]
fn presets_print_and_reload() {
    let list = stdout(&constel(&["presets"]));
    assert_eq!(list.lines().count(), harness::PRESETS.len());
    let text = stdout(&constel(&["presets", "exp3"]));
    assert_eq!(harness::ExperimentConfig::from_toml(&text).unwrap(), harness::exp3());
}

#[test]
fn unknown_preset_fails_with_a_message() {
    let out = Command::new(env!("CARGO_BIN_EXE_constel")).args(["run", "--preset", "exp9"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown preset 'exp9'"));
}

#[test]
fn run_then_analyse() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let cfg_path = dir.path().join("tiny.toml");
    std::fs::write(&cfg_path, cfg.to_toml().unwrap()).unwrap();
    let cfg_arg = cfg_path.to_str().unwrap();

    constel(&["run", cfg_arg, "--every", "0"]);
    let run = dir.path().join("run");
    for f in ["config.toml", "trace.csv", "theta.csv", "elements.json", "metrics.json"] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let rd = harness::RunDirectory::open(&run).unwrap();
    assert_eq!(rd.rows.len(), 7);

    let report: serde_json::Value =
        serde_json::from_str(&stdout(&constel(&["eval", "--run", run.to_str().unwrap()]))).unwrap();
    assert_eq!(report["hard_coverage"].as_f64().unwrap(), rd.metrics.final_.hard_coverage);

    constel(&["pca", run.to_str().unwrap(), "--resolution", "3"]);
    let slice = std::fs::read_to_string(run.join("pca_slice.csv")).unwrap();
    assert_eq!(slice.lines().count(), 1 + 9);

    let land = dir.path().join("land");
    constel(&["landscape", cfg_arg, "--out", land.to_str().unwrap()]);
    assert_eq!(std::fs::read_to_string(land.join("landscape.csv")).unwrap().lines().count(), 1 + 12);
    assert_eq!(std::fs::read_to_string(land.join("landscape_trajectory.csv")).unwrap().lines().count(), 1 + 7);

    let mut gs = cfg.clone();
    gs.landscape = None;
    gs.gridsearch = Some(GridSearchConfig {
        solutions: vec![run.clone(); 4],
        grid: HyperGrid { tau_cov_deg: vec![1.0, 2.0], tau_rev_deg: vec![0.5], beta_min: vec![10.0], lambda: vec![0.1, 1.0] },
    });
    let gs_path = dir.path().join("gs.toml");
    std::fs::write(&gs_path, gs.to_toml().unwrap()).unwrap();
    let grid_out = dir.path().join("grid");
    let msg = stdout(&constel(&["gridsearch", gs_path.to_str().unwrap(), "--out", grid_out.to_str().unwrap()]));
    // four identical solutions can never be strictly ordered
    assert!(msg.contains("4 combinations, 0 valid"), "{msg}");
    assert_eq!(std::fs::read_to_string(grid_out.join("gridsearch.csv")).unwrap().lines().count(), 1 + 4);
}

#[test]
fn seed_override_changes_random_starts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(dir.path());
    cfg.optimizer = OptimizerConfig::Adamw(AdamWConfig { iterations: 0, ..Default::default() });
    let path = dir.path().join("c.toml");
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    let theta0 = |seed: &str, out: &str| {
        let out = dir.path().join(out);
        constel(&["run", path.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()]);
        harness::RunDirectory::open(&out).unwrap().snapshots[0].theta.clone()
    };
    let a = theta0("1", "a");
    assert_eq!(a, theta0("1", "b"));
    assert_ne!(a, theta0("2", "c"));
}
