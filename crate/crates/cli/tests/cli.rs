use std::fs;
use std::process::Command;

const CONFIG: &str = r#"
name = "cli"
M = 8
K = 2
n_setups = 2
n_mc_samples = 500
schemes = ["rs_maxsum_grid", "nors_maxsum"]
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rsma-sim"))
}

#[test]
fn run_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, CONFIG).unwrap();
    let out = bin()
        .args(["run", cfg.to_str().unwrap(), "--seed", "3", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("cli.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("cli.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["seed"], 3);
}

#[test]
fn sweep_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, CONFIG).unwrap();
    let sweep = bin()
        .args([
            "sweep",
            cfg.to_str().unwrap(),
            "--param",
            "M",
            "--values",
            "4,8",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        sweep.status.success(),
        "{}",
        String::from_utf8_lossy(&sweep.stderr)
    );
    assert!(dir.path().join("cli_sweep_M.json").exists());
    let val = bin()
        .args(["validate", cfg.to_str().unwrap(), "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(val.status.success());
    assert!(dir.path().join("cli_validation.json").exists());
}

#[test]
fn bad_config_reports_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "K = 4\ntau_p = 1\npilot_mode = \"orthogonal\"\n").unwrap();
    let out = bin().args(["run", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].as_str().unwrap().contains("tau_p"));
}

#[test]
fn shipped_configs_load() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            rsma_mimo::harness::ExperimentConfig::load(&p)
                .unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert!(n >= 4);
}
