use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_delayed-mdp");

fn config(name: &str) -> String {
    format!("{}/configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn scratch(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("delayed-mdp-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn csv_rows(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn run_writes_one_row_per_episode() {
    let out = scratch("run");
    let status = Command::new(BIN)
        .args(["run", "--config", &config("quickstart.json"), "--seed-override", "4", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(csv_rows(&out.join("quickstart-s4.csv")), 2000);
    assert!(out.join("quickstart.summary.json").exists());
    std::fs::remove_dir_all(out).unwrap();
}

#[test]
fn sweep_writes_every_grid_point() {
    let out = scratch("sweep");
    let status = Command::new(BIN)
        .args(["--jobs", "1", "sweep", "--config", &config("delay_sweep.json"), "--seed-override", "1", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    for d in [0, 50, 200] {
        assert_eq!(csv_rows(&out.join(format!("delay_delays-value={d}-s1.csv"))), 5000);
    }
    std::fs::remove_dir_all(out).unwrap();
}

#[test]
fn check_exit_status() {
    let ok = Command::new(BIN).args(["check", "delay-overlap"]).output().unwrap();
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("[PASS]"));
    let bad = Command::new(BIN).args(["check", "no-such-suite"]).status().unwrap();
    assert!(!bad.success());
}

#[test]
fn bad_config_is_rejected() {
    let dir = scratch("bad");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.json");
    let text = std::fs::read_to_string(config("quickstart.json")).unwrap().replace("\"uob-reps\"}", "\"uob-reps\", \"eta\": -1}");
    std::fs::write(&path, text).unwrap();
    let status = Command::new(BIN).args(["run", "--config"]).arg(&path).status().unwrap();
    assert!(!status.success());
    std::fs::remove_dir_all(dir).unwrap();
}
