use std::path::{Path, PathBuf};
use std::process::Command;

const CONFIG: &str = r#"
eps = 0.001
C = 3.0

[operator]
kind = "well_posed"

[smoothness]
kind = "ordinary_smooth"
s = 1.0

[[noise]]
kind = "iid_gaussian"

[[noise]]
kind = "adversarial_equicorrelated"
d = 0.7071067811865476

[test]
alpha = 0.1
beta = 0.1

[rng]
seed = 7

[run]
eps_grid = [0.0625, 0.03125, 0.015625, 0.0078125, 0.00390625, 0.001953125]
reps = 2000
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_seqdetect"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("seqdetect-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("experiment.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn run_in(dir: &Path, config: &Path, args: &[&str]) -> std::process::Output {
    bin().args(args).arg("--config").arg(config).arg("--output").arg(dir).env_remove("SEQDETECT_THREADS").output().unwrap()
}

#[test]
fn bounds_writes_csv_and_fit_summary() {
    let dir = scratch("bounds");
    let cfg = write_config(&dir, CONFIG);
    let out = run_in(&dir, &cfg, &["bounds"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("bounds.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    let fit = std::fs::read_to_string(dir.join("bounds_fit.txt")).unwrap();
    assert!(fit.contains("cell = \"well_posed/ordinary_smooth\""));
    assert!(std::fs::read_to_string(dir.join("bounds.log")).unwrap().contains("started_unix_time"));
    assert!(!csv.contains("unix"));
}

#[test]
fn calibrate_reports_constants() {
    let dir = scratch("calibrate");
    let text = CONFIG.replace("alpha = 0.1", "alpha = 0.04");
    let cfg = write_config(&dir, &text);
    let out = run_in(&dir, &cfg, &["calibrate"]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.join("calibrate.csv")).unwrap();
    let first = csv.lines().nth(1).unwrap();
    let fields: Vec<&str> = first.split(',').collect();
    assert_eq!(fields[6].parse::<f64>().unwrap(), 10.0);
    assert!((fields[7].parse::<f64>().unwrap() - 40.4347).abs() < 1e-3);
}

#[test]
fn simulate_is_reproducible_and_passes() {
    let dir = scratch("simulate");
    let cfg = write_config(&dir, &CONFIG.replace("eps_grid = [0.0625, 0.03125, 0.015625, 0.0078125, 0.00390625, 0.001953125]", ""));
    let first = run_in(&dir, &cfg, &["simulate", "--threads", "1"]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let a = std::fs::read(dir.join("simulate.csv")).unwrap();
    let second = run_in(&dir, &cfg, &["simulate", "--threads", "4"]);
    assert!(second.status.success());
    assert_eq!(a, std::fs::read(dir.join("simulate.csv")).unwrap());
    let other_seed = run_in(&dir, &cfg, &["simulate", "--seed", "8"]);
    assert!(other_seed.status.success());
    assert_ne!(a, std::fs::read(dir.join("simulate.csv")).unwrap());
}

#[test]
fn failing_checks_give_nonzero_exit() {
    let dir = scratch("failing");
    // C = 1 gives a zero threshold, so every null sample rejects
    let text = CONFIG.replace("C = 3.0", "C = 1.0").replace("eps_grid = [0.0625, 0.03125, 0.015625, 0.0078125, 0.00390625, 0.001953125]", "");
    let cfg = write_config(&dir, &text);
    let out = run_in(&dir, &cfg, &["simulate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(std::fs::read_to_string(dir.join("simulate.csv")).unwrap().contains(",false"));
}

#[test]
fn validation_errors() {
    let dir = scratch("invalid");
    let low = write_config(&dir, CONFIG);
    let out = run_in(&dir, &low, &["simulate", "--reps", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.reps"));

    let typo = write_config(&dir, &CONFIG.replace("alpha = 0.1", "alpah = 0.1"));
    let out = run_in(&dir, &typo, &["calibrate"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("alpah") && err.contains("line"), "{err}");

    let empty = write_config(&dir, &CONFIG.replace("eps_grid = [0.0625, 0.03125, 0.015625, 0.0078125, 0.00390625, 0.001953125]", "eps_grid = []"));
    let out = run_in(&dir, &empty, &["bounds"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rates_summary_covers_requested_cells() {
    let dir = scratch("rates");
    let text = CONFIG.replace(
        "reps = 2000",
        "reps = 2000\ncells = [\"severely_ill_posed/ordinary_smooth\", \"mildly_ill_posed/super_smooth\"]",
    );
    let text = text.replace("kind = \"well_posed\"", "kind = \"mildly_ill_posed\"\nt = 1.0");
    let cfg = write_config(&dir, &text);
    let out = run_in(&dir, &cfg, &["rates"]);
    assert!(out.status.code().is_some());
    let summary = std::fs::read_to_string(dir.join("rates_summary.txt")).unwrap();
    assert!(summary.contains("expected_exponent = -2.0000000000000000e0"));
    assert!(summary.contains("expected_exponent = 3.0000000000000000e0"));
    assert!(dir.join("rates_severely_ill_posed__ordinary_smooth.csv").exists());
}
