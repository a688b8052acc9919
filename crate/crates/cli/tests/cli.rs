use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/er167_y2o3.toml")
}

fn kramers(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kramers"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn with_config(out: &Path, args: &[&str]) -> Output {
    let cfg = config_path();
    let mut all = vec!["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    all.extend_from_slice(args);
    kramers(&all)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn levels_has_sixteen_columns_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = with_config(dir.path(), &["levels", "--b-max", "0.3", "--points", "31"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("levels.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(header.split(',').count(), 17);
    assert_eq!(csv.lines().count(), 32);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("levels.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "levels");
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn negative_temperature_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config_path())
        .unwrap()
        .replace("temperature = 0.026", "temperature = -0.026");
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, text).unwrap();
    let o = kramers(&["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "config"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("temperature"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_rejected_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config_path())
        .unwrap()
        .replace("f_probe = 5.67e9", "f_probe = 5.67e9\nf_prob = 1.0");
    let cfg = dir.path().join("typo.toml");
    std::fs::write(&cfg, text).unwrap();
    let o = kramers(&["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "config"]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.contains("f_prob") && err.contains("typo.toml:"), "{err}");
}

#[test]
fn stochastic_command_needs_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config_path())
        .unwrap()
        .replace("seed = 20240611\n", "");
    let cfg = dir.path().join("noseed.toml");
    std::fs::write(&cfg, text).unwrap();
    let o = kramers(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "simulate-decay",
        "--trials",
        "1000",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("seed"));
}

#[test]
fn fit_hahn_round_trip_on_synthetic_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("decay.csv");
    let mut text = String::from("t_seconds,amplitude\n");
    for k in 1..=40 {
        let t = k as f64 * 0.1e-3;
        text.push_str(&format!("{t:e},{:e}\n", (-(t / 1.46e-3f64).powf(2.1)).exp()));
    }
    std::fs::write(&input, text).unwrap();
    let o = with_config(dir.path(), &["fit", "hahn", input.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("fit.json")).unwrap()).unwrap();
    let names = json["names"].as_array().unwrap();
    let t2 = names.iter().position(|n| n == "t2").unwrap();
    let value = json["values"][t2].as_f64().unwrap();
    assert!((value / 1.46e-3 - 1.0).abs() < 1e-6);
    let txt = std::fs::read_to_string(dir.path().join("fit.txt")).unwrap();
    assert!(txt.contains("t2 = ") && txt.contains('±'));
}

#[test]
fn bad_csv_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    std::fs::write(&input, "t_seconds,amplitude\n1e-4,0.9\n2e-4,oops\n").unwrap();
    let o = with_config(dir.path(), &["fit", "hahn", input.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(8));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn psd_from_runs_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("runs.csv");
    std::fs::write(
        &input,
        "pulses,t_sep_s,t2_s,label\n16,40e-6,1.2e-3,a\n32,20e-6,2.0e-3,b\n64,10e-6,3.1e-3,c\n",
    )
    .unwrap();
    let o = with_config(dir.path(), &["psd", input.to_str().unwrap(), "--g", "1.64"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("psd.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    // sorted by frequency: 12.5, 25, 50 kHz
    assert!(rows[0].starts_with("1.25"));
    assert!(rows[2].ends_with(",c"));
    assert!(dir.path().join("psd_field.csv").exists());
}

#[test]
fn infeasible_ratio_has_physics_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = with_config(dir.path(), &["ratio", "--ratio", "2", "--spacing", "20e-6"]);
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let o = with_config(dir, &["simulate-decay", "--trials", "1000", "--points", "6", "--seed", "3"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let x = std::fs::read(a.path().join("decay.csv")).unwrap();
    let y = std::fs::read(b.path().join("decay.csv")).unwrap();
    assert_eq!(x, y);
}
