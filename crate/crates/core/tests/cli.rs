use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn oamturb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oamturb"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn map_without_turbulence_is_identity() {
    let v = json_of(&oamturb(&["map", "--l0", "3", "--w0", "0.05", "--r0", "1e9"]));
    assert!((v["a"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert!(v["b"].as_f64().unwrap().abs() < 1e-6);
    assert!((v["concurrence"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["config"]["command"], "map");
}

#[test]
fn map_derives_r0_from_the_path() {
    let v = json_of(&oamturb(&[
        "map", "--l0", "3", "--w0", "0.05", "--cn2", "1e-15", "--wavelength", "800e-9",
        "--distance", "1000",
    ]));
    let k = 2.0 * std::f64::consts::PI / 800e-9;
    let r0 = (0.16 * 1e-15 * k * k * 1000.0_f64).powf(-0.6);
    assert!((v["r0"].as_f64().unwrap() / r0 - 1.0).abs() < 1e-12);
    let c = v["concurrence"].as_f64().unwrap();
    assert!(c > 0.0 && c < 1.0);
}

#[test]
fn missing_flag_is_a_usage_error_naming_it() {
    let out = oamturb(&["map", "--l0", "3", "--r0", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--w0"));
}

#[test]
fn conflicting_turbulence_flags_are_rejected() {
    let out = oamturb(&["map", "--l0", "3", "--w0", "0.05", "--r0", "1", "--cn2", "1e-15"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numeric_failure_exits_with_three() {
    let out = oamturb(&["map", "--l0", "3", "--w0", "0.05", "--r0", "1e-20"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("numeric"));
}

#[test]
fn sweep_is_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let files: Vec<_> = ["1", "4"]
        .iter()
        .map(|t| {
            let path = dir.path().join(format!("sweep{t}.csv"));
            let out = oamturb(&[
                "--threads", t, "sweep", "--l0", "1,5", "--w0", "0.05", "--x", "0.1:1.2:0.1",
                "--out", path_str(&path),
            ]);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            std::fs::read(&path).unwrap()
        })
        .collect();
    assert_eq!(files[0], files[1]);
    let text = String::from_utf8(files[0].clone()).unwrap();
    let mut lines = text.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with(&format!("# oamturb {} {{", env!("CARGO_PKG_VERSION"))));
    assert_eq!(lines.next().unwrap(), "l0,x,r0,a,b,atilde,concurrence,status");
    assert_eq!(lines.count(), 2 * 12);
}

#[test]
fn fit_reads_a_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("c.csv");
    let out = oamturb(&[
        "sweep", "--l0", "20", "--w0", "0.05", "--x", "0.1:1:0.02", "--out", path_str(&csv),
    ]);
    assert!(out.status.success());
    let v = json_of(&oamturb(&["fit", "--in", path_str(&csv), "--l0", "20"]));
    let alpha = v["alpha"].as_f64().unwrap();
    let beta = v["beta"].as_f64().unwrap();
    assert!(alpha > 2.0 && alpha < 6.0, "alpha {alpha}");
    assert!(beta > 2.0 && beta < 5.0, "beta {beta}");
    assert_eq!(v["window_sensitivity"].as_array().unwrap().len(), 4);

    let missing = oamturb(&["fit", "--in", path_str(&csv), "--l0", "7"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn mc_is_byte_identical_across_reruns_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let files: Vec<_> = ["1", "3", "3"]
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let path = dir.path().join(format!("mc{i}.json"));
            let out = oamturb(&[
                "--threads", t, "mc", "--l0", "2", "--w0", "0.05", "--r0", "0.08", "--samples",
                "100", "--seed", "42", "--grid", "512", "--out", path_str(&path),
            ]);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            std::fs::read(&path).unwrap()
        })
        .collect();
    assert_eq!(files[0], files[1]);
    assert_eq!(files[1], files[2]);
    let v: Value = serde_json::from_slice(&files[0]).unwrap();
    assert!(v["a_mc"].as_f64().unwrap() > 0.0);
    assert!(v["sigma_a"].as_f64().unwrap() > 0.0);
}

#[test]
fn screen_writes_the_documented_binary_layout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.bin");
    let out = oamturb(&[
        "screen", "--n", "256", "--extent", "1", "--r0", "0.1", "--seed", "7", "--index", "3",
        "--out", path_str(&path),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], b"OAMSCRN1");
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    assert_eq!(u64_at(8), 256);
    assert_eq!(f64::from_le_bytes(bytes[16..24].try_into().unwrap()), 1.0);
    assert_eq!(u64_at(24), 7);
    assert_eq!(u64_at(32), 3);
    assert_eq!(bytes.len(), 40 + 256 * 256 * 8);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let ini = dir.path().join("run.ini");
    std::fs::write(&ini, "w0 = 0.05\n[map]\nr0 = 0.01\nl0 = 5\n").unwrap();
    let from_file = json_of(&oamturb(&["--config", path_str(&ini), "map"]));
    let from_flags = json_of(&oamturb(&["map", "--l0", "5", "--w0", "0.05", "--r0", "0.01"]));
    assert_eq!(from_file, from_flags);

    let overridden = json_of(&oamturb(&["--config", path_str(&ini), "map", "--l0", "7"]));
    assert_eq!(overridden["l0"], 7);

    std::fs::write(&ini, "[map]\nbogus = 1\n").unwrap();
    let bad = oamturb(&["--config", path_str(&ini), "map"]);
    assert_eq!(bad.status.code(), Some(2));
}
