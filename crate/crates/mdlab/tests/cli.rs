//! Exercises the command-line surface: exit-status contract, artifact
//! formats, fault injection, and determinism of emitted files.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mdlab"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("mdlab_cli").join(name);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_cfg(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn verify_windows_passes_by_default() {
    let out = tmp("vw_ok");
    let status = bin().args(["verify-windows", "--out"]).arg(&out).status().unwrap();
    assert!(status.success());
    assert!(out.join("report.json").exists());
    assert!(out.join("windows_moments.csv").exists());
}

#[test]
fn verify_windows_shifted_profile_fails_with_named_moment() {
    let dir = tmp("vw_bad");
    let cfg = write_cfg(&dir, "bad.cfg", "[windows]\nshift = 0.1\n[run]\nout_dir = .\n");
    let output = bin()
        .args(["verify-windows", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("out/report.json")).unwrap())
            .unwrap();
    let violations = report["windows"]["verdict"]["violations"].as_array().unwrap();
    assert!(
        violations.iter().any(|v| v.as_str().unwrap().contains("first moment")),
        "residual table must name the violated moment: {violations:?}"
    );
}

#[test]
fn config_errors_use_exit_code_2_with_line_numbers() {
    let dir = tmp("bad_cfg");
    let cfg = write_cfg(&dir, "broken.cfg", "[run]\ndim = 2\nrho0 = oops\n");
    let output = bin().args(["protocol", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line 3"), "diagnostic should carry the line number: {stderr}");
}

#[test]
fn usage_errors_print_synopsis() {
    let output = bin().arg("definitely-not-a-command").output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("Usage") || stderr.contains("usage"));
}

#[test]
fn rates_emits_csv_and_svg_with_matching_slope() {
    let out = tmp("rates");
    let status = bin()
        .args(["rates", "--geometry", "ball", "--h", "0.2,0.1,0.05", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("rates_ball.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(header, "h,f_n,f_limit,error,interior_sum,first_layer_sum,deeper_sum");
    assert!(csv.ends_with('\n'));

    // the annotated slope in the SVG equals the fitted slope to 3 decimals
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let slope = report["rates"][0]["fit"]["slope"].as_f64().unwrap();
    let svg = std::fs::read_to_string(out.join("rates_ball.svg")).unwrap();
    assert!(svg.contains(&format!("slope = {slope:.3}")), "svg should carry the fitted slope");
}

#[test]
fn same_seed_reproduces_byte_identical_outputs() {
    let cfg_body = "[run]\nh_list = 0.2,0.1,0.05\nscan_pairs = 4\n";
    let dir = tmp("seeded");
    let cfg = write_cfg(&dir, "scan.cfg", cfg_body);
    for sub in ["a", "b"] {
        let status = bin()
            .args(["scan-test", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.join(sub))
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(dir.join("a/scan.csv")).unwrap();
    let b = std::fs::read(dir.join("b/scan.csv")).unwrap();
    assert_eq!(a, b, "identical seeds must reproduce byte-identical CSV outputs");
}

#[test]
fn report_subcommand_round_trips() {
    let out = tmp("report_rt");
    let status = bin().args(["scaling-test", "--out"]).arg(&out).status().unwrap();
    assert!(status.success());
    let status = bin()
        .args(["report", "--input"])
        .arg(out.join("report.json"))
        .status()
        .unwrap();
    assert!(status.success());
}
