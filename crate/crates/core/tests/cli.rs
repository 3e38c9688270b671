use std::process::{Command, Output};

use serde_json::Value;

fn srcurv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srcurv")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn ricci_report_has_versioned_schema() {
    let out = srcurv(&["ricci", "--model", "heisenberg", "--samples", "3", "--seed", "4"]);
    assert!(out.status.success());
    let doc = json(&out);
    assert_eq!(doc["schema"], "srcurv.report");
    assert_eq!(doc["schema_version"], "1.0.0");
    assert_eq!(doc["seed"], 4);
    assert_eq!(doc["results"]["records"].as_array().unwrap().len(), 3);
    assert!(doc.get("timestamp").is_none());
}

#[test]
fn same_seed_gives_identical_bytes() {
    let args = ["classify", "--model", "martinet", "--samples", "5", "--seed", "9"];
    let a = srcurv(&args);
    let b = srcurv(&args);
    assert_eq!(a.stdout, b.stdout);
    let c = srcurv(&["classify", "--model", "martinet", "--samples", "5", "--seed", "10"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn floats_carry_seventeen_significant_digits() {
    let out = srcurv(&["lq", "--diagram", "1", "--q", "1"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let line = text.lines().find(|l| l.contains("\"conjugate_time\"")).unwrap();
    let mantissa = line.split(':').nth(1).unwrap().trim().trim_end_matches(',').split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17, "{line}");
}

#[test]
fn failures_are_structured() {
    let out = srcurv(&["ricci", "--model", "no-such-model"]);
    assert!(!out.status.success());
    assert_eq!(json(&out)["error"]["kind"], "argument");

    let out = srcurv(&["ricci", "--model", "heisenberg", "--connection", "flat"]);
    assert!(!out.status.success());
    assert!(json(&out)["error"]["message"].as_str().unwrap().contains("flat"));

    let out = srcurv(&["ricci", "--model", "surface:1", "--x", "50,0", "--h", "1,0"]);
    assert!(!out.status.success());
    assert_eq!(json(&out)["error"]["kind"], "domain");
}

#[test]
fn model_files_and_output_paths() {
    let dir = std::env::temp_dir().join(format!("srcurv-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let model = dir.join("heis.json");
    std::fs::write(
        &model,
        r#"{"name":"heis","dim":3,"horizontal_rank":2,
            "frame":[["1","0","-x2/2"],["0","1","x1/2"],["0","0","1"]],
            "domain":[[-1e300,1e300],[-1e300,1e300],[-1e300,1e300]]}"#,
    )
    .unwrap();
    let out_path = dir.join("report.csv");
    let out = srcurv(&[
        "ricci", "--model", model.to_str().unwrap(), "--x", "0.1,0.2,0", "--h", "0.6,0.8,2",
        "--format", "csv", "--out", out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = std::fs::read_to_string(&out_path).unwrap();
    let row = csv.lines().nth(1).unwrap();
    // Ric^{1,1} = h^2 on the Heisenberg group
    let value: f64 = row.split(',').rev().nth(2).unwrap().parse().unwrap();
    assert!((value - 4.0).abs() < 1e-5, "{csv}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn validate_exit_code_reflects_checks() {
    let out = srcurv(&["validate", "--model", "contact3d:1", "--samples", "4"]);
    assert!(out.status.success());
    assert_eq!(json(&out)["results"]["passed"], true);
}

#[test]
fn bonnet_myers_on_the_hopf_fibration() {
    let out = srcurv(&["bonnet-myers", "--model", "su2", "--samples", "16"]);
    let best = json(&out)["results"]["bound"]["best"].as_f64().unwrap();
    assert!((best - 2.0 * std::f64::consts::PI).abs() < 1e-3);
}
