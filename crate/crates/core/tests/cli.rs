use std::path::Path;
use std::process::Command;

use serde_json::Value;

const SMALL: &str = r#"{
  "profile": {"a": 0.81, "delta": 0.08, "eps0": 0.01, "bump_kind": "smooth_exp"},
  "p_grid": [0, 0.5, 1],
  "birkhoff_n": 20000,
  "n_betas": 2,
  "n_points": 2,
  "mc_samples": 20000,
  "verify_samples": 2000,
  "include_origin": true
}"#;

fn run(args: &[&str], config: &str, out: &Path) -> (i32, String) {
    let cfg = out.with_extension("json");
    std::fs::write(&cfg, config).unwrap();
    let output = Command::new(env!("CARGO_BIN_EXE_foliation-lab"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .env("FOLIATION_LAB_THREADS", "1")
        .output()
        .unwrap();
    (output.status.code().unwrap_or(-1), String::from_utf8_lossy(&output.stdout).into_owned())
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    reader.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn golden_headers() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    for cmd in ["area-sweep", "foliation", "birkhoff"] {
        let (code, stdout) = run(&[cmd], SMALL, &out);
        assert!(code == 0 || code == 1, "{cmd}: exit {code}\n{stdout}");
    }
    assert_eq!(
        header(&out.join("area_sweep.csv")),
        "p,area_formula,area_geometric,m1_exact,m1_montecarlo,mc_std_error,n_samples,seed"
    );
    assert_eq!(
        header(&out.join("foliation.csv")),
        "beta_id,beta_x,beta_y,p,h_x,h_y,method,residual,itinerary_depth_matched,birkhoff_avg,birkhoff_std_error,m1_exact"
    );
    assert_eq!(header(&out.join("birkhoff.csv")), "orbit,z_x,z_y,p,n_i,partial_average,std_error,m1_exact");
    for p in ["0", "0.5", "1"] {
        let svg = std::fs::read_to_string(out.join(format!("partition_{p}.svg"))).unwrap();
        assert!(svg.starts_with("<?xml") && svg.contains("<polyline"));
    }
    assert!(out.join("foliation_averages.svg").exists());
}

#[test]
fn foliation_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let (code, stdout) = run(&["foliation"], SMALL, &out);
    let rows = rows(&out.join("foliation.csv"));
    assert_eq!(rows.len(), 3 * 3);
    for row in &rows {
        assert_ne!(row[6], "failed");
        if row[3].parse::<f64>().unwrap() == 0.0 {
            assert_eq!((row[4].as_str(), row[5].as_str()), (row[1].as_str(), row[2].as_str()));
        }
        if row[0] == "0" {
            // the origin is its own image and always codes to 1
            assert_eq!(row[9].parse::<f64>().unwrap(), 1.0);
        }
        let real = &row[9];
        assert!(real.contains('e') && real.split('e').next().unwrap().len() == 18, "{real}");
    }
    // the short run still satisfies the per-β checks; only Area_1 ≥ 5·std_error needs the long run
    assert_eq!(code, 1, "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("FAIL")).count(), 1, "{stdout}");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for cmd in ["verify", "area-sweep", "birkhoff", "foliation"] {
        run(&[cmd, "--seed", "9"], SMALL, &a);
        run(&[cmd, "--seed", "9"], SMALL, &b);
    }
    let mut compared = 0;
    for entry in std::fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name();
        if name == "manifest.json" {
            continue;
        }
        assert_eq!(std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap(), "{name:?}");
        compared += 1;
    }
    assert!(compared >= 8);
}

#[test]
fn manifest_lists_checksums() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    run(&["area-sweep"], SMALL, &out);
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let outputs = manifest["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 4);
    for o in outputs {
        let file = out.join(o["file"].as_str().unwrap());
        let record = foliation_lab::experiments::checksum(&file).unwrap();
        assert_eq!(o["sha256"].as_str().unwrap(), record.sha256);
    }
    assert_eq!(manifest["config"]["p_grid"], serde_json::json!([0.0, 0.5, 1.0]));
    assert!(manifest["started_at"].as_str().unwrap().ends_with('Z'));
}

#[test]
fn verify_report_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ok");
    let (code, _) = run(&["verify"], SMALL, &out);
    assert_eq!(code, 0);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    for key in ["cone_report", "jacobian_max_err", "inverse_max_err", "strip_equality_ok", "fixed_point_ok", "passed"] {
        assert!(report.get(key).is_some(), "{key}");
    }
    assert!(report["jacobian_max_err"].as_f64().unwrap() <= 1e-12);

    let wild = SMALL.replace("\"eps0\": 0.01", "\"eps0\": 10");
    let out = dir.path().join("wild");
    let (code, _) = run(&["verify"], &wild, &out);
    assert_eq!(code, 1);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], Value::Bool(false));
    assert_eq!(report["cone_report"]["passed"], Value::Bool(false));

    let (code, _) = run(&["verify", "--p", "0"], SMALL, &dir.path().join("linear"));
    assert_eq!(code, 0);
    let (code, _) = run(&["verify"], r#"{"unknown": 1}"#, &dir.path().join("bad"));
    assert_eq!(code, 2);
    let (code, _) = run(&["verify"], r#"{"profile": {"eps0": "sometimes"}}"#, &dir.path().join("bad2"));
    assert_eq!(code, 2);
    let (code, _) = run(&["birkhoff", "--p", "3"], SMALL, &dir.path().join("bad3"));
    assert_eq!(code, 2);
}

#[test]
fn auto_eps0_is_calibrated() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("auto");
    let auto = SMALL.replace("\"eps0\": 0.01", "\"eps0\": \"auto\"");
    let (code, _) = run(&["verify"], &auto, &out);
    assert_eq!(code, 0);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["eps0"].as_f64().unwrap(), 0.01);
}
