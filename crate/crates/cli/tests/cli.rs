use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn annulus(args: &[&str], stdin: Option<&str>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_annulus"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn annulus");
    let mut pipe = child.stdin.take().unwrap();
    pipe.write_all(stdin.unwrap_or("").as_bytes()).unwrap();
    drop(pipe);
    child.wait_with_output().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn catalog(args: &[&str]) -> String {
    let o = annulus(&[&["catalog"], args].concat(), None);
    assert!(o.status.success());
    String::from_utf8(o.stdout).unwrap()
}

#[test]
fn catalog_genus0_is_the_flat_cylinder() {
    let j: Value = serde_json::from_str(&catalog(&["--genus", "0"])).unwrap();
    assert_eq!(j["tau"][0].as_f64().unwrap(), 6.283185307179586);
    assert_eq!(j["tau"][1].as_f64().unwrap(), 0.0);
    assert!((j["b_coeffs"][0][0].as_f64().unwrap() + PI / 16.0).abs() < 1e-15);
}

#[test]
fn catalog_rejects_bad_parameters() {
    assert_eq!(annulus(&["catalog", "--genus", "1", "--alpha", "1.5"], None).status.code(), Some(2));
    assert_eq!(annulus(&["catalog", "--genus", "3"], None).status.code(), Some(2));
    assert_eq!(annulus(&["catalog", "--bogus"], None).status.code(), Some(2));
}

#[test]
fn validate_passes_catalog_and_fails_perturbed() {
    let data = catalog(&["--genus", "1", "--alpha", "0.25"]);
    let j = stdout_json(&annulus(&["validate"], Some(&data)));
    assert_eq!(j["passes"], Value::Bool(true));
    assert!(j["max_residual"].as_f64().unwrap() <= 1e-6);

    let mut v: Value = serde_json::from_str(&data).unwrap();
    v["tau"][1] = Value::from(v["tau"][1].as_f64().unwrap() * 1.01);
    let o = annulus(&["validate"], Some(&v.to_string()));
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("closing condition"), "{err}");
}

#[test]
fn malformed_json_reports_position() {
    let o = annulus(&["validate"], Some("{\n  \"genus\": 1,\n  \"theta\": oops\n}"));
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") && err.contains("column"), "{err}");
    let o = annulus(&["validate"], Some("{\"genus\": 0, \"extra\": 1}"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn flow_flux_law_over_half_unit() {
    let data = catalog(&["--genus", "1", "--alpha", "0.1"]);
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("d.json");
    fs::write(&input, data).unwrap();
    let o = annulus(&["flow", input.to_str().unwrap(), "--chooser", "flux", "--T", "0.5"], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines: Vec<Value> = String::from_utf8(o.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let first = lines[0]["abs_tau"].as_f64().unwrap();
    let last = lines.last().unwrap();
    assert!((last["t"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    let ratio = last["abs_tau"].as_f64().unwrap() / first;
    assert!((ratio - 0.25f64.exp()).abs() < 1e-3, "{ratio}");
}

#[test]
fn flow_stops_at_touching_circle_from_quarter() {
    let data = catalog(&["--genus", "1", "--alpha", "0.25"]);
    let o = annulus(&["flow", "--T", "0.5", "--dt", "0.01"], Some(&data));
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let last: Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(last["event"]["kind"], Value::from("touching-circle"));
    assert!((last["abs_tau"].as_f64().unwrap() - 2.0 * PI).abs() < 0.05);
}

#[test]
fn flow_unknown_chooser_is_usage_error() {
    let o = annulus(&["flow", "--chooser", "nope"], Some(&catalog(&[])));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn surface_writes_mesh_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("s.csv");
    let data = catalog(&["--genus", "1", "--alpha", "0.4"]);
    let j = stdout_json(&annulus(&["surface", "--nx", "24", "--ny", "6", "--mesh", mesh.to_str().unwrap()], Some(&data)));
    assert!(j["immersion"]["closure"].as_f64().unwrap() < 1e-6);
    assert!(j["geometry"]["n3_residual"].as_f64().unwrap() < 1e-8);
    assert_eq!(j["mesh"]["rows"].as_u64(), Some(144));
    let csv = fs::read_to_string(&mesh).unwrap();
    assert_eq!(csv.lines().next(), Some("x,y,G1,G2,G3,h"));
    assert_eq!(csv.lines().count(), 145);
}

#[test]
fn surface_from_potential_json() {
    let pot = r#"{"genus": 0, "coeffs": [[[0,0],[0,0.25],[0,0],[0,0]], [[0,0],[0,0],[0,0.25],[0,0]]], "tau": [6.283185307179586, 0]}"#;
    let j = stdout_json(&annulus(&["surface", "--nx", "16", "--ny", "4"], Some(pot)));
    assert!(j["immersion"]["closure"].as_f64().unwrap() < 1e-6, "{j}");
    assert!((j["geometry"]["flux"].as_f64().unwrap() - 2.0 * PI).abs() < 1e-8, "{j}");
    // a potential violating the pairing invariant
    let bad = r#"{"genus": 0, "coeffs": [[[0,0],[0,1],[0,0],[0,0]], [[0,0],[0,0],[0,0.25],[0,0]]], "tau": [6.283185307179586, 0]}"#;
    assert_eq!(annulus(&["surface"], Some(bad)).status.code(), Some(2));
    let o = annulus(&["surface"], Some(r#"{"genus": 0, "coeffs": []}"#));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dress_flat_reports_embedding() {
    let j = stdout_json(&annulus(&["dress", "--nx", "24", "--ny", "6"], Some(&catalog(&[]))));
    let verdict = j["embedding"]["verdict"].as_str().unwrap();
    assert!(["embedded", "self_intersecting", "inconclusive"].contains(&verdict));
    assert!(j["immersion"]["closure"].as_f64().unwrap() < 1e-6);
    assert_eq!(j["dressed_data"]["genus"].as_u64(), Some(2));
    let o = annulus(&["dress", "--alpha0", "0.6,0.8"], Some(&catalog(&[])));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn hierarchy_table() {
    let j = stdout_json(&annulus(&["hierarchy", "--c", "-0.1", "--d", "-0.2", "--n-max", "1", "--set", "hierarchy_nx=48", "--set", "hierarchy_ny=48"], None));
    let rows = j["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0]["n"], Value::from(-1));
    assert!(j["sinh_gordon_residual"].as_f64().unwrap() < 1e-2);
}

#[test]
fn describe_flags_overrides_and_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "nx = 96\n").unwrap();
    let o = annulus(&["describe", "--config", cfg.to_str().unwrap(), "--set", "dt=0.01"], None);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let line = |k: &str| text.lines().find(|l| l.split_whitespace().next() == Some(k)).unwrap().to_string();
    assert!(line("nx").contains("override (config"), "{}", line("nx"));
    assert!(line("dt").contains("override (flag"), "{}", line("dt"));
    assert!(line("ny").ends_with("default"));
    assert_eq!(text, String::from_utf8(annulus(&["describe", "--config", cfg.to_str().unwrap(), "--set", "dt=0.01"], None).stdout).unwrap());

    fs::write(&cfg, "nxx = 96\n").unwrap();
    assert_eq!(annulus(&["describe", "--config", cfg.to_str().unwrap()], None).status.code(), Some(2));
}

#[test]
fn bad_thread_count_is_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_annulus")).arg("describe").env("ANNULUS_THREADS", "zero").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_annulus")).arg("describe").env("ANNULUS_THREADS", "2").output().unwrap();
    assert!(o.status.success());
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let data = catalog(&["--genus", "2", "--alpha", "0.6", "--beta", "0.4"]);
    assert_eq!(data, catalog(&["--genus", "2", "--alpha", "0.6", "--beta", "0.4"]));
    let a = annulus(&["validate"], Some(&data));
    let b = annulus(&["validate"], Some(&data));
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let a = annulus(&["surface", "--nx", "16", "--ny", "4"], Some(&data));
    let b = annulus(&["surface", "--nx", "16", "--ny", "4", "--set", "ny=4"], Some(&data));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn catalog_validate_round_trip_matrix() {
    let mut cases: Vec<Vec<String>> = vec![vec!["--genus".into(), "0".into()]];
    for p in ["0.1", "0.3", "0.5", "0.7", "0.9"] {
        cases.push(vec!["--genus".into(), "1".into(), "--alpha".into(), p.into()]);
        cases.push(vec!["--genus".into(), "1".into(), "--negative".into(), "--beta".into(), p.into()]);
    }
    for (a, b) in [("0.3", "0.3"), ("0.6", "0.4"), ("0.8", "0.2")] {
        cases.push(vec!["--genus".into(), "2".into(), "--alpha".into(), a.into(), "--beta".into(), b.into()]);
    }
    for args in cases {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let data = catalog(&args);
        let o = annulus(&["validate"], Some(&data));
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}
