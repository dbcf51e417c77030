use std::path::Path;
use std::process::{Command, Output};

use apk_core::geometry::{Orientation, Point};
use apk_core::io::to_json;
use apk_core::patches::{ArithmeticPatch, EpsAP};
use serde_json::Value;

fn apk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_apk")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

/// Q = {(0.05, 0), (1, 0), (1.95, 0)} against P(0, 1, {(1, 0)}, 3).
fn perturbed_ap(file: &Path) {
    let pt = |c: &[f64]| Point::new(c.to_vec()).unwrap();
    let e = Orientation::from_coords(&[vec![1.0, 0.0]]).unwrap();
    let p = ArithmeticPatch::new(pt(&[0.0, 0.0]), 1.0, e, 3).unwrap();
    let q = vec![pt(&[0.05, 0.0]), pt(&[1.0, 0.0]), pt(&[1.95, 0.0])];
    let ap = EpsAP::certify(q, p, 0.1, None, 0).unwrap();
    std::fs::write(file, to_json(&ap).unwrap()).unwrap();
}

#[test]
fn construct_writes_pieces_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let k = dir.path().join("k.json");
    let out = apk(&["construct", "--d", "2", "--depth", "8", "--out", path(&k)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("pieces 9 (+ origin)"));
    assert_eq!(json(&k)["pieces"].as_array().unwrap().len(), 9);

    let d = dir.path().join("d.json");
    let out = apk(&["construct", "--d", "2", "--m", "2", "--depth", "4", "--diamonds", "--out", path(&d)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let pieces = json(&d)["pieces"].as_array().unwrap().clone();
    assert_eq!(pieces.len(), 5);
    assert!(pieces.iter().all(|p| p["type"] == "diamond"));
}

#[test]
fn usage_errors_exit_64() {
    for args in [
        &["construct", "--d", "1", "--depth", "3"][..],
        &["find-ap", "--eps", "1.5"],
        &["find-ap", "--d", "2", "--e", "0,1", "--k", "3", "--eps", "1.5"],
        &["find-ap", "--d", "2", "--e", "0,1", "--k", "3", "--eps", "0"],
        &["construct", "--d", "2", "--depth", "3", "--m", "2"],
        &["--threads", "0", "construct", "--d", "2", "--depth", "1"],
        &["no-such-command"],
    ] {
        let out = apk(args);
        assert_eq!(code(&out), 64, "{args:?}: {}", stderr(&out));
        assert!(!stderr(&out).is_empty());
    }
    let out = apk(&["--help"]);
    assert_eq!(code(&out), 0);
}

#[test]
fn find_ap_reports_level_and_scale() {
    let dir = tempfile::tempdir().unwrap();
    let ap = dir.path().join("ap.json");
    let out = apk(&["find-ap", "--d", "2", "--e", "0,1", "--k", "3", "--eps", "0.5", "--out", path(&ap)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json(&ap);
    assert_eq!(v["level"], 4);
    assert_eq!(num(&v["scale"]), 1.0 / 64.0);

    let out = apk(&["find-ap", "--d", "2", "--angle", "1.0", "--k", "5", "--eps", "0.05", "--out", path(&ap)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(num(&json(&ap)["worst_ratio"]) <= 0.05);
    // The written file verifies at its own eps.
    assert_eq!(code(&apk(&["verify-ap", "--in", path(&ap)])), 0);
}

#[test]
fn dyadic_literals_match_decimals() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    assert_eq!(code(&apk(&["find-ap", "--e", "0,1", "--k", "3", "--eps", "1/2^1", "--out", path(&a)])), 0);
    assert_eq!(code(&apk(&["find-ap", "--e", "0,1", "--k", "3", "--eps", "0.5", "--out", path(&b)])), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(code(&apk(&["find-ap", "--e", "0,1", "--k", "3", "--eps", "1/3"])), 64);
}

#[test]
fn verify_ap_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let ap = dir.path().join("ap.json");
    perturbed_ap(&ap);
    let out = apk(&["verify-ap", "--in", path(&ap), "--eps", "0.01"]);
    assert_eq!(code(&out), 1);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["pass"], false);
    assert!((num(&v["worst_ratio"]) - 0.05).abs() < 1e-15);
    assert_eq!(code(&apk(&["verify-ap", "--in", path(&ap), "--eps", "0.1"])), 0);
}

#[test]
fn malformed_input_exits_4_with_the_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let ap = dir.path().join("ap.json");
    perturbed_ap(&ap);
    let mut v = json(&ap);
    v["Q"][1] = Value::String("oops".into());
    std::fs::write(&ap, serde_json::to_string(&v).unwrap()).unwrap();
    let out = apk(&["verify-ap", "--in", path(&ap)]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("Q[1]"), "{}", stderr(&out));

    let out = apk(&["estimate-dim", "--in", path(&dir.path().join("missing.json"))]);
    assert_eq!(code(&out), 4);
}

#[test]
fn budget_and_certification_exit_codes() {
    let out = apk(&["find-ap", "--orientation", "1,0;0,1", "--k", "3", "--eps", "0.2", "--tuple-budget", "1"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let out = apk(&["find-ap", "--e", "0.6,0.8", "--k", "3", "--eps", "0.5", "--linear-scan", "--tuple-budget", "1"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    // No rational direction equals an irrational unit exactly.
    let out = apk(&["certify-lb", "--d", "2", "--angle", "1.0", "--eps", "0", "--ks", "3"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn certify_lb_chain() {
    let dir = tempfile::tempdir().unwrap();
    let certs = dir.path().join("certs.json");
    let out = apk(&["certify-lb", "--d", "2", "--e", "0,1", "--eps", "0", "--ks", "3,16,128,1024", "--out", path(&certs)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json(&certs);
    let exps: Vec<f64> = v.as_array().unwrap().iter().map(|c| num(&c["certified_exponent"])).collect();
    assert_eq!(exps.len(), 4);
    assert!(exps.windows(2).all(|w| w[0] < w[1]), "{exps:?}");
    assert!((exps[0] - 3f64.ln() / 12f64.ln()).abs() < 1e-12);

    let out = apk(&["certify-lb", "--d", "2", "--diamonds", "--orientation", "1,0;-1,0.1", "--eps", "0.05", "--ks", "3"]);
    assert_eq!(code(&out), 64);
    assert!(stderr(&out).contains("epsilon"));
}

#[test]
fn scans_and_enumeration() {
    let dir = tempfile::tempdir().unwrap();
    let k = dir.path().join("k.json");
    assert_eq!(code(&apk(&["construct", "--d", "2", "--depth", "6", "--out", path(&k)])), 0);

    let scan = dir.path().join("scan.csv");
    let out = apk(&["estimate-dim", "--in", path(&k), "--rhos", "16,64", "--out", path(&scan)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    let sup: f64 = text.lines().find_map(|l| l.strip_prefix("sup exponent_upper ")).unwrap().parse().unwrap();
    assert!(sup > 0.5 && sup <= 1.2, "{sup}");
    let csv = std::fs::read_to_string(&scan).unwrap();
    let records: usize = text.lines().find_map(|l| l.strip_prefix("records ")).unwrap().parse().unwrap();
    assert_eq!(csv.lines().count(), records + 1);

    let out = apk(&["cover", "--in", path(&k), "--center", "1,0", "--radii", "1/2^2", "--rhos", "16,32"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 3);

    let out = apk(&["enum-dirs", "--d", "2", "--count", "4"]);
    assert_eq!(code(&out), 0);
    let lines: Vec<Value> = String::from_utf8_lossy(&out.stdout).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 4);
    for (j, l) in lines.iter().enumerate() {
        assert_eq!(l["index"], j);
        let z: Vec<i64> = serde_json::from_value(l["z"].clone()).unwrap();
        assert_eq!(z.iter().map(|x| x.abs()).max(), Some(1));
    }
}
