use std::process::{Command, Output};

use serde_json::Value;

fn selfdual(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selfdual"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(args: &[&str]) -> Value {
    let out = selfdual(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

fn all_pass(r: &Value) -> bool {
    r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["verdict"] == "PASS")
}

#[test]
fn pointwise_trials_all_pass() {
    let r = report(&[
        "verify-pointwise",
        "--n",
        "2",
        "--s",
        "2",
        "--trials",
        "100",
        "--seed",
        "3",
    ]);
    let checks = r["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 100);
    assert!(all_pass(&r));
    assert_eq!(r["summary"]["passed"], 100);
    assert_eq!(r["schema_version"], 1);
}

#[test]
fn square_torus_has_unit_base() {
    let r = report(&["mirror", "--tau", "0+1i", "--t", "0+1i"]);
    assert!(all_pass(&r));
    let data = &r["data"]["torus_data"];
    assert!((data["base_length"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    for l in data["fibre_lengths"].as_array().unwrap() {
        assert!((l.as_f64().unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn mirror_swaps_parameters() {
    let r = report(&[
        "mirror",
        "--tau",
        "0.25+1.5i",
        "--t",
        "-0.1+0.4i",
        "--convention",
        "swapped-labels",
    ]);
    assert!(all_pass(&r));
    assert_eq!(r["conventions"]["monodromy"], "swapped-labels");
    let m = &r["data"]["mirror"]["tau"];
    assert!((m[1].as_f64().unwrap() - 0.4).abs() < 1e-12);
}

#[test]
fn default_chart_passes() {
    let r = report(&["affine-check"]);
    assert!(all_pass(&r));
    assert_eq!(r["config"]["arguments"]["chart"], "builtin:quartic1d");
}

#[test]
fn shipped_two_dimensional_chart_passes() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/charts/softmax2d.cfg");
    let r = report(&["affine-check", "--chart", path]);
    assert!(all_pass(&r));
}

#[test]
fn reruns_are_byte_identical() {
    let args = ["verify-pointwise", "--trials", "10", "--seed", "9"];
    let a = selfdual(&args);
    let b = selfdual(&args);
    assert_eq!(a.stdout, b.stdout);
    let args = ["--threads", "2", "skaid-check", "--n", "1", "--N", "2"];
    assert_eq!(selfdual(&args).stdout, selfdual(&args).stdout);
}

#[test]
fn timing_is_opt_in() {
    let plain = String::from_utf8(selfdual(&["mirror", "--tau", "i", "--t", "i"]).stdout).unwrap();
    assert!(!plain.contains("wall_time_s"));
    let timed = report(&["--timing", "mirror", "--tau", "i", "--t", "i"]);
    assert!(timed["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn out_flag_writes_file() {
    let dir = std::env::temp_dir().join(format!("selfdual-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("r.json");
    let out = selfdual(&["--out", path.to_str().unwrap(), "rep-check", "--n", "1"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(r["suite"], "rep-check");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(selfdual(&["--bogus"]).status.code(), Some(2));
    assert_eq!(
        selfdual(&["affine-check", "--chart", "/does/not/exist.cfg"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        selfdual(&["mirror", "--tau", "0-1i", "--t", "i"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        selfdual(&["fm", "--tau", "i", "--t", "i", "--alpha", "dq"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(selfdual(&["rep-check", "--n", "0"]).status.code(), Some(2));
    assert_eq!(
        selfdual(&["--rank-tol", "-1", "verify-pointwise"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn malformed_chart_exits_with_two() {
    let dir = std::env::temp_dir().join(format!("selfdual-bad-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.cfg");
    std::fs::write(&path, "n = \"one\"\n").unwrap();
    assert_eq!(
        selfdual(&["affine-check", "--chart", path.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn failing_checks_exit_with_one() {
    // a threshold no floating-point residual can meet
    let out = selfdual(&[
        "--identity-tol",
        "1e-300",
        "mirror",
        "--tau",
        "0.3+1.1i",
        "--t",
        "0.2+0.7i",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(r["summary"]["failed"].as_u64().unwrap() > 0);
}

#[test]
fn algebra_suites_pass() {
    let r = report(&["rep-check", "--n", "2"]);
    assert!(all_pass(&r));
    assert_eq!(r["data"]["closure_dimension"], 15);
    assert_eq!(r["data"]["single_form_dimension"], 3);
    let r = report(&["skaid-check", "--n", "1", "--N", "3"]);
    assert!(all_pass(&r));
}

#[test]
fn fm_constant_goes_to_fibre_form() {
    // 1 on E_1 maps to a constant 1-form on E_2 along its fibre
    let r = report(&["fm", "--tau", "i", "--t", "i", "--alpha", "1", "--j", "1"]);
    assert!(all_pass(&r));
    assert_eq!(r["data"]["target_degree"], 1);
    let rows = r["data"]["coefficients"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["blade"], "ds2");
    assert!((rows[0]["value"].as_f64().unwrap().abs() - 1.0).abs() < 1e-12);
}

#[test]
fn all_suite_prefixes_ids() {
    let r = report(&["all"]);
    assert!(all_pass(&r));
    let ids: Vec<&str> = r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["id"].as_str().unwrap())
        .collect();
    for prefix in [
        "pointwise/",
        "affine/",
        "mirror/",
        "fm/",
        "rep/closure/",
        "skaid/",
    ] {
        assert!(ids.iter().any(|i| i.starts_with(prefix)), "{prefix}");
    }
}
