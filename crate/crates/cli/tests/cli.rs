use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SCALAR: &str = include_str!("../../core/scenarios/scalar_a1.json");

fn liectl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_liectl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit status")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn edited(f: impl FnOnce(&mut serde_json::Value)) -> String {
    let mut v: serde_json::Value = serde_json::from_str(SCALAR).unwrap();
    f(&mut v);
    v.to_string()
}

#[test]
fn lists_bundled_scenarios() {
    let out = liectl(&["scenarios"]);
    assert_eq!(code(&out), 0);
    let s = String::from_utf8(out.stdout).unwrap();
    for name in [
        "scalar_a1",
        "plane_hyperbolic",
        "heis_hyperbolic",
        "se2_compact_center",
    ] {
        assert!(s.contains(name), "{s}");
    }
}

#[test]
fn quick_verify_passes_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = liectl(&["verify", "scalar_a1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["level"], "quick");
    assert!(report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["pass"] == true));
}

#[test]
fn failing_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(
        dir.path(),
        "tight.json",
        &edited(|v| v["defaults"]["radius"] = 0.1.into()),
    );
    let out = liectl(&["verify", &sc]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bounded_orbit_fraction"));
}

#[test]
fn configuration_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_schema = write(
        dir.path(),
        "schema.json",
        &edited(|v| v["schema"] = 7.into()),
    );
    let bad_dim = write(
        dir.path(),
        "dim.json",
        &edited(|v| v["group"]["dim"] = "one".into()),
    );
    let unknown = write(
        dir.path(),
        "unknown.json",
        &edited(|v| v["defaults"]["stepp"] = 0.1.into()),
    );
    for (path, needle) in [
        (&bad_schema, "schema"),
        (&bad_dim, "group.dim"),
        (&unknown, "stepp"),
    ] {
        let out = liectl(&["decompose", path]);
        assert_eq!(code(&out), 2, "{path}");
        assert!(
            String::from_utf8_lossy(&out.stderr).contains(needle),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    assert_eq!(code(&liectl(&["decompose", "no_such_scenario"])), 2);
    assert_eq!(
        code(&liectl(&["verify", "scalar_a1", "--level", "medium"])),
        2
    );
    let u = write(
        dir.path(),
        "u.json",
        r#"{"breakpoints":[0,1],"values":[[2.5]],"period":1}"#,
    );
    assert_eq!(
        code(&liectl(&["fixed-point", "scalar_a1", "--control", &u])),
        2
    );
    let u = write(
        dir.path(),
        "w.json",
        r#"{"breakpoints":[0,1],"values":[[0.5, 0.5]]}"#,
    );
    assert_eq!(
        code(&liectl(&["fixed-point", "scalar_a1", "--control", &u])),
        2
    );
}

#[test]
fn numerical_failure_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let u = write(
        dir.path(),
        "u.json",
        r#"{"breakpoints":[0,1],"values":[[0.5]],"period":1}"#,
    );
    let out = liectl(&[
        "simulate",
        "scalar_a1",
        "--control",
        &u,
        "--time",
        "800",
        "--initial",
        "5",
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn degenerate_control_range_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(
        dir.path(),
        "point.json",
        &edited(|v| {
            v["constraint"] = serde_json::json!({ "kind": "polytope", "vertices": [[0.0]] })
        }),
    );
    assert_eq!(code(&liectl(&["verify", &sc])), 4);
    assert_eq!(code(&liectl(&["control-set", &sc, "--level", "quick"])), 4);
}

#[test]
fn simulate_writes_trajectory_csv() {
    let dir = tempfile::tempdir().unwrap();
    let u = write(
        dir.path(),
        "u.json",
        r#"{"breakpoints":[0,0.5,1],"values":[[1,0],[-1,1]],"period":1}"#,
    );
    let out_dir = dir.path().join("out");
    let out = liectl(&[
        "simulate",
        "se2_compact_center",
        "--control",
        &u,
        "--time",
        "2",
        "--initial",
        "0.1,-0.2,0.3",
        "--points",
        "10",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(out_dir.join("trajectory.csv")).unwrap();
    assert_eq!(
        rdr.headers().unwrap(),
        vec!["time", "c1", "c2", "c3", "u1", "u2"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 11);
    let first: Vec<f64> = rows[0].iter().map(|x| x.parse().unwrap()).collect();
    assert_eq!(&first[..4], &[0.0, 0.1, -0.2, 0.3]);
    assert_eq!(rows[10][0].parse::<f64>().unwrap(), 2.0);
}

#[test]
fn fixed_point_for_constant_control() {
    let dir = tempfile::tempdir().unwrap();
    let u = write(
        dir.path(),
        "u.json",
        r#"{"breakpoints":[0,1],"values":[[0.4]],"period":1}"#,
    );
    let out = liectl(&["fixed-point", "scalar_a1", "--control", &u]);
    assert_eq!(code(&out), 0);
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((r["x_u"][0].as_f64().unwrap() + 0.4).abs() < 1e-6);
    assert_eq!(r["orbit_mode"], "anchored");
}

#[test]
fn control_set_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = liectl(&[
        "control-set",
        "scalar_a1",
        "--level",
        "quick",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "control_set.csv",
        "forward.csv",
        "backward.csv",
        "control_set.json",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("control_set.json")).unwrap())
            .unwrap();
    let extent = &summary["extent"][0];
    assert!(
        extent[0].as_f64().unwrap() < -0.9 && extent[1].as_f64().unwrap() > 0.9,
        "{extent}"
    );
}

#[test]
fn decompose_reports_split() {
    let out = liectl(&["decompose", "se2_compact_center"]);
    assert_eq!(code(&out), 0);
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["split"]["dims"], serde_json::json!([2, 1, 0]));
}
