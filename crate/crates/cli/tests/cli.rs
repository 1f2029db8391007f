//! End-to-end tests of the `srcurv` binary: argument handling, file
//! formats, verdict exit codes, and the documented example invocations.

use std::process::Command;

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_srcurv"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    let rows: Vec<Vec<f64>> = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|c| c.parse().expect("numeric cell")).collect())
        .collect();
    (header, rows)
}

#[test]
fn young_subcommand_reports_the_expected_diagram() {
    let (code, stdout, _) =
        run(&["young", "--builtin", "heisenberg", "--p0", "1,0,1", "--x0", "0,0,0"]);
    assert_eq!(code, 0);
    let doc: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(doc["rows"], serde_json::json!([2, 1]));
    assert_eq!(doc["growth"], serde_json::json!([2, 3]));
    assert_eq!(doc["ample"], serde_json::json!(true));
}

#[test]
fn curvature_on_the_unit_sphere_gives_transverse_value_one() {
    let (code, stdout, _) = run(&[
        "curvature", "--builtin", "sphere", "--p0", "1,0", "--x0", "0,0", "--T", "3.14",
        "--samples", "8",
    ]);
    assert_eq!(code, 0);
    let (header, rows) = parse_csv(&stdout);
    assert_eq!(header[0], "t");
    let rcol = header.iter().position(|h| h == "R[2:1][2:1]").expect("transverse column");
    assert_eq!(rows.len(), 8);
    for row in &rows {
        assert!((row[rcol] - 1.0).abs() < 1e-6, "transverse curvature {}", row[rcol]);
        assert!(row.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn geodesics_in_flat_space_are_straight_lines() {
    let (code, stdout, _) = run(&[
        "geodesic", "--builtin", "euclidean2", "--x0", "0,0", "--p0", "0.6,0.2", "--T", "1",
        "--samples", "11",
    ]);
    assert_eq!(code, 0);
    let (header, rows) = parse_csv(&stdout);
    assert_eq!(header, vec!["t", "x", "y", "p_x", "p_y"]);
    for row in &rows {
        let t = row[0];
        assert!((row[1] - 0.6 * t).abs() < 1e-9);
        assert!((row[2] - 0.2 * t).abs() < 1e-9);
    }

    let (code, stdout, _) = run(&[
        "geodesic", "--builtin", "euclidean2", "--x0", "0,0", "--p0", "0.6,0.2", "--T", "1",
        "--format", "json",
    ]);
    assert_eq!(code, 0);
    let doc: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(doc["columns"][0], "t");
}

#[test]
fn normal_check_verdicts_drive_the_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let zero = dir.path().join("zero.csv");
    std::fs::write(&zero, "0,0,0\n0,0,0\n0,0,0\n").unwrap();
    let (code, stdout, _) =
        run(&["check", "normal", "--curvature", zero.to_str().unwrap(), "--young", "2,1"]);
    assert_eq!(code, 0);
    let doc: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(doc["verdict"], "pass");

    // one off-pattern cross-block entry on rows (3, 1)
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "0,0,0,0.001\n0,0,0,0\n0,0,0,0\n0.001,0,0,0\n").unwrap();
    let (code, stdout, _) =
        run(&["check", "normal", "--curvature", bad.to_str().unwrap(), "--young", "3,1"]);
    assert_eq!(code, 2);
    let doc: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(doc["verdict"], "fail");
    assert!((doc["max_violation"].as_f64().unwrap() - 1e-3).abs() < 1e-12);
}

#[test]
fn curvature_output_chains_into_the_normal_check() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let (code, _, _) = run(&[
        "curvature", "--builtin", "sphere", "--p0", "1,0.3", "--x0", "0,0", "--T", "2",
        "--samples", "5", "--out", csv.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(csv.exists());
    let (code, stdout, _) =
        run(&["check", "normal", "--curvature", csv.to_str().unwrap(), "--young", "1,1"]);
    assert_eq!(code, 0, "{stdout}");
}

#[test]
fn usage_and_compute_errors_exit_one() {
    let (code, _, stderr) = run(&["geodesic", "--builtin", "nosuch", "--x0", "1", "--p0", "1"]);
    assert_eq!(code, 1);
    assert!(stderr.contains("unknown builtin"));

    let (code, _, stderr) =
        run(&["geodesic", "--builtin", "sphere", "--x0", "0,0,0", "--p0", "1,0"]);
    assert_eq!(code, 1);
    assert!(stderr.contains("--x0"));

    let (code, _, _) = run(&["geodesic", "--x0", "0,0", "--p0", "1,0"]);
    assert_eq!(code, 1);

    // verdict output is JSON-only
    let (code, _, stderr) = run(&[
        "check", "homogeneity", "--builtin", "sphere", "--x0", "0,0", "--p0", "1,0",
        "--format", "csv",
    ]);
    assert_eq!(code, 1);
    assert!(stderr.contains("JSON-only"));

    // curvature on a rank-deficient structure requires a frame file
    let (code, _, stderr) =
        run(&["curvature", "--builtin", "heisenberg", "--x0", "0,0,0", "--p0", "1,0,1"]);
    assert_eq!(code, 1);
    assert!(stderr.contains("--frame"));

    let (code, _, _) = run(&["--help"]);
    assert_eq!(code, 0);
}

#[test]
fn homogeneity_check_passes_on_builtins() {
    let (code, stdout, _) = run(&[
        "check", "homogeneity", "--builtin", "heisenberg", "--x0", "0,0,0", "--p0",
        "1,0.3,1", "--T", "2", "--c", "2",
    ]);
    assert_eq!(code, 0);
    let doc: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(doc["verdict"], "pass");
    assert_eq!(doc["details"].as_array().unwrap().len(), 1);
}

#[test]
fn jacobi_scan_locates_the_sphere_conjugate_time() {
    let (code, stdout, stderr) = run(&[
        "jacobi", "--builtin", "sphere", "--x0", "0,0", "--p0", "1,0", "--T", "4", "--tol",
        "1e-12", "--format", "json",
    ]);
    assert_eq!(code, 0);
    let doc: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    let times = doc["conjugate_times"].as_array().unwrap();
    assert_eq!(times.len(), 1);
    assert!((times[0].as_f64().unwrap() - std::f64::consts::PI).abs() < 1e-6);
    assert!(stderr.contains("conjugate times"));
}

#[test]
fn structure_files_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("halfplane.txt");
    std::fs::write(&path, "dim 2\nvars x y\nfield E1 : y, 0\nfield E2 : 0, y\n").unwrap();
    let (code, stdout, _) = run(&[
        "geodesic", "--structure", path.to_str().unwrap(), "--x0", "0,1", "--p0", "1,0",
        "--T", "2", "--samples", "5",
    ]);
    assert_eq!(code, 0);
    let (_, rows) = parse_csv(&stdout);
    assert_eq!(rows.len(), 5);
    // the curve stays in the upper half-plane
    assert!(rows.iter().all(|r| r[2] > 0.0));
}

#[test]
fn supplied_frame_files_drive_curvature_and_checks() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("frame.txt");
    std::fs::write(&path, srcurv_core_frame_text()).unwrap();
    let common = [
        "--builtin", "heisenberg", "--x0", "0,0,0", "--p0", "1,0.3,1", "--T", "2",
        "--frame", path.to_str().unwrap(),
    ];

    let mut args = vec!["curvature"];
    args.extend_from_slice(&common);
    args.extend_from_slice(&["--samples", "4"]);
    let (code, stdout, _) = run(&args);
    assert_eq!(code, 0);
    let (header, rows) = parse_csv(&stdout);
    assert_eq!(header.len(), 10); // t plus a 3x3 box matrix
    let first = header.iter().position(|h| h == "R[1:1][1:1]").unwrap();
    for row in &rows {
        assert!((row[first] - 1.0).abs() < 1e-9, "vertical-momentum square {}", row[first]);
    }

    for sub in ["darboux", "euler"] {
        let mut args = vec!["check", sub];
        args.extend_from_slice(&common);
        let (code, stdout, _) = run(&args);
        assert_eq!(code, 0, "check {sub}: {stdout}");
    }
}

fn srcurv_core_frame_text() -> &'static str {
    srcurv_core::builtins::heisenberg_frame_text()
}

#[test]
fn ehresmann_check_passes_with_seed_echo() {
    let (code, stdout, _) = run(&[
        "check", "ehresmann", "--builtin", "sphere", "--x0", "0,0", "--p0", "1,0.3",
        "--samples", "3", "--seed", "11",
    ]);
    assert_eq!(code, 0);
    let doc: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(doc["verdict"], "pass");
    assert_eq!(doc["seed"], 11);
}
