use serde_json::Value;
use std::io::Write;
use std::process::{Command, Output};
use tempfile::NamedTempFile;

fn gzcut(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gzcut"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn matrix_file(body: &str) -> NamedTempFile {
    let mut f = NamedTempFile::new().unwrap();
    f.write_all(body.as_bytes()).unwrap();
    f
}

fn real_matrix(rows: &[&[f64]]) -> NamedTempFile {
    let entries: Vec<Vec<[f64; 2]>> = rows
        .iter()
        .map(|r| r.iter().map(|&v| [v, 0.0]).collect())
        .collect();
    let body = serde_json::json!({ "n": rows.len(), "entries": entries });
    matrix_file(&body.to_string())
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn path(f: &NamedTempFile) -> &str {
    f.path().to_str().unwrap()
}

#[test]
fn coincidence_of_a_diagonal_matrix() {
    let f = real_matrix(&[&[1.0, 0.0, 0.0], &[0.0, 2.0, 0.0], &[0.0, 0.0, 3.0]]);
    let out = gzcut(&["coincidence", "--input", path(&f)]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    assert_eq!(report["command"], "coincidence");
    assert_eq!(report["status"], "pass");
    assert_eq!(report["results"]["l"], 2);
}

#[test]
fn canonical_form_of_a_bordered_matrix() {
    // cutoff diag(1, 2), full spectrum {1, 2 ± sqrt(2)}: one coincidence
    let f = real_matrix(&[&[1.0, 0.0, 0.0], &[0.0, 2.0, 1.0], &[0.0, 1.0, 2.0]]);
    let out = gzcut(&["canonical", "--input", path(&f)]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = json(&out);
    assert_eq!(report["results"]["l"], 1);
    let idx = report["results"]["idx"].as_array().unwrap();
    let (i, j) = (idx[0].as_u64().unwrap(), idx[1].as_u64().unwrap());
    assert_eq!(j - i, 1);
    assert_eq!(report["results"]["inside"], true);
}

#[test]
fn canonical_form_needs_a_regular_semisimple_cutoff() {
    let f = real_matrix(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 3.0]]);
    let out = gzcut(&["canonical", "--input", path(&f)]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(json(&out)["status"], "n/a");
}

#[test]
fn one_by_one_input_is_rejected() {
    let f = real_matrix(&[&[5.0]]);
    let out = gzcut(&["coincidence", "--input", path(&f)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no cutoff"));
}

#[test]
fn malformed_and_missing_input_are_rejected() {
    let f = matrix_file(r#"{"n": 2, "entries": [[[1, 0]]]}"#);
    assert_eq!(
        gzcut(&["coincidence", "--input", path(&f)]).status.code(),
        Some(2)
    );
    let f = matrix_file("not json");
    assert_eq!(
        gzcut(&["coincidence", "--input", path(&f)]).status.code(),
        Some(2)
    );
    assert_eq!(gzcut(&["coincidence"]).status.code(), Some(2));
    assert_eq!(gzcut(&["catalog", "--n", "9"]).status.code(), Some(2));
}

#[test]
fn output_file_and_table_format() {
    let out_file = NamedTempFile::new().unwrap();
    let out = gzcut(&["catalog", "--n", "3", "--output", path(&out_file)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let written: Value =
        serde_json::from_str(&std::fs::read_to_string(out_file.path()).unwrap()).unwrap();
    assert_eq!(written["command"], "catalog");
    assert_eq!(written["status"], "pass");

    let table = gzcut(&["catalog", "--n", "3", "--format", "table"]);
    assert_eq!(table.status.code(), Some(0));
    let text = String::from_utf8(table.stdout).unwrap();
    assert!(text.contains("catalog") && text.contains("pass"));
}

#[test]
fn reports_are_byte_identical_for_identical_flags() {
    let args = ["verify", "--n", "3", "--trials", "20", "--seed", "7"];
    let first = gzcut(&args);
    let second = gzcut(&args);
    let mut serial_args = args.to_vec();
    serial_args.push("--serial");
    let serial = gzcut(&serial_args);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(first.stdout, serial.stdout);
}

#[test]
fn sampling_commands_pass() {
    for cmd in ["dims", "sn"] {
        let out = gzcut(&[cmd, "--n", "3", "--trials", "20", "--repeats", "3"]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{cmd}: {}",
            String::from_utf8_lossy(&out.stdout)
        );
    }
}
