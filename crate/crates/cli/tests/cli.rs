//! End-to-end runs of the binary: exit codes, output files, error messages.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bubblelab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bubblelab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn quick_suite_passes_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = bubblelab(dir.path(), &["appendix-a", "--dim", "6", "--quick", "--out", "out"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("out/appendix-a.csv")).unwrap();
    assert!(csv.starts_with("suite,check,anchor,n,geometry,config,seed,x_name,x,values,ratios,rule,"));
    assert!(csv.lines().skip(1).all(|l| l.contains(",6,")));
    let summary = fs::read_to_string(dir.path().join("out/summary.txt")).unwrap();
    assert!(summary.lines().last().unwrap().ends_with("failed 0"));
    assert!(dir.path().join("out/metadata.json").exists());
}

#[test]
fn missing_config_is_a_usage_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = bubblelab(dir.path(), &["appendix-b", "--config", "nowhere/run.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere/run.toml"), "{}", stderr(&o));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = bubblelab(dir.path(), &["appendix-a", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_dimension_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = bubblelab(dir.path(), &["appendix-a", "--dim", "5", "--quick"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("appendix_a.dims"), "{}", stderr(&o));
}

#[test]
fn tightened_tolerance_fails_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "schema_version = 1\nseed = 5\n[appendix_a]\ndims = [6]\nseparations = { start = 10.0, points = 2 }\nscale_ratios = { start = 10.0, points = 2 }\nrandom_tuples = 100\n[tolerances]\nkernel-gram-diagonal = -1.0\n",
    )
    .unwrap();
    let o = bubblelab(dir.path(), &["appendix-a", "--config", "run.toml"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let summary = fs::read_to_string(dir.path().join("bubblelab-out/summary.txt")).unwrap();
    assert!(summary.lines().any(|l| l.starts_with("FAIL appendix-a kernel-gram-diagonal")));
}

#[test]
fn interactions_report_for_a_family() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("fam.toml"),
        "schema_version = 1\nseed = 1\n[family]\nn = 6\ndelta = 0.1\n\
         [[family.bubbles]]\ncenter = [0, 0, 0, 0, 0, 0]\nscale = 1.0\n\
         [[family.bubbles]]\ncenter = [40, 0, 0, 0, 0, 0]\nscale = 1.0\n",
    )
    .unwrap();
    let o = bubblelab(dir.path(), &["interactions", "--config", "fam.toml"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("bubblelab-out/interactions.json")).unwrap();
    assert!(text.contains("\"delta_interacting\": true"), "{text}");
}

#[test]
fn interactions_without_family_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), "schema_version = 1\nseed = 1\n").unwrap();
    let o = bubblelab(dir.path(), &["interactions", "--config", "run.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("[family]"));
}

#[test]
fn project_recovers_a_bubble_plus_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let mut snap = String::from("bubblelab-field 1\ndim 6\nnt 3\nnr 2\nmap none\ncolumns t r value\n");
    for t in [-1.0, 0.0, 1.0] {
        for r in [0.0, 1.0] {
            snap.push_str(&format!("{t} {r} 0\n"));
        }
    }
    fs::write(dir.path().join("field.txt"), snap).unwrap();
    fs::write(
        dir.path().join("proj.toml"),
        "schema_version = 1\nseed = 1\n[project]\nn = 6\nsnapshot = \"field.txt\"\n\
         terms = [{ t = 0.0, scale = 1.0 }]\ninitial = [{ t = 0.2, scale = 1.1 }]\n",
    )
    .unwrap();
    let o = bubblelab(dir.path(), &["project", "--config", "proj.toml"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("bubblelab-out/project.json")).unwrap();
    assert!(text.contains("\"converged\": true"), "{text}");
}

#[test]
fn malformed_snapshot_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.txt"), "bubblelab-field 1\ndim six\n").unwrap();
    fs::write(
        dir.path().join("proj.toml"),
        "schema_version = 1\nseed = 1\n[project]\nn = 6\nsnapshot = \"bad.txt\"\ninitial = [{ t = 0.0, scale = 1.0 }]\n",
    )
    .unwrap();
    let o = bubblelab(dir.path(), &["project", "--config", "proj.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.txt"), "{}", stderr(&o));
}
