//! End-to-end checks of the command-line surface: subcommands, exit
//! codes, and the determinism of emitted artifacts.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_movemesh"))
}

fn cases() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../cases")
}

fn tmpdir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn check_mesh_reports_quality() {
    let out = bin()
        .arg("check-mesh")
        .arg(cases().join("square.node"))
        .arg(cases().join("square.ele"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("nodes:     4"), "{text}");
    assert!(text.contains("tangled:   false"), "{text}");
}

#[test]
fn check_mesh_missing_file_is_usage_error() {
    let out = bin()
        .arg("check-mesh")
        .arg("/no/such.node")
        .arg("/no/such.ele")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_with_missing_mechanism_names_path() {
    let dir = tmpdir("cli_missing_mech");
    let cfg = dir.join("case.ini");
    std::fs::write(
        &cfg,
        "[mesh]\nx1 = 1.0\ny1 = 1.0\n[mechanism]\nfile = nowhere.mech\n\
         [initial]\ntemperature = 300\n[boundary.1]\ntype = outflow\n",
    )
    .unwrap();
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("nowhere.mech"), "{text}");
}

#[test]
fn version_and_help() {
    let out = bin().arg("--version").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("movemesh"));
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("equidistribute-1d"));
}

#[test]
fn equidistribute_writes_reference_csv() {
    let dir = tmpdir("cli_equi");
    let cfg = dir.join("equi.ini");
    // A small, quick configuration of the strip case.
    std::fs::write(
        &cfg,
        format!(
            "[equidistribute]\nnx = 33\nny = 5\nmax_steps = 20000\ncsv = {}\n",
            dir.join("equi.csv").display()
        ),
    )
    .unwrap();
    let out = bin().arg("equidistribute-1d").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("equi.csv")).unwrap();
    assert!(csv.starts_with("index,abscissa,reference"));
    assert!(csv.contains("max_error"));
    // 33 node rows + header + trailer.
    assert_eq!(csv.lines().count(), 35);
}

#[test]
fn monitor_demo_writes_vtk() {
    let dir = tmpdir("cli_demo");
    let cfg = dir.join("demo.ini");
    std::fs::write(
        &cfg,
        format!(
            "[monitor_demo]\nnx = 17\nny = 9\noutput = {}\n",
            dir.join("demo.vtk").display()
        ),
    )
    .unwrap();
    let out = bin().arg("monitor-demo").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let vtk = std::fs::read_to_string(dir.join("demo.vtk")).unwrap();
    assert!(vtk.contains("DATASET UNSTRUCTURED_GRID"));
    assert!(vtk.contains("SCALARS density_smoothed double 1"));
}

/// Identical configs and inputs produce bitwise-identical CSV artifacts.
#[test]
fn coupled_run_is_deterministic() {
    let mech = cases().join("ozone.mech");
    let make = |tag: &str| {
        let dir = tmpdir(&format!("cli_det_{tag}"));
        let cfg = dir.join("case.ini");
        std::fs::write(
            &cfg,
            format!(
                "\
[mesh]
nx = 17
ny = 7
x1 = 0.02
y1 = 0.005
[mechanism]
file = {mech}
[boundary.1]
type = inflow
peak_velocity = 0.25
temperature = gaussian 298 502 0.005 1e5
w.O = 0.0
w.O2 = 0.8
w.O3 = 0.2
[boundary.2]
type = wall
temperature = gaussian 298 502 0.005 1e5
[boundary.3]
type = outflow
[initial]
temperature = gaussian 298 502 0.005 1e5
w.O = 0.0
w.O2 = 0.8
w.O3 = 0.2
[monitor]
source = w.O3
order = 1
[mmpde]
substeps = 30
[march]
max_steps = 60
steady_tol = 1.0e20
[coupling]
displacement_tol = 1e20
[output]
directory = {out}
",
                mech = mech.display(),
                out = dir.join("out").display()
            ),
        )
        .unwrap();
        // The huge thresholds make the run stop right after the first
        // accepted step, deterministically.
        let out = bin()
            .args(["--threads", "1"])
            .arg("run")
            .arg(&cfg)
            .output()
            .unwrap();
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        std::fs::read(dir.join("out/results.csv")).unwrap()
    };
    let a = make("a");
    let b = make("b");
    assert_eq!(a, b, "CSV artifacts differ between identical runs");
}
