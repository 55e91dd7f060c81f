use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BASE: &str = "\
x_min = -6
x_max = 6
y_min = -6
y_max = 6
nx = 8
ny = 8
tau = 0.1
T = 0
";

fn rotgpe(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("case.cfg");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_rotgpe"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_with_zero_final_time_writes_initial_snapshot_only() {
    let dir = tempfile::tempdir().unwrap();
    let o = rotgpe(dir.path(), &format!("{BASE}initial = gaussian\n"), &["run"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = dir.path().join("out");
    let diag = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().count(), 2);
    assert!(out.join("snapshot_0.vtk").exists());
    assert!(!out.join("snapshot_1.vtk").exists());
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("# subcommand: run"));
    assert!(manifest.contains("# status: ok"));
    assert!(manifest.contains("tau = 0.1"));
    assert!(manifest.contains("scheme = irk"));
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = rotgpe(dir.path(), &BASE.replace("tau = 0.1", "tau = -0.1"), &["run"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`tau`"), "{}", stderr(&o));

    let o = rotgpe(dir.path(), &format!("{BASE}omgea = 0.8\n"), &["run"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 9"), "{}", stderr(&o));

    let o = rotgpe(dir.path(), &BASE.replace("T = 0\n", ""), &["run"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`T`"));

    let o = rotgpe(dir.path(), BASE, &["run", "--set", "scheme=rk4"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn runs_are_bitwise_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{BASE}initial = vortex\nomega = 0.5\nbeta = 10\nrecord_every = 2\n").replace("T = 0", "T = 1");
    let mut diag = Vec::new();
    for _ in 0..2 {
        let o = rotgpe(dir.path(), &cfg, &["run"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        diag.push(fs::read(dir.path().join("out/diagnostics.csv")).unwrap());
    }
    assert_eq!(diag[0], diag[1]);
    let text = String::from_utf8(diag.pop().unwrap()).unwrap();
    // steps 0, 2, 4, 6, 8, 10
    assert_eq!(text.lines().count(), 7);
    assert!(dir.path().join("out/snapshot_10.vtk").exists());
    assert!(!dir.path().join("out/snapshot_3.vtk").exists());
}

#[test]
fn groundstate_dump_reloads_as_initial_condition() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{BASE}beta = 5\nflow_tol = 1e-7\nnewton_tol = 1e-12\n");
    let o = rotgpe(dir.path(), &cfg, &["groundstate"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let dump = dir.path().join("out/groundstate.csv");
    assert!(dir.path().join("out/groundstate.vtk").exists());
    let moved = dir.path().join("gs.csv");
    fs::rename(&dump, &moved).unwrap();

    let cfg = format!("{cfg}initial = {}\n", moved.display()).replace("T = 0", "T = 0.5");
    let o = rotgpe(dir.path(), &cfg, &["run"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let diag = fs::read_to_string(dir.path().join("out/diagnostics.csv")).unwrap();
    let mass: Vec<f64> = diag
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert!((mass[0] - 1.0).abs() < 1e-10);
    assert!(mass.iter().all(|m| (m - mass[0]).abs() < 1e-10));
}

#[test]
fn table1_has_four_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{BASE}initial = gaussian\nbeta = 10\nomega = 0.5\nnewton_tol = 1e-12\n");
    let o = rotgpe(dir.path(), &cfg, &["table1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("out/table1.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "tau,T,mass_be,mass_irk,energy_be,energy_irk");
    assert_eq!(lines.len(), 5);
    for l in &lines[1..] {
        let irk_mass: f64 = l.split(',').nth(3).unwrap().parse().unwrap();
        assert!((irk_mass - 1.0).abs() < 1e-8);
    }
}

#[test]
fn verify_fm_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_rotgpe"))
        .args(["verify-fm", "--M", "1", "--samples", "100000", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("Lipschitz"));
    assert!(dir.path().join("manifest.txt").exists());

    let o = Command::new(env!("CARGO_BIN_EXE_rotgpe"))
        .args(["verify-fm", "--M", "-1", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn verify_assumptions_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = rotgpe(dir.path(), &format!("{BASE}omega = 0.3\n"), &["verify-assumptions"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = rotgpe(dir.path(), &format!("{BASE}omega = 0.8\n"), &["verify-assumptions"]);
    assert_eq!(code(&o), 4);
}

#[test]
fn convergence_writes_eoc_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_rotgpe"))
        .args(["convergence", "--case", "ritz-laplace", "--levels", "3", "--n", "4", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("eoc.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("level,n,h,tau,l2_error,energy_error,eoc_l2,eoc_energy"));
}

#[test]
fn solver_failure_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{BASE}initial = gaussian\nbeta = 1000\nnewton_max_iter = 1\nnewton_tol = 1e-14\n")
        .replace("T = 0", "T = 1")
        .replace("tau = 0.1", "tau = 1");
    let o = rotgpe(dir.path(), &cfg, &["run"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let manifest = fs::read_to_string(dir.path().join("out/manifest.txt")).unwrap();
    assert!(manifest.contains("# status: failed (exit 3)"));
}
