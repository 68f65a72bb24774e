use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fimsel::harness::read_sweep_csv;
use fimsel::model::load_scenario;
use fimsel::solvers::{read_allocation_csv, Algorithm};

const GOLDEN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/golden_k20.json");

fn fimsel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fimsel")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_is_deterministic_and_uses_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let o = fimsel(&["gen", "--k", "20", "--seed", "42", "--out", path(out)]);
        assert!(o.status.success());
        assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "K=20 q=2 seed=42");
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let net = load_scenario(&a).unwrap();
    assert!(net.sensors.iter().all(|s| s.sigma_n == 1.0 && s.sigma_nu == 1.0 && s.h_mag == 0.7 && s.bits == 3));
    assert_eq!(fs::read_to_string(&a).unwrap(), fs::read_to_string(GOLDEN).unwrap());
}

#[test]
fn gen_homogeneous() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h.json");
    assert!(fimsel(&["gen", "--homogeneous", "--k", "10", "--gain", "0.6,0.8", "--out", path(&out)]).status.success());
    let net = load_scenario(&out).unwrap();
    assert_eq!(net.len(), 10);
    assert!(net.sensors.iter().all(|s| s.gain == vec![0.6, 0.8]));
}

#[test]
fn exit_codes() {
    assert_eq!(fimsel(&["gen", "--k", "banana", "--out", "x.json"]).status.code(), Some(2));
    assert_eq!(fimsel(&["solve", "--scenario", GOLDEN, "--alg", "simplex", "--ptot", "3"]).status.code(), Some(2));
    assert_eq!(fimsel(&["solve", "--scenario", "/nonexistent.json", "--alg", "ufa", "--ptot", "3"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.json");
    assert_eq!(fimsel(&["gen", "--k", "5", "--d-min", "10", "--out", path(&out)]).status.code(), Some(3));
    let brute = fimsel(&["solve", "--scenario", GOLDEN, "--alg", "brute", "--ptot", "30"]);
    assert_eq!(brute.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&brute.stderr).contains("TooLarge"));
}

#[test]
fn solve_writes_allocation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ufa.csv");
    let o = fimsel(&["solve", "--scenario", GOLDEN, "--alg", "ufa", "--ptot", "30", "--out", path(&out)]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("selected=20"));
    let rec = read_allocation_csv(fs::read(&out).unwrap().as_slice()).unwrap();
    assert_eq!(rec.algorithm, Algorithm::Ufa);
    assert!(rec.powers.iter().all(|&p| p == 1.5));

    let out = dir.path().join("mckp.csv");
    assert!(fimsel(&["solve", "--scenario", GOLDEN, "--alg", "mckp", "--ptot", "30", "--grid-n", "100", "--out", path(&out)])
        .status
        .success());
    let rec = read_allocation_csv(fs::read(&out).unwrap().as_slice()).unwrap();
    assert!(rec.powers.iter().sum::<f64>() <= 30.0 * (1.0 + 1e-9));
    for (w, p) in rec.selection.iter().zip(&rec.powers) {
        assert!(*w || *p == 0.0);
    }
}

#[test]
fn sweep_rows_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let o = fimsel(&[
        "sweep", "--scenario", GOLDEN, "--ptot-min", "10", "--ptot-max", "20", "--steps", "3", "--alg", "usu,ufa",
        "--out", path(&out),
    ]);
    assert!(o.status.success());
    let res = read_sweep_csv(fs::read(&out).unwrap().as_slice()).unwrap();
    assert_eq!(res.rows.len(), 6);
    assert!(res.rows.iter().all(|r| r.scenario_id == "golden_k20" && r.seed == 42));

    let v = fimsel(&["verify", "--suite", "mckp", "--seed", "7"]);
    assert!(v.status.success());
    assert!(String::from_utf8_lossy(&v.stdout).contains("1 of 1 checks passed"));
}
