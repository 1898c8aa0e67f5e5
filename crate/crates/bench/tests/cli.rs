use std::path::Path;
use std::process::{Command, Output};

use fmmd_bench::output::{read_rows, PowerRow, ValidateRow};
use fmmd_core::seed::rng_from_seed;
use fmmd_core::{save_function_set, FunctionSet, Mesh};
use rand::Rng;

fn fmmd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fmmd")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const SMALL: [&str; 8] = ["--trials", "6", "--perms", "19", "--deltas", "0,2", "--kernel", "ID,CEXP"];

#[test]
fn benchmark_csv_round_trips_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ms.csv");
    let mut args = vec!["mean-shift", "--out", out.to_str().unwrap()];
    args.extend(SMALL);
    let o = fmmd(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let first = std::fs::read(&out).unwrap();
    let rows: Vec<PowerRow> = read_rows(first.as_slice()).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0].kernel, "ID");
    assert_eq!(rows[1].kernel, "CEXP");
    assert_eq!(rows[3].delta, 2.0);

    let again = fmmd(&args);
    assert_eq!(code(&again), 0);
    assert_eq!(std::fs::read(&out).unwrap(), first);

    let mut stdout_args = vec!["mean-shift"];
    stdout_args.extend(SMALL);
    assert_eq!(fmmd(&stdout_args).stdout, first);
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        vec!["nope"],
        vec![],
        vec!["mean-shift", "--kernel", "RBF"],
        vec!["mean-shift", "--alpha", "1.5"],
        vec!["mean-shift", "--trials", "0"],
        vec!["scaling", "--mesh", "1"],
        vec!["size", "--n", "40"],
        vec!["growth"],
    ] {
        let o = fmmd(&args);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"trials": 4, "perms": 9, "deltas": [1], "kernel": "SQR", "seed": 9}"#).unwrap();
    let o = fmmd(&["var-shift-1", "--config", cfg.to_str().unwrap(), "--seed", "11"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows: Vec<PowerRow> = read_rows(o.stdout.as_slice()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].kernel, "SQR");
    let base = fmmd(&["var-shift-1", "--trials", "4", "--perms", "9", "--deltas", "1", "--kernel", "SQR", "--seed", "11"]);
    assert_eq!(o.stdout, base.stdout);

    std::fs::write(&cfg, "{\"trials\": 4,\n \"perms\": }").unwrap();
    let bad = fmmd(&["mean-shift", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&bad), 3);
    std::fs::write(&cfg, r#"{"trails": 4}"#).unwrap();
    assert_eq!(code(&fmmd(&["mean-shift", "--config", cfg.to_str().unwrap()])), 2);
}

fn write_group(path: &Path, n: usize, shift: f64, seed: u64) {
    let mesh = Mesh::trapezoid(vec![1.0, 1.5, 2.0, 3.0, 4.5, 6.0, 9.0, 12.0, 18.0]).unwrap();
    let mut rng = rng_from_seed(seed);
    let rows = (0..n)
        .map(|_| {
            let level = rng.random_range(70.0..90.0);
            mesh.points().iter().map(|t| level + (6.0 + shift) * t).collect()
        })
        .collect();
    save_function_set(path, &FunctionSet::from_rows(mesh, rows).unwrap(), None).unwrap();
}

#[test]
fn growth_reads_groups_and_reports_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = (dir.path().join("boys.csv"), dir.path().join("girls.csv"));
    write_group(&x, 12, 0.5, 1);
    write_group(&y, 14, 0.0, 2);
    let common = ["--data-x", x.to_str().unwrap(), "--data-y", y.to_str().unwrap(), "--trials", "5", "--perms", "19"];
    let mut args = vec!["growth", "--n", "4,10", "--kernel", "ID"];
    args.extend(common);
    let o = fmmd(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows: Vec<PowerRow> = read_rows(o.stdout.as_slice()).unwrap();
    assert_eq!(rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![4, 10]);
    assert!(rows.iter().all(|r| r.mesh == 9));

    let mut too_big = vec!["growth", "--n", "13", "--kernel", "ID"];
    too_big.extend(common);
    assert_eq!(code(&fmmd(&too_big)), 2);

    let size = fmmd(&["size", "--data-x", x.to_str().unwrap(), "--n", "3", "--kernel", "COV", "--trials", "5", "--perms", "19"]);
    assert_eq!(code(&size), 0, "{}", String::from_utf8_lossy(&size.stderr));

    std::fs::write(&y, "t,a\n1,2\n1.5,x\n").unwrap();
    let bad = fmmd(&args);
    assert_eq!(code(&bad), 3);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line 3"));
    let missing = fmmd(&["growth", "--data-x", "/nonexistent.csv", "--data-y", "/nonexistent.csv"]);
    assert_eq!(code(&missing), 3);
}

#[test]
fn default_validate_is_flag_free() {
    let o = fmmd(&["validate"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows: Vec<ValidateRow> = read_rows(o.stdout.as_slice()).unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| !r.flag));
    let scalar = rows.iter().find(|r| r.case == "scalar").unwrap();
    assert!((scalar.closed_form - 0.177268).abs() < 1e-6);
    assert!(rows.iter().find(|r| r.case == "non-commuting").unwrap().xi2_theory.is_nan());
}
