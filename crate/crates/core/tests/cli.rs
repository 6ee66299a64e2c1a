//! End-to-end behaviour of the `pgn` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn pgn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pgn"))
        .args(args)
        .env_remove("PGN_THREADS")
        .output()
        .expect("spawn pgn")
}

fn spec(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("specs")
        .join(name)
        .display()
        .to_string()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn match_prints_fit() {
    let out = pgn(&["match", "--spec", &spec("trunc_stable.json"), "--r", "1", "--order", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["params"]["p"].as_f64().unwrap() - 4.0).abs() < 1e-12);
    assert!((v["params"]["s"].as_f64().unwrap() - 1.0 / 12.0).abs() < 1e-14);
}

#[test]
fn auto_order_on_symmetric_fit() {
    let out = pgn(&["match", "--spec", &spec("trunc_stable.json"), "--r", "0.5", "--symmetric"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["params"]["q"].as_u64(), Some(10));
}

#[test]
fn malformed_spec_exits_3_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"family\": \"trunc_stable\", \"c\": ").unwrap();
    let out_file = dir.path().join("fit.json");
    let out = pgn(&["match", "--spec", path_str(&bad), "--r", "1", "--out", path_str(&out_file)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!out_file.exists());
    let out = pgn(&["match", "--spec", path_str(&bad), "--bogus"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn infeasible_scale_exits_2() {
    let out = pgn(&["mv-match", "--spec", &spec("radial_uniform.json"), "--tau", "5"]);
    assert_eq!(out.status.code(), Some(2));
}

fn sample_to(dir: &Path, name: &str, threads: &str, format: &str) -> PathBuf {
    let out = dir.join(name);
    let o = pgn(&[
        "--threads", threads, "sample", "--spec", &spec("trunc_stable.json"), "--r", "0.3",
        "--n", "2e5", "--seed", "17", "--format", format, "--out", path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn sampling_is_reproducible_with_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let a = sample_to(dir.path(), "a.csv", "1", "csv");
    let b = sample_to(dir.path(), "b.csv", "3", "csv");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.csv.meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["seed"].as_u64(), Some(17));
    assert_eq!(meta["n"].as_u64(), Some(200_000));
    assert_eq!(meta["spec_hash"].as_str().unwrap().len(), 64);
    assert!(meta["envelope_acceptance"].as_f64().unwrap() > 0.1);
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 200_000);
    assert!(!text.contains('\r'));

    let bin = sample_to(dir.path(), "c.bin", "2", "bin");
    let batch = pgn::batch::SampleBatch::read_binary(std::fs::File::open(bin).unwrap()).unwrap();
    assert_eq!(batch.seed(), 17);
    assert_eq!(batch.spec_hash_hex(), meta["spec_hash"].as_str().unwrap());
}

#[test]
fn env_var_sets_threads() {
    let out = Command::new(env!("CARGO_BIN_EXE_pgn"))
        .args(["match", "--spec", &spec("trunc_stable.json"), "--r", "1"])
        .env("PGN_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let out = Command::new(env!("CARGO_BIN_EXE_pgn"))
        .args(["selftest"])
        .env("PGN_THREADS", "two")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bound_sweep_rows() {
    let out = pgn(&["bound", "--spec", &spec("trunc_stable.json"), "--sweep", "r=0.5:0.001:log20", "--order", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 21);
    assert!(lines[0].starts_with("r,q,Q5,Q6,Q7"));
}

#[test]
fn mv_sample_and_bound() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mv.csv");
    let o = pgn(&[
        "mv-sample", "--spec", &spec("radial_uniform.json"), "--tau", "0.1", "--part", "t",
        "--n", "1000", "--out", path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap().split(',').count(), 2);
    let o = pgn(&["mv-bound", "--spec", &spec("radial_uniform.json"), "--sweep", "tau=0.2:0.02:log3"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 4);
}

#[test]
fn selftest_passes() {
    let out = pgn(&["selftest"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn every_subcommand_has_help() {
    for sub in ["match", "sample", "mv-match", "mv-sample", "bound", "mv-bound", "rate", "validate", "selftest"] {
        let out = pgn(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub}");
    }
}
