use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use collapselab::io::{read_csv, read_scalar_field, RunManifest, MANIFEST_NAME};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_collapselab"));
    c.env_remove("COLLAPSELAB_OUT");
    c
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run(sub: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    bin().arg(sub).arg("--config").arg(cfg).arg("--out").arg(out).args(extra).output().unwrap()
}

fn manifest(out: &Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(out.join(MANIFEST_NAME)).unwrap()).unwrap()
}

const SWEEP_B: &str = r#"{"schema": "collapselab/v1", "model": {"family": "b", "grid": {"base": [16, 16], "fiber": [8, 8]}}, "solver": {"tol": 1e-10}}"#;

#[test]
fn solve_with_nonpositive_t_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"schema": "collapselab/v1", "model": {"family": "a", "grid": {"base": [8, 8], "fiber": [8, 8]}}, "t_schedule": [0.0]}"#);
    let out = run("solve", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("t_schedule"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_keys_and_missing_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"schema": "collapselab/v1", "model": {"family": "a", "grid": {"base": [8, 8], "fiber": [8, 8]}}, "colour": "red"}"#);
    assert_eq!(run("solve", &cfg, dir.path(), &[]).status.code(), Some(1));
    assert_eq!(run("solve", &dir.path().join("absent.json"), dir.path(), &[]).status.code(), Some(1));
    assert_eq!(bin().arg("solve").output().unwrap().status.code(), Some(1));
}

#[test]
fn solve_writes_dumps_listed_in_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"schema": "collapselab/v1", "model": {"family": "a", "grid": {"base": [6, 6], "fiber": [6, 6]}}, "t_schedule": [0.5]}"#);
    let out = dir.path().join("out");
    let o = run("solve", &cfg, &out, &["--serial"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m.status, "ok");
    let names: Vec<&str> = m.outputs.iter().map(|o| o.path.as_str()).collect();
    assert_eq!(names, ["iterations.csv", "phi.bin", "phi.json", "metric.bin", "metric.json"]);
    let phi = read_scalar_field(&out, "phi").unwrap();
    assert_eq!(phi.grid.shape(), vec![6, 6, 6, 6]);
    assert!(phi.sup_norm() < 1e-10);
}

#[test]
fn collapse_sweep_reports_one_row_per_t_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SWEEP_B);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for o in [&a, &b] {
        let r = run("collapse-sweep", &cfg, o, &["--serial"]);
        assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    }
    let (comment, header, rows) = read_csv(&a.join("collapse_report.csv")).unwrap();
    assert!(!comment.is_empty());
    assert_eq!(header, ["t", "C_c2", "flat_defect", "curv_sup", "osc_over_t", "grad_over_t2", "ricci_wp_residual"]);
    assert_eq!(rows.len(), 4);
    let ts: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(ts, [0.2, 0.1, 0.05, 0.025]);
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma.outputs, mb.outputs);
    assert_eq!(ma.config_sha256, mb.config_sha256);
    for f in &ma.outputs {
        assert_eq!(fs::read(a.join(&f.path)).unwrap(), fs::read(b.join(&f.path)).unwrap());
    }
}

#[test]
fn numerical_failure_removes_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"schema": "collapselab/v1", "model": {"family": "b", "grid": {"base": [16, 16], "fiber": [8, 8]}}, "solver": {"tol": 1e-12, "max_iter": 1}}"#);
    let out = dir.path().join("out");
    let r = run("collapse-sweep", &cfg, &out, &[]);
    assert_eq!(r.status.code(), Some(2));
    let m = manifest(&out);
    assert_eq!(m.status, "failed");
    assert_eq!(m.failure_stage.as_deref(), Some("continuation"));
    let left: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(left, [MANIFEST_NAME]);
}

#[test]
fn mirror_tables_and_env_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"schema": "collapselab/v1", "model": {"family": "a", "grid": {"base": [8, 8], "fiber": [8, 8]}}, "mirror": {"k_values": [0, 19], "samples": 50}}"#);
    let flag = dir.path().join("flag");
    let env = dir.path().join("env");
    let r = bin().arg("mirror").arg("--config").arg(&cfg).arg("--out").arg(&flag).env("COLLAPSELAB_OUT", &env).output().unwrap();
    assert_eq!(r.status.code(), Some(0));
    assert!(!flag.exists());
    let (_, header, rows) = read_csv(&env.join("mirror_path.csv")).unwrap();
    assert_eq!(header, ["t", "s", "e1", "f1", "e2", "f2", "affine"]);
    assert_eq!(rows[0], ["1/3", "2", "4/3", "1/3", "0", "0", "true"]);
    let (_, _, sweep) = read_csv(&env.join("mirror_sweep.csv")).unwrap();
    assert_eq!(sweep.len(), 2);
    assert!(sweep.iter().all(|r| r[3].parse::<f64>().unwrap() < 1e-10));
    // alpha = e2 + i(e2 + f2) maps to (1 - i)e1 + f1 + (1 + i)e2 + i f2
    let (_, header, map) = read_csv(&env.join("mirror_map.csv")).unwrap();
    assert_eq!(header, ["alpha_id", "component", "re", "im"]);
    let second: Vec<(f64, f64)> = map.iter().filter(|r| r[0] == "1").map(|r| (r[2].parse().unwrap(), r[3].parse().unwrap())).collect();
    assert_eq!(second, [(1.0, -1.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
    let (_, _, res) = read_csv(&env.join("mirror_residuals.csv")).unwrap();
    assert!(res.iter().all(|r| r[1] == "true" && r[3] == r[4]));
}

#[test]
fn mirror_rejects_class_outside_kahler_cone() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{"schema": "collapselab/v1", "model": {"family": "a", "grid": {"base": [8, 8], "fiber": [8, 8]}}, "mirror": {"k_values": [0], "samples": 5,
        "lattice": {"gram": [[0, 1], [1, 0]], "e": [1, 0], "sigma": [1, 1], "alpha": [{"re": [0, 0], "im": [0, 0]}]}}}"#;
    let cfg = write_config(dir.path(), "c.json", body);
    let out = dir.path().join("out");
    let r = run("mirror", &cfg, &out, &[]);
    assert_eq!(r.status.code(), Some(1));
    assert_eq!(manifest(&out).failure_stage.as_deref(), Some("map"));
}

#[test]
fn gh_writes_pair_and_summary_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"schema": "collapselab/v1", "model": {"family": "b", "grid": {"base": [16, 16], "fiber": [8, 8]}}, "solver": {"tol": 1e-10}, "gh": {"sample_radius": 0.2, "volume": null}}"#);
    let out = dir.path().join("out");
    let r = run("gh", &cfg, &out, &[]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let (_, header, rows) = read_csv(&out.join("gh_pairs.csv")).unwrap();
    assert_eq!(header, ["t", "pair_id", "d_total_space", "d_base", "distortion"]);
    assert!(!rows.is_empty());
    for row in &rows {
        let v: Vec<f64> = [2, 3, 4].iter().map(|&k| row[k].parse().unwrap()).collect();
        assert!((v[2] - (v[0] - v[1]).abs()).abs() < 1e-15);
    }
    let (_, _, summary) = read_csv(&out.join("gh_summary.csv")).unwrap();
    assert_eq!(summary.len(), 4);
    let (_, vh, vrows) = read_csv(&out.join("gh_volumes.csv")).unwrap();
    assert_eq!(vh, ["t", "r", "V_ratio", "mass_prediction", "rel_error"]);
    assert!(vrows.is_empty());
}

#[test]
fn verify_on_family_a_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"schema": "collapselab/v1", "model": {"family": "a", "grid": {"base": [8, 8], "fiber": [8, 8]}}, "verify": {"criteria": [1, 2, 3, 6]}}"#);
    let out = dir.path().join("out");
    let r = run("verify", &cfg, &out, &["--serial"]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let (_, header, rows) = read_csv(&out.join("verify_summary.csv")).unwrap();
    assert_eq!(header, ["criterion", "check", "status", "detail"]);
    assert!(rows.len() >= 15 && rows.iter().all(|r| r[2] == "PASS"));
}
