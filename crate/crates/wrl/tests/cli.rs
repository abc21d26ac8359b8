use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const PME: &str = r#"
[experiment]
id = "pme_exponent"
ladder = [2.4, 2.2, 2.1]
t = 0.05
snapshots = 5
[grid]
kind = "line"
a = -2.0
b = 2.0
n_cells = 64
"#;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("wrl-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn wrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wrl")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn selftest_passes() {
    let o = wrl(&["selftest"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().all(|l| l.ends_with("PASS")));
}

#[test]
fn sweep_writes_reports_and_sets_exit_code() {
    let dir = scratch("sweep");
    let cfg = write_config(&dir, PME);
    let out = dir.join("out");
    let o = wrl(&["sweep", &cfg, "--out", out.to_str().unwrap()]);
    let csv = fs::read_to_string(out.join("pme_exponent.csv")).unwrap();
    assert!(csv.starts_with("experiment,group,parameter,measured,rhs,margin,pass,note\n"));
    assert_eq!(csv.lines().count(), 4);
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("rows: 3 passed, 0 failed"));
    let expected = if summary.contains("overall: PASS") { 0 } else { 1 };
    assert_eq!(o.status.code(), Some(expected));
    // an unreachable band forces a failure
    let strict = write_config(&dir, &PME.replace("snapshots = 5", "snapshots = 5\nband_lo = 5.0"));
    assert_eq!(wrl(&["sweep", &strict, "--out", out.to_str().unwrap()]).status.code(), Some(1));
    // identical inputs give identical bytes
    let again = dir.join("again");
    wrl(&["sweep", &cfg, "--out", again.to_str().unwrap()]);
    assert_eq!(fs::read(again.join("pme_exponent.csv")).unwrap(), fs::read(out.join("pme_exponent.csv")).unwrap());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn verify_prints_bound_rows() {
    let dir = scratch("verify");
    let cfg = write_config(&dir, PME);
    let out = dir.join("out");
    let o = wrl(&["verify", &cfg, "--out", out.to_str().unwrap()]);
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("theorem,t,lhs,rhs,margin,pass"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.starts_with("pme_exponent,0.05,") && r.ends_with(",true")));
    let diag = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert!(diag.starts_with("check,snapshot_t,residual,tol,pass\n"));
    let expected = if diag.lines().skip(1).all(|l| l.ends_with(",true")) { 0 } else { 1 };
    assert_eq!(o.status.code(), Some(expected));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn solve_then_distance() {
    let dir = scratch("distance");
    let cfg = write_config(&dir, PME);
    let out = dir.join("snaps");
    let o = wrl(&["solve", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 5);
    let first = out.join("snapshot_0000.csv");
    let last = out.join("snapshot_0004.csv");
    let (a, b) = (first.to_str().unwrap(), last.to_str().unwrap());
    let same: f64 = stdout(&wrl(&["distance", a, a, "--p", "2", "--domain", "line"])).trim().parse().unwrap();
    assert_eq!(same, 0.0);
    let w2: f64 = stdout(&wrl(&["distance", a, b])).trim().parse().unwrap();
    let w1: f64 = stdout(&wrl(&["distance", a, b, "--p", "1"])).trim().parse().unwrap();
    assert!(w2 > 0.0 && w1 > 0.0 && w1 <= w2 + 1e-12);
    let wrong = wrl(&["distance", a, b, "--domain", "circle"]);
    assert_eq!(wrong.status.code(), Some(2));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn bad_inputs_exit_with_two() {
    let dir = scratch("bad");
    let cfg = write_config(&dir, &PME.replace("[2.4, 2.2, 2.1]", "[2.4]"));
    let o = wrl(&["sweep", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stderr).unwrap().contains("ladder"));
    assert_eq!(wrl(&["solve", dir.join("missing.toml").to_str().unwrap()]).status.code(), Some(2));
    fs::remove_dir_all(&dir).unwrap();
}
