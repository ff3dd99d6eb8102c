use std::fs;
use std::path::Path;
use std::process::Command;

fn hmmlab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_hmmlab")).args(args).output().expect("binary runs")
}

fn run_in(dir: &Path, args: &[&str]) -> std::process::Output {
    let mut all: Vec<&str> = args.to_vec();
    let out = dir.to_str().unwrap();
    all.extend(["--out", out]);
    hmmlab(&all)
}

#[test]
fn same_seed_gives_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let args = ["cycle-cond", "--n", "32", "--m", "4", "--cycles", "2,4,8", "--eps", "0.1,0.2,0.4", "--trials", "3", "--seed", "7"];
    assert!(run_in(&a, &args).status.success());
    assert!(run_in(&b, &args).status.success());
    let (ca, cb) = (fs::read(a.join("results.csv")).unwrap(), fs::read(b.join("results.csv")).unwrap());
    assert_eq!(ca, cb);
    assert_eq!(String::from_utf8(ca).unwrap().lines().count(), 10);

    let strip = |p: &Path| {
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(p.join("manifest.json")).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("created_unix");
        v
    };
    let (ma, mb) = (strip(&a), strip(&b));
    assert_eq!(ma["config"], mb["config"]);
    assert_eq!(ma["results_hash"], mb["results_hash"]);
    assert_eq!(ma["input_hash"], mb["input_hash"]);
}

#[test]
fn different_seed_changes_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let base = ["degree-cond", "--n", "32", "--m", "4", "--degrees", "2,4,8", "--eps", "0.02,0.04", "--trials", "2"];
    let mut a = base.to_vec();
    a.extend(["--seed", "1"]);
    let mut b = base.to_vec();
    b.extend(["--seed", "2"]);
    assert!(run_in(&tmp.path().join("a"), &a).status.success());
    assert!(run_in(&tmp.path().join("b"), &b).status.success());
    let ca = fs::read(tmp.path().join("a/results.csv")).unwrap();
    let cb = fs::read(tmp.path().join("b/results.csv")).unwrap();
    assert_ne!(ca, cb);
}

#[test]
fn recover_exact_meets_tolerance() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_in(tmp.path(), &["recover-exact", "--n", "4", "--m", "3", "--tau", "2", "--seed", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["partial"], false);
    assert!(manifest["summary"]["ok"].as_u64().unwrap() > 0);
    assert!(manifest["summary"]["max_column_l1"].as_f64().unwrap() <= 1e-6);
    let csv = fs::read_to_string(tmp.path().join("results.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.contains(",ok,")));
}

#[test]
fn seed_is_mandatory() {
    let out = hmmlab(&["recover-exact", "--n", "4"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn invalid_config_fails_before_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("never");
    let out = run_in(&dir, &["cycle-cond", "--n", "128", "--cycles", "3", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not divide"));
    assert!(!dir.exists());
}

#[test]
fn help_documents_columns() {
    let out = hmmlab(&["lowerbound-decay", "--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for col in ["measured_contraction", "l1_ratio", "lambda2", "instance_hash"] {
        assert!(text.contains(col), "{col}");
    }
}

#[test]
fn trend_subcommand_reports_verdict() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("t.csv");
    fs::write(&csv, "g,x,y\n0,1,1\n0,2,2\n0,3,3\n1,1,2\n1,2,3\n1,3,5\n").unwrap();
    let path = csv.to_str().unwrap();
    let ok = hmmlab(&["trend", path, "--group-by", "g", "--order-by", "x", "--value", "y", "--expect", "increasing"]);
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("PASS"));
    let bad = hmmlab(&["trend", path, "--group-by", "g", "--order-by", "x", "--value", "y", "--expect", "decreasing"]);
    assert_eq!(bad.status.code(), Some(1));
}
