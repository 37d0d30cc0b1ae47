use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn depthlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_depthlab")).args(args).output().expect("binary runs")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let mut full = vec!["run"];
    full.extend_from_slice(args);
    full.extend_from_slice(&["--out", dir.to_str().unwrap()]);
    depthlab(&full)
}

#[test]
fn list_shows_the_whole_catalog() {
    let out = depthlab(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("gbm-hist"));
    assert!(text.lines().count() >= 12);
    assert!(text.lines().all(|l| l.split_whitespace().count() > 2));
}

#[test]
fn passing_run_writes_csv_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["gbm-hist", "--width", "1", "--depth", "100", "--samples", "2000", "--steps", "200", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = fs::read_to_string(dir.path().join("gbm-hist.csv")).unwrap();
    assert!(csv.starts_with("# schema=1 experiment=gbm-hist\n"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("gbm-hist.report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["parameters"]["seed"], 7);
    assert_eq!(report["parameters"]["activation"], "relu");
    assert!(report["generated_at"].is_u64());
}

#[test]
fn failing_rule_exits_with_two() {
    // far too few samples to resolve the sign of the n=4 mean
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["regime-change", "-n", "3,4", "-N", "40", "--depth", "20"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(dir.path().join("regime-change.report.json").exists());
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["no-such-experiment"][..],
        &["collapse-prob", "--activation", "smooth-relu:10"],
        &["gbm-hist", "--width", "2"],
        &["gbm-hist", "--variant", "sideways"],
        &["gbm-hist", "--bogus-flag"],
    ] {
        let out = run_in(dir.path(), args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    fs::write(&cfg, "# identity sweep\nwidth = 5\ndepth = 10\nsamples = 100\nseed = 3\n").unwrap();
    let out = run_in(dir.path(), &["identity-norm", "--config", cfg.to_str().unwrap(), "--seed", "4"]);
    assert!(out.status.code().is_some_and(|c| c == 0 || c == 2));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("identity-norm.report.json")).unwrap()).unwrap();
    assert_eq!(report["parameters"]["widths"], serde_json::json!([5]));
    assert_eq!(report["parameters"]["depths"], serde_json::json!([10]));
    assert_eq!(report["seed"], 4);
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["collapse-prob", "-n", "2,3", "-L", "0,4", "-N", "3000", "--seed", "5"];
    let mut one = args.to_vec();
    one.extend(["--threads", "1"]);
    let mut eight = args.to_vec();
    eight.extend(["--threads", "8"]);
    run_in(a.path(), &one);
    run_in(b.path(), &eight);
    let read = |d: &Path, f: &str| fs::read_to_string(d.join(f)).unwrap();
    assert_eq!(read(a.path(), "collapse-prob.csv"), read(b.path(), "collapse-prob.csv"));
    let strip = |s: String| {
        let mut v: serde_json::Value = serde_json::from_str(&s).unwrap();
        v.as_object_mut().unwrap().remove("generated_at");
        v
    };
    assert_eq!(
        strip(read(a.path(), "collapse-prob.report.json")),
        strip(read(b.path(), "collapse-prob.report.json"))
    );
}
