use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn streamsim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_streamsim")).current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn gen(dir: &Path) {
    let o = streamsim(dir, &["gen-drift", "--seed", "5", "--n-pre", "300", "--n-post", "300", "--out", "d"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn gen_drift_writes_log_manifest_and_plan() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path());
    let d = dir.path().join("d");
    assert!(fs::read_to_string(d.join("loan.csv")).unwrap().starts_with("case_id,activity,resource,start_ts,end_ts\n"));
    let manifest = fs::read_to_string(d.join("manifest.json")).unwrap();
    assert!(manifest.trim_start().starts_with('{') && manifest.contains("\"drift_at\""));
    assert!(fs::read_to_string(d.join("plan.toml")).unwrap().contains("end_activities = [\"notify\"]"));
}

#[test]
fn run_writes_a_stamped_directory_and_plot_redraws_it() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path());
    let plan = dir.path().join("d/plan.toml");
    let text = fs::read_to_string(&plan).unwrap().replace("replications = 5", "replications = 1\ngrace_period = 500");
    fs::write(&plan, text).unwrap();
    let o = streamsim(dir.path(), &["run", "--plan", "d/plan.toml"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("metric,single_batch,last_batch,online\n"));
    let runs: Vec<_> = fs::read_dir(dir.path().join("d/runs")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(runs.len(), 1);
    let run = &runs[0];
    assert!(run.file_name().unwrap().to_string_lossy().starts_with("run-"));
    assert!(run.join("plan.toml").is_file() && run.join("summary.csv").is_file());
    let ctd = fs::read(run.join("plots/CTD.svg")).unwrap();
    fs::remove_dir_all(run.join("plots")).unwrap();
    let o = streamsim(dir.path(), &["plot", run.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(fs::read(run.join("plots/CTD.svg")).unwrap(), ctd);
}

#[test]
fn ingest_reports_windows_and_writes_canonical_csv() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path());
    let o = streamsim(dir.path(), &["ingest", "d/loan.csv", "--windows", "4", "--end-activity", "notify", "--out", "c.csv"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("cases       600\n"));
    assert_eq!(out.lines().skip_while(|l| !l.starts_with("window,")).count(), 1 + 4);
    assert_eq!(fs::read(dir.path().join("c.csv")).unwrap(), fs::read(dir.path().join("d/loan.csv")).unwrap());
}

#[test]
fn evaluate_prints_zero_for_a_log_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path());
    let o = streamsim(dir.path(), &["evaluate", "d/loan.csv", "d/loan.csv"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 9);
    for line in out.lines().skip(1) {
        let v: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(v.abs() < 1e-9, "{line}");
    }
}

#[test]
fn exit_codes_separate_usage_plan_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(streamsim(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(streamsim(dir.path(), &["frobnicate"]).status.code(), Some(1));
    fs::write(dir.path().join("bad.toml"), "input = \"x.csv\"\nwindows = 1\n").unwrap();
    assert_eq!(streamsim(dir.path(), &["run", "--plan", "bad.toml"]).status.code(), Some(1));
    fs::write(dir.path().join("ok.toml"), "input = \"missing.csv\"\n").unwrap();
    assert_eq!(streamsim(dir.path(), &["run", "--plan", "ok.toml"]).status.code(), Some(2));
    assert_eq!(streamsim(dir.path(), &["evaluate", "missing.csv", "missing.csv"]).status.code(), Some(2));
}
