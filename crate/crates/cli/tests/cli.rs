use std::collections::HashMap;
use std::path::Path;
use std::process::{Command, Output};

use oasis_core::model::JobClass;
use oasis_core::sim::{generate_trace, read_trace_file, TraceSpec};

fn oasis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oasis"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Key/value pairs of the final `summary` line.
fn summary(out: &Output) -> HashMap<String, String> {
    let text = stdout(out);
    let line = text.lines().last().expect("some output");
    assert!(line.starts_with("summary "), "last line is not a summary: {line}");
    line.split_whitespace()
        .skip(1)
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_matches_library_and_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for p in [&a, &b] {
        let out = oasis(&["generate", "--seed", "7", "--job-count", "50", "--out", path_str(p)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(summary(&out)["jobs"], "50");
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let spec = TraceSpec {
        seed: 7,
        job_count: 50,
        ..TraceSpec::desk()
    };
    let trace = read_trace_file(&a).unwrap();
    assert_eq!(trace, generate_trace(&spec).unwrap());

    let mix = spec.jobs.class_mix;
    for (class, share) in [JobClass::Insensitive, JobClass::Sensitive, JobClass::Critical].into_iter().zip(mix) {
        let n = trace.jobs.iter().filter(|j| j.class() == class).count() as f64;
        assert!((n - share * 50.0).abs() <= 1.0, "{class:?}: {n} of 50 for share {share}");
    }
}

#[test]
fn config_file_merges_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[trace]\njob_count = 9\nslots = 30\njobs = { epochs = [2, 3] }\n").unwrap();
    let trace_path = dir.path().join("t.jsonl");
    let spec_path = dir.path().join("spec.toml");
    let out = oasis(&[
        "--config",
        path_str(&cfg),
        "generate",
        "--job-count",
        "11",
        "--out",
        path_str(&trace_path),
        "--spec-out",
        path_str(&spec_path),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let spec: TraceSpec = toml::from_str(&std::fs::read_to_string(&spec_path).unwrap()).unwrap();
    assert_eq!(spec.job_count, 11);
    assert_eq!(spec.slots, 30);
    assert_eq!(spec.jobs.epochs, [2, 3]);
    assert_eq!(spec.jobs.chunks, TraceSpec::desk().jobs.chunks);
    assert_eq!(read_trace_file(&trace_path).unwrap(), generate_trace(&spec).unwrap());
}

#[test]
fn arrival_profile_file_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let weights = dir.path().join("w.txt");
    std::fs::write(&weights, "0 0 1\n").unwrap();
    let out_path = dir.path().join("t.jsonl");
    let out = oasis(&[
        "generate",
        "--job-count",
        "20",
        "--arrival-profile",
        path_str(&weights),
        "--out",
        path_str(&out_path),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = read_trace_file(&out_path).unwrap();
    assert!(trace.jobs.iter().all(|j| j.arrival == 3));
}

#[test]
fn invalid_spec_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("t.jsonl");
    let out = oasis(&["generate", "--slots", "0", "--out", path_str(&out_path)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(summary(&out)["status"], "error");

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[trace]\nunknown_field = 1\n").unwrap();
    let out = oasis(&["--config", path_str(&cfg), "generate", "--out", path_str(&out_path)]);
    assert_eq!(out.status.code(), Some(2));

    let out = oasis(&["compare", "--scheduler", "lottery"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_trace_exits_2_and_missing_file_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{not json}\n").unwrap();
    let out = oasis(&["simulate", "--trace", path_str(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    let out = oasis(&["simulate", "--trace", path_str(&dir.path().join("absent.jsonl"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn compare_writes_one_row_per_seed_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.csv");
    let second = dir.path().join("b.csv");
    for (p, threads) in [(&first, "1"), (&second, "3")] {
        let out = oasis(&[
            "compare",
            "--seeds",
            "5",
            "--job-count",
            "40",
            "--scheduler",
            "oasis",
            "--jobs",
            threads,
            "--results",
            path_str(p),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(summary(&out)["seeds"], "5");
    }
    let text = std::fs::read_to_string(&first).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    for (i, row) in rows.iter().enumerate() {
        assert!(row.starts_with(&format!("oasis,{},40,", i + 1)), "{row}");
    }
    assert_eq!(text, std::fs::read_to_string(&second).unwrap());
}

#[test]
fn oasis_beats_fifo_at_high_load() {
    let out = oasis(&["compare", "--seeds", "20", "--job-count", "160", "--scheduler", "oasis,fifo"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&out);
    let min_load: f64 = s["min_load"].parse().unwrap();
    assert!(min_load >= 2.0, "min load {min_load}");
    let oasis: f64 = s["utility_oasis"].parse().unwrap();
    let fifo: f64 = s["utility_fifo"].parse().unwrap();
    assert!(oasis >= fifo, "oasis {oasis} < fifo {fifo}");
}

#[test]
fn plot_data_and_job_details() {
    let dir = tempfile::tempdir().unwrap();
    let plot = dir.path().join("plot.csv");
    let jobs = dir.path().join("jobs.csv");
    let out = oasis(&[
        "compare",
        "--seeds",
        "2",
        "--job-count",
        "30",
        "--plot-data",
        path_str(&plot),
        "--job-details",
        path_str(&jobs),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let plot = std::fs::read_to_string(&plot).unwrap();
    assert!(plot.starts_with("figure,series,x,y"));
    assert_eq!(plot.lines().filter(|l| l.starts_with("utility_vs_load,")).count(), 8);
    let jobs = std::fs::read_to_string(&jobs).unwrap();
    assert_eq!(jobs.lines().count(), 1 + 4 * 2 * 30);
}

#[test]
fn simulate_runs_every_scheduler_on_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    assert!(oasis(&["generate", "--job-count", "25", "--out", path_str(&trace)]).status.success());
    let out = oasis(&["simulate", "--trace", path_str(&trace)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&out);
    for kind in ["oasis", "fifo", "drf", "rrh"] {
        assert!(s.contains_key(&format!("utility_{kind}")), "{kind} missing");
    }
}

#[test]
fn ratio_reports_bound() {
    let out = oasis(&["ratio", "--instances", "20"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&out);
    assert_eq!(s["bound_violations"], "0");
    assert_eq!(s["instances"], "20");
}

#[test]
fn verify_defaults_pass() {
    let out = oasis(&["verify"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert_eq!(stdout(&out).lines().filter(|l| l.starts_with("suite ")).count(), 5);
    assert_eq!(summary(&out)["failed"], "none");
}

#[test]
fn injected_overflow_fails_feasibility() {
    let out = oasis(&[
        "verify",
        "--inject-overflow",
        "--oracle-instances",
        "5",
        "--competitive-instances",
        "5",
        "--duality-traces",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(4));
    let text = stdout(&out);
    assert!(text.lines().any(|l| l.starts_with("suite feasibility") && l.contains("FAIL")), "{text}");
    assert_eq!(summary(&out)["failed"], "feasibility");
}
