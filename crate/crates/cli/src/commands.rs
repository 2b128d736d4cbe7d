use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use log::info;
use oasis_core::model::JobClass;
use oasis_core::sim::{
    generate_trace, plot_timeliness_histogram, plot_utility_vs_load, read_trace_file, run_simulation,
    write_job_rows, write_plot_points, write_result_rows, write_trace_file, JobRow, MetricsReport, ResultRow,
    SchedulerKind, SimOptions, Trace, TraceSpec,
};
use oasis_core::verify::{self, RatioSample, VerifyConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{read_arrival_profile, ConfigError, FileConfig};
use crate::{CheckFailed, Cli, Command, CompareArgs, GenerateArgs, RatioArgs, RunOverrides, SimulateArgs, TraceOverrides, VerifyArgs};

pub fn run(cli: Cli) -> Result<()> {
    let cfg = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Generate(args) => generate(&cfg, args),
        Command::Simulate(args) => simulate(&cfg, args),
        Command::Compare(args) => compare(&cfg, args),
        Command::Ratio(args) => ratio(&cfg, args),
        Command::Verify(args) => verify(&cfg, args),
    }
}

fn trace_spec(cfg: &FileConfig, o: &TraceOverrides) -> Result<TraceSpec> {
    let mut cfg = cfg.clone();
    if let Some(p) = &o.preset {
        cfg.trace.insert("preset".into(), toml::Value::String(p.clone()));
    }
    let mut spec = cfg.trace_spec()?;
    if let Some(seed) = o.seed {
        spec.seed = seed;
    }
    if let Some(n) = o.job_count {
        spec.job_count = n;
    }
    if let Some(t) = o.slots {
        spec.slots = t;
        if spec.arrival_window.is_some_and(|w| w > t) {
            spec.arrival_window = Some(t);
        }
    }
    if let Some(path) = &o.arrival_profile {
        spec.arrival = read_arrival_profile(path)?;
    }
    spec.validate()?;
    Ok(spec)
}

fn class_counts(trace: &Trace) -> [usize; 3] {
    let mut n = [0; 3];
    for job in &trace.jobs {
        n[match job.class() {
            JobClass::Insensitive => 0,
            JobClass::Sensitive => 1,
            JobClass::Critical => 2,
        }] += 1;
    }
    n
}

fn generate(cfg: &FileConfig, args: GenerateArgs) -> Result<()> {
    let spec = trace_spec(cfg, &args.trace)?;
    let trace = generate_trace(&spec)?;
    write_trace_file(&trace, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(path) = &args.spec_out {
        let text = toml::to_string(&spec).context("serializing the trace spec")?;
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    let [insensitive, sensitive, critical] = class_counts(&trace);
    println!(
        "summary command=generate status=ok seed={} jobs={} slots={} worker_servers={} ps_servers={} load={:.4} insensitive={insensitive} sensitive={sensitive} critical={critical}",
        spec.seed,
        trace.jobs.len(),
        trace.cluster.slots,
        trace.cluster.worker_servers.len(),
        trace.cluster.ps_servers.len(),
        trace.load_factor(),
    );
    Ok(())
}

fn sim_options(cfg: &FileConfig, run: &RunOverrides) -> Result<(Vec<SchedulerKind>, SimOptions)> {
    let kinds = if run.schedulers.is_empty() {
        cfg.run.schedulers.clone()
    } else {
        run.schedulers.clone()
    };
    if kinds.is_empty() {
        return Err(ConfigError("no schedulers selected".into()).into());
    }
    let estimate_scale = run.estimate_scale.unwrap_or(cfg.run.estimate_scale);
    if !(estimate_scale.is_finite() && estimate_scale > 0.0) {
        return Err(ConfigError(format!("estimate scale must be positive, got {estimate_scale}")).into());
    }
    cfg.run.baseline.validate()?;
    let opts = SimOptions {
        baseline: cfg.run.baseline.clone(),
        estimate_scale,
        oracle: (run.oracle || cfg.run.oracle).then_some(cfg.run.oracle_limits),
    };
    Ok((kinds, opts))
}

struct SeedRun {
    seed: u64,
    load: f64,
    reports: Vec<MetricsReport>,
}

fn run_trace(trace: &Trace, seed: u64, kinds: &[SchedulerKind], opts: &SimOptions, timing: bool) -> Result<SeedRun> {
    let mut reports = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let started = Instant::now();
        let report = run_simulation(trace, kind, opts).with_context(|| format!("seed {seed}, scheduler {kind}"))?;
        info!(
            "seed {seed} {kind}: utility {:.3}, admitted {}/{} in {:.2?}",
            report.total_utility,
            report.admitted,
            trace.jobs.len(),
            started.elapsed()
        );
        reports.push(if timing { report } else { report.without_timing() });
    }
    Ok(SeedRun {
        seed,
        load: trace.load_factor(),
        reports,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_tables(runs: &[SeedRun], run: &RunOverrides) -> Result<()> {
    if let Some(path) = &run.results {
        let rows: Vec<ResultRow> = runs
            .iter()
            .flat_map(|r| r.reports.iter().map(move |rep| ResultRow::new(rep, r.seed)))
            .map(|row| if run.timing { row } else { row.without_timing() })
            .collect();
        write_result_rows(&rows, create(path)?)?;
    }
    if let Some(path) = &run.job_details {
        let rows: Vec<JobRow> = runs
            .iter()
            .flat_map(|r| r.reports.iter().flat_map(move |rep| JobRow::rows(rep, r.seed)))
            .map(|row| if run.timing { row } else { row.without_timing() })
            .collect();
        write_job_rows(&rows, create(path)?)?;
    }
    Ok(())
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.3}"))
}

/// Per-scheduler means over seeds, printed as a table; returns the summary fields.
fn print_means(runs: &[SeedRun], kinds: &[SchedulerKind], timing: bool) -> String {
    println!(
        "{:<8} {:>12} {:>10} {:>10} {:>12}{}",
        "policy",
        "utility",
        "accepted",
        "completed",
        "critical|t|",
        if timing { "  latency_us" } else { "" }
    );
    let mut fields = String::new();
    for (i, kind) in kinds.iter().enumerate() {
        let reports: Vec<&MetricsReport> = runs.iter().map(|r| &r.reports[i]).collect();
        let utility = mean(reports.iter().map(|r| r.total_utility)).unwrap_or(0.0);
        let accepted = mean(reports.iter().map(|r| r.acceptance_rate)).unwrap_or(0.0);
        let completed = mean(reports.iter().map(|r| r.completed as f64)).unwrap_or(0.0);
        let critical = mean(reports.iter().filter_map(|r| r.mean_abs_timeliness(Some(JobClass::Critical))));
        let latency = if timing {
            format!("  {:>10.1}", mean(reports.iter().map(|r| r.latency_mean_us)).unwrap_or(0.0))
        } else {
            String::new()
        };
        println!("{:<8} {utility:>12.3} {accepted:>10.3} {completed:>10.1} {:>12}{latency}", kind.as_str(), fmt_opt(critical));
        fields.push_str(&format!(" utility_{kind}={utility:.6}"));
        let ratios: Vec<f64> = reports.iter().filter_map(|r| r.oracle.as_ref()?.ratio).collect();
        if let Some(worst) = ratios.iter().copied().reduce(f64::max) {
            fields.push_str(&format!(" max_ratio_{kind}={worst:.6}"));
        }
    }
    fields
}

fn simulate(cfg: &FileConfig, args: SimulateArgs) -> Result<()> {
    let (kinds, opts) = sim_options(cfg, &args.run)?;
    let trace = read_trace_file(&args.trace).with_context(|| format!("reading {}", args.trace.display()))?;
    let runs = [run_trace(&trace, args.seed, &kinds, &opts, args.run.timing)?];
    write_tables(&runs, &args.run)?;
    let fields = print_means(&runs, &kinds, args.run.timing);
    println!(
        "summary command=simulate status=ok jobs={} load={:.4}{fields}",
        trace.jobs.len(),
        runs[0].load
    );
    Ok(())
}

fn compare(cfg: &FileConfig, args: CompareArgs) -> Result<()> {
    let (kinds, opts) = sim_options(cfg, &args.run)?;
    let base = trace_spec(cfg, &TraceOverrides { seed: None, ..args.trace })?;
    let first = args.trace.seed.unwrap_or(cfg.run.first_seed);
    let count = args.seeds.unwrap_or(cfg.run.seeds);
    if count == 0 {
        return Err(ConfigError("the sweep needs at least one seed".into()).into());
    }
    let seeds: Vec<u64> = (first..first + count).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(cfg.run.threads))
        .build()
        .context("starting worker threads")?;
    let timing = args.run.timing;
    let runs: Vec<SeedRun> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let trace = generate_trace(&TraceSpec { seed, ..base.clone() })?;
                run_trace(&trace, seed, &kinds, &opts, timing)
            })
            .collect::<Result<_>>()
    })?;
    write_tables(&runs, &args.run)?;
    if let Some(path) = &args.plot_data {
        let by_load: Vec<(f64, &MetricsReport)> =
            runs.iter().flat_map(|r| r.reports.iter().map(move |rep| (r.load, rep))).collect();
        let all: Vec<&MetricsReport> = runs.iter().flat_map(|r| &r.reports).collect();
        let mut points = plot_utility_vs_load(&by_load);
        points.extend(plot_timeliness_histogram(&all, Some(JobClass::Critical), 1.0));
        write_plot_points(&points, create(path)?)?;
    }
    let fields = print_means(&runs, &kinds, timing);
    let loads: Vec<f64> = runs.iter().map(|r| r.load).collect();
    println!(
        "summary command=compare status=ok seeds={count} first_seed={first} jobs={} mean_load={:.4} min_load={:.4}{fields}",
        base.job_count,
        mean(loads.iter().copied()).unwrap_or(0.0),
        loads.iter().copied().fold(f64::INFINITY, f64::min),
    );
    Ok(())
}

#[derive(Serialize)]
struct RatioRow {
    instance: usize,
    opt: f64,
    online: f64,
    alpha: f64,
    ratio: f64,
}

fn ratio(cfg: &FileConfig, args: RatioArgs) -> Result<()> {
    let mut vcfg = cfg.verify.clone();
    if let Some(seed) = args.seed {
        vcfg.seed = seed;
    }
    if let Some(n) = args.instances {
        vcfg.competitive_instances = n;
    }
    let samples = verify::ratio_samples(&vcfg)?;
    if let Some(path) = &args.out {
        let mut w = csv::Writer::from_writer(create(path)?);
        for (instance, s) in samples.iter().enumerate() {
            w.serialize(RatioRow {
                instance,
                opt: s.opt,
                online: s.online,
                alpha: s.alpha,
                ratio: s.ratio(),
            })?;
        }
        w.flush()?;
    }
    let mut ratios: Vec<f64> = samples.iter().map(RatioSample::ratio).collect();
    ratios.sort_by(f64::total_cmp);
    let violations = samples
        .iter()
        .filter(|s| s.ratio() > 2.0 * s.alpha * (1.0 + 1e-9))
        .count();
    let with_opt = samples.iter().filter(|s| s.opt > 0.0).count();
    let median = ratios.get(ratios.len() / 2).copied().unwrap_or(1.0);
    let max = ratios.last().copied().unwrap_or(1.0);
    let max_alpha = samples.iter().map(|s| s.alpha).fold(1.0, f64::max);
    let status = if violations == 0 { "ok" } else { "fail" };
    println!(
        "summary command=ratio status={status} instances={} positive_opt={with_opt} median={median:.6} max={max:.6} max_alpha={max_alpha:.4} bound_violations={violations}",
        samples.len()
    );
    if violations > 0 {
        return Err(CheckFailed(format!("{violations} instances exceed OPT / P <= 2 alpha")).into());
    }
    Ok(())
}

fn verify(cfg: &FileConfig, args: VerifyArgs) -> Result<()> {
    let mut vcfg: VerifyConfig = cfg.verify.clone();
    let VerifyArgs {
        seed,
        oracle_instances,
        competitive_instances,
        feasibility_jobs,
        duality_traces,
        inject_overflow,
    } = args;
    vcfg.seed = seed.unwrap_or(vcfg.seed);
    vcfg.oracle_instances = oracle_instances.unwrap_or(vcfg.oracle_instances);
    vcfg.competitive_instances = competitive_instances.unwrap_or(vcfg.competitive_instances);
    vcfg.feasibility_jobs = feasibility_jobs.unwrap_or(vcfg.feasibility_jobs);
    vcfg.duality_traces = duality_traces.unwrap_or(vcfg.duality_traces);
    vcfg.inject_overflow |= inject_overflow;
    let suites = verify::run_all(&vcfg)?;
    let mut failed = Vec::new();
    for s in &suites {
        let verdict = if s.passed() { "PASS" } else { "FAIL" };
        println!(
            "suite {:<18} {verdict} checked={} failures={} elapsed_ms={}",
            s.name,
            s.checked,
            s.failures,
            s.elapsed.as_millis()
        );
        for note in &s.notes {
            println!("    {note}");
        }
        if !s.passed() {
            failed.push(s.name.as_str());
        }
    }
    let status = if failed.is_empty() { "ok" } else { "fail" };
    println!(
        "summary command=verify status={status} suites={} failed={}",
        suites.len(),
        if failed.is_empty() { "none".to_string() } else { failed.join(",") }
    );
    if !failed.is_empty() {
        return Err(CheckFailed(format!("failing suites: {}", failed.join(", "))).into());
    }
    Ok(())
}
