//! Trace files and result tables.
//!
//! A trace is JSON lines: the first line is the [`ClusterSpec`], every
//! following non-empty line one [`Job`]. Results are CSV.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MetricsReport, SchedulerKind, Trace};
use crate::error::{Error, Result};
use crate::model::{ClusterSpec, Job, JobClass};

fn json_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: 0,
        detail: e.to_string(),
    }
}

pub fn write_trace<W: Write>(trace: &Trace, mut w: W) -> Result<()> {
    serde_json::to_writer(&mut w, &trace.cluster).map_err(json_error)?;
    writeln!(w)?;
    for job in &trace.jobs {
        serde_json::to_writer(&mut w, job).map_err(json_error)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: BufRead>(r: R) -> Result<Trace> {
    let mut cluster: Option<ClusterSpec> = None;
    let mut jobs = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_error = |e: serde_json::Error| Error::Parse {
            line: n,
            detail: e.to_string(),
        };
        match &cluster {
            None => cluster = Some(serde_json::from_str(&line).map_err(parse_error)?),
            Some(_) => jobs.push(serde_json::from_str::<Job>(&line).map_err(parse_error)?),
        }
    }
    let cluster = cluster.ok_or(Error::Parse {
        line: 1,
        detail: "missing cluster header".into(),
    })?;
    cluster.validate()?;
    for job in &jobs {
        job.validate(&cluster)?;
    }
    Ok(Trace { cluster, jobs })
}

pub fn write_trace_file(trace: &Trace, path: &Path) -> Result<()> {
    write_trace(trace, BufWriter::new(File::create(path)?))
}

pub fn read_trace_file(path: &Path) -> Result<Trace> {
    read_trace(BufReader::new(File::open(path)?))
}

/// One row per (scheduler, seed).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scheduler: SchedulerKind,
    pub seed: u64,
    pub jobs: usize,
    pub total_utility: f64,
    pub admitted: usize,
    pub completed: usize,
    pub acceptance_rate: f64,
    /// Decision latencies; empty in tables meant to be compared across runs.
    pub latency_mean_us: Option<f64>,
    pub latency_p95_us: Option<f64>,
    /// Mean `|timeliness|` of completed time-critical jobs.
    pub critical_timeliness: Option<f64>,
    pub oracle_opt: Option<f64>,
    pub oracle_ratio: Option<f64>,
}

impl ResultRow {
    pub fn new(report: &MetricsReport, seed: u64) -> Self {
        ResultRow {
            scheduler: report.scheduler,
            seed,
            jobs: report.jobs.len(),
            total_utility: report.total_utility,
            admitted: report.admitted,
            completed: report.completed,
            acceptance_rate: report.acceptance_rate,
            latency_mean_us: Some(report.latency_mean_us),
            latency_p95_us: Some(report.latency_p95_us),
            critical_timeliness: report.mean_abs_timeliness(Some(JobClass::Critical)),
            oracle_opt: report.oracle.as_ref().map(|o| o.opt),
            oracle_ratio: report.oracle.as_ref().and_then(|o| o.ratio),
        }
    }

    pub fn without_timing(mut self) -> Self {
        self.latency_mean_us = None;
        self.latency_p95_us = None;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobRow {
    pub scheduler: SchedulerKind,
    pub seed: u64,
    pub job_id: u64,
    pub class: JobClass,
    pub arrival: u32,
    pub admitted: bool,
    pub completion: Option<u32>,
    pub utility: f64,
    pub timeliness: Option<f64>,
    pub latency_us: Option<f64>,
}

impl JobRow {
    pub fn rows(report: &MetricsReport, seed: u64) -> impl Iterator<Item = JobRow> + '_ {
        report.jobs.iter().map(move |j| JobRow {
            scheduler: report.scheduler,
            seed,
            job_id: j.job_id.0,
            class: j.class,
            arrival: j.arrival,
            admitted: j.admitted,
            completion: j.completion,
            utility: j.utility,
            timeliness: j.timeliness,
            latency_us: Some(j.latency_us),
        })
    }

    pub fn without_timing(mut self) -> Self {
        self.latency_us = None;
        self
    }
}

/// A point of an x/y series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub figure: String,
    pub series: String,
    pub x: f64,
    pub y: f64,
}

fn write_rows<W: Write, T: Serialize>(rows: impl IntoIterator<Item = T>, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_result_rows<W: Write>(rows: &[ResultRow], w: W) -> Result<()> {
    write_rows(rows, w)
}

pub fn write_job_rows<W: Write>(rows: &[JobRow], w: W) -> Result<()> {
    write_rows(rows, w)
}

pub fn write_plot_points<W: Write>(points: &[PlotPoint], w: W) -> Result<()> {
    write_rows(points, w)
}

/// Mean total utility per scheduler at each load level.
pub fn plot_utility_vs_load(runs: &[(f64, &MetricsReport)]) -> Vec<PlotPoint> {
    let mut acc: BTreeMap<(SchedulerKind, u64), (f64, usize)> = BTreeMap::new();
    for (load, report) in runs {
        let e = acc.entry((report.scheduler, load.to_bits())).or_default();
        e.0 += report.total_utility;
        e.1 += 1;
    }
    let mut points: Vec<PlotPoint> = acc
        .into_iter()
        .map(|((s, x), (sum, n))| PlotPoint {
            figure: "utility_vs_load".into(),
            series: s.to_string(),
            x: f64::from_bits(x),
            y: sum / n as f64,
        })
        .collect();
    points.sort_by(|a, b| a.series.cmp(&b.series).then(a.x.total_cmp(&b.x)));
    points
}

/// Counts of timeliness samples per bin of width `bin`, keyed by the bin's lower edge.
pub fn plot_timeliness_histogram(reports: &[&MetricsReport], class: Option<JobClass>, bin: f64) -> Vec<PlotPoint> {
    let mut acc: BTreeMap<(SchedulerKind, i64), usize> = BTreeMap::new();
    for report in reports {
        for x in report.timeliness(class) {
            *acc.entry((report.scheduler, (x / bin).floor() as i64)).or_default() += 1;
        }
    }
    acc.into_iter()
        .map(|((s, b), n)| PlotPoint {
            figure: "timeliness_histogram".into(),
            series: s.to_string(),
            x: b as f64 * bin,
            y: n as f64,
        })
        .collect()
}
