//! TOML run configuration.
//!
//! Every section is optional. `[trace]` holds any subset of the trace spec
//! fields and is merged over a preset (`preset = "desk"` by default, or
//! `"full"`); nested tables merge key by key, arrays are replaced whole.
//!
//! ```toml
//! [trace]
//! preset = "desk"
//! job_count = 160
//! jobs = { epochs = [2, 10] }
//!
//! [run]
//! schedulers = ["oasis", "fifo", "drf", "rrh"]
//! seeds = 20
//! first_seed = 1
//! estimate_scale = 1.0
//!
//! [run.baseline]
//! fixed_workers = 4
//!
//! [verify]
//! feasibility_jobs = 1000
//! ```

use std::path::Path;

use anyhow::{bail, Context, Result};
use oasis_core::sim::{ArrivalProfile, SchedulerKind, TraceSpec};
use oasis_core::verify::VerifyConfig;
use oasis_core::{BaselineConfig, OracleLimits};
use serde::Deserialize;
use toml::{Table, Value};

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub trace: Table,
    pub run: RunConfig,
    pub verify: VerifyConfig,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schedulers: Vec<SchedulerKind>,
    pub seeds: u64,
    pub first_seed: u64,
    pub estimate_scale: f64,
    /// Solve each trace exactly as well; only practical for tiny traces.
    pub oracle: bool,
    pub oracle_limits: OracleLimits,
    pub baseline: BaselineConfig,
    /// Worker threads for seed sweeps; 0 lets rayon decide.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schedulers: SchedulerKind::ALL.to_vec(),
            seeds: 20,
            first_seed: 1,
            estimate_scale: 1.0,
            oracle: false,
            oracle_limits: OracleLimits::default(),
            baseline: BaselineConfig::default(),
            threads: 0,
        }
    }
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))
            .map_err(Into::into)
    }

    /// The preset named in `[trace]` with the remaining keys merged over it.
    pub fn trace_spec(&self) -> Result<TraceSpec> {
        let mut table = self.trace.clone();
        let base = match table.remove("preset") {
            None => TraceSpec::desk(),
            Some(Value::String(s)) if s == "desk" => TraceSpec::desk(),
            Some(Value::String(s)) if s == "full" => TraceSpec::full_scale(),
            Some(other) => bail!(ConfigError(format!("unknown trace preset {other} (expected \"desk\" or \"full\")"))),
        };
        let mut merged = Table::try_from(&base).context("serializing the trace preset")?;
        merge(&mut merged, table);
        let spec: TraceSpec = Value::Table(merged)
            .try_into()
            .map_err(|e| ConfigError(format!("[trace]: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}

fn merge(base: &mut Table, over: Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

/// Relative arrival weights: numbers separated by commas or whitespace, `#` starts a comment.
pub fn read_arrival_profile(path: &Path) -> Result<ArrivalProfile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut weights = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for token in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            let w: f64 = token
                .parse()
                .map_err(|_| ConfigError(format!("{}:{}: `{token}` is not a number", path.display(), i + 1)))?;
            weights.push(w);
        }
    }
    Ok(ArrivalProfile::Weights(weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_trace_table_merges_over_preset() {
        let cfg: FileConfig = toml::from_str(
            r#"
            [trace]
            job_count = 30
            jobs = { epochs = [3, 4] }
            "#,
        )
        .unwrap();
        let spec = cfg.trace_spec().unwrap();
        let desk = TraceSpec::desk();
        assert_eq!(spec.job_count, 30);
        assert_eq!(spec.jobs.epochs, [3, 4]);
        assert_eq!(spec.jobs.chunks, desk.jobs.chunks);
        assert_eq!(spec.cluster, desk.cluster);
    }

    #[test]
    fn full_preset_and_unknown_keys() {
        let cfg: FileConfig = toml::from_str("[trace]\npreset = \"full\"\n").unwrap();
        assert_eq!(cfg.trace_spec().unwrap(), TraceSpec::full_scale());
        let cfg: FileConfig = toml::from_str("[trace]\njob_cuont = 3\n").unwrap();
        assert!(cfg.trace_spec().is_err());
        assert!(toml::from_str::<FileConfig>("[run]\nseed = 3\n").is_err());
    }

    #[test]
    fn arrival_weights_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.txt");
        std::fs::write(&path, "1, 2 3\n# peak\n4\n").unwrap();
        assert_eq!(read_arrival_profile(&path).unwrap(), ArrivalProfile::Weights(vec![1.0, 2.0, 3.0, 4.0]));
        std::fs::write(&path, "1 x\n").unwrap();
        assert!(read_arrival_profile(&path).is_err());
    }
}
