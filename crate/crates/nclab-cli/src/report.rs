//! Artifact emission. Every file a run writes starts with the same three
//! comment lines (config hash, base seed, version banner), so any artifact
//! can be traced back to the exact configuration that produced it.

use crate::{version_string, CliResult};
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub observed: f64,
    pub target: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckResult {
    pub fn new(
        name: &str,
        pass: bool,
        observed: f64,
        target: f64,
        tolerance: f64,
        detail: String,
    ) -> Self {
        CheckResult {
            name: name.to_string(),
            pass,
            observed,
            target,
            tolerance,
            detail,
        }
    }

    pub fn line(&self) -> String {
        if self.pass {
            format!("PASS: {} ({})", self.name, self.detail)
        } else {
            format!("FAIL: {} ({})", self.name, self.detail)
        }
    }
}

/// One tidy plot-data row: a named statistic at a given size, tagged with the
/// seed that produced it.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub n: usize,
    pub seed: u64,
    pub statistic: String,
    pub value: f64,
}

impl RunRecord {
    pub fn new(n: usize, seed: u64, statistic: &str, value: f64) -> Self {
        RunRecord {
            n,
            seed,
            statistic: statistic.to_string(),
            value,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VersionInfo {
    pub nclab: String,
    pub nclab_cli: String,
}

impl Default for VersionInfo {
    fn default() -> Self {
        VersionInfo {
            nclab: nclab::VERSION.to_string(),
            nclab_cli: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Machine-readable run verdict, one entry per acceptance check.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub experiment: String,
    pub config_hash: String,
    pub base_seed: u64,
    pub version: VersionInfo,
    pub pass: bool,
    pub checks: Vec<CheckResult>,
    pub artifacts: Vec<String>,
}

impl RunSummary {
    pub fn new(experiment: &str, config_hash: &str, base_seed: u64) -> Self {
        RunSummary {
            experiment: experiment.to_string(),
            config_hash: config_hash.to_string(),
            base_seed,
            version: VersionInfo::default(),
            pass: true,
            checks: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn push(&mut self, check: CheckResult) {
        self.pass &= check.pass;
        self.checks.push(check);
    }

    pub fn record_artifact(&mut self, path: &Path) {
        self.artifacts.push(path.display().to_string());
    }
}

/// The comment preamble shared by all CSV artifacts.
pub fn preamble(config_hash: &str, base_seed: u64) -> String {
    format!(
        "# config_hash={config_hash}\n# base_seed={base_seed}\n# version={}\n",
        version_string()
    )
}

/// Open an artifact file with the preamble already written.
pub fn create_artifact(
    dir: &Path,
    name: &str,
    config_hash: &str,
    base_seed: u64,
) -> CliResult<(PathBuf, std::fs::File)> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut f = std::fs::File::create(&path)?;
    f.write_all(preamble(config_hash, base_seed).as_bytes())?;
    Ok((path, f))
}

/// Tidy CSV for external plotting: one row per (experiment, N, seed,
/// statistic). An empty record set produces the header alone.
pub fn write_plotdata<W: Write>(
    w: &mut W,
    experiment: &str,
    records: &[RunRecord],
) -> CliResult<()> {
    writeln!(w, "experiment,n,seed,statistic,value")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{:.17e}",
            experiment, r.n, r.seed, r.statistic, r.value
        )?;
    }
    Ok(())
}

/// summary.json: the machine-readable PASS/FAIL document for the run.
pub fn write_summary(dir: &Path, summary: &RunSummary) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(summary)
        .map_err(|e| crate::CliError::Run(format!("summary serialization: {e}")))?;
    std::fs::write(&path, text + "\n")?;
    Ok(path)
}
