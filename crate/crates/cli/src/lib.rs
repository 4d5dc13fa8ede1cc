//! Configuration-driven runner for the varinv checks.
//!
//! `check` runs one [`RunConfig`] and writes its report as JSON, `suite`
//! runs a list of configurations against declared verdicts and writes one
//! report and one CSV series per entry, `list` prints the catalogs.

pub mod config;
pub mod run;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use varinv_core::energies::CATALOG;
use varinv_core::report::{TestReport, Verdict};

pub use config::{RunConfig, SuiteEntry, SuiteFile, TestSpec};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;
pub const EXIT_CONFIG: i32 = 64;
pub const EXIT_IO: i32 = 74;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
        }
    }
}

pub fn verdict_exit_code(v: Verdict) -> i32 {
    match v {
        Verdict::Pass => EXIT_PASS,
        Verdict::Fail => EXIT_FAIL,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
    }
}

/// A report together with the configuration that reproduces it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    #[serde(flatten)]
    pub report: TestReport,
    pub config: RunConfig,
    pub config_digest: String,
    pub version: String,
}

impl ReportFile {
    pub fn new(report: TestReport, config: RunConfig) -> Self {
        let config_digest = config.digest();
        Self { report, config, config_digest, version: VERSION.to_string() }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}

/// Validates and runs one configuration.
pub fn run_config(config: &RunConfig) -> Result<ReportFile, CliError> {
    let prepared = config.prepare()?;
    let report = run::execute(&prepared)?;
    Ok(ReportFile::new(report, config.clone()))
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |source| CliError::Io { path: path.to_path_buf(), source };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

/// `varinv check`: returns the report and the exit code of its verdict.
/// `out` overrides the configured output path; without either the report
/// goes to standard output.
pub fn check(path: &Path, out: Option<&Path>) -> Result<(ReportFile, i32), CliError> {
    let mut config: RunConfig = config::read_json(path)?;
    config.apply_seed_override()?;
    let file = run_config(&config)?;
    let json = file.to_json();
    match out.map(Path::to_path_buf).or(config.output.clone()) {
        Some(p) => write_atomic(&p, json.as_bytes())?,
        None => print!("{json}"),
    }
    let code = verdict_exit_code(file.report.verdict);
    Ok((file, code))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub pass: usize,
    pub fail: usize,
    pub inconclusive: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRecord {
    pub name: String,
    pub config_digest: String,
    pub expect: Verdict,
    pub matched: bool,
    pub report: TestReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub version: String,
    /// Seed forced on every entry through the environment, if any.
    pub seed: Option<u64>,
    pub duration_seconds: f64,
    pub counts: Counts,
    pub entries: Vec<SuiteRecord>,
    pub mismatches: Vec<String>,
}

impl SuiteResult {
    pub fn exit_code(&self) -> i32 {
        if self.mismatches.is_empty() {
            EXIT_PASS
        } else {
            EXIT_FAIL
        }
    }
}

fn entry_name(index: usize, e: &SuiteEntry) -> String {
    let base = e.name.clone().unwrap_or_else(|| e.config.test.name().to_string());
    let slug: String =
        base.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    format!("{index:03}_{slug}")
}

/// `varinv suite`: validates every entry, then runs them in order, writing
/// `<out>/<entry>.json`, `<out>/<entry>.csv` and `<out>/suite_result.json`.
pub fn suite(path: &Path, out: &Path) -> Result<SuiteResult, CliError> {
    let file: SuiteFile = config::read_json(path)?;
    if file.entries.is_empty() {
        return Err(CliError::Config(format!("{}: suite has no entries", path.display())));
    }
    let seed = config::seed_override()?;
    let mut entries = file.entries;
    let mut prepared = Vec::with_capacity(entries.len());
    for (k, e) in entries.iter_mut().enumerate() {
        if let Some(s) = seed {
            e.config.seed = s;
        }
        let p = e.config.prepare().map_err(|err| match err {
            CliError::Config(m) => CliError::Config(format!("entries[{k}] ({}): {m}", entry_name(k, e))),
            other => other,
        })?;
        prepared.push(p);
    }
    std::fs::create_dir_all(out).map_err(|source| CliError::Io { path: out.to_path_buf(), source })?;
    let start = Instant::now();
    let mut counts = Counts::default();
    let mut records = Vec::with_capacity(entries.len());
    let mut mismatches = Vec::new();
    for (k, (e, p)) in entries.iter().zip(&prepared).enumerate() {
        let name = entry_name(k, e);
        let report = match run::execute(p) {
            Ok(r) => r,
            Err(err) => {
                let mut r = TestReport::single(e.config.test.name(), 0.0, e.config.tolerance, Default::default());
                r.verdict = Verdict::Inconclusive;
                r.caveat = err.to_string();
                r
            }
        };
        match report.verdict {
            Verdict::Pass => counts.pass += 1,
            Verdict::Fail => counts.fail += 1,
            Verdict::Inconclusive => counts.inconclusive += 1,
        }
        let matched = report.verdict == e.expect;
        if !matched {
            mismatches.push(format!(
                "{name}: expected {}, got {} (margin {:e})",
                e.expect.as_str(),
                report.verdict.as_str(),
                report.margin
            ));
        }
        let file = ReportFile::new(report.clone(), e.config.clone());
        write_atomic(&out.join(format!("{name}.json")), file.to_json().as_bytes())?;
        write_atomic(&out.join(format!("{name}.csv")), report.series_csv().as_bytes())?;
        records.push(SuiteRecord { name, config_digest: file.config_digest, expect: e.expect, matched, report });
    }
    let result = SuiteResult {
        version: VERSION.to_string(),
        seed,
        duration_seconds: start.elapsed().as_secs_f64(),
        counts,
        entries: records,
        mismatches,
    };
    let mut json = serde_json::to_string_pretty(&result).expect("suite results serialize");
    json.push('\n');
    write_atomic(&out.join("suite_result.json"), json.as_bytes())?;
    Ok(result)
}

/// `varinv list`: energies, groups and tests, each sorted by name.
pub fn list() -> String {
    let mut s = String::new();
    for (title, rows) in [("energies", CATALOG), ("groups", config::GROUPS), ("tests", config::TESTS)] {
        let _ = writeln!(s, "{title}:");
        let mut rows = rows.to_vec();
        rows.sort_by_key(|r| r.0);
        for (name, desc) in rows {
            let _ = writeln!(s, "  {name} - {desc}");
        }
    }
    s
}
