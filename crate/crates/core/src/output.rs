//! Run artifacts: manifest, canonical report JSON, per-epoch CSV, and trace
//! files that carry enough header information to be replayed.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::attacks::config::ScenarioConfig;
use crate::attacks::report::ScenarioReport;
use crate::attacks::scenario::{run_scenario, ScenarioError};
use crate::netsim::Trace;

pub const REPORT_SCHEMA: &str = "posfin-report/1";
pub const TRACE_SCHEMA: &str = "posfin-trace/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: String,
    pub config_digest: String,
    pub seed: u64,
    pub scenario: String,
}

impl RunManifest {
    pub fn for_config(cfg: &ScenarioConfig) -> Self {
        RunManifest {
            schema_version: REPORT_SCHEMA.to_string(),
            config_digest: sha256_hex(cfg.canonical_json().as_bytes()),
            seed: cfg.seed,
            scenario: cfg.name.clone(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Re-serializes through `serde_json::Value`, whose maps are sorted.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("report types serialize");
    let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
    s.push('\n');
    s
}

pub fn report_json(report: &ScenarioReport) -> String {
    canonical_json(report)
}

/// Per-epoch time series; columns follow `EpochRecord` field order.
pub fn epochs_csv(report: &ScenarioReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for e in &report.epochs {
        w.serialize(e).expect("in-memory write");
    }
    if report.epochs.is_empty() {
        w.write_record(EPOCH_COLUMNS).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub const EPOCH_COLUMNS: &[&str] = &[
    "epoch",
    "start_tick",
    "new_finalizations",
    "halted",
    "slashable",
    "attacker_deposit",
    "burned",
    "liquid",
    "leaked_honest",
    "leaked_attacker",
    "censored",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct TraceHeader {
    schema: String,
    seed: u64,
    config: String,
}

/// Trace text prefixed with a `#` header line holding the config and seed.
pub fn trace_file(cfg: &ScenarioConfig, trace: &Trace) -> String {
    // TOML integers are signed, so the seed travels outside the config text.
    let mut embedded = cfg.clone();
    embedded.seed = 0;
    let header = TraceHeader {
        schema: TRACE_SCHEMA.to_string(),
        seed: cfg.seed,
        config: embedded.to_toml(),
    };
    format!(
        "# {}\n{}",
        serde_json::to_string(&header).expect("header serializes"),
        trace.render()
    )
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("trace header missing or malformed: {0}")]
    Header(String),
    #[error("trace body malformed: {0}")]
    Body(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("trace diverges at line {line}: expected {expected:?}, got {actual:?}")]
    Diverged {
        line: usize,
        expected: String,
        actual: String,
    },
}

/// Config embedded in a trace file header.
pub fn trace_config(text: &str) -> Result<ScenarioConfig, ReplayError> {
    let first = text.lines().next().unwrap_or_default();
    let json = first
        .strip_prefix('#')
        .ok_or_else(|| ReplayError::Header("first line is not a header".into()))?
        .trim();
    let header: TraceHeader =
        serde_json::from_str(json).map_err(|e| ReplayError::Header(e.to_string()))?;
    if header.schema != TRACE_SCHEMA {
        return Err(ReplayError::Header(format!(
            "schema {:?}, expected {:?}",
            header.schema, TRACE_SCHEMA
        )));
    }
    let mut cfg = ScenarioConfig::from_toml(&header.config)
        .map_err(|e| ReplayError::Header(e.to_string()))?;
    cfg.seed = header.seed;
    Ok(cfg)
}

/// Re-runs the scenario recorded in a trace file and compares line by line.
/// Returns the number of events matched.
pub fn replay(text: &str) -> Result<usize, ReplayError> {
    let cfg = trace_config(text)?;
    let recorded = Trace::parse(text).map_err(ReplayError::Body)?;
    let run = run_scenario(&cfg)?;
    let expected: Vec<String> = recorded.render().lines().map(str::to_string).collect();
    let actual: Vec<String> = run.trace.render().lines().map(str::to_string).collect();
    for i in 0..expected.len().max(actual.len()) {
        let e = expected.get(i).cloned().unwrap_or_else(|| "<end>".into());
        let a = actual.get(i).cloned().unwrap_or_else(|| "<end>".into());
        if e != a {
            return Err(ReplayError::Diverged {
                line: i + 2,
                expected: e,
                actual: a,
            });
        }
    }
    Ok(expected.len())
}
