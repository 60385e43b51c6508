//! Machine-readable run records and the text/CSV renderings of test
//! results.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use qfmct::quadform::QStatVector;
use qfmct::sim::PowerTable;
use qfmct::testing::TestResult;

/// Everything needed to audit one invocation. The payload round-trips
/// losslessly through JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub version: String,
    pub command: String,
    /// RFC 3339 creation timestamp; not part of any CSV output, which
    /// must be byte-identical across reruns.
    pub created_utc: String,
    pub seed: u64,
    pub threads: Option<usize>,
    /// SHA-256 of the primary input file.
    pub input_digest: String,
    pub invocation: Vec<String>,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Payload {
    Test(TestResult),
    Simulate(PowerTable),
    Diag {
        method: String,
        statistic: String,
        replicates: usize,
        blocks: usize,
        observed: QStatVector,
    },
}

impl RunRecord {
    pub fn new(
        command: &str,
        seed: u64,
        threads: Option<usize>,
        input: &Path,
        payload: Payload,
    ) -> anyhow::Result<Self> {
        let bytes = std::fs::read(input)
            .with_context(|| format!("cannot digest input file {}", input.display()))?;
        let digest = Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        Ok(RunRecord {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            created_utc: chrono::Utc::now().to_rfc3339(),
            seed,
            threads,
            input_digest: digest,
            invocation: std::env::args().collect(),
            payload,
        })
    }

    pub fn write_json(&self, stem: &Path) -> anyhow::Result<PathBuf> {
        let path = stem.with_extension("json");
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, json)
            .with_context(|| format!("cannot write record {}", path.display()))?;
        Ok(path)
    }
}

pub fn write_csv(stem: &Path, content: &str) -> anyhow::Result<PathBuf> {
    let path = stem.with_extension("csv");
    std::fs::write(&path, content)
        .with_context(|| format!("cannot write CSV {}", path.display()))?;
    Ok(path)
}

/// Fixed-width report of a test result; adjusted p-values in percent
/// with two decimals.
pub fn render_test_result(result: &TestResult) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "method {}   alpha {}   local level beta* {}",
        result.method,
        result.alpha,
        result
            .local_level
            .map_or("n/a".to_string(), |b| format!("{b:.4}")),
    );
    let label_w = result
        .labels
        .iter()
        .map(String::len)
        .max()
        .unwrap_or(5)
        .max(5);
    let _ = writeln!(
        out,
        "{:<label_w$}  {:>12}  {:>12}  {:>10}  decision",
        "block", "statistic", "quantile", "adj p (%)"
    );
    for l in 0..result.labels.len() {
        let _ = writeln!(
            out,
            "{:<label_w$}  {:>12.6}  {:>12.6}  {:>10.2}  {}",
            result.labels[l],
            result.observed[l],
            result.local_quantiles[l],
            100.0 * result.adjusted_p[l],
            if result.local_reject[l] { "reject" } else { "retain" }
        );
    }
    let _ = writeln!(
        out,
        "global hypothesis: {}",
        if result.global_reject { "rejected" } else { "not rejected" }
    );
    out
}

/// CSV rendering of a test result; numeric cells round-trip exactly.
pub fn test_result_csv(result: &TestResult) -> String {
    let mut out =
        String::from("block,label,statistic,v_hat,quantile,adjusted_p,reject\n");
    for l in 0..result.labels.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            l + 1,
            result.labels[l],
            result.observed[l],
            result.v_hat[l],
            result.local_quantiles[l],
            result.adjusted_p[l],
            result.local_reject[l]
        );
    }
    out
}
