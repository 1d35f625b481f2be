//! Versioned JSON reports. A report depends only on the input bytes and the run
//! configuration; wall-clock timing is written to stderr, never into the report.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::model::{DEFAULT_BUDGET, DEFAULT_TOL};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub trials: u64,
    pub n: usize,
    /// Martingale threshold; `None` selects `⌈n^{1/3}⌉`.
    #[serde(rename = "M")]
    pub m: Option<f64>,
    pub tolerance: f64,
    pub budget: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 1000,
            n: 1000,
            m: None,
            tolerance: DEFAULT_TOL,
            budget: DEFAULT_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }

    /// `PASS name: detail` or `FAIL name: detail`.
    pub fn line(&self) -> String {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        if self.detail.is_empty() {
            format!("{tag} {}", self.name)
        } else {
            format!("{tag} {}: {}", self.name, self.detail)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema: u32,
    pub command: Vec<String>,
    /// Hex SHA-256 over the input files in argument order.
    pub input_digest: String,
    pub config: RunConfig,
    pub result: Value,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new(command: Vec<String>, inputs: &[&[u8]], config: RunConfig, result: Value) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            command,
            input_digest: digest(inputs),
            config,
            result,
            checks: Vec::new(),
        }
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}

pub fn digest(inputs: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for bytes in inputs {
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
