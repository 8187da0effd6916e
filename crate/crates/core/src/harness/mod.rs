//! Command layer: configuration, seeded sampling, verification suites and
//! the `simulate`, `verify` and `sweep` commands.

pub mod commands;
pub mod config;
pub mod sampler;
pub mod suites;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Error;

pub const TOOL: &str = "cdistab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Process exit codes.
pub mod exit {
    pub const PASS: i32 = 0;
    pub const FAIL: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const DIVERGENCE: i32 = 3;
}

/// Maps an error onto an exit code. Numerical breakdown (blow-up or a
/// quadrature that cannot meet its tolerance) is reported as divergence.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Divergence { .. } | Error::Quadrature { .. } => exit::DIVERGENCE,
        _ => exit::USAGE,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub passed: bool,
    /// Non-mandatory checks are reported but do not affect the aggregate.
    pub mandatory: bool,
    pub detail: Value,
}

impl CheckRecord {
    pub fn new<T: Serialize>(name: impl Into<String>, passed: bool, mandatory: bool, detail: T) -> Self {
        let detail = serde_json::to_value(detail).unwrap_or_else(|e| Value::String(format!("unserializable: {e}")));
        Self { name: name.into(), passed, mandatory, detail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub suite: String,
    pub passed: bool,
    pub checks_total: usize,
    pub checks_failed: usize,
    pub constants: BTreeMap<String, f64>,
    pub checks: Vec<CheckRecord>,
}

impl SuiteResult {
    pub fn new(suite: &str, config_hash: &str, seed: u64, checks: Vec<CheckRecord>, constants: BTreeMap<String, f64>) -> Self {
        let passed = checks.iter().filter(|c| c.mandatory).all(|c| c.passed);
        let checks_failed = checks.iter().filter(|c| c.mandatory && !c.passed).count();
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            config_hash: config_hash.into(),
            seed,
            suite: suite.into(),
            passed,
            checks_total: checks.len(),
            checks_failed,
            constants,
            checks,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_ignores_optional_checks() {
        let checks = vec![CheckRecord::new("a", true, true, 1.0), CheckRecord::new("b", false, false, "x")];
        let r = SuiteResult::new("s", "h", 1, checks.clone(), BTreeMap::new());
        assert!(r.passed);
        assert_eq!(r.checks_failed, 0);
        let mut bad = checks;
        bad.push(CheckRecord::new("c", false, true, Value::Null));
        assert!(!SuiteResult::new("s", "h", 1, bad, BTreeMap::new()).passed);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Divergence { last_valid_time: 1.0 }), 3);
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
    }
}
