//! Independent reference implementations used to check `semcont`, plus the
//! suites behind the acceptance report.

pub mod cnn;
pub mod shapley;
pub mod stats;

/// Outcome of one acceptance check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }
}
