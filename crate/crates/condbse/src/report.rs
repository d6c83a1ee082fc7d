//! Pass/fail records shared by the property checks and the verify suites.

use serde::Serialize;

/// Outcome of one checked identity or inequality over a batch of cases.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub cases: usize,
    /// Largest observed violation amount (0 when every case holds with room).
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// First few human-readable violation descriptions.
    pub violations: Vec<String>,
}

const MAX_LISTED: usize = 8;

impl CheckReport {
    pub fn new(name: impl Into<String>, tolerance: f64) -> Self {
        CheckReport { name: name.into(), cases: 0, worst: 0.0, tolerance, passed: true, violations: Vec::new() }
    }

    /// Record a case whose defect (how far the property misses, clamped at 0
    /// by the caller or not) is `defect`.
    pub fn record(&mut self, defect: f64, describe: impl FnOnce() -> String) {
        self.cases += 1;
        let d = if defect.is_nan() { f64::INFINITY } else { defect };
        if d > self.worst {
            self.worst = d;
        }
        if d > self.tolerance {
            self.passed = false;
            if self.violations.len() < MAX_LISTED {
                self.violations.push(describe());
            }
        }
    }

    /// Record a boolean case.
    pub fn record_bool(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.record(if ok { 0.0 } else { f64::INFINITY }, describe);
    }

    pub fn merge(&mut self, other: CheckReport) {
        self.cases += other.cases;
        self.worst = self.worst.max(other.worst);
        self.passed &= other.passed;
        for v in other.violations {
            if self.violations.len() < MAX_LISTED {
                self.violations.push(v);
            }
        }
    }
}
