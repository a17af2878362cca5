use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

/// One named check: measured values, the threshold they are compared with,
/// the verdict and, for failures, the size of the violation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub values: BTreeMap<String, f64>,
    pub threshold: f64,
    pub status: Status,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub notes: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation: Option<f64>,
}

impl Check {
    fn new(name: &str, value: f64, threshold: f64, pass: bool, violation: f64) -> Self {
        let mut values = BTreeMap::new();
        values.insert("value".to_string(), value);
        Self {
            name: name.to_string(),
            values,
            threshold,
            status: if pass { Status::Pass } else { Status::Fail },
            notes: String::new(),
            violation: (!pass).then_some(violation),
        }
    }

    /// PASS iff `value ≤ threshold` (NaN fails).
    pub fn at_most(name: impl AsRef<str>, value: f64, threshold: f64) -> Self {
        Self::new(name.as_ref(), value, threshold, value <= threshold, value - threshold)
    }

    /// PASS iff `value ≥ threshold` (NaN fails).
    pub fn at_least(name: impl AsRef<str>, value: f64, threshold: f64) -> Self {
        Self::new(name.as_ref(), value, threshold, value >= threshold, threshold - value)
    }

    /// A verdict computed elsewhere; `violation` is recorded when it fails.
    pub fn verdict(name: impl AsRef<str>, pass: bool, violation: f64) -> Self {
        let mut c = Self::new(name.as_ref(), violation, 0.0, pass, violation);
        c.values.clear();
        c
    }

    pub fn skipped(name: impl AsRef<str>, reason: &str) -> Self {
        Self {
            name: name.as_ref().to_string(),
            values: BTreeMap::new(),
            threshold: f64::NAN,
            status: Status::Skipped,
            notes: reason.to_string(),
            violation: None,
        }
    }

    pub fn with_value(mut self, key: &str, value: f64) -> Self {
        self.values.insert(key.to_string(), value);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes = note.into();
        self
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }
}

/// A list of checks; the report passes when no check failed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub title: String,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            checks: Vec::new(),
        }
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn extend(&mut self, other: Report) {
        self.checks.extend(other.checks);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed())
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}
