//! Machine-readable command reports.

use std::fmt::Write as _;

use gdt_core::tasks::{to_csv, MetricRecord};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Output format of a report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// One named pass/fail check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub summary: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub detail: Value,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, summary: impl Into<String>) -> Self {
        Check { name: name.into(), passed, summary: summary.into(), detail: Value::Null }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub seed: u64,
    /// False iff a requested check failed or the command aborted.
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<Check>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub metrics: Vec<MetricRecord>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub data: Value,
}

impl Report {
    pub fn new(command: &str, seed: u64) -> Self {
        Report {
            command: command.to_string(),
            seed,
            passed: true,
            error: None,
            checks: Vec::new(),
            metrics: Vec::new(),
            data: Value::Null,
        }
    }

    pub fn push(&mut self, check: Check) {
        self.passed &= check.passed;
        self.checks.push(check);
    }

    pub fn fail(&mut self, error: String) {
        self.passed = false;
        self.error = Some(error);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is serializable");
        s.push('\n');
        s
    }

    /// Metric rows when the report has any, otherwise one row per check.
    pub fn to_csv(&self) -> String {
        if !self.metrics.is_empty() {
            return to_csv(&self.metrics);
        }
        let mut out = String::from("check,passed,summary\n");
        for c in &self.checks {
            let _ = writeln!(out, "{},{},{}", c.name, c.passed, csv_field(&c.summary));
        }
        if let Some(e) = &self.error {
            let _ = writeln!(out, "error,false,{}", csv_field(e));
        }
        out
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.to_json(),
            Format::Csv => self.to_csv(),
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
