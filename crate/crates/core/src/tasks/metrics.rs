use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    F1,
    Mae,
    Accuracy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    InDistribution,
    Extrapolation,
    FewShot,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::InDistribution => "in-distribution",
            Split::Extrapolation => "extrapolation",
            Split::FewShot => "few-shot",
        }
    }
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::F1 => "f1",
            Metric::Mae => "mae",
            Metric::Accuracy => "accuracy",
        }
    }
}

/// F1 of the positive class. With no positives predicted or present the
/// prediction is perfect and scores 1.
pub fn f1(pred: &[bool], target: &[bool]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            pred.len(),
            target.len()
        )));
    }
    let (mut tp, mut fp, mut fnn) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(target) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fnn += 1,
            (false, false) => {}
        }
    }
    if tp + fp + fnn == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * tp as f64 / (2 * tp + fp + fnn) as f64)
}

pub fn mae(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            pred.len(),
            target.len()
        )));
    }
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

pub fn accuracy<T: PartialEq>(pred: &[T], target: &[T]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            pred.len(),
            target.len()
        )));
    }
    let hits = pred.iter().zip(target).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// One row of a metric report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub task: String,
    pub pe: String,
    pub seed: u64,
    pub split: Split,
    pub metric: Metric,
    pub value: f64,
}

pub const CSV_HEADER: &str = "task,pe,seed,split,metric,value";

impl MetricRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.task,
            self.pe,
            self.seed,
            self.split.name(),
            self.metric.name(),
            self.value
        )
    }
}

/// A metric over several seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: Metric,
    pub split: Split,
    pub per_seed: Vec<(u64, f64)>,
}

impl MetricReport {
    pub fn mean(&self) -> f64 {
        if self.per_seed.is_empty() {
            return f64::NAN;
        }
        self.per_seed.iter().map(|(_, v)| v).sum::<f64>() / self.per_seed.len() as f64
    }

    pub fn records(&self, task: &str, pe: &str) -> Vec<MetricRecord> {
        self.per_seed
            .iter()
            .map(|&(seed, value)| MetricRecord {
                task: task.to_string(),
                pe: pe.to_string(),
                seed,
                split: self.split,
                metric: self.metric,
                value,
            })
            .collect()
    }
}

pub fn to_csv(records: &[MetricRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}
