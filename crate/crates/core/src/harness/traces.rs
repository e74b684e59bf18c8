//! Trace and result records with lossless CSV and JSON encodings.

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};

/// One perturbed step of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub eps_target: f64,
    pub block: usize,
    pub step: usize,
    pub eps_bar: f64,
    pub eta: f64,
    pub residual_norm: f64,
    pub lambda_bar: f64,
    pub support: usize,
    pub residual_support: usize,
    pub flops: u64,
    /// Orthogonal error of the iterate against the dense eigenvector.
    pub orth_error: f64,
}

/// Final outcome for one target accuracy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub eps: f64,
    pub lambda: f64,
    pub lambda_error: f64,
    pub orth_error: f64,
    pub support: usize,
    pub flops: u64,
    pub entries: u64,
    pub max_support: u64,
    pub blocks: usize,
    pub steps: usize,
    /// Quadratically accurate eigenvalue, when post-processing ran.
    pub lambda_star: Option<f64>,
    pub lambda_star_error: Option<f64>,
    /// Orthogonal error after the frozen-shift iteration, when it ran.
    pub accel_orth_error: Option<f64>,
}

/// Fixed column order and 17 significant digits for floats.
pub trait CsvRecord: Serialize + DeserializeOwned {
    const HEADER: &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

fn f(v: f64) -> String {
    format!("{v:.16e}")
}

impl CsvRecord for TraceRow {
    const HEADER: &'static [&'static str] = &[
        "eps_target",
        "block",
        "step",
        "eps_bar",
        "eta",
        "residual_norm",
        "lambda_bar",
        "support",
        "residual_support",
        "flops",
        "orth_error",
    ];

    fn fields(&self) -> Vec<String> {
        vec![
            f(self.eps_target),
            self.block.to_string(),
            self.step.to_string(),
            f(self.eps_bar),
            f(self.eta),
            f(self.residual_norm),
            f(self.lambda_bar),
            self.support.to_string(),
            self.residual_support.to_string(),
            self.flops.to_string(),
            f(self.orth_error),
        ]
    }
}

impl CsvRecord for ResultRow {
    const HEADER: &'static [&'static str] = &[
        "eps",
        "lambda",
        "lambda_error",
        "orth_error",
        "support",
        "flops",
        "entries",
        "max_support",
        "blocks",
        "steps",
        "lambda_star",
        "lambda_star_error",
        "accel_orth_error",
    ];

    fn fields(&self) -> Vec<String> {
        vec![
            f(self.eps),
            f(self.lambda),
            f(self.lambda_error),
            f(self.orth_error),
            self.support.to_string(),
            self.flops.to_string(),
            self.entries.to_string(),
            self.max_support.to_string(),
            self.blocks.to_string(),
            self.steps.to_string(),
            opt(self.lambda_star),
            opt(self.lambda_star_error),
            opt(self.accel_orth_error),
        ]
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(f).unwrap_or_default()
}

pub fn to_csv<R: CsvRecord>(rows: &[R]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(R::HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record(r.fields()).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

pub fn from_csv<R: CsvRecord>(text: &str) -> Result<Vec<R>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| Error::Parse(e.to_string()))?;
    if header.iter().ne(R::HEADER.iter().copied()) {
        return Err(Error::Parse(format!("unexpected CSV header: {header:?}")));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Parse(e.to_string())))
        .collect()
}

pub fn to_json<R: Serialize>(rows: &[R]) -> Result<String> {
    serde_json::to_string_pretty(rows).map_err(|e| Error::Parse(e.to_string()))
}

pub fn from_json<R: DeserializeOwned>(text: &str) -> Result<Vec<R>> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}
