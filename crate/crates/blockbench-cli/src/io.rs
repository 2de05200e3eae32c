//! File formats: CSV ingestion and the versioned JSON schemas.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use blockbench::{Block, Blocking, Sample, Unit};

use crate::CliError;

pub const SCHEMA: &str = "blockbench/1";

/// Reads a unit CSV with header `id,x1[,x2,...]`. Blank cells are errors.
pub fn read_sample(path: &Path) -> Result<Sample, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(BufReader::new(file));
    let headers = reader.headers().map_err(|e| CliError::io(format!("csv header: {e}")))?.clone();
    if headers.is_empty() || headers.get(0) != Some("id") {
        return Err(CliError::io("csv header must start with an `id` column".into()));
    }
    if headers.len() < 2 {
        return Err(CliError::io("csv needs at least one covariate column after `id`".into()));
    }
    let mut units = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::io(format!("csv row {}: {e}", row_idx + 2)))?;
        if record.len() != headers.len() {
            return Err(CliError::io(format!(
                "csv row {}: expected {} fields, got {}",
                row_idx + 2,
                headers.len(),
                record.len()
            )));
        }
        let id = record.get(0).unwrap_or_default();
        if id.is_empty() {
            return Err(CliError::io(format!("csv row {}: blank id", row_idx + 2)));
        }
        let mut covariates = Vec::with_capacity(headers.len() - 1);
        for (col, field) in record.iter().enumerate().skip(1) {
            if field.is_empty() {
                return Err(CliError::io(format!(
                    "csv row {}: blank value in column `{}`",
                    row_idx + 2,
                    headers.get(col).unwrap_or("?")
                )));
            }
            let value: f64 = field.parse().map_err(|_| {
                CliError::io(format!("csv row {}: `{field}` is not a number", row_idx + 2))
            })?;
            covariates.push(value);
        }
        units.push(Unit::new(id, covariates));
    }
    Sample::new(units).map_err(|e| CliError::io(format!("invalid sample: {e}")))
}

/// Saved blocking: unit ids in sample order plus blocks of 1-based indices.
#[derive(Debug, Serialize, Deserialize)]
pub struct BlockingDoc {
    pub schema: String,
    pub kind: String,
    pub n: usize,
    pub ids: Vec<String>,
    pub method: String,
    pub size: usize,
    pub objective: ObjectiveDoc,
    pub solver: String,
    pub tie_break: String,
    pub blocks: Vec<Vec<usize>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ObjectiveDoc {
    pub kind: String,
    pub metric: String,
    pub value: f64,
}

impl BlockingDoc {
    pub fn to_blocking(&self) -> Result<Blocking, CliError> {
        if self.schema != SCHEMA {
            return Err(CliError::io(format!("unsupported schema `{}`, expected `{SCHEMA}`", self.schema)));
        }
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            if b.iter().any(|&i| i == 0 || i > self.n) {
                return Err(CliError::domain(format!(
                    "block {b:?} holds indices outside 1..={}",
                    self.n
                )));
            }
            blocks.push(Block::new(b.iter().map(|&i| i - 1).collect()));
        }
        Ok(Blocking::new(blocks))
    }
}

pub fn read_blocking_doc(path: &Path) -> Result<BlockingDoc, CliError> {
    let mut text = String::new();
    File::open(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?
        .read_to_string(&mut text)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::io(format!("blocking json: {e}")))
}

/// One-based block index lists in canonical order.
pub fn blocks_one_based(blocking: &Blocking) -> Vec<Vec<usize>> {
    blocking
        .blocks()
        .iter()
        .map(|b| b.members().iter().map(|&i| i + 1).collect())
        .collect()
}

#[derive(Debug, Serialize)]
pub struct AssignmentDoc {
    pub schema: String,
    pub kind: String,
    pub n: usize,
    pub seed: u64,
    pub replication: u64,
    pub ids: Vec<String>,
    /// Per-unit indicator, sample order.
    pub treated: Vec<u8>,
    pub blocks: Vec<AssignmentBlockDoc>,
}

#[derive(Debug, Serialize)]
pub struct AssignmentBlockDoc {
    pub members: Vec<usize>,
    pub size: usize,
    pub treated_count: usize,
}
