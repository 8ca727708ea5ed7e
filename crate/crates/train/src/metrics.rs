//! Per-epoch metrics as an append-only CSV with a JSON-lines mirror.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TrainError};

pub const CSV_HEADER: &str = "epoch,train_loss,train_acc,test_loss,test_acc,lr,wall_time";

/// Test columns are empty on epochs without evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: Option<f64>,
    pub test_acc: Option<f64>,
    pub lr: f64,
    /// Seconds since the run (or resumed run) started.
    pub wall_time: f64,
}

impl MetricsRecord {
    /// The record with its timing removed, for reproducibility checks.
    pub fn without_time(&self) -> Self {
        Self {
            wall_time: 0.0,
            ..self.clone()
        }
    }
}

pub struct MetricsLog {
    csv: csv::Writer<File>,
    jsonl: File,
}

impl MetricsLog {
    /// Opens `metrics.csv` and `metrics.jsonl` in `dir` for appending,
    /// writing the CSV header only into an empty file.
    pub fn open(dir: &Path) -> Result<Self> {
        let csv_path = dir.join("metrics.csv");
        let open = |p: &PathBuf| {
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .map_err(|e| TrainError::file(p, e))
        };
        let file = open(&csv_path)?;
        let fresh = file.metadata()?.len() == 0;
        let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        if fresh {
            csv.write_record(CSV_HEADER.split(','))
                .map_err(|e| TrainError::Metrics(e.to_string()))?;
            csv.flush()?;
        }
        Ok(Self {
            csv,
            jsonl: open(&dir.join("metrics.jsonl"))?,
        })
    }

    pub fn append(&mut self, r: &MetricsRecord) -> Result<()> {
        self.csv.serialize(r).map_err(|e| TrainError::Metrics(e.to_string()))?;
        self.csv.flush()?;
        let line = serde_json::to_string(r).map_err(|e| TrainError::Metrics(e.to_string()))?;
        writeln!(self.jsonl, "{line}")?;
        Ok(())
    }
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| TrainError::Metrics(format!("{}: {e}", path.display())))?;
    let header = reader
        .headers()
        .map_err(|e| TrainError::Metrics(e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(TrainError::Metrics(format!("{}: unexpected header", path.display())));
    }
    reader
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| TrainError::Metrics(e.to_string()))
}
