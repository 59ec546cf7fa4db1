//! CSV writers. Floats use Rust's shortest round-trip formatting, so
//! identical runs produce identical bytes.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::Context;
use tcr_core::trainer::{EpochMetrics, TraceRow};

pub const METRICS_HEADER: [&str; 7] = [
    "epoch",
    "lr",
    "train_loss",
    "train_acc_noisy",
    "train_acc_clean_subset",
    "train_acc_corrupt_subset",
    "test_acc",
];

pub const SWEEP_HEADER: [&str; 6] = [
    "method",
    "params",
    "seed",
    "test_acc",
    "train_acc",
    "status",
];

fn optional(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV writer that flushes after every record.
pub struct CsvSink<W: Write> {
    inner: csv::Writer<W>,
}

impl CsvSink<File> {
    pub fn create(path: &Path) -> anyhow::Result<Self> {
        let inner = csv::Writer::from_path(path)
            .with_context(|| format!("cannot create {}", path.display()))?;
        Ok(Self { inner })
    }
}

impl<W: Write> CsvSink<W> {
    pub fn new(writer: W) -> Self {
        Self {
            inner: csv::Writer::from_writer(writer),
        }
    }

    pub fn record<I, S>(&mut self, fields: I) -> anyhow::Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(fields)?;
        self.inner.flush()?;
        Ok(())
    }

    pub fn metrics(&mut self, m: &EpochMetrics) -> anyhow::Result<()> {
        self.record([
            m.epoch.to_string(),
            m.lr.to_string(),
            m.train_loss.to_string(),
            m.train_acc_noisy.to_string(),
            optional(m.train_acc_clean_subset),
            optional(m.train_acc_corrupt_subset),
            m.test_acc.to_string(),
        ])
    }

    pub fn trace(&mut self, row: &TraceRow) -> anyhow::Result<()> {
        let mut fields = vec![row.epoch.to_string(), row.sample_id.to_string()];
        fields.extend(row.probs.as_slice().iter().map(f64::to_string));
        self.record(fields)
    }

    pub fn into_inner(self) -> anyhow::Result<W> {
        self.inner
            .into_inner()
            .map_err(|e| anyhow::anyhow!("cannot flush CSV: {}", e.error()))
    }
}

pub fn trace_header(classes: usize) -> Vec<String> {
    let mut h = vec!["epoch".to_string(), "sample_id".to_string()];
    h.extend((0..classes).map(|k| format!("p{k}")));
    h
}
