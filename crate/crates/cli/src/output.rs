use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use serde_json::Value;

/// One CSV row. Cells that do not apply to a record stay empty.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Row {
    pub map: String,
    pub metric: String,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub delta: Option<f64>,
    pub center: Option<f64>,
    pub fraction: Option<f64>,
    pub half_width: Option<f64>,
    pub samples: Option<usize>,
    pub seed: u64,
}

#[derive(Serialize)]
struct Record<'a> {
    command: &'a str,
    kind: &'a str,
    config: &'a BTreeMap<String, Value>,
    result: Value,
}

pub struct Output {
    command: &'static str,
    config: BTreeMap<String, Value>,
    records: Vec<String>,
    pub rows: Vec<Row>,
}

impl Output {
    pub fn new(command: &'static str, config: BTreeMap<String, Value>) -> Self {
        Output {
            command,
            config,
            records: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn record<T: Serialize>(&mut self, kind: &str, result: &T) -> anyhow::Result<()> {
        let line = serde_json::to_string(&Record {
            command: self.command,
            kind,
            config: &self.config,
            result: serde_json::to_value(result)?,
        })?;
        self.records.push(line);
        Ok(())
    }

    pub fn write(&self, report: &Path, csv_path: &Path) -> anyhow::Result<()> {
        let mut f = std::fs::File::create(report).with_context(|| format!("creating {}", report.display()))?;
        for line in &self.records {
            writeln!(f, "{line}")?;
        }
        let mut w = csv::Writer::from_path(csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
        if self.rows.is_empty() {
            w.write_record(["map", "metric", "N", "delta", "center", "fraction", "half_width", "samples", "seed"])?;
        }
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}
