//! Report records and their JSON and CSV renderings.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::config::{Format, RunConfig, Source, Value};

pub const SCHEMA: u32 = 1;
pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub replicas: u64,
    pub params: BTreeMap<String, Value>,
    pub provenance: BTreeMap<String, Source>,
    pub result: Json,
    /// Seconds; the only field allowed to differ between identical runs.
    pub wall_time: f64,
}

/// Rows for CSV output; commands without a natural table get flattened
/// `key,value` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Report {
    pub fn new(config: &RunConfig, result: Json, wall_time: f64) -> Self {
        Self {
            schema: SCHEMA,
            command: config.command.name().to_string(),
            version: VERSION.to_string(),
            seed: config.seed,
            replicas: config.replicas,
            params: config.params.clone(),
            provenance: config.provenance.clone(),
            result,
            wall_time,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// The JSON rendering with `wall_time` zeroed, for determinism checks.
    pub fn canonical_json(&self) -> String {
        Self {
            wall_time: 0.0,
            ..self.clone()
        }
        .to_json()
    }

    /// Flattened `key,value` rows covering provenance, parameters and result.
    pub fn flat_table(&self) -> Table {
        let mut rows = vec![
            vec!["schema".to_string(), self.schema.to_string()],
            vec!["command".to_string(), self.command.clone()],
            vec!["version".to_string(), self.version.clone()],
            vec!["seed".to_string(), self.seed.to_string()],
            vec!["replicas".to_string(), self.replicas.to_string()],
        ];
        for (k, v) in &self.params {
            let v = serde_json::to_value(v).expect("params serialize");
            flatten(&format!("params.{k}"), &v, &mut rows);
        }
        flatten("result", &self.result, &mut rows);
        rows.push(vec!["wall_time".to_string(), self.wall_time.to_string()]);
        Table {
            header: vec!["key".to_string(), "value".to_string()],
            rows,
        }
    }
}

fn flatten(prefix: &str, v: &Json, rows: &mut Vec<Vec<String>>) {
    match v {
        Json::Object(map) => {
            for (k, inner) in map {
                flatten(&format!("{prefix}.{k}"), inner, rows);
            }
        }
        Json::Array(items) if items.iter().any(|i| i.is_object() || i.is_array()) => {
            for (i, inner) in items.iter().enumerate() {
                flatten(&format!("{prefix}.{i}"), inner, rows);
            }
        }
        Json::String(s) => rows.push(vec![prefix.to_string(), s.clone()]),
        other => rows.push(vec![prefix.to_string(), other.to_string()]),
    }
}

pub fn render_csv(table: &Table) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&table.header).expect("in-memory write");
    for row in &table.rows {
        w.write_record(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

/// Renders `report` in `format`; `table` overrides the flattened CSV rows.
pub fn render(report: &Report, format: Format, table: Option<&Table>) -> String {
    match format {
        Format::Json => report.to_json(),
        Format::Csv => match table {
            Some(t) => render_csv(t),
            None => render_csv(&report.flat_table()),
        },
    }
}

pub fn emit(text: &str, output: Option<&Path>) -> std::io::Result<()> {
    match output {
        Some(path) => std::fs::write(path, text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()
        }
    }
}
