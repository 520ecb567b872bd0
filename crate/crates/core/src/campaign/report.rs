//! Report records and their JSON/CSV serialization.
//!
//! Files for a subcommand `s` in the output directory:
//!
//! - `s.json`: the whole report.
//! - `s.csv`: one row per recorded value, columns `record,anchor,mode,status,key,value`.
//! - `s/<record>.csv`: the sample table of a record, when it has one, with its own header.
//!
//! Everything is written to temporary names first and renamed once all writes succeeded.

use super::config::{CampaignConfig, CheckMode};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// Record-only check; the criterion outcome is kept in `criterion_met`.
    Recorded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    #[serde(deserialize_with = "nullable::rows")]
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Table {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub name: String,
    /// The estimate or identity the check is about.
    pub anchor: String,
    pub mode: CheckMode,
    pub status: Status,
    pub criterion: String,
    pub criterion_met: bool,
    #[serde(deserialize_with = "nullable::map")]
    pub values: BTreeMap<String, f64>,
    pub notes: BTreeMap<String, String>,
    pub table: Option<Table>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub crate_version: String,
    pub dim: usize,
    pub n: usize,
    pub side_length: f64,
    pub os: String,
    pub arch: String,
}

impl Environment {
    pub fn of(config: &CampaignConfig) -> Environment {
        Environment {
            crate_version: env!("CARGO_PKG_VERSION").into(),
            dim: config.grid.dim,
            n: config.grid.n,
            side_length: config.grid.side_length,
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub subcommand: String,
    pub environment: Environment,
    pub config: CampaignConfig,
    pub records: Vec<Record>,
}

impl Report {
    pub fn gate_failures(&self) -> Vec<&Record> {
        self.records.iter().filter(|r| r.status == Status::Fail).collect()
    }

    pub fn record(&self, name: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(format!("serializing report: {e}")))
    }

    pub fn summary_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["record", "anchor", "mode", "status", "key", "value"])?;
        for r in &self.records {
            let mode = mode_name(r.mode);
            let status = status_name(r.status);
            for (k, v) in &r.values {
                w.write_record([r.name.as_str(), r.anchor.as_str(), mode, status, k.as_str(), &format_value(*v)])?;
            }
            for (k, v) in &r.notes {
                w.write_record([r.name.as_str(), r.anchor.as_str(), mode, status, k.as_str(), v.as_str()])?;
            }
        }
        w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))
    }

    /// Writes every file of the report into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut files: Vec<(PathBuf, Vec<u8>)> = vec![
            (dir.join(format!("{}.json", self.subcommand)), self.to_json()?.into_bytes()),
            (dir.join(format!("{}.csv", self.subcommand)), self.summary_csv()?),
        ];
        for r in &self.records {
            if let Some(t) = &r.table {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&t.columns)?;
                for row in &t.rows {
                    w.write_record(row.iter().map(|v| format_value(*v)))?;
                }
                let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
                files.push((dir.join(&self.subcommand).join(format!("{}.csv", r.name)), bytes));
            }
        }
        let mut staged = Vec::with_capacity(files.len());
        for (path, bytes) in &files {
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            let mut tmp = path.clone().into_os_string();
            tmp.push(".partial");
            let tmp = PathBuf::from(tmp);
            std::fs::write(&tmp, bytes)?;
            staged.push((tmp, path.clone()));
        }
        for (tmp, path) in &staged {
            std::fs::rename(tmp, path)?;
        }
        Ok(files.into_iter().map(|(p, _)| p).collect())
    }
}

fn mode_name(m: CheckMode) -> &'static str {
    match m {
        CheckMode::Gate => "gate",
        CheckMode::Record => "record",
    }
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Pass => "pass",
        Status::Fail => "fail",
        Status::Recorded => "recorded",
    }
}

/// Shortest round-trip representation, so equal reports give equal bytes.
/// JSON has no NaN; serde_json writes non-finite numbers as `null`, read back here as NaN.
mod nullable {
    use serde::{Deserialize, Deserializer};
    use std::collections::BTreeMap;

    fn nan(v: Option<f64>) -> f64 {
        v.unwrap_or(f64::NAN)
    }

    pub fn rows<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        let raw = Vec::<Vec<Option<f64>>>::deserialize(d)?;
        Ok(raw.into_iter().map(|r| r.into_iter().map(nan).collect()).collect())
    }

    pub fn map<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
        let raw = BTreeMap::<String, Option<f64>>::deserialize(d)?;
        Ok(raw.into_iter().map(|(k, v)| (k, nan(v))).collect())
    }
}

fn format_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:?}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> Report {
        let cfg = CampaignConfig::from_toml_str("seed = 1\n[grid]\ndim = 1\nn = 8\n[coefficients]\nkind = \"identity\"\n").unwrap();
        let mut table = Table::new(&["t", "value"]);
        table.push(vec![0.5, f64::NAN]);
        let rec = |name: &str, status| Record {
            name: name.into(),
            anchor: "e^{−tL}1 = 1".into(),
            mode: CheckMode::Gate,
            status,
            criterion: "≤ 1".into(),
            criterion_met: status == Status::Pass,
            values: BTreeMap::from([("x".to_string(), 0.1)]),
            notes: BTreeMap::from([("backend".to_string(), "dense".to_string())]),
            table: Some(table.clone()),
        };
        Report {
            schema_version: SCHEMA_VERSION,
            subcommand: "heat".into(),
            environment: Environment::of(&cfg),
            config: cfg,
            records: vec![rec("heat.a", Status::Pass), rec("heat.b", Status::Fail)],
        }
    }

    #[test]
    fn json_round_trip_and_failures() {
        let r = report();
        let back: Report = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back.records.len(), 2);
        assert_eq!(back.gate_failures().len(), 1);
        assert_eq!(back.record("heat.b").unwrap().status, Status::Fail);
        assert!(back.records[0].table.as_ref().unwrap().rows[0][1].is_nan());
    }

    #[test]
    fn csv_rows_per_value_and_note() {
        let text = String::from_utf8(report().summary_csv().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "record,anchor,mode,status,key,value");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("heat.a,") && lines[1].ends_with(",gate,pass,x,0.1"));
        assert_eq!(format_value(f64::NAN), "nan");
        assert_eq!(format_value(1e-300), "1e-300");
    }

    #[test]
    fn write_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let files = report().write(dir.path()).unwrap();
        assert_eq!(files.len(), 4);
        assert!(files.iter().all(|f| f.exists()));
        let table = std::fs::read_to_string(dir.path().join("heat/heat.a.csv")).unwrap();
        assert_eq!(table, "t,value\n0.5,nan\n");
        let all: Vec<_> = std::fs::read_dir(dir.path().join("heat")).unwrap().flatten().collect();
        assert!(all.iter().all(|e| !e.path().to_string_lossy().ends_with(".partial")));
    }
}
