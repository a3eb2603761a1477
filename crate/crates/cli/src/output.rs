//! CSV and JSON writers. Every file carries the tool version, command,
//! config hash and seed: CSV files as leading `#` lines, JSON files in a
//! `meta` object.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const TOOL: &str = "qpcocycle";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

/// Collects written files for the run record.
pub struct Writer {
    dir: PathBuf,
    meta: Meta,
    written: Vec<OutputFile>,
}

impl Writer {
    pub fn new(dir: &Path, meta: Meta) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), meta, written: Vec::new() })
    }

    pub fn meta(&self) -> &Meta {
        &self.meta
    }

    fn record(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.written.push(OutputFile { file: name.to_string(), sha256: hex::encode(Sha256::digest(bytes)) });
        Ok(())
    }

    pub fn csv(&mut self, name: &str, comments: &[(&str, String)], header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut buf: Vec<u8> = Vec::new();
        let m = &self.meta;
        writeln!(buf, "# {} {}", m.tool, m.version)?;
        writeln!(buf, "# command: {}", m.command)?;
        writeln!(buf, "# config_hash: {}", m.config_hash)?;
        writeln!(buf, "# seed: {}", m.seed)?;
        for (k, v) in comments {
            writeln!(buf, "# {k}: {v}")?;
        }
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        self.record(name, &buf)
    }

    /// Writes `{"meta": ..., <body fields>}`.
    pub fn json(&mut self, name: &str, body: Value) -> Result<(), CliError> {
        let mut obj = Map::new();
        obj.insert("meta".into(), serde_json::to_value(&self.meta).expect("meta serializes"));
        match body {
            Value::Object(fields) => obj.extend(fields),
            other => {
                obj.insert("result".into(), other);
            }
        }
        let mut text = serde_json::to_string_pretty(&Value::Object(obj)).expect("json serializes");
        text.push('\n');
        self.record(name, text.as_bytes())
    }

    /// Writes `run.json` and returns the manifest. Wall time makes this
    /// file the only output that differs between identical runs.
    pub fn finish(self, wall_time_s: f64) -> Result<Vec<OutputFile>, CliError> {
        let record = json!({
            "tool": self.meta.tool,
            "version": self.meta.version,
            "command": self.meta.command,
            "config_hash": self.meta.config_hash,
            "seed": self.meta.seed,
            "wall_time_s": wall_time_s,
            "outputs": self.written,
        });
        let mut f = File::create(self.dir.join("run.json"))?;
        f.write_all(serde_json::to_string_pretty(&record).expect("record serializes").as_bytes())?;
        f.write_all(b"\n")?;
        Ok(self.written)
    }
}

/// Shortest round-trip form, switching to exponent notation for very small
/// or large magnitudes.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn joined(v: &[f64]) -> String {
    v.iter().map(|&x| num(x)).collect::<Vec<_>>().join(";")
}
