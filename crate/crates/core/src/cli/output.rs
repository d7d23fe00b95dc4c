//! Report files: a `# key=value` metadata block followed by a CSV table.

use std::path::Path;

use super::CliError;
use crate::rng::{STREAM_SCHEME, STREAM_SCHEME_VERSION};

/// 17 significant digits, enough for an exact round trip.
pub fn num(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub struct Table {
    meta: Vec<(String, String)>,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(command: &str, seed: u64, header: &[&str]) -> Self {
        Self {
            meta: vec![
                ("tool".into(), format!("pcbag {}", env!("CARGO_PKG_VERSION"))),
                ("command".into(), command.into()),
                ("seed".into(), seed.to_string()),
                ("stream_scheme".into(), STREAM_SCHEME.into()),
                ("stream_scheme_version".into(), STREAM_SCHEME_VERSION.to_string()),
            ],
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.meta.push((key.into(), value.to_string()));
        self
    }

    pub fn row(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> Result<String, CliError> {
        let mut out = String::new();
        for (k, v) in &self.meta {
            out.push_str(&format!("# {k}={v}\n"));
        }
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        let fail = |e: csv::Error| CliError::Config(format!("csv output: {e}"));
        w.write_record(&self.header).map_err(fail)?;
        for r in &self.rows {
            w.write_record(r).map_err(fail)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Config(format!("csv output: {e}")))?;
        out.push_str(&String::from_utf8(bytes).expect("utf-8 input"));
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.render()?).map_err(|e| CliError::io(path, e))
    }
}

/// Reads a report back: metadata pairs and the CSV body (header included).
pub fn read_table(text: &str) -> (Vec<(String, String)>, Vec<Vec<String>>) {
    let mut meta = Vec::new();
    let mut body = String::new();
    for line in text.lines() {
        match line.strip_prefix("# ") {
            Some(kv) => {
                if let Some((k, v)) = kv.split_once('=') {
                    meta.push((k.to_string(), v.to_string()));
                }
            }
            None => {
                body.push_str(line);
                body.push('\n');
            }
        }
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(body.as_bytes());
    let rows = rdr
        .records()
        .filter_map(|r| r.ok())
        .map(|r| r.iter().map(str::to_string).collect())
        .collect();
    (meta, rows)
}
