use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::CliError;

/// 17 significant digits, round-trip exact.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// JSON number carrying the same 17-digit text as the CSV files; null if not finite.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        Value::Number(fmt(x).parse().expect("formatted float is a valid JSON number"))
    } else {
        Value::Null
    }
}

pub fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

/// Output directory plus the list of files written so far.
pub struct Sink {
    dir: PathBuf,
    written: Vec<String>,
}

impl Sink {
    pub fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf(), written: Vec::new() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes `name` with a header row; every header names its unit.
    pub fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let path = self.dir.join(name);
        let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        w.write_record(header).map_err(io)?;
        for row in rows {
            debug_assert_eq!(row.len(), header.len());
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// Summary object with the command name and the files written.
    pub fn summary(&self, command: &str, mut fields: Map<String, Value>) -> Value {
        fields.insert("command".into(), Value::String(command.into()));
        fields.insert("status".into(), Value::String("ok".into()));
        fields.insert("outputs".into(), Value::Array(self.written.iter().cloned().map(Value::String).collect()));
        Value::Object(fields)
    }
}

pub fn write_json(path: &Path, v: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string(v).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
