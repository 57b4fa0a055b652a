//! Result files: JSON envelope, CSV table and gnuplot script, all written
//! atomically.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

/// Version tag embedded in every result file.
pub const FORMAT_VERSION: &str =
    concat!("explab-result/1 (explab ", env!("CARGO_PKG_VERSION"), ")");

/// Significant digits of every emitted floating-point number.
pub const SIG_DIGITS: usize = 9;

pub fn round_sig(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{:.*e}", SIG_DIGITS - 1, v).parse().unwrap_or(v)
}

/// Rounds every non-integer number in `v` to [`SIG_DIGITS`] digits.
pub fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let r = round_sig(n.as_f64().unwrap());
            if let Some(m) = serde_json::Number::from_f64(r) {
                *n = m;
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_value),
        Value::Object(o) => o.values_mut().for_each(round_value),
        _ => {}
    }
}

/// `{config, results, flags, version}`.
#[derive(Serialize)]
pub struct Envelope {
    pub config: Value,
    pub results: Vec<Value>,
    pub flags: Vec<String>,
    pub version: String,
}

impl Envelope {
    pub fn new<C: Serialize>(config: &C, results: Vec<Value>, flags: Vec<String>) -> Result<Self> {
        let mut config = serde_json::to_value(config)?;
        round_value(&mut config);
        let mut results = results;
        results.iter_mut().for_each(round_value);
        Ok(Envelope {
            config,
            results,
            flags,
            version: FORMAT_VERSION.to_string(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// One CSV cell, formatted exactly as the same value appears in the JSON.
pub fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => {
            if s.contains([',', '"', '\n']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.clone()
            }
        }
        other => other.to_string(),
    }
}

/// Header plus one line per row; `rows` hold already-rounded JSON values.
pub fn csv(header: &[&str], rows: &[Vec<Value>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(cell).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// A gnuplot script plotting columns `ys` of `csv_file` against column 1.
pub fn gnuplot(
    csv_file: &str,
    title: &str,
    xlabel: &str,
    ylabel: &str,
    ys: &[(usize, &str)],
) -> String {
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str(&format!("set title '{title}'\n"));
    s.push_str(&format!("set xlabel '{xlabel}'\nset ylabel '{ylabel}'\n"));
    s.push_str("set key top right\nset grid\n");
    let plots: Vec<String> = ys
        .iter()
        .map(|(col, name)| {
            format!("'{csv_file}' using 1:{col} skip 1 with linespoints title '{name}'")
        })
        .collect();
    s.push_str(&format!("plot {}\n", plots.join(", \\\n     ")));
    s.push_str("pause -1\n");
    s
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory and a rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)
        .with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Paths of the artifacts of one run.
#[derive(Clone, Debug, Serialize)]
pub struct Artifacts {
    pub json: PathBuf,
    pub csv: PathBuf,
    pub gnuplot: Option<PathBuf>,
}

impl Artifacts {
    pub fn from_prefix(prefix: &Path, with_plot: bool) -> Self {
        let with = |ext: &str| {
            let mut s = prefix.as_os_str().to_owned();
            s.push(ext);
            PathBuf::from(s)
        };
        Artifacts {
            json: with(".json"),
            csv: with(".csv"),
            gnuplot: with_plot.then(|| with(".gp")),
        }
    }
}
