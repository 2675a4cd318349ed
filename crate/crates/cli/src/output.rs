//! JSON, CSV and SVG writers.
//!
//! JSON files carry the full run record: version, resolved config, master
//! seed and wall-clock duration. CSV and SVG files carry version, seed and the
//! result-determining part of the config in leading comments, but no timing or
//! paths, so reruns with the same seed produce identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

/// Version string of the CSV layouts below; bump when columns change.
pub const CSV_SCHEMA: &str = "1";

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord<'a, T: Serialize> {
    pub version: &'a str,
    pub command: &'a str,
    pub seed: u64,
    pub config: Value,
    pub wall_clock_seconds: f64,
    pub result: &'a T,
}

/// Comment-line header shared by CSV and SVG outputs.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub command: String,
    pub seed: u64,
    /// Only the settings that affect results.
    pub config: Value,
}

impl Provenance {
    pub fn lines(&self) -> Vec<String> {
        vec![
            format!("sudest {}", sudest_core::VERSION),
            format!("command: {}", self.command),
            format!("csv_schema: {CSV_SCHEMA}"),
            format!("seed: {}", self.seed),
            format!("config: {}", self.config),
        ]
    }
}

pub fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).map_err(|e| anyhow::anyhow!("cannot create {}: {e}", dir.display()))
}

pub fn write_json<T: Serialize>(path: &Path, record: &RunRecord<'_, T>) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(record)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))
}

/// Writes `# ` provenance lines, then an RFC-4180 table with a header row.
pub fn write_csv(path: &Path, provenance: &Provenance, header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<()> {
    let mut out = String::new();
    for line in provenance.lines() {
        out.push_str("# ");
        out.push_str(&line);
        out.push('\n');
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    out.push_str(std::str::from_utf8(&w.into_inner()?)?);
    fs::write(path, out).map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))
}

pub fn write_svg(path: &Path, provenance: &Provenance, svg: &str) -> anyhow::Result<()> {
    // "--" may not appear inside an XML comment.
    let meta = provenance.lines().join("\n").replace("--", "- -");
    let body = match svg.find("?>") {
        Some(i) if svg.starts_with("<?xml") => format!("{}\n<!--\n{meta}\n-->{}", &svg[..i + 2], &svg[i + 2..]),
        _ => format!("<!--\n{meta}\n-->\n{svg}"),
    };
    fs::write(path, body).map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))
}

/// Shortest round-trip decimal form of a float.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf, PathBuf) {
    (
        dir.join(format!("{stem}.json")),
        dir.join(format!("{stem}.csv")),
        dir.join(format!("{stem}.svg")),
    )
}

/// JSON has no infinities; they are written as `null`.
pub fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_comments_then_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let prov = Provenance {
            command: "x".into(),
            seed: 5,
            config: json!({"d": 2}),
        };
        write_csv(&path, &prov, &["a", "b"], &[vec!["1".into(), "2.5".into()]]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# sudest "));
        assert_eq!(lines[3], "# seed: 5");
        assert_eq!(lines[5], "a,b");
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(&path).unwrap();
        let rec = reader.records().next().unwrap().unwrap();
        assert_eq!(&rec[1], "2.5");
    }

    #[test]
    fn svg_comment_is_well_formed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.svg");
        let prov = Provenance {
            command: "x".into(),
            seed: 1,
            config: json!({"k": "a--b"}),
        };
        write_svg(&path, &prov, "<svg xmlns=\"http://www.w3.org/2000/svg\"></svg>").unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let inner = &text[4..text.find("-->").unwrap()];
        assert!(!inner.contains("--"));
        assert!(text.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn number_formatting() {
        assert_eq!(num(0.5625), "0.5625");
        assert_eq!(num(f64::INFINITY), "inf");
        assert_eq!(finite_or_null(f64::INFINITY), Value::Null);
    }
}
