//! CSV result tables with a `# key=value` metadata header.

use std::fmt;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::{CliError, Result};

/// Metadata key of the only line that may differ between identical runs.
pub const TIMESTAMP_KEY: &str = "timestamp";

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(x) => Some(*x),
            Cell::Text(_) => None,
        }
    }

    fn parse(s: &str) -> Self {
        s.parse().map(Cell::Num).unwrap_or_else(|_| Cell::Text(s.to_owned()))
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Num(x) if x.fract() == 0.0 && x.abs() < 1e15 => write!(f, "{x}"),
            // Shortest representation that parses back to the same bits.
            Cell::Num(x) => write!(f, "{x:?}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Num(x as f64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_owned())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultTable {
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl ResultTable {
    pub fn new(columns: Vec<String>) -> Self {
        Self {
            columns,
            ..Self::default()
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric values of one column; text cells read as NaN.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i].as_f64().unwrap_or(f64::NAN)).collect())
    }

    /// The file contents, with `timestamp` as the timestamp line.
    pub fn render(&self, timestamp: &str) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            out.push_str(&format!("# {k}={v}\n"));
        }
        out.push_str(&format!("# {TIMESTAMP_KEY}={timestamp}\n"));
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.to_string())).expect("in-memory write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells"));
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<(Self, Option<String>)> {
        let bad = |message: String| CliError::Table {
            path: path.to_owned(),
            message,
        };
        let mut table = ResultTable::default();
        let mut timestamp = None;
        let mut body_start = text.len();
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let Some(meta) = line.strip_prefix("# ") else {
                body_start = offset;
                break;
            };
            let (k, v) = meta
                .trim_end_matches(['\n', '\r'])
                .split_once('=')
                .ok_or_else(|| bad(format!("metadata line without `=`: {line:?}")))?;
            if k == TIMESTAMP_KEY {
                timestamp = Some(v.to_owned());
            } else {
                table.metadata.push((k.to_owned(), v.to_owned()));
            }
            offset += line.len();
        }
        let mut r = csv::ReaderBuilder::new().from_reader(text[body_start..].as_bytes());
        table.columns = r.headers().map_err(|e| bad(e.to_string()))?.iter().map(str::to_owned).collect();
        for rec in r.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            table.rows.push(rec.iter().map(Cell::parse).collect());
        }
        Ok((table, timestamp))
    }
}

fn unix_now() -> String {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()).to_string()
}

pub fn write_table(t: &ResultTable, path: &Path) -> Result<()> {
    let io = |source| CliError::Io {
        path: path.to_owned(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, t.render(&unix_now())).map_err(io)
}

/// Reads a table written by [`write_table`]; the timestamp is returned separately.
pub fn read_table(path: &Path) -> Result<(ResultTable, Option<String>)> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })?;
    ResultTable::parse(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ResultTable {
        let mut t = ResultTable::new(vec!["estimator".into(), "iter".into(), "nll".into()]);
        t.metadata.push(("kind".into(), "convergence".into()));
        t.metadata.push(("config".into(), r#"{"a":[1,2],"b":"x=y"}"#.into()));
        t.push(vec!["atom2".into(), 0usize.into(), 0.1f64.into()]);
        t.push(vec!["a,b".into(), 1usize.into(), (-1.0e-300f64).into()]);
        t.push(vec!["scm".into(), 2usize.into(), (1.0 / 3.0f64).into()]);
        t
    }

    #[test]
    fn render_parse_round_trip() {
        let t = sample();
        let text = t.render("42");
        let (back, ts) = ResultTable::parse(&text, Path::new("mem")).unwrap();
        assert_eq!(back, t);
        assert_eq!(ts.as_deref(), Some("42"));
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = ResultTable::new(vec!["n".into(), "mse".into()]);
        let text = t.render("0");
        assert_eq!(text, "# timestamp=0\nn,mse\n");
        assert_eq!(ResultTable::parse(&text, Path::new("mem")).unwrap().0, t);
    }

    #[test]
    fn floats_keep_every_bit() {
        for x in [0.1, 1e-17, 123456789.123456789, f64::MAX, 5e-324] {
            let s = Cell::Num(x).to_string();
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn malformed_metadata_is_reported() {
        let err = ResultTable::parse("# no separator\na\n1\n", Path::new("t.csv")).unwrap_err();
        assert!(err.to_string().contains("t.csv"));
    }
}
