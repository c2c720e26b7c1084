//! Small string tables behind the CSV outputs and their readers.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    /// `(line, fields)`; line numbers are 1-based file lines, 0 when built in memory.
    pub data: Vec<(u64, Vec<String>)>,
    pub path: PathBuf,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            ..Self::default()
        }
    }

    pub fn push<S: Into<String>>(&mut self, row: impl IntoIterator<Item = S>) {
        self.data.push((0, row.into_iter().map(Into::into).collect()));
    }

    pub fn rows(&self) -> impl Iterator<Item = (u64, &Vec<String>)> {
        self.data.iter().map(|(l, r)| (*l, r))
    }

    pub fn number(&self, line: u64, text: &str) -> Result<f64> {
        text.parse::<f64>().map_err(|_| CliError::Parse {
            path: self.path.clone(),
            line,
            message: format!("{text:?} is not a number"),
        })
    }
}

pub fn write_table(table: &Table) -> Result<Vec<u8>> {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Config(format!("serializing table: {e}"));
    wtr.write_record(&table.header).map_err(err)?;
    for (_, row) in &table.data {
        wtr.write_record(row).map_err(err)?;
    }
    wtr.into_inner().map_err(|e| CliError::Config(format!("serializing table: {e}")))
}

/// Parses a table written by [`write_table`]; every row must match the header width.
pub fn read_table(bytes: &[u8], path: &Path) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let parse_err = |line: u64, message: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let header: Vec<String> = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.iter().map(String::from).collect();
    let mut data = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        data.push((line, rec.iter().map(String::from).collect()));
    }
    Ok(Table {
        header,
        data,
        path: path.to_path_buf(),
    })
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_then_read() {
        let mut t = Table::new(["a", "b"]);
        t.push(["x", "0.1"]);
        t.push(["y,z", "2"]);
        let bytes = write_table(&t).unwrap();
        assert_eq!(bytes, b"a,b\nx,0.1\n\"y,z\",2\n");
        let back = read_table(&bytes, Path::new("t.csv")).unwrap();
        assert_eq!(back.header, ["a", "b"]);
        assert_eq!(back.data[1], (3, vec!["y,z".to_string(), "2".to_string()]));
        assert_eq!(back.number(2, "0.1").unwrap(), 0.1);
        assert!(matches!(back.number(2, "x"), Err(CliError::Parse { line: 2, .. })));
    }
}
