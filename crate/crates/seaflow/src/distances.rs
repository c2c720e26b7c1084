//! Travel-cost matrices: header `port,<label_1>,...,<label_K>`, then one
//! row per port starting with its label.

use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTable {
    pub labels: Vec<String>,
    pub matrix: DMatrix<f64>,
    /// Diagonal entries that were nonzero and have been set to zero.
    pub diagonal_coerced: usize,
    /// Unordered pairs with `T_ij != T_ji`.
    pub asymmetric_pairs: usize,
}

/// Loads a distance file. With `expected` labels the matrix is returned in
/// that order and the label sets must agree.
pub fn load_distances(path: &Path, expected: Option<&[String]>) -> Result<DistanceTable> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_distances(file, path, expected)
}

pub fn read_distances<R: Read>(reader: R, path: &Path, expected: Option<&[String]>) -> Result<DistanceTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let parse_err = |line: u64, message: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.get(0) != Some("port") {
        return Err(parse_err(1, "header must start with `port`".into()));
    }
    let columns: Vec<String> = header.iter().skip(1).map(String::from).collect();
    let k = columns.len();
    if k == 0 {
        return Err(parse_err(1, "no port columns".into()));
    }
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; k];
    let mut unknown_rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != k + 1 {
            return Err(parse_err(line, format!("expected {} fields, found {}", k + 1, rec.len())));
        }
        let values = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite() && *x >= 0.0))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| parse_err(line, "distances must be finite and nonnegative".into()))?;
        match columns.iter().position(|c| c == &rec[0]) {
            Some(i) if rows[i].is_some() => return Err(parse_err(line, format!("port {:?} listed twice", &rec[0]))),
            Some(i) => rows[i] = Some(values),
            None => unknown_rows.push(rec[0].to_string()),
        }
    }
    let missing_rows: Vec<String> = (0..k).filter(|&i| rows[i].is_none()).map(|i| columns[i].clone()).collect();
    if !missing_rows.is_empty() || !unknown_rows.is_empty() {
        return Err(CliError::LabelMismatch {
            missing: missing_rows,
            extra: unknown_rows,
        });
    }

    let labels: Vec<String> = match expected {
        Some(want) => {
            let missing: Vec<String> = want.iter().filter(|l| !columns.contains(l)).cloned().collect();
            let extra: Vec<String> = columns.iter().filter(|l| !want.contains(l)).cloned().collect();
            if !missing.is_empty() || !extra.is_empty() {
                return Err(CliError::LabelMismatch { missing, extra });
            }
            want.to_vec()
        }
        None => columns.clone(),
    };
    let index: Vec<usize> = labels.iter().map(|l| columns.iter().position(|c| c == l).expect("checked")).collect();
    let mut matrix = DMatrix::from_fn(k, k, |i, j| rows[index[i]].as_ref().expect("checked")[index[j]]);

    let mut diagonal_coerced = 0;
    for i in 0..k {
        if matrix[(i, i)] != 0.0 {
            log::warn!("{}: nonzero diagonal {} for port {} set to 0", path.display(), matrix[(i, i)], labels[i]);
            matrix[(i, i)] = 0.0;
            diagonal_coerced += 1;
        }
    }
    let asymmetric_pairs = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).filter(|&(i, j)| matrix[(i, j)] != matrix[(j, i)]).count();
    if asymmetric_pairs > 0 {
        log::warn!("{}: {asymmetric_pairs} asymmetric port pair(s)", path.display());
    }
    Ok(DistanceTable {
        labels,
        matrix,
        diagonal_coerced,
        asymmetric_pairs,
    })
}

pub fn distances_to_csv(labels: &[String], matrix: &DMatrix<f64>) -> Result<Vec<u8>> {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Config(format!("serializing distances: {e}"));
    wtr.write_record(std::iter::once("port").chain(labels.iter().map(String::as_str))).map_err(err)?;
    for (i, label) in labels.iter().enumerate() {
        let row: Vec<String> = std::iter::once(label.clone()).chain(matrix.row(i).iter().map(|v| v.to_string())).collect();
        wtr.write_record(row).map_err(err)?;
    }
    wtr.into_inner().map_err(|e| CliError::Config(format!("serializing distances: {e}")))
}
