//! CSV and JSON file formats.
//!
//! Matrices are read from and written to CSV with a header row of variable
//! names; a missing value is an empty field or the literal `NA`. Summary
//! tables use 1-based row and column indices.

use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;
use tgifa_core::imputation::ImputationSummary;
use tgifa_core::{validate_dataset, DataError, Dataset};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{0}: file is empty")]
    Empty(PathBuf),
    #[error("{0}: no data rows below the header")]
    NoRows(PathBuf),
    #[error("{path}: line {line} has {got} fields, the header has {expected}")]
    Ragged { path: PathBuf, line: u64, expected: usize, got: usize },
    #[error("{path}: line {line}, column {column}: cannot parse {token:?} as a number")]
    BadToken { path: PathBuf, line: u64, column: usize, token: String },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

/// A numeric matrix with its observation mask and column names.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvMatrix {
    pub names: Vec<String>,
    pub values: DMatrix<f64>,
    pub observed: DMatrix<bool>,
}

impl CsvMatrix {
    pub fn into_dataset(self, lod: Option<f64>) -> Result<Dataset, DataError> {
        validate_dataset(self.values, self.observed, lod)?.with_variable_names(self.names)
    }
}

fn is_missing_token(field: &str) -> bool {
    field.is_empty() || field == "NA"
}

/// Parses CSV text; `source` only labels error messages.
pub fn parse_matrix_csv<R: Read>(reader: R, source: &Path) -> Result<CsvMatrix, IoError> {
    let csv_err = |e| IoError::Csv { path: source.to_path_buf(), source: e };
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(IoError::Empty(source.to_path_buf())),
        Some(r) => r.map_err(csv_err)?,
    };
    let names: Vec<String> = header.iter().map(str::to_owned).collect();
    let p = names.len();
    let mut data = Vec::new();
    let mut mask = Vec::new();
    let mut n = 0;
    for record in records {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |pos| pos.line());
        if record.len() != p {
            return Err(IoError::Ragged { path: source.to_path_buf(), line, expected: p, got: record.len() });
        }
        for (column, field) in record.iter().enumerate() {
            if is_missing_token(field) {
                data.push(0.0);
                mask.push(false);
            } else {
                let v: f64 = field.parse().map_err(|_| IoError::BadToken {
                    path: source.to_path_buf(),
                    line,
                    column: column + 1,
                    token: field.to_owned(),
                })?;
                data.push(v);
                mask.push(true);
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(IoError::NoRows(source.to_path_buf()));
    }
    Ok(CsvMatrix {
        names,
        values: DMatrix::from_row_slice(n, p, &data),
        observed: DMatrix::from_row_slice(n, p, &mask),
    })
}

pub fn read_matrix_csv(path: &Path) -> Result<CsvMatrix, IoError> {
    let file = File::open(path).map_err(|e| IoError::File { path: path.to_path_buf(), source: e })?;
    parse_matrix_csv(file, path)
}

/// Shortest decimal text that parses back to exactly `v`.
pub fn format_value(v: f64) -> String {
    format!("{v:?}")
}

/// Writes a matrix; cells whose mask entry is `false` are written as `NA`.
pub fn write_matrix_csv<W: Write>(
    writer: W,
    names: &[String],
    values: &DMatrix<f64>,
    observed: Option<&DMatrix<bool>>,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(names)?;
    for i in 0..values.nrows() {
        let row = (0..values.ncols()).map(|j| match observed {
            Some(mask) if !mask[(i, j)] => "NA".to_owned(),
            _ => format_value(values[(i, j)]),
        });
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub const SUMMARY_HEADER: [&str; 7] =
    ["row_index", "col_index", "designation", "designation_prob", "median", "ci_lower", "ci_upper"];

/// Per-cell summaries, 1-based indices, in the order given.
pub fn write_summary_csv<W: Write>(writer: W, summaries: &[ImputationSummary]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SUMMARY_HEADER)?;
    for s in summaries {
        w.write_record([
            (s.cell.row + 1).to_string(),
            (s.cell.col + 1).to_string(),
            s.designation.as_str().to_owned(),
            format_value(s.designation_probability),
            format_value(s.median),
            format_value(s.ci_lower),
            format_value(s.ci_upper),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Summary rows for a point-estimate method: no designation and no
/// interval.
pub fn write_point_summary_csv<W: Write>(writer: W, ds: &Dataset, imputed: &DMatrix<f64>) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SUMMARY_HEADER)?;
    for c in ds.missing_cells() {
        w.write_record([
            (c.row + 1).to_string(),
            (c.col + 1).to_string(),
            "NA".to_owned(),
            "NA".to_owned(),
            format_value(imputed[(c.row, c.col)]),
            "NA".to_owned(),
            "NA".to_owned(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Creates `dir` (and parents) if needed.
pub fn ensure_dir(dir: &Path) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(|e| IoError::File { path: dir.to_path_buf(), source: e })
}

/// Opens `dir/name` for writing and hands a buffered writer to `f`.
pub fn write_file<F>(dir: &Path, name: &str, f: F) -> Result<PathBuf, IoError>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), IoError>,
{
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| IoError::File { path: path.clone(), source: e })?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush().map_err(|e| IoError::File { path: path.clone(), source: e })?;
    Ok(path)
}

pub fn write_csv_file<F>(dir: &Path, name: &str, f: F) -> Result<PathBuf, IoError>
where
    F: FnOnce(&mut BufWriter<File>) -> csv::Result<()>,
{
    let path = dir.join(name);
    write_file(dir, name, |w| f(w).map_err(|e| IoError::Csv { path: path.clone(), source: e }))
}

pub fn write_json_file<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, IoError> {
    let path = dir.join(name);
    write_file(dir, name, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| IoError::Json { path: path.clone(), source: e })?;
        w.write_all(b"\n").map_err(|e| IoError::File { path: path.clone(), source: e })
    })
}
