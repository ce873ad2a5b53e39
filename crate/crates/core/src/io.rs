//! Delimited-text ingestion and plot-ready text output.
//!
//! Matrices: one sample per line, comma separated numbers. A single header
//! line is skipped when none of its fields parse as a number. Labels: one
//! non-negative integer per line.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{OscError, Result};
use crate::matrix::DataMatrix;

/// Parses comma-separated numeric rows. `origin` is only used in errors.
pub fn parse_matrix(text: &str, origin: &Path) -> Result<DMatrix<f64>> {
    let parse_err = |line: usize, message: String| OscError::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0usize;
    for (index, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(index + 1, e.to_string()))?;
        let line = record.position().map_or(index + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        if rows == 0 && width.is_none() && record.iter().all(|f| f.parse::<f64>().is_err()) {
            // header line
            width = Some(record.len());
            continue;
        }
        match width {
            Some(w) if w != record.len() => {
                return Err(parse_err(
                    line,
                    format!("expected {w} fields, found {}", record.len()),
                ))
            }
            _ => width = Some(record.len()),
        }
        for field in record.iter() {
            let value = field
                .parse::<f64>()
                .map_err(|_| parse_err(line, format!("`{field}` is not a number")))?;
            data.push(value);
        }
        rows += 1;
    }
    let cols = width.unwrap_or(0);
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// Parses one non-negative integer label per line; blank lines are ignored.
pub fn parse_labels(text: &str, origin: &Path) -> Result<Vec<usize>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let field = l.trim();
            field.parse::<usize>().map_err(|_| OscError::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: format!("`{field}` is not a non-negative integer label"),
            })
        })
        .collect()
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| OscError::io(path, e))?;
    parse_matrix(&text, path)
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| OscError::io(path, e))?;
    parse_labels(&text, path)
}

/// Loads and validates a data matrix, naming it after the file stem.
pub fn load_dataset(path: &Path, labels: Option<&Path>) -> Result<DataMatrix> {
    let values = read_matrix(path)?;
    let labels = labels.map(read_labels).transpose()?;
    let name = path
        .file_stem()
        .map_or_else(|| "data".to_string(), |s| s.to_string_lossy().into_owned());
    Ok(DataMatrix::validate(values, labels)?.with_name(name))
}

/// Writes a matrix as comma-separated rows with full precision.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = String::new();
    for row in m.row_iter() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| OscError::io(path, e))
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| OscError::io(path, e))
}

/// Two-column `iteration,objective` text for convergence plots.
pub fn write_trace(path: &Path, trace: &[f64]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| OscError::io(path, e))?;
    let mut body = String::from("iteration,objective\n");
    for (i, v) in trace.iter().enumerate() {
        body.push_str(&format!("{},{v:?}\n", i + 1));
    }
    file.write_all(body.as_bytes())
        .map_err(|e| OscError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn here() -> &'static Path {
        Path::new("test.csv")
    }

    #[test]
    fn parses_plain_rows() {
        let m = parse_matrix("1,2,3\n4,5,6\n", here()).unwrap();
        assert_eq!(m.shape(), (2, 3));
        assert_eq!(m[(1, 0)], 4.0);
    }

    #[test]
    fn skips_non_numeric_header_and_handles_crlf() {
        let m = parse_matrix("a,b\r\n1.5,-2\r\n3e2, 4\r\n", here()).unwrap();
        assert_eq!(m.shape(), (2, 2));
        assert_eq!(m[(1, 0)], 300.0);
        assert_eq!(m[(1, 1)], 4.0);
    }

    #[test]
    fn partially_numeric_first_line_is_data_and_fails() {
        let err = parse_matrix("a,1\n1,2\n", here()).unwrap_err();
        assert!(matches!(err, OscError::Parse { line: 1, .. }));
    }

    #[test]
    fn ragged_rows_are_an_error() {
        let err = parse_matrix("1,2\n3\n", here()).unwrap_err();
        assert!(matches!(err, OscError::Parse { line: 2, .. }));
    }

    #[test]
    fn labels_reject_negative_values() {
        assert_eq!(parse_labels("0\n2\n\n1\n", here()).unwrap(), vec![0, 2, 1]);
        assert!(parse_labels("0\n-1\n", here()).is_err());
    }
}
