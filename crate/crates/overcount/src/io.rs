//! CSV input/output for count matrices and atomic file writing.
//!
//! Dialect: comma separated, UTF-8, nonnegative integers, optional single
//! header row auto-detected by a non-numeric first line.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::CountMatrix;

/// Parses a count matrix from CSV text. Errors carry 1-based line numbers.
pub fn parse_count_matrix(text: &str) -> Result<CountMatrix> {
    let mut rows: Vec<Vec<u64>> = Vec::new();
    let mut expected_cols: Option<usize> = None;
    let mut first_line = true;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<u64>, _> =
            fields.iter().map(|f| f.parse::<u64>()).collect();
        let was_first = first_line;
        first_line = false;
        match parsed {
            Ok(row) => {
                if let Some(cols) = expected_cols {
                    if row.len() != cols {
                        return Err(Error::CsvParse {
                            line: line_no,
                            message: format!("expected {cols} columns, found {}", row.len()),
                        });
                    }
                } else {
                    expected_cols = Some(row.len());
                }
                rows.push(row);
            }
            Err(_) => {
                // A non-numeric first line is a header; anywhere else it is
                // an error (negative numbers also land here).
                if was_first {
                    continue;
                }
                let bad = fields
                    .iter()
                    .find(|f| f.parse::<u64>().is_err())
                    .unwrap_or(&"");
                return Err(Error::CsvParse {
                    line: line_no,
                    message: format!("cell '{bad}' is not a nonnegative integer"),
                });
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::InvalidData("csv contains no data rows".into()));
    }
    CountMatrix::new(rows)
}

pub fn read_count_matrix(path: &Path) -> Result<CountMatrix> {
    let text = fs::read_to_string(path)?;
    parse_count_matrix(&text)
}

pub fn count_matrix_to_csv(data: &CountMatrix) -> String {
    let mut out = String::new();
    for row in data.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Writes a file atomically: the content lands in a sibling temp file that
/// is renamed into place, so interrupted runs never leave truncated output.
pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let tmp = path.with_extension("tmp~");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(content.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_count_matrix(path: &Path, data: &CountMatrix) -> Result<()> {
    write_atomic(path, &count_matrix_to_csv(data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_and_without_header() {
        let plain = "1,2,3\n4,5,6\n";
        let m = parse_count_matrix(plain).unwrap();
        assert_eq!(m.n(), 2);
        assert_eq!(m.p(), 3);
        let with_header = "a,b,c\n1,2,3\n4,5,6\n";
        assert_eq!(parse_count_matrix(with_header).unwrap(), m);
    }

    #[test]
    fn rejects_bad_cells_with_line_numbers() {
        let err = parse_count_matrix("1,2\n3,-4\n").unwrap_err();
        match err {
            Error::CsvParse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error: {other}"),
        }
        let err = parse_count_matrix("1,2\n3,4,5\n").unwrap_err();
        match err {
            Error::CsvParse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn round_trip() {
        let m = CountMatrix::new(vec![vec![0, 7], vec![3, 1]]).unwrap();
        let csv = count_matrix_to_csv(&m);
        assert_eq!(parse_count_matrix(&csv).unwrap(), m);
    }
}
