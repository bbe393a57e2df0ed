//! Plain-CSV matrix files: one row per line, comma-separated numbers, no
//! header. Output is written with 17 significant digits so every `f64`
//! round-trips exactly.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::{Matrix, Real};

/// Formats a value with 17 significant digits (full double precision).
pub fn format_full(x: f64) -> String {
    format!("{:.16e}", x)
}

pub fn read_matrix_csv<T: Real>(path: impl AsRef<Path>) -> Result<Matrix<T>> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::CsvParse {
        path: display.clone(),
        line: 0,
        detail: format!("cannot read file: {e}"),
    })?;
    let mut rows: Vec<Vec<T>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in trimmed.split(',') {
            let value: f64 = field.trim().parse().map_err(|e| Error::CsvParse {
                path: display.clone(),
                line: idx + 1,
                detail: format!("{e}: {field:?}"),
            })?;
            if !value.is_finite() {
                return Err(Error::CsvParse {
                    path: display.clone(),
                    line: idx + 1,
                    detail: format!("non-finite entry {value}"),
                });
            }
            row.push(T::of(value));
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::CsvParse {
                    path: display.clone(),
                    line: idx + 1,
                    detail: format!(
                        "row has {} entries, expected {}",
                        row.len(),
                        first.len()
                    ),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::CsvParse {
            path: display,
            line: 0,
            detail: "empty matrix".into(),
        });
    }
    let (nrows, ncols) = (rows.len(), rows[0].len());
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn write_matrix_csv<T: Real>(path: impl AsRef<Path>, matrix: &Matrix<T>) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    for i in 0..matrix.nrows() {
        let row: Vec<String> = (0..matrix.ncols())
            .map(|j| format_full(matrix[(i, j)].as_f64()))
            .collect();
        writeln!(file, "{}", row.join(","))?;
    }
    Ok(())
}
