//! Reading and writing delimiter-separated binary matrices and labelings.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::BinaryDataset;

/// Token marking a missing entry.
pub const NA_TOKEN: &str = "NA";

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Skip the first non-empty line.
    pub skip_header: bool,
}

fn split_fields(line: &str) -> Vec<&str> {
    if line.contains(',') {
        line.split(',').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

/// Parses a matrix of `0`, `1` and `NA` entries. Rows are separated by
/// newlines, entries by commas or whitespace (detected per line).
pub fn parse_dataset(text: &str, opts: LoadOptions) -> Result<BinaryDataset> {
    let mut rows: Vec<Vec<Option<u8>>> = Vec::new();
    let mut header_pending = opts.skip_header;
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if header_pending {
            header_pending = false;
            continue;
        }
        let fields = split_fields(line);
        let expected = *width.get_or_insert(fields.len());
        if fields.len() != expected {
            return Err(Error::Parse {
                line: lineno + 1,
                column: fields.len().min(expected) + 1,
                message: format!("expected {expected} entries, found {}", fields.len()),
            });
        }
        let row = fields
            .iter()
            .enumerate()
            .map(|(col, f)| match *f {
                "0" => Ok(Some(0)),
                "1" => Ok(Some(1)),
                NA_TOKEN => Ok(None),
                other => Err(Error::Parse {
                    line: lineno + 1,
                    column: col + 1,
                    message: format!("entry {other:?} is not 0, 1 or {NA_TOKEN}"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    BinaryDataset::from_rows(&rows)
}

/// Loads a dataset file and logs how many entries are missing.
pub fn load_dataset(path: impl AsRef<Path>, opts: LoadOptions) -> Result<BinaryDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let data = parse_dataset(&text, opts)?;
    log::info!(
        "loaded {}x{} matrix from {}: {} missing entries in {} rows",
        data.n(),
        data.d(),
        path.display(),
        data.missing_count(),
        data.rows_with_missing()
    );
    Ok(data)
}

/// Renders a dataset in the comma-separated input format.
pub fn format_dataset(data: &BinaryDataset) -> String {
    let mut out = String::with_capacity(data.n() * data.d() * 2);
    for i in 0..data.n() {
        for j in 0..data.d() {
            if j > 0 {
                out.push(',');
            }
            match data.value(i, j) {
                Some(v) => out.push(if v == 1 { '1' } else { '0' }),
                None => out.push_str(NA_TOKEN),
            }
        }
        out.push('\n');
    }
    out
}

/// Parses a labeling: one integer per line, or a delimited table with a
/// header row from which `column` is selected (first column by default).
pub fn parse_labels(text: &str, column: Option<&str>) -> Result<Vec<u32>> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    let Some(&(_, first)) = lines.first() else {
        return Err(Error::EmptyInput);
    };
    let first_fields = split_fields(first);
    let has_header = first_fields
        .iter()
        .any(|f| f.trim_matches('"').parse::<u32>().is_err());
    let col = match (has_header, column) {
        (true, Some(name)) => first_fields
            .iter()
            .position(|f| f.trim_matches('"') == name)
            .ok_or_else(|| Error::Parse {
                line: lines[0].0 + 1,
                column: 1,
                message: format!("no column named {name:?}"),
            })?,
        (false, Some(name)) => {
            return Err(Error::Parse {
                line: lines[0].0 + 1,
                column: 1,
                message: format!("column {name:?} requested but the file has no header"),
            })
        }
        (_, None) => 0,
    };
    let body = if has_header { &lines[1..] } else { &lines[..] };
    body.iter()
        .map(|&(lineno, line)| {
            let fields = split_fields(line);
            let field = fields.get(col).ok_or_else(|| Error::Parse {
                line: lineno + 1,
                column: col + 1,
                message: "missing column".into(),
            })?;
            field.trim_matches('"').parse::<u32>().map_err(|_| Error::Parse {
                line: lineno + 1,
                column: col + 1,
                message: format!("label {field:?} is not a non-negative integer"),
            })
        })
        .collect()
}

pub fn load_labels(path: impl AsRef<Path>, column: Option<&str>) -> Result<Vec<u32>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, column)
}
