//! Preprocessing of the UCI Zoo data into a binary matrix.
//!
//! The raw file has 18 comma-separated columns: animal name, 15 boolean
//! attributes, `legs` (column 14) and the class type (1-7, last column).
//! The name and type columns are dropped, `legs` is replaced by six
//! indicators for 0, 2, 4, 5, 6 and 8 legs, and the second of the two
//! `frog` rows (row 27) is removed, leaving 100 animals and 21 features.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::BinaryDataset;

const RAW_COLUMNS: usize = 18;
const LEGS_COLUMN: usize = 13;
const LEG_COUNTS: [u32; 6] = [0, 2, 4, 5, 6, 8];
/// 1-based row of the duplicated frog.
const DUPLICATE_ROW: usize = 27;
pub const ZOO_ROWS: usize = 100;
pub const ZOO_FEATURES: usize = 21;
pub const ZOO_CLASSES: usize = 7;

pub const BOOLEAN_ATTRIBUTES: [&str; 15] = [
    "hair", "feathers", "eggs", "milk", "airborne", "aquatic", "predator", "toothed", "backbone", "breathes",
    "venomous", "fins", "tail", "domestic", "catsize",
];

#[derive(Debug, Clone)]
pub struct Zoo {
    pub data: BinaryDataset,
    /// Class type 1-7 per retained animal.
    pub classes: Vec<u32>,
    pub names: Vec<String>,
    pub feature_names: Vec<String>,
}

fn malformed(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

pub fn prepare_zoo(text: &str) -> Result<Zoo> {
    let mut rows: Vec<(usize, Vec<&str>)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.split(',').map(str::trim).collect()))
        .collect();
    if rows.len() != ZOO_ROWS + 1 {
        return Err(Error::DimensionMismatch(format!(
            "expected {} animals in the zoo file, found {}",
            ZOO_ROWS + 1,
            rows.len()
        )));
    }
    let frogs = (rows[DUPLICATE_ROW - 2].1[0], rows[DUPLICATE_ROW - 1].1[0]);
    if frogs != ("frog", "frog") {
        return Err(Error::DimensionMismatch(format!(
            "rows {} and {} should both be frog, found {} and {}",
            DUPLICATE_ROW - 1,
            DUPLICATE_ROW,
            frogs.0,
            frogs.1
        )));
    }
    rows.remove(DUPLICATE_ROW - 1);

    let mut values = Vec::with_capacity(ZOO_ROWS * ZOO_FEATURES);
    let mut classes = Vec::with_capacity(ZOO_ROWS);
    let mut names = Vec::with_capacity(ZOO_ROWS);
    for (line, fields) in &rows {
        if fields.len() != RAW_COLUMNS {
            return Err(malformed(
                *line,
                fields.len().min(RAW_COLUMNS),
                format!("expected {RAW_COLUMNS} fields, found {}", fields.len()),
            ));
        }
        let number = |col: usize| -> Result<u32> {
            fields[col]
                .parse()
                .map_err(|_| malformed(*line, col + 1, format!("not an integer: {:?}", fields[col])))
        };
        names.push(fields[0].to_string());
        for col in (1..RAW_COLUMNS - 1).filter(|&c| c != LEGS_COLUMN) {
            match number(col)? {
                v @ (0 | 1) => values.push(v as u8),
                v => return Err(malformed(*line, col + 1, format!("expected 0 or 1, found {v}"))),
            }
        }
        let legs = number(LEGS_COLUMN)?;
        if !LEG_COUNTS.contains(&legs) {
            return Err(malformed(
                *line,
                LEGS_COLUMN + 1,
                format!("unexpected leg count {legs}"),
            ));
        }
        values.extend(LEG_COUNTS.iter().map(|&c| u8::from(c == legs)));
        let class = number(RAW_COLUMNS - 1)?;
        if !(1..=ZOO_CLASSES as u32).contains(&class) {
            return Err(malformed(
                *line,
                RAW_COLUMNS,
                format!("class {class} outside 1-7"),
            ));
        }
        classes.push(class);
    }
    let data = BinaryDataset::complete(ZOO_ROWS, ZOO_FEATURES, values)?;
    let mut distinct = classes.clone();
    distinct.sort();
    distinct.dedup();
    if distinct.len() != ZOO_CLASSES {
        return Err(Error::DimensionMismatch(format!(
            "expected {ZOO_CLASSES} classes, found {}",
            distinct.len()
        )));
    }
    let feature_names = BOOLEAN_ATTRIBUTES
        .iter()
        .map(|s| s.to_string())
        .chain(LEG_COUNTS.iter().map(|c| format!("legs.{c}")))
        .collect();
    Ok(Zoo {
        data,
        classes,
        names,
        feature_names,
    })
}

pub fn load_zoo(path: impl AsRef<Path>) -> Result<Zoo> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    prepare_zoo(&text)
}
