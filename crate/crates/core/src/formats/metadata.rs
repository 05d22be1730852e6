use std::collections::{BTreeMap, BTreeSet};

use crate::splits::{CaseMetadata, RecordingSystem};

use super::csvio::{fmt_f64, read_table, write_table};
use super::FormatError;

/// Fixed leading columns; any further columns are numeric extras.
pub const METADATA_HEADER: [&str; 6] =
    ["case_id", "age", "operation_minutes", "bleeding_ml", "bmi", "recording_system"];

fn parse_value(line: u64, column: &str, cell: &str) -> Result<Option<f64>, FormatError> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    let numeric = |detail: String| FormatError::NumericError { line, column: column.to_string(), detail };
    let v: f64 = cell.parse().map_err(|_| numeric(format!("{cell:?} is not a number")))?;
    if !v.is_finite() || v < 0.0 {
        return Err(numeric(format!("{cell:?} must be finite and non-negative")));
    }
    Ok(Some(v))
}

/// Parses case metadata. Empty cells are missing values.
pub fn parse_metadata_csv(bytes: &[u8]) -> Result<Vec<CaseMetadata>, FormatError> {
    let table = read_table(bytes)?;
    let header: Vec<&str> = table.header.iter().collect();
    if header.len() < METADATA_HEADER.len() || header[..METADATA_HEADER.len()] != METADATA_HEADER {
        return Err(FormatError::schema(1, format!("header must start with {}", METADATA_HEADER.join(","))));
    }
    let extras = &header[METADATA_HEADER.len()..];
    let mut seen = BTreeSet::new();
    for name in extras {
        if name.is_empty() || METADATA_HEADER.contains(name) || !seen.insert(*name) {
            return Err(FormatError::schema(1, format!("bad or repeated extra column {name:?}")));
        }
    }
    let mut ids = BTreeSet::new();
    let mut cases = Vec::with_capacity(table.rows.len());
    for (line, row) in &table.rows {
        let line = *line;
        let case_id = row[0].to_string();
        if case_id.is_empty() || !ids.insert(case_id.clone()) {
            return Err(FormatError::schema(line, format!("case id {case_id:?} is empty or repeated")));
        }
        let mut extra = BTreeMap::new();
        for (i, name) in extras.iter().enumerate() {
            if let Some(v) = parse_value(line, name, &row[METADATA_HEADER.len() + i])? {
                extra.insert(name.to_string(), v);
            }
        }
        cases.push(CaseMetadata {
            case_id,
            age: parse_value(line, "age", &row[1])?,
            operation_minutes: parse_value(line, "operation_minutes", &row[2])?,
            bleeding_ml: parse_value(line, "bleeding_ml", &row[3])?,
            bmi: parse_value(line, "bmi", &row[4])?,
            recording_system: row[5].parse::<RecordingSystem>().map_err(|e| FormatError::schema(line, e))?,
            extra,
        });
    }
    Ok(cases)
}

pub fn write_metadata_csv(cases: &[CaseMetadata]) -> String {
    let extras: BTreeSet<&str> = cases.iter().flat_map(|c| c.extra.keys().map(String::as_str)).collect();
    let header: Vec<&str> = METADATA_HEADER.iter().copied().chain(extras.iter().copied()).collect();
    let cell = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    write_table(
        &header,
        cases.iter().map(|c| {
            let mut row = vec![
                c.case_id.clone(),
                cell(c.age),
                cell(c.operation_minutes),
                cell(c.bleeding_ml),
                cell(c.bmi),
                c.recording_system.to_string(),
            ];
            row.extend(extras.iter().map(|k| cell(c.extra.get(*k).copied())));
            row
        }),
    )
}
