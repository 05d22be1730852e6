use crate::evaluation::ApCell;

use super::csvio::{expect_header, fmt_f64, read_table, write_table};
use super::FormatError;

pub const RESULTS_HEADER: [&str; 4] = ["model", "split", "annotation", "ap"];

/// Parses `model,split,annotation,ap` rows. `Con` marks consensus supervision.
pub fn parse_results_csv(bytes: &[u8]) -> Result<Vec<ApCell>, FormatError> {
    let table = read_table(bytes)?;
    expect_header(&table.header, &RESULTS_HEADER)?;
    table
        .rows
        .iter()
        .map(|(line, row)| {
            let ap: f64 = row[3].trim().parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                FormatError::NumericError {
                    line: *line,
                    column: "ap".into(),
                    detail: format!("{:?} is not a finite number", &row[3]),
                }
            })?;
            Ok(ApCell::new(&row[0], &row[1], row[2].parse().expect("infallible"), ap))
        })
        .collect()
}

pub fn write_results_csv(cells: &[ApCell]) -> String {
    write_table(
        &RESULTS_HEADER,
        cells.iter().map(|c| [c.model.clone(), c.split.clone(), c.annotation.to_string(), fmt_f64(c.ap)]),
    )
}
