use crate::evaluation::PredictionLog;

use super::csvio::{expect_frame, expect_header, fmt_f64, parse_frame, read_table, write_table};
use super::FormatError;

fn header(classes: usize) -> Vec<String> {
    std::iter::once("frame".to_string()).chain((0..classes).map(|c| format!("c{c}"))).collect()
}

/// Number of confidence columns declared by a prediction file's header.
pub fn detect_class_count(bytes: &[u8]) -> Result<usize, FormatError> {
    let text = std::str::from_utf8(bytes).map_err(|_| FormatError::Utf8)?;
    let first = text.lines().next().unwrap_or("");
    let fields: Vec<&str> = first.trim_end_matches('\r').split(',').collect();
    let classes = fields.len().saturating_sub(1);
    let expected = header(classes);
    if classes == 0 || fields.iter().ne(expected.iter()) {
        return Err(FormatError::schema(1, format!("header {first:?} is not frame,c0,...,cN")));
    }
    Ok(classes)
}

/// Parses a `frame,c0,...,c{C-1}` log. Frames are dense and ascending from
/// the first row's frame, which becomes the log's offset.
pub fn parse_prediction_csv(bytes: &[u8], classes: usize) -> Result<PredictionLog, FormatError> {
    let table = read_table(bytes)?;
    let expected = header(classes);
    expect_header(&table.header, &expected.iter().map(String::as_str).collect::<Vec<_>>())?;
    let mut rows = Vec::with_capacity(table.rows.len());
    let mut offset = 0;
    for (k, (line, rec)) in table.rows.iter().enumerate() {
        let frame = parse_frame(*line, &rec[0])?;
        if k == 0 {
            offset = frame;
        }
        expect_frame(*line, offset + k, frame)?;
        let row = rec
            .iter()
            .skip(1)
            .enumerate()
            .map(|(c, cell)| {
                let v: f64 = cell.trim().parse().map_err(|_| FormatError::NumericError {
                    line: *line,
                    column: expected[c + 1].clone(),
                    detail: format!("{cell:?} is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(FormatError::NumericError {
                        line: *line,
                        column: expected[c + 1].clone(),
                        detail: format!("{cell:?} is not finite"),
                    });
                }
                Ok(v)
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    Ok(PredictionLog::new("", classes, offset, rows)?)
}

pub fn write_prediction_csv(log: &PredictionLog) -> String {
    let head = header(log.num_classes());
    let head: Vec<&str> = head.iter().map(String::as_str).collect();
    write_table(
        &head,
        log.rows().iter().enumerate().map(|(k, row)| {
            std::iter::once((log.frame_offset() + k).to_string())
                .chain(row.iter().map(|&v| fmt_f64(v)))
                .collect::<Vec<_>>()
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::EvalError;

    #[test]
    fn uniform_rows_are_normalized() {
        let mut text = String::from("frame,c0,c1,c2,c3,c4,c5,c6");
        let p = 1.0 / 7.0;
        for f in 0..5 {
            text.push_str(&format!("\n{f}"));
            for _ in 0..7 {
                text.push_str(&format!(",{p}"));
            }
        }
        let log = parse_prediction_csv(text.as_bytes(), 7).unwrap();
        assert!(log.is_normalized());
        assert_eq!(detect_class_count(text.as_bytes()).unwrap(), 7);
    }

    #[test]
    fn zero_row_is_not_normalized() {
        let log = parse_prediction_csv(b"frame,c0,c1\n0,0.5,0.5\n1,0,0", 2).unwrap();
        assert!(!log.is_normalized());
    }

    #[test]
    fn offset_and_errors() {
        let log = parse_prediction_csv(b"frame,c0,c1\n10,0.5,0.5\n11,1,0", 2).unwrap();
        assert_eq!(log.frame_offset(), 10);
        assert!(matches!(
            parse_prediction_csv(b"frame,c0,c1\n0,0.5,0.5", 3),
            Err(FormatError::SchemaError { .. })
        ));
        assert!(matches!(
            parse_prediction_csv(b"frame,c0,c1\n0,0.5", 2),
            Err(FormatError::SchemaError { .. })
        ));
        assert!(matches!(
            parse_prediction_csv(b"frame,c0,c1\n0,NaN,0.5", 2),
            Err(FormatError::NumericError { ref column, .. }) if column == "c0"
        ));
        assert!(matches!(
            parse_prediction_csv(b"frame,c0,c1\n0,inf,0.5", 2),
            Err(FormatError::NumericError { .. })
        ));
        assert!(matches!(
            parse_prediction_csv(b"frame,c0,c1\n0,abc,0.5", 2),
            Err(FormatError::NumericError { .. })
        ));
        assert!(matches!(
            parse_prediction_csv(b"frame,c0,c1\n0,1,0\n2,1,0", 2),
            Err(FormatError::DenseIndexViolation { .. })
        ));
        assert!(matches!(
            parse_prediction_csv(b"frame,c0,c1", 2),
            Err(FormatError::Eval(EvalError::EmptyLog))
        ));
        assert!(detect_class_count(b"frame,x0\n0,1").is_err());
        assert!(detect_class_count(b"frame\n0").is_err());
    }

    #[test]
    fn round_trip_is_exact() {
        let log =
            PredictionLog::new("", 3, 2, vec![vec![0.1, 0.2, 0.7], vec![1e-300, 1.0 / 3.0, 123456.789]])
                .unwrap();
        let text = write_prediction_csv(&log);
        assert!(text.starts_with("frame,c0,c1,c2\n2,0.1,0.2,0.7\n3,"));
        assert_eq!(parse_prediction_csv(text.as_bytes(), 3).unwrap(), log);
    }
}
