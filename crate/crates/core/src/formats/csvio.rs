use csv::{ReaderBuilder, StringRecord, Terminator, WriterBuilder};

use super::FormatError;

/// Header and data records with their 1-based line numbers.
pub(crate) struct Table {
    pub header: StringRecord,
    pub rows: Vec<(u64, StringRecord)>,
}

pub(crate) fn read_table(bytes: &[u8]) -> Result<Table, FormatError> {
    std::str::from_utf8(bytes).map_err(|_| FormatError::Utf8)?;
    let mut reader = ReaderBuilder::new().has_headers(false).flexible(true).from_reader(bytes);
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| FormatError::schema(1, e.to_string()))?,
        None => return Err(FormatError::schema(1, "missing header")),
    };
    let mut rows = Vec::new();
    for r in records {
        let r = r.map_err(|e| FormatError::schema(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = r.position().map_or(0, |p| p.line());
        if r.len() != header.len() {
            return Err(FormatError::schema(
                line,
                format!("expected {} fields, found {}", header.len(), r.len()),
            ));
        }
        rows.push((line, r));
    }
    Ok(Table { header, rows })
}

pub(crate) fn expect_header(header: &StringRecord, expected: &[&str]) -> Result<(), FormatError> {
    if header.iter().ne(expected.iter().copied()) {
        return Err(FormatError::schema(
            1,
            format!(
                "header must be {:?}, found {:?}",
                expected.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    Ok(())
}

pub(crate) fn parse_frame(line: u64, cell: &str) -> Result<usize, FormatError> {
    cell.parse()
        .map_err(|_| FormatError::schema(line, format!("frame {cell:?} is not a non-negative integer")))
}

/// Checks that `found` continues a dense ascending sequence.
pub(crate) fn expect_frame(line: u64, expected: usize, found: usize) -> Result<(), FormatError> {
    if found != expected {
        return Err(FormatError::DenseIndexViolation { line, expected, found });
    }
    Ok(())
}

/// Writes records with LF endings and no trailing newline, quoting only
/// where needed.
pub(crate) fn write_table<I, R>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = WriterBuilder::new().terminator(Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    let mut out = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input");
    if out.ends_with('\n') {
        out.pop();
    }
    out
}

/// Shortest representation that parses back to the same value.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x}")
}
