//! Output-file conventions shared by every writer: a `#` format-version line,
//! then a CSV header row.

use std::io::Write;

use crate::error::Result;

pub const FORMAT_VERSION: u32 = 1;

/// Writes the format-version comment line and returns a CSV writer positioned
/// for the header row.
pub fn csv_writer<W: Write>(mut out: W, kind: &str) -> Result<csv::Writer<W>> {
    writeln!(out, "# regimeclean-format: {FORMAT_VERSION} {kind}")?;
    Ok(csv::WriterBuilder::new().from_writer(out))
}

/// Reader that skips `#` comment lines and trims cells.
pub fn csv_reader<R: std::io::Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input)
}

/// Fixed six-decimal rendering used for distances in output files.
pub fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

pub fn opt_cell<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
