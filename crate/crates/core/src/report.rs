//! TSV and JSON serialisation of significance reports.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::significance::SignificanceReport;

pub const TSV_HEADER: &str = "pattern\tstatistic\tvalue\traw_p\tadjusted_p\tsignificant";

/// One line per pattern, in report order. Floats use the shortest
/// representation that round-trips.
pub fn write_tsv<W: Write>(report: &SignificanceReport, mut out: W) -> Result<()> {
    writeln!(out, "{TSV_HEADER}")?;
    for p in &report.patterns {
        writeln!(out, "{}\t{}\t{}\t{}\t{}\t{}", p.pattern, p.statistic, p.value, p.raw_p, p.adjusted_p, p.significant)?;
    }
    Ok(())
}

pub fn tsv_string(report: &SignificanceReport) -> String {
    let mut buf = Vec::new();
    write_tsv(report, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("utf-8")
}

pub fn write_json<W: Write>(report: &SignificanceReport, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, report).map_err(|e| Error::Corrupt(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

pub fn json_string(report: &SignificanceReport) -> String {
    let mut buf = Vec::new();
    write_json(report, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("utf-8")
}

pub fn read_json<R: Read>(source: R) -> Result<SignificanceReport> {
    serde_json::from_reader(source).map_err(|e| {
        if e.is_eof() {
            Error::Corrupt(format!("truncated report: {e}"))
        } else {
            Error::parse(e.line(), e.to_string())
        }
    })
}
