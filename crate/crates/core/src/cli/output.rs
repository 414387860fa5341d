use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::Cli;
use crate::error::Result;
use crate::io::{fmt_f64, to_json, to_json_pretty, VERSION};

/// Versioned run configuration carried by every output file.
#[derive(Debug, Clone, Serialize)]
pub struct Header {
    pub program: &'static str,
    pub version: &'static str,
    pub config: serde_json::Value,
}

impl Header {
    pub fn new(cli: &Cli) -> Result<Self> {
        Ok(Header { program: "greenlearn", version: VERSION, config: serde_json::to_value(&cli.command)? })
    }
}

/// `# greenlearn <version> config=<json>`.
pub fn csv_header_line(h: &Header) -> Result<String> {
    Ok(format!("# {} {} config={}", h.program, h.version, to_json(&h.config)?))
}

pub(super) fn fmt(x: f64) -> String {
    fmt_f64(x)
}

pub(super) fn open(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

pub(super) fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut w = open(path)?;
    w.write_all(to_json_pretty(value)?.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub(super) fn write_rows<I>(w: &mut Box<dyn Write>, header: &Header, columns: &[&str], rows: I) -> Result<()>
where
    I: Iterator<Item = Vec<String>>,
{
    writeln!(w, "{}", csv_header_line(header)?)?;
    {
        let mut cw = csv::Writer::from_writer(&mut *w);
        cw.write_record(columns)?;
        for r in rows {
            cw.write_record(&r)?;
        }
        cw.flush()?;
    }
    w.flush()?;
    Ok(())
}
