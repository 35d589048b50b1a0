use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use crate::CliError;

/// Significant digits of every numeric CSV field.
pub const SIG_DIGITS: usize = 12;

/// Formats like C's `%.12g`.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIG_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= SIG_DIGITS as i32 {
        format!("{}e{}{:02}", trim(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn flag(b: bool) -> String {
    if b { "true" } else { "false" }.into()
}

/// A CSV table held in memory until it is written.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<(), CliError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header).map_err(io_err)?;
        for r in &self.rows {
            out.write_record(r).map_err(io_err)?;
        }
        out.flush().map_err(|e| CliError::Io(e.to_string()))
    }

    pub fn emit(&self, out: Option<&Path>) -> Result<(), CliError> {
        match out {
            Some(path) => {
                let f = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                self.write_to(f)
            }
            None => self.write_to(io::stdout().lock()),
        }
    }
}

fn io_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}
