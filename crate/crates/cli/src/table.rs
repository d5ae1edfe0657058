//! CSV tables and number formatting.

use std::io::Write;

use crate::CliError;

/// Formats `x` with 12 significant digits, plain notation when the exponent
/// is moderate, trailing zeros removed.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "NA".into();
    }
    if x == 0.0 {
        return "0".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    // exponent after rounding to 12 digits, so 9.99999999999951 → 10
    let sci = format!("{:.11e}", x);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
    /// Value unavailable because a solve did not converge.
    Na,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => fmt_num(*x),
            Cell::Text(s) => s.clone(),
            Cell::Na => "NA".into(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Na, Cell::Num)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn has_na(&self) -> bool {
        self.rows.iter().flatten().any(|c| *c == Cell::Na)
    }

    pub fn write(&self, out: &mut dyn Write) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

/// Parses `a:b:step`, inclusive of `b` within 1e-12. The step is taken as a
/// magnitude and applied in the direction from `a` to `b`.
pub fn parse_range(s: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 1 {
        return parse_list(s);
    }
    let bad = || CliError::Usage(format!("expected a:b:step or a comma-separated list, got '{s}'"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let v: Vec<f64> = parts.iter().map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    let (a, b, step) = (v[0], v[1], v[2].abs());
    if !(step > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(bad());
    }
    let dir = if b >= a { 1.0 } else { -1.0 };
    let n = ((b - a).abs() / step + 1e-9).floor() as usize;
    let mut out: Vec<f64> = (0..=n).map(|k| a + dir * k as f64 * step).collect();
    // snap the last point onto b when it is within rounding
    if let Some(last) = out.last_mut() {
        if (*last - b).abs() <= 1e-12 * (1.0 + b.abs()) + 1e-9 * step {
            *last = b;
        }
    }
    // avoid 1.1000000000000003-style points
    for x in &mut out {
        let r = (*x * 1e12).round() / 1e12;
        if (r - *x).abs() <= 1e-12 {
            *x = r;
        }
    }
    Ok(out)
}

/// Parses `x,y,z`.
pub fn parse_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("'{p}' is not a number"))))
        .collect()
}
