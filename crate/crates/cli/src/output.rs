//! Rendering of command results.
//!
//! Numbers are printed with 6 significant digits: fixed notation for
//! magnitudes in `[1e-4, 1e6)` and `d.ddddde±x` otherwise. Rust's formatter
//! never consults the locale, so the decimal separator is always `.`.

use std::io::Write;

use clap::ValueEnum;
use serde_json::{Map, Number, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

const DIGITS: usize = 6;

/// `x` with 6 significant digits (trailing zeros kept).
pub fn sig(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return format!("{:.*}", DIGITS - 1, 0.0);
    }
    // the exponent after rounding, so 9.999996 becomes 10.0000 and not 9.99999|6
    let sci = format!("{:.*e}", DIGITS - 1, x);
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if (-4..6).contains(&exp) {
        let decimals = (DIGITS as i32 - 1 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        let (mantissa, _) = sci.split_at(sci.find('e').unwrap());
        format!("{mantissa}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

/// `x` rounded to 6 significant digits, as a JSON value (null if not finite).
pub fn sig_value(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let rounded: f64 = format!("{:.*e}", DIGITS - 1, x).parse().unwrap();
    Number::from_f64(rounded).map_or(Value::Null, Value::Number)
}

/// Rounds every non-integer number in a JSON document.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => sig_value(n.as_f64().unwrap()),
        Value::Array(items) => Value::Array(items.into_iter().map(round_json).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Bool(bool),
    Text(String),
    Null,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => sig(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
            Cell::Null => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) => sig_value(*x),
            Cell::Int(i) => Value::from(*i),
            Cell::Bool(b) => Value::Bool(*b),
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Null => Value::Null,
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
        x.map_or(Cell::Null, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as u64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.into())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

/// Rows sharing a header. A single-row table renders as one JSON object.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    /// One-row table from `(name, value)` pairs.
    pub fn record(fields: Vec<(&str, Cell)>) -> Self {
        let (names, cells): (Vec<&str>, Vec<Cell>) = fields.into_iter().unzip();
        let mut t = Self::new(&names);
        t.rows.push(cells);
        t
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn json(&self) -> Value {
        let obj = |row: &Vec<Cell>| {
            Value::Object(self.columns.iter().cloned().zip(row.iter().map(Cell::json)).collect::<Map<_, _>>())
        };
        if self.rows.len() == 1 {
            obj(&self.rows[0])
        } else {
            Value::Array(self.rows.iter().map(obj).collect())
        }
    }
}

/// What a command produces.
pub enum Output {
    Table(Table),
    /// A structured document; CSV rendering falls back to the table.
    Document { json: Value, table: Table },
    /// Content already in its final form for each format.
    Raw { csv: Vec<u8>, json: Vec<u8> },
}

impl Output {
    pub fn write<W: Write>(&self, format: Format, mut out: W) -> std::io::Result<()> {
        match (self, format) {
            (Output::Table(t), Format::Csv) | (Output::Document { table: t, .. }, Format::Csv) => {
                writeln!(out, "{}", t.columns.join(","))?;
                for row in &t.rows {
                    writeln!(out, "{}", row.iter().map(Cell::csv).collect::<Vec<_>>().join(","))?;
                }
                Ok(())
            }
            (Output::Table(t), Format::Json) => write_json(&t.json(), out),
            (Output::Document { json, .. }, Format::Json) => write_json(&round_json(json.clone()), out),
            (Output::Raw { csv, .. }, Format::Csv) => out.write_all(csv),
            (Output::Raw { json, .. }, Format::Json) => out.write_all(json),
        }
    }
}

fn write_json<W: Write>(v: &Value, mut out: W) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)
}
