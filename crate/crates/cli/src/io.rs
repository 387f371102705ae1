//! CSV ingestion and atomic, reproducible output.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use ubsr_core::{RegressionDataset, SampleVector};

/// Bad user input: flags, grammar strings or data files. Maps to exit code 2.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

pub fn input_error(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(InputError(msg.into()))
}

/// Floats are written with 17 significant digits so they round-trip exactly.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Parsed rows tagged with their line number in the file.
type Rows = Vec<(u64, Vec<f64>)>;

fn read_rows(path: &Path) -> Result<(Vec<String>, Rows)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| input_error(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| input_error(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(input_error(format!("{}: missing header row", path.display())));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| input_error(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(input_error(format!(
                "{}: row {line} has {} fields, expected {}",
                path.display(),
                record.len(),
                headers.len()
            )));
        }
        let mut values = Vec::with_capacity(record.len());
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                input_error(format!(
                    "{}: row {line}, column {} ({}): {field:?} is not a number",
                    path.display(),
                    col + 1,
                    headers[col]
                ))
            })?;
            if !v.is_finite() {
                return Err(input_error(format!(
                    "{}: row {line}, column {} ({}): non-finite value {field}",
                    path.display(),
                    col + 1,
                    headers[col]
                )));
            }
            values.push(v);
        }
        rows.push((line, values));
    }
    if rows.is_empty() {
        return Err(input_error(format!("{}: no data rows", path.display())));
    }
    Ok((headers, rows))
}

/// Regression data with header `x1,...,xd,y`. Row numbers in errors count
/// the header as row 1.
pub fn load_dataset(path: &Path) -> Result<RegressionDataset> {
    let (headers, rows) = read_rows(path)?;
    let d = headers.len().saturating_sub(1);
    let expected: Vec<String> = (1..=d).map(|j| format!("x{j}")).chain(std::iter::once("y".into())).collect();
    if d == 0 || headers != expected {
        return Err(input_error(format!(
            "{}: header must be {}, got {}",
            path.display(),
            if d == 0 { "x1,...,xd,y".to_string() } else { expected.join(",") },
            headers.join(",")
        )));
    }
    let features: Vec<Vec<f64>> = rows.iter().map(|(_, r)| r[..d].to_vec()).collect();
    let targets: Vec<f64> = rows.iter().map(|(_, r)| r[d]).collect();
    RegressionDataset::from_rows(&features, &targets).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

/// Samples from a single-column CSV with header `z`.
pub fn load_samples(path: &Path) -> Result<SampleVector> {
    let (headers, rows) = read_rows(path)?;
    if headers != ["z"] {
        return Err(input_error(format!("{}: header must be z, got {}", path.display(), headers.join(","))));
    }
    SampleVector::new(rows.into_iter().map(|(_, r)| r[0]).collect(), None)
        .map_err(|e| input_error(format!("{}: {e}", path.display())))
}

struct SeventeenDigits<'a> {
    pretty: PrettyFormatter<'a>,
}

impl Formatter for SeventeenDigits<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format_f64(value).as_bytes())
    }

    fn begin_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.begin_array(writer)
    }

    fn end_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.begin_object(writer)
    }

    fn end_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_object_value(writer)
    }
}

/// Pretty JSON with every float at 17 significant digits, newline-terminated.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(
        &mut out,
        SeventeenDigits {
            pretty: PrettyFormatter::new(),
        },
    );
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(out)
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// A CSV table whose cells are already formatted.
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))
    }
}
