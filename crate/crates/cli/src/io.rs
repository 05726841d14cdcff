//! CSV input tables and output formatting.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use csv::{ReaderBuilder, StringRecord, Trim};
use hestonpw::charfn::{HestonSegment, PiecewiseHestonParams};

use crate::CliError;

/// Ten significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.9e}")
}

/// A CSV file with a header line, read fully into memory.
pub struct Table {
    path: String,
    columns: Vec<String>,
    records: Vec<StringRecord>,
}

/// One data row, with enough context to name itself in error messages.
pub struct Row<'a> {
    table: &'a Table,
    index: usize,
    record: &'a StringRecord,
}

impl Table {
    pub fn read(path: &Path, required: &[&str]) -> Result<Self, CliError> {
        let name = path.display().to_string();
        let file = File::open(path).map_err(|e| CliError::Input(format!("{name}: {e}")))?;
        let mut reader = ReaderBuilder::new().trim(Trim::All).comment(Some(b'#')).from_reader(file);
        let columns: Vec<String> = reader
            .headers()
            .map_err(|e| CliError::Input(format!("{name}: {e}")))?
            .iter()
            .map(|h| h.to_ascii_lowercase())
            .collect();
        for col in required {
            if !columns.iter().any(|c| c == col) {
                return Err(CliError::Input(format!("{name}: missing column '{col}'")));
            }
        }
        let mut records = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| CliError::Input(format!("{name}: row {}: {e}", i + 1)))?;
            records.push(rec);
        }
        Ok(Self {
            path: name,
            columns,
            records,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = Row<'_>> {
        self.records.iter().enumerate().map(move |(index, record)| Row {
            table: self,
            index,
            record,
        })
    }
}

impl Row<'_> {
    /// Error message naming file, row, line and column.
    pub fn error(&self, column: &str, msg: impl std::fmt::Display) -> CliError {
        let line = self.record.position().map(|p| p.line()).unwrap_or(0);
        CliError::Input(format!(
            "{}: row {} (line {line}), column '{column}': {msg}",
            self.table.path,
            self.index + 1
        ))
    }

    /// Trimmed text of `column`, empty if the column is absent.
    pub fn text(&self, column: &str) -> &str {
        self.table
            .columns
            .iter()
            .position(|c| c == column)
            .and_then(|i| self.record.get(i))
            .unwrap_or("")
    }

    pub fn opt_f64(&self, column: &str) -> Result<Option<f64>, CliError> {
        let s = self.text(column);
        if s.is_empty() {
            return Ok(None);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Some(v)),
            _ => Err(self.error(column, format!("invalid number '{s}'"))),
        }
    }

    pub fn f64(&self, column: &str) -> Result<f64, CliError> {
        self.opt_f64(column)?.ok_or_else(|| self.error(column, "value is missing"))
    }
}

/// Reads a `from,to,v0,theta,kappa,rho,xi` schedule. `v0` may be left blank after the first row.
pub fn read_schedule(path: &Path) -> Result<PiecewiseHestonParams, CliError> {
    let table = Table::read(path, &["from", "to", "v0", "theta", "kappa", "rho", "xi"])?;
    if table.is_empty() {
        return Err(CliError::Usage(format!("{}: schedule has no rows", path.display())));
    }
    let mut v0 = None;
    let mut segments = Vec::new();
    for row in table.rows() {
        match (v0, row.opt_f64("v0")?) {
            (None, None) => return Err(row.error("v0", "value is missing")),
            (None, Some(v)) => v0 = Some(v),
            (Some(a), Some(b)) if a != b => return Err(row.error("v0", format!("differs from the first row ({a})"))),
            _ => {}
        }
        let seg = HestonSegment::new(
            row.f64("from")?,
            row.f64("to")?,
            row.f64("kappa")?,
            row.f64("theta")?,
            row.f64("rho")?,
            row.f64("xi")?,
        )
        .map_err(|e| row.error("from", e))?;
        segments.push(seg);
    }
    PiecewiseHestonParams::new(v0.unwrap_or_default(), segments)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn schedule_rows(params: &PiecewiseHestonParams) -> Vec<Vec<String>> {
    params
        .segments
        .iter()
        .map(|s| {
            [s.t_start, s.t_end, params.v0, s.theta, s.kappa, s.rho, s.xi]
                .into_iter()
                .map(num)
                .collect()
        })
        .collect()
}

/// A CSV table ready to be written.
pub struct Output {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Output {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn write_to<W: Write>(&self, w: W) -> Result<(), CliError> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| CliError::Failed(format!("writing output: {e}"));
        out.write_record(&self.header).map_err(io)?;
        for row in &self.rows {
            out.write_record(row).map_err(io)?;
        }
        out.flush().map_err(|e| CliError::Failed(format!("writing output: {e}")))
    }

    /// Writes to `path`, or to stdout when no path is given.
    pub fn write(&self, path: Option<&Path>) -> Result<(), CliError> {
        match path {
            Some(p) => {
                let f = File::create(p).map_err(|e| CliError::Failed(format!("{}: {e}", p.display())))?;
                self.write_to(f)
            }
            None => self.write_to(std::io::stdout().lock()),
        }
    }
}

/// `dir/stem.suffix.csv` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}.csv"))
}
