//! Dataset files and report emission.
//!
//! Binary dataset layout (all integers little-endian):
//!
//! ```text
//! magic    b"GREC"
//! version  u32 = 1
//! rows     u64
//! dim      u32
//! values   rows * dim f32, row-major
//! labels   rows records of { len: u32, utf8: [u8; len] }
//! ```
//!
//! CSV datasets have an optional header; a column named `label` holds the
//! labels and every other column is a dimension, in file order.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::dataset::EmbeddingSet;
use crate::error::{Error, Result};
use crate::report::{GapReport, MetricReport, SplitComparison};
use crate::scaling::BenchReport;
use crate::synth::{CorrelationReport, CoverageReport, SweepReport};

pub const MAGIC: [u8; 4] = *b"GREC";
pub const VERSION: u32 = 1;
const HEADER_LEN: u64 = 4 + 4 + 8 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Csv,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum LabelSource {
    /// CSV `label` column or the binary label records.
    #[default]
    Inline,
    /// Newline-delimited labels, one per row.
    Sidecar(PathBuf),
    None,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetFileRef {
    pub path: PathBuf,
    /// Detected from the file when `None`.
    pub format: Option<DatasetFormat>,
    pub label_source: LabelSource,
}

impl DatasetFileRef {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            format: None,
            label_source: LabelSource::Inline,
        }
    }

    pub fn with_sidecar(mut self, labels: impl Into<PathBuf>) -> Self {
        self.label_source = LabelSource::Sidecar(labels.into());
        self
    }

    pub fn with_format(mut self, format: DatasetFormat) -> Self {
        self.format = Some(format);
        self
    }

    fn has_csv_extension(&self) -> bool {
        self.path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("csv") || e.eq_ignore_ascii_case("txt"))
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(file: &DatasetFileRef) -> Result<EmbeddingSet> {
    let bytes = read_file(&file.path)?;
    let format = match file.format {
        Some(f) => f,
        None if bytes.starts_with(&MAGIC) => DatasetFormat::Binary,
        None if file.has_csv_extension() => DatasetFormat::Csv,
        None => return Err(Error::BadMagic),
    };
    let sidecar = match &file.label_source {
        LabelSource::Sidecar(path) => Some(parse_sidecar(&read_file(path)?, path)?),
        _ => None,
    };
    match format {
        DatasetFormat::Binary => {
            if sidecar.is_some() {
                return Err(Error::Format("binary datasets carry their labels inline".into()));
            }
            decode_binary(&bytes)
        }
        DatasetFormat::Csv => parse_csv(&bytes, sidecar),
    }
}

pub fn save_dataset(set: &EmbeddingSet, file: &DatasetFileRef) -> Result<()> {
    let format = file.format.unwrap_or(if file.has_csv_extension() {
        DatasetFormat::Csv
    } else {
        DatasetFormat::Binary
    });
    let write = |path: &Path, bytes: &[u8]| fs::write(path, bytes).map_err(|e| Error::io(path, e));
    match (format, &file.label_source) {
        (DatasetFormat::Binary, LabelSource::Inline) => write(&file.path, &encode_binary(set)?),
        (DatasetFormat::Binary, _) => Err(Error::Format("binary datasets carry their labels inline".into())),
        (DatasetFormat::Csv, LabelSource::Inline) => write(&file.path, &write_csv(set, true)?),
        (DatasetFormat::Csv, LabelSource::Sidecar(labels)) => {
            let mut out = String::new();
            for label in set.labels() {
                if label.contains(['\n', '\r']) {
                    return Err(Error::Format(format!(
                        "label {label:?} cannot be stored in a sidecar file"
                    )));
                }
                out.push_str(label);
                out.push('\n');
            }
            write(labels, out.as_bytes())?;
            write(&file.path, &write_csv(set, false)?)
        }
        (DatasetFormat::Csv, LabelSource::None) => write(&file.path, &write_csv(set, false)?),
    }
}

pub fn encode_binary(set: &EmbeddingSet) -> Result<Vec<u8>> {
    let label_bytes: usize = set.labels().map(|l| 4 + l.len()).sum();
    let mut out = Vec::with_capacity(HEADER_LEN as usize + set.values().len() * 4 + label_bytes);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(set.len() as u64).to_le_bytes());
    let dim = u32::try_from(set.dim()).map_err(|_| Error::Format("dimension exceeds u32".into()))?;
    out.extend_from_slice(&dim.to_le_bytes());
    for (i, &v) in set.values().iter().enumerate() {
        let narrow = v as f32;
        if !narrow.is_finite() {
            return Err(Error::Format(format!(
                "value at row {}, column {} overflows f32",
                i / set.dim(),
                i % set.dim()
            )));
        }
        out.extend_from_slice(&narrow.to_le_bytes());
    }
    for label in set.labels() {
        let len = u32::try_from(label.len()).map_err(|_| Error::Format("label longer than u32::MAX bytes".into()))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(label.as_bytes());
    }
    Ok(out)
}

pub fn decode_binary(bytes: &[u8]) -> Result<EmbeddingSet> {
    let actual = bytes.len() as u64;
    if !bytes.starts_with(&MAGIC) {
        return Err(Error::BadMagic);
    }
    if actual < HEADER_LEN {
        return Err(Error::Truncated {
            section: "header",
            expected: HEADER_LEN,
            actual,
        });
    }
    let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let dim = u32_at(16) as u64;
    if dim == 0 {
        return Err(Error::ZeroDimension);
    }
    let value_end = rows
        .checked_mul(dim)
        .and_then(|c| c.checked_mul(4))
        .and_then(|b| b.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Format(format!("{rows} x {dim} values do not fit in memory")))?;
    if actual < value_end {
        return Err(Error::Truncated {
            section: "values",
            expected: value_end,
            actual,
        });
    }
    let values = bytes[HEADER_LEN as usize..value_end as usize]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();

    let mut at = value_end as usize;
    let mut labels = Vec::with_capacity(rows as usize);
    for row in 0..rows as usize {
        if bytes.len() < at + 4 {
            return Err(Error::Truncated {
                section: "labels",
                expected: at as u64 + 4,
                actual,
            });
        }
        let len = u32_at(at) as usize;
        at += 4;
        if bytes.len() < at + len {
            return Err(Error::Truncated {
                section: "labels",
                expected: (at + len) as u64,
                actual,
            });
        }
        let text = std::str::from_utf8(&bytes[at..at + len]).map_err(|_| Error::InvalidLabelEncoding { row })?;
        labels.push(text.to_owned());
        at += len;
    }
    if at != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after the label records",
            bytes.len() - at
        )));
    }
    EmbeddingSet::from_flat(values, dim as usize, labels)
}

fn parse_sidecar(bytes: &[u8], path: &Path) -> Result<Vec<String>> {
    let text = std::str::from_utf8(bytes).map_err(|_| Error::Format(format!("{} is not UTF-8", path.display())))?;
    let text = text.strip_suffix('\n').unwrap_or(text);
    if text.is_empty() {
        return Ok(Vec::new());
    }
    Ok(text
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l).to_owned())
        .collect())
}

/// Parses CSV bytes. `sidecar` supplies labels when there is no `label`
/// column.
pub fn parse_csv(bytes: &[u8], sidecar: Option<Vec<String>>) -> Result<EmbeddingSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);
    let mut records = reader.records();
    let Some(first) = records.next().transpose()? else {
        return Err(Error::Empty);
    };
    let is_header = first.iter().any(|cell| cell.trim().parse::<f64>().is_err());
    let mut label_col = None;
    let mut pending = None;
    if is_header {
        for (col, name) in first.iter().enumerate() {
            if name.trim() == "label" {
                if label_col.is_some() {
                    return Err(Error::DuplicateLabelColumn);
                }
                label_col = Some(col);
            }
        }
    } else {
        pending = Some(first);
    }
    let labels_inline = label_col.is_some();
    if labels_inline && sidecar.is_some() {
        return Err(Error::Format("labels given both as a column and a sidecar file".into()));
    }
    let Some(mut labels) = sidecar.or(labels_inline.then(Vec::new)) else {
        return Err(Error::MissingLabels);
    };

    let mut values = Vec::new();
    let mut dim = None;
    for (row, record) in pending.into_iter().map(Ok).chain(records).enumerate() {
        let record = record?;
        let mut found = 0;
        for (col, cell) in record.iter().enumerate() {
            if Some(col) == label_col {
                labels.push(cell.to_owned());
                continue;
            }
            let v = cell.trim().parse::<f64>().map_err(|_| Error::NonNumericCell {
                row,
                col,
                value: cell.to_owned(),
            })?;
            values.push(v);
            found += 1;
        }
        if labels_inline && label_col.is_some_and(|c| c >= record.len()) {
            return Err(Error::Format(format!("row {row} has no label cell")));
        }
        match dim {
            None => dim = Some(found),
            Some(expected) if expected != found => {
                return Err(Error::DimensionMismatch { row, expected, found });
            }
            _ => {}
        }
    }
    let dim = dim.ok_or(Error::Empty)?;
    EmbeddingSet::from_flat(values, dim, labels)
}

/// Serializes a set as CSV, with a leading `label` column when `inline_labels`.
pub fn write_csv(set: &EmbeddingSet, inline_labels: bool) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = Vec::with_capacity(set.dim() + 1);
    if inline_labels {
        header.push("label".into());
    }
    header.extend((0..set.dim()).map(|i| format!("f{i}")));
    writer.write_record(&header)?;
    for (i, label) in set.labels().enumerate() {
        let mut record: Vec<String> = Vec::with_capacity(set.dim() + 1);
        if inline_labels {
            record.push(label.to_owned());
        }
        record.extend(set.row(i).iter().map(|v| format!("{v:?}")));
        writer.write_record(&record)?;
    }
    writer.into_inner().map_err(|e| Error::Format(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

/// JSON number formatting with 17 significant digits.
struct ExactFloats;

impl serde_json::ser::Formatter for ExactFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Single-line JSON with declaration-order keys and exact float text.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, ExactFloats);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

/// A result that can be emitted as JSON or as a CSV table.
pub trait Report: Serialize {
    fn csv_header(&self) -> Vec<&'static str>;
    fn csv_rows(&self) -> Vec<Vec<String>>;
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn opt_usize(v: Option<usize>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl Report for MetricReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec![
            "metric",
            "k",
            "group_size",
            "seed",
            "group",
            "group_value",
            "value",
            "ci_alpha",
            "ci_half_width",
        ]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.group_values
            .iter()
            .enumerate()
            .map(|(g, v)| {
                vec![
                    self.metric_name.clone(),
                    self.k.to_string(),
                    opt_usize(self.group_size),
                    self.seed.to_string(),
                    g.to_string(),
                    num(*v),
                    num(self.value),
                    num(self.ci.alpha),
                    opt(self.ci.half_width),
                ]
            })
            .collect()
    }
}

impl Report for GapReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec![
            "metric",
            "k",
            "group_size",
            "train_value",
            "test_value",
            "gap",
            "train_half_width",
            "test_half_width",
        ]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        vec![vec![
            self.metric.clone(),
            self.k.to_string(),
            opt_usize(self.group_size),
            num(self.train_value),
            num(self.test_value),
            num(self.gap),
            opt(self.train_half_width),
            opt(self.test_half_width),
        ]]
    }
}

impl Report for SplitComparison {
    fn csv_header(&self) -> Vec<&'static str> {
        vec![
            "metric",
            "k",
            "group_size",
            "alpha",
            "value_a",
            "value_b",
            "difference",
            "bound",
            "consistent",
        ]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        vec![vec![
            self.metric.clone(),
            self.k.to_string(),
            opt_usize(self.group_size),
            num(self.alpha),
            num(self.value_a),
            num(self.value_b),
            num(self.difference),
            num(self.bound),
            self.consistent.to_string(),
        ]]
    }
}

impl Report for SweepReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["classes", "trial", "plain_recall", "grouped_recall"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.points
            .iter()
            .flat_map(|p| {
                p.plain_values
                    .iter()
                    .zip(&p.grouped_values)
                    .enumerate()
                    .map(|(t, (plain, grouped))| vec![p.classes.to_string(), t.to_string(), num(*plain), num(*grouped)])
            })
            .collect()
    }
}

impl Report for CoverageReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["trial", "difference", "bound", "covered"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.differences
            .iter()
            .zip(&self.bounds)
            .enumerate()
            .map(|(t, (d, b))| vec![t.to_string(), num(*d), num(*b), (d <= b).to_string()])
            .collect()
    }
}

impl Report for CorrelationReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["cluster_std", "plain_recall", "grouped_recall"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        (0..self.plain.len())
            .map(|i| vec![num(self.cluster_std[i]), num(self.plain[i]), num(self.grouped[i])])
            .collect()
    }
}

impl Report for BenchReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["rows", "full_ms", "grouped_ms", "full_value", "grouped_value"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.points
            .iter()
            .map(|p| {
                vec![
                    p.rows.to_string(),
                    num(p.full_ms),
                    num(p.grouped_ms),
                    num(p.full_value),
                    num(p.grouped_value),
                ]
            })
            .collect()
    }
}

impl<R: Report> Report for Vec<R> {
    fn csv_header(&self) -> Vec<&'static str> {
        self.first().map(Report::csv_header).unwrap_or_default()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.iter().flat_map(Report::csv_rows).collect()
    }
}

/// Renders a report as text, newline-terminated.
pub fn render_report<R: Report + ?Sized>(report: &R, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => Ok(to_json(report)? + "\n"),
        ReportFormat::Csv => {
            let mut writer = csv::Writer::from_writer(Vec::new());
            writer.write_record(report.csv_header())?;
            for row in report.csv_rows() {
                writer.write_record(&row)?;
            }
            let bytes = writer.into_inner().map_err(|e| Error::Format(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv of UTF-8 fields"))
        }
    }
}

/// Writes a report to `destination`, or to stdout when `None`.
pub fn emit_report<R: Report + ?Sized>(report: &R, format: ReportFormat, destination: Option<&Path>) -> Result<()> {
    let text = render_report(report, format)?;
    match destination {
        Some(path) => fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

/// Reads a JSON [`MetricReport`].
pub fn load_metric_report(path: &Path) -> Result<MetricReport> {
    Ok(serde_json::from_slice(&read_file(path)?)?)
}
