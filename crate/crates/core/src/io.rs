//! Expression-matrix ingestion, array preprocessing and report persistence.

use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DataMatrix;
use crate::risk::{EprReport, RiskReport, SweepReport};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    pub source: String,
    /// Append-only log of transforms applied since loading.
    pub transforms: Vec<String>,
}

/// A samples-by-genes matrix with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub matrix: DataMatrix,
    pub row_labels: Vec<String>,
    pub column_labels: Vec<String>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(matrix: DataMatrix, source: impl Into<String>) -> Self {
        let row_labels = (1..=matrix.n()).map(|i| format!("s{i}")).collect();
        let column_labels = (1..=matrix.p()).map(|j| format!("g{j}")).collect();
        Self {
            matrix,
            row_labels,
            column_labels,
            provenance: Provenance {
                source: source.into(),
                transforms: Vec::new(),
            },
        }
    }

    fn derived(&self, matrix: DataMatrix, row_labels: Vec<String>, column_labels: Vec<String>, step: String) -> Self {
        let mut provenance = self.provenance.clone();
        provenance.transforms.push(step);
        Self {
            matrix,
            row_labels,
            column_labels,
            provenance,
        }
    }

    pub fn select_rows(&self, rows: &[usize], step: impl Into<String>) -> Dataset {
        self.derived(
            self.matrix.select_rows(rows),
            rows.iter().map(|&i| self.row_labels[i].clone()).collect(),
            self.column_labels.clone(),
            step.into(),
        )
    }

    /// Keeps the first `count` genes in file order.
    pub fn leading_columns(&self, count: usize) -> Result<Dataset> {
        Ok(self.derived(
            self.matrix.leading_columns(count)?,
            self.row_labels.clone(),
            self.column_labels[..count].to_vec(),
            format!("first {count} columns"),
        ))
    }

    pub fn transpose(&self) -> Dataset {
        self.derived(
            self.matrix.transpose(),
            self.column_labels.clone(),
            self.row_labels.clone(),
            "transpose".into(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    #[default]
    SamplesByGenes,
    GenesBySamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadOptions {
    pub delimiter: u8,
    pub header: bool,
    pub label_column: bool,
    pub orientation: Orientation,
}

impl Default for ReadOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            header: true,
            label_column: false,
            orientation: Orientation::SamplesByGenes,
        }
    }
}

/// Reads a numeric matrix; `#` lines are comments. Always returns the
/// samples-by-genes orientation.
pub fn read_matrix_csv(path: impl AsRef<Path>, opts: &ReadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path)?;
    parse_matrix_csv(file, &path.display().to_string(), opts)
}

pub fn parse_matrix_csv<R: Read>(reader: R, source: &str, opts: &ReadOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(opts.header)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let skip = usize::from(opts.label_column);
    let mut column_labels: Option<Vec<String>> = None;
    if opts.header {
        let header = rdr.headers().map_err(|e| Error::Format(e.to_string()))?;
        if !header.is_empty() {
            column_labels = Some(header.iter().skip(skip).map(str::to_owned).collect());
        }
    }

    let mut width: Option<usize> = column_labels.as_ref().map(Vec::len);
    let mut values = Vec::new();
    let mut row_labels = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| Error::Format(e.to_string()))?;
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        let cells = record.len().saturating_sub(skip);
        match width {
            Some(w) if w != cells => {
                return Err(Error::Format(format!(
                    "row {row} has {cells} values, expected {w}"
                )))
            }
            None => width = Some(cells),
            _ => {}
        }
        if opts.label_column {
            row_labels.push(record.get(0).unwrap_or_default().to_owned());
        }
        for (c, cell) in record.iter().skip(skip).enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: c + 1,
                message: format!("non-numeric value {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: c + 1,
                    message: format!("non-finite value {cell:?}"),
                });
            }
            values.push(v);
        }
    }
    let p = width.unwrap_or(0);
    let n = values.len().checked_div(p).unwrap_or(0);
    if n == 0 || p == 0 {
        return Err(Error::Format(format!("{source}: no numeric data")));
    }
    let matrix = DataMatrix::new(DMatrix::from_row_slice(n, p, &values))?;
    let mut ds = Dataset::new(matrix, source);
    if let Some(labels) = column_labels {
        ds.column_labels = labels;
    }
    if opts.label_column {
        ds.row_labels = row_labels;
    }
    Ok(match opts.orientation {
        Orientation::SamplesByGenes => ds,
        Orientation::GenesBySamples => ds.transpose(),
    })
}

/// Writes a dataset with a header row and a leading label column.
pub fn write_matrix_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    let mut header = vec!["label".to_owned()];
    header.extend(ds.column_labels.iter().cloned());
    w.write_record(&header).map_err(csv_io)?;
    let x = ds.matrix.values();
    for i in 0..ds.matrix.n() {
        let mut rec = vec![ds.row_labels[i].clone()];
        rec.extend((0..ds.matrix.p()).map(|j| format!("{}", x[(i, j)])));
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

/// Scales each row to unit variance (divisor p−1) across columns.
pub fn standardize_arrays(ds: &Dataset) -> Result<Dataset> {
    let (n, p) = (ds.matrix.n(), ds.matrix.p());
    if p < 2 {
        return Err(Error::DimensionTooSmall { needed: 2, got: p });
    }
    let mut x = ds.matrix.values().clone();
    for i in 0..n {
        let row = x.row(i);
        let mean = row.mean();
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (p - 1) as f64;
        if !(var > 0.0) {
            return Err(Error::invalid(format!("row {} has zero variance", i + 1)));
        }
        let sd = var.sqrt();
        x.row_mut(i).iter_mut().for_each(|v| *v /= sd);
    }
    Ok(ds.derived(
        DataMatrix::new(x)?,
        ds.row_labels.clone(),
        ds.column_labels.clone(),
        "standardize rows".into(),
    ))
}

/// Uniform split without replacement into `n_train` training rows and the rest.
pub fn split_train_test<R: Rng + ?Sized>(ds: &Dataset, n_train: usize, rng: &mut R) -> Result<(Dataset, Dataset)> {
    let n = ds.matrix.n();
    if n_train < 1 || n_train >= n {
        return Err(Error::invalid(format!("n_train {n_train} must lie in 1..{n}")));
    }
    let perm = index::sample(rng, n, n).into_vec();
    let mut train = perm[..n_train].to_vec();
    let mut test = perm[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((
        ds.select_rows(&train, format!("train split ({n_train} rows)")),
        ds.select_rows(&test, format!("test split ({} rows)", n - n_train)),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Csv,
    Text,
}

/// One CSV row of a risk report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub p: usize,
    pub n: usize,
    pub sigma: String,
    pub mean: String,
    pub errors: String,
    pub loss_q: String,
    pub estimator_q: String,
    pub redraw_mean: bool,
    pub estimator: String,
    pub risk: f64,
    pub se: f64,
    pub prial: Option<f64>,
    pub ok: usize,
    pub failed: usize,
    pub error: Option<String>,
}

const RISK_HEADER: [&str; 15] = [
    "p", "n", "sigma", "mean", "errors", "loss_q", "estimator_q", "redraw_mean", "estimator", "risk", "se", "prial",
    "ok", "failed", "error",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub family: String,
    pub rho: f64,
    pub estimator: String,
    pub risk: f64,
    pub se: f64,
    pub ok: usize,
    pub failed: usize,
}

const SWEEP_HEADER: [&str; 7] = ["family", "rho", "estimator", "risk", "se", "ok", "failed"];
const EPR_HEADER: [&str; 6] = ["n_train", "estimator", "epr", "se", "ok", "failed"];

pub fn risk_rows(report: &RiskReport) -> Vec<RiskRow> {
    let d = &report.design;
    report
        .rows
        .iter()
        .map(|r| RiskRow {
            p: d.p,
            n: d.n,
            sigma: d.sigma_label(),
            mean: d.mean_label(),
            errors: d.errors_label(),
            loss_q: d.loss_q_label().into(),
            estimator_q: d.estimator_q_label().into(),
            redraw_mean: d.redraw_mean,
            estimator: r.name.clone(),
            risk: r.risk,
            se: r.se,
            prial: r.prial,
            ok: r.ok,
            failed: r.failed,
            error: r.error.clone(),
        })
        .collect()
}

pub fn sweep_rows(report: &SweepReport) -> Vec<SweepRow> {
    report
        .points
        .iter()
        .flat_map(|(rho, r)| {
            r.rows.iter().map(move |row| SweepRow {
                family: report.family.label().into(),
                rho: *rho,
                estimator: row.name.clone(),
                risk: row.risk,
                se: row.se,
                ok: row.ok,
                failed: row.failed,
            })
        })
        .collect()
}

/// Something that can be persisted by [`write_report`].
#[derive(Debug, Clone, Copy)]
pub enum Report<'a> {
    Risk(&'a [RiskReport]),
    Sweep(&'a SweepReport),
    Epr(&'a EprReport),
}

fn csv_body<T: Serialize>(header: &[&str], rows: &[T]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).map_err(csv_io)?;
    for row in rows {
        w.serialize(row).map_err(csv_io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

fn comment_header(report: &Report<'_>) -> String {
    let mut out = String::new();
    match report {
        Report::Risk(reports) => {
            let _ = writeln!(out, "# shrinkmean risk report");
            if let Some(first) = reports.first() {
                let _ = writeln!(
                    out,
                    "# seed={} replications={} policy={}",
                    first.seed,
                    first.replications,
                    policy_label(first)
                );
            }
            for r in reports.iter() {
                let _ = writeln!(out, "# design: {}", r.design);
            }
        }
        Report::Sweep(s) => {
            let _ = writeln!(out, "# shrinkmean sweep report");
            let _ = writeln!(out, "# family={} seed={} replications={}", s.family.label(), s.seed, s.replications);
            let _ = writeln!(out, "# base design: {}", s.base);
        }
        Report::Epr(e) => {
            let _ = writeln!(out, "# shrinkmean EPR report");
            let _ = writeln!(out, "# source={} genes={} seed={} replications={}", e.source, e.genes, e.seed, e.replications);
        }
    }
    out
}

fn policy_label(r: &RiskReport) -> &'static str {
    match r.policy {
        crate::ustats::CoefficientPolicy::Raw => "raw",
        crate::ustats::CoefficientPolicy::Clamped => "clamped",
    }
}

fn cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        "-".into()
    }
}

fn text_table(header: &[String], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].len())
                .chain(std::iter::once(header[c].chars().count()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let line = |cells: &[String], out: &mut String| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(header, &mut out);
    let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1)));
    for r in rows {
        line(r, &mut out);
    }
    out
}

/// Design columns first, then one column per estimator.
fn risk_text(reports: &[RiskReport]) -> String {
    let mut estimators: Vec<String> = Vec::new();
    for r in reports {
        for row in &r.rows {
            if !estimators.contains(&row.name) {
                estimators.push(row.name.clone());
            }
        }
    }
    let mut header: Vec<String> = ["sigma", "mean", "errors", "n", "p"].iter().map(|s| s.to_string()).collect();
    header.extend(estimators.iter().cloned());
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let d = &r.design;
            let mut cells = vec![d.sigma_label(), d.mean_label(), d.errors_label(), d.n.to_string(), d.p.to_string()];
            cells.extend(estimators.iter().map(|e| r.risk(e).map_or("-".into(), cell)));
            cells
        })
        .collect();
    let mut out = text_table(&header, &rows);
    let _ = writeln!(out);
    let _ = writeln!(out, "standard errors");
    let se_rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let d = &r.design;
            let mut cells = vec![d.sigma_label(), d.mean_label(), d.errors_label(), d.n.to_string(), d.p.to_string()];
            cells.extend(estimators.iter().map(|e| r.get(e).map_or("-".into(), |x| cell(x.se))));
            cells
        })
        .collect();
    out.push_str(&text_table(&header, &se_rows));
    out
}

fn sweep_text(s: &SweepReport) -> String {
    let estimators: Vec<String> = s
        .points
        .first()
        .map(|(_, r)| r.rows.iter().map(|x| x.name.clone()).collect())
        .unwrap_or_default();
    let mut header = vec!["rho".to_string()];
    header.extend(estimators.iter().cloned());
    let rows: Vec<Vec<String>> = s
        .points
        .iter()
        .map(|(rho, r)| {
            let mut cells = vec![format!("{rho}")];
            cells.extend(estimators.iter().map(|e| r.risk(e).map_or("-".into(), cell)));
            cells
        })
        .collect();
    text_table(&header, &rows)
}

fn epr_text(e: &EprReport) -> String {
    let mut estimators: Vec<String> = Vec::new();
    let mut sizes: Vec<usize> = Vec::new();
    for r in &e.rows {
        if !estimators.contains(&r.estimator) {
            estimators.push(r.estimator.clone());
        }
        if !sizes.contains(&r.n_train) {
            sizes.push(r.n_train);
        }
    }
    let mut header = vec!["n_train".to_string()];
    header.extend(estimators.iter().cloned());
    let rows: Vec<Vec<String>> = sizes
        .iter()
        .map(|&s| {
            let mut cells = vec![s.to_string()];
            cells.extend(estimators.iter().map(|est| e.get(s, est).map_or("-".into(), |r| cell(r.epr))));
            cells
        })
        .collect();
    text_table(&header, &rows)
}

/// Renders a report; `#` lines carry seed and design metadata.
pub fn render_report(report: &Report<'_>, format: ReportFormat) -> Result<String> {
    let mut out = comment_header(report);
    let body = match (report, format) {
        (Report::Risk(r), ReportFormat::Csv) => {
            let rows: Vec<RiskRow> = r.iter().flat_map(risk_rows).collect();
            csv_body(&RISK_HEADER, &rows)?
        }
        (Report::Sweep(s), ReportFormat::Csv) => csv_body(&SWEEP_HEADER, &sweep_rows(s))?,
        (Report::Epr(e), ReportFormat::Csv) => csv_body(&EPR_HEADER, &e.rows)?,
        (Report::Risk(r), ReportFormat::Text) => risk_text(r),
        (Report::Sweep(s), ReportFormat::Text) => sweep_text(s),
        (Report::Epr(e), ReportFormat::Text) => epr_text(e),
    };
    out.push_str(&body);
    Ok(out)
}

pub fn write_report(report: &Report<'_>, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let text = render_report(report, format)?;
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

/// Reads the rows of a CSV report written by [`write_report`].
pub fn read_report_rows<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(csv_io)?;
    rdr.deserialize()
        .map(|r| r.map_err(|e| Error::Format(e.to_string())))
        .collect()
}
