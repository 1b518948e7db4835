//! CSV ingestion, JSON run configuration and report serialization.
//!
//! Reports are written deterministically: JSON objects have sorted keys and
//! floats use the shortest representation that round-trips exactly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dataset::Dataset;
use crate::error::{invalid, Error, Result};
use crate::sim::{SimConfig, SimReport};
use crate::solver::{FitResult, SolverConfig};
use crate::tuning::{CvReport, LossKind};
use crate::weights::WeightConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResponseColumn {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NaPolicy {
    Error,
    DropRow,
}

/// Maps string labels onto {0, 1}, e.g. `ALL -> 1`, `AML -> 0`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub positive: String,
    pub negative: String,
}

impl std::str::FromStr for LabelMap {
    type Err = Error;

    /// Parses `POSITIVE=1,NEGATIVE=0` or `POSITIVE,NEGATIVE`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            return Err(invalid(format!("label map '{s}' must name exactly two labels")));
        }
        let mut positive = None;
        let mut negative = None;
        for (i, part) in parts.iter().enumerate() {
            match part.split_once('=') {
                Some((label, "1")) => positive = Some(label.to_string()),
                Some((label, "0")) => negative = Some(label.to_string()),
                Some(_) => return Err(invalid(format!("label map entry '{part}' must end in =0 or =1"))),
                None if i == 0 => positive = Some(part.to_string()),
                None => negative = Some(part.to_string()),
            }
        }
        match (positive, negative) {
            (Some(positive), Some(negative)) if positive != negative => Ok(Self { positive, negative }),
            _ => Err(invalid(format!("label map '{s}' needs one positive and one negative label"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSpec {
    pub path: PathBuf,
    pub response_column: ResponseColumn,
    pub delimiter: u8,
    pub has_header: bool,
    pub na_policy: NaPolicy,
    pub label_map: Option<LabelMap>,
}

impl CsvSpec {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            response_column: ResponseColumn::Index(0),
            delimiter: b',',
            has_header: true,
            na_policy: NaPolicy::Error,
            label_map: None,
        }
    }
}

/// A loaded table: the dataset plus the feature column names.
#[derive(Debug, Clone)]
pub struct Table {
    pub data: Dataset,
    pub feature_names: Vec<String>,
    pub dropped_rows: usize,
}

pub fn load_csv(spec: &CsvSpec) -> Result<Dataset> {
    load_csv_table(spec).map(|t| t.data)
}

fn is_na(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "na" | "NaN" | "nan" | "null")
}

/// Parses the whole file before constructing anything; any bad cell fails
/// the load.
pub fn load_csv_table(spec: &CsvSpec) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(spec.delimiter)
        .has_headers(spec.has_header)
        .trim(csv::Trim::All)
        .from_path(&spec.path)
        .map_err(|e| invalid(format!("cannot read {}: {e}", spec.path.display())))?;

    let header: Option<Vec<String>> = if spec.has_header {
        Some(reader.headers()?.iter().map(str::to_string).collect())
    } else {
        None
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut width: Option<usize> = None;
    let mut response_idx: Option<usize> = None;
    let mut dropped = 0;

    for (r, record) in reader.records().enumerate() {
        let record = record?;
        // 1-based file line for messages
        let line = r + 1 + usize::from(spec.has_header);
        let cols = record.len();
        match width {
            None => width = Some(cols),
            Some(w) if w != cols => {
                return Err(Error::Parse {
                    row: line,
                    column: cols,
                    message: format!("expected {w} fields, found {cols}"),
                })
            }
            _ => {}
        }
        let resp = match response_idx {
            Some(i) => i,
            None => {
                let i = resolve_response(&spec.response_column, header.as_deref(), cols)?;
                response_idx = Some(i);
                i
            }
        };

        if record.iter().any(is_na) {
            match spec.na_policy {
                NaPolicy::DropRow => {
                    dropped += 1;
                    continue;
                }
                NaPolicy::Error => {
                    let c = record.iter().position(is_na).unwrap_or(0);
                    return Err(Error::Parse {
                        row: line,
                        column: c + 1,
                        message: "missing value".into(),
                    });
                }
            }
        }

        let mut row = Vec::with_capacity(cols.saturating_sub(1));
        for (c, cell) in record.iter().enumerate() {
            if c == resp {
                ys.push(parse_label(cell, spec.label_map.as_ref()).map_err(|message| Error::Parse {
                    row: line,
                    column: c + 1,
                    message,
                })?);
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    row: line,
                    column: c + 1,
                    message: format!("'{cell}' is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row: line,
                        column: c + 1,
                        message: format!("'{cell}' is not finite"),
                    });
                }
                row.push(v);
            }
        }
        rows.push(row);
    }

    if dropped > 0 {
        log::warn!("dropped {dropped} row(s) containing missing values");
    }
    let n = rows.len();
    let width = width.ok_or_else(|| invalid("CSV file has no data rows"))?;
    if n == 0 {
        return Err(invalid("no rows left after dropping missing values"));
    }
    let resp = response_idx.unwrap_or(0);
    let p = width - 1;
    let x = Array2::from_shape_vec((n, p), rows.into_iter().flatten().collect())
        .map_err(|e| invalid(e.to_string()))?;
    let feature_names = match &header {
        Some(h) => h
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != resp)
            .map(|(_, s)| s.clone())
            .collect(),
        None => (1..=p).map(|j| format!("x{j}")).collect(),
    };
    Ok(Table {
        data: Dataset::new(x, Array1::from(ys))?,
        feature_names,
        dropped_rows: dropped,
    })
}

fn resolve_response(col: &ResponseColumn, header: Option<&[String]>, width: usize) -> Result<usize> {
    let idx = match col {
        ResponseColumn::Index(i) => *i,
        ResponseColumn::Name(name) => header
            .and_then(|h| h.iter().position(|s| s == name))
            .ok_or_else(|| invalid(format!("response column '{name}' not found in header")))?,
    };
    if idx >= width {
        return Err(invalid(format!("response column {idx} out of range for {width} columns")));
    }
    if width < 2 {
        return Err(invalid("need a response column and at least one feature"));
    }
    Ok(idx)
}

fn parse_label(cell: &str, map: Option<&LabelMap>) -> std::result::Result<f64, String> {
    if let Some(m) = map {
        if cell == m.positive {
            return Ok(1.0);
        }
        if cell == m.negative {
            return Ok(0.0);
        }
    }
    match cell.parse::<f64>() {
        Ok(0.0) => Ok(0.0),
        Ok(1.0) => Ok(1.0),
        _ => Err(format!("response '{cell}' is not 0/1 (pass a label map for string labels)")),
    }
}

/// Writes `y,x1,...,xp` with exact float round trip.
pub fn save_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["y".to_string()];
    header.extend((1..=data.p()).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    for (row, &yi) in data.x().rows().into_iter().zip(data.y()) {
        let mut rec = vec![format!("{}", yi as u8)];
        rec.extend(row.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Format {
    Json,
    Csv,
}

/// Anything [`write_report`] can serialize.
pub trait Report {
    fn to_json(&self) -> Value;
    fn csv_header(&self) -> Vec<String>;
    fn csv_rows(&self) -> Vec<Vec<String>>;
}

fn num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:?}")
    }
}

impl Report for FitResult {
    fn to_json(&self) -> Value {
        json!({
            "beta": self.coef.beta.to_vec(),
            "intercept": self.coef.intercept,
            "lambda": self.lambda,
            "objective": self.objective,
            "iterations": self.iterations,
            "kkt_max_violation": self.kkt_max_violation,
            "converged": self.converged,
            "weights": self.weights.w.to_vec(),
            "scheme": self.weights.scheme,
            "weights_normalized": self.weights.normalized,
        })
    }

    fn csv_header(&self) -> Vec<String> {
        ["index", "beta", "weight"].map(String::from).to_vec()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.coef
            .beta
            .iter()
            .zip(self.weights.w.iter())
            .enumerate()
            .map(|(j, (b, w))| vec![j.to_string(), num(*b), num(*w)])
            .collect()
    }
}

impl Report for CvReport {
    fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("CvReport serializes")
    }

    fn csv_header(&self) -> Vec<String> {
        ["lambda", "mean_loss", "se_loss"].map(String::from).to_vec()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.lambda_path
            .values
            .iter()
            .zip(&self.mean_loss)
            .zip(&self.se_loss)
            .map(|((l, m), s)| vec![num(*l), num(*m), num(*s)])
            .collect()
    }
}

pub const SIM_CSV_HEADER: [&str; 10] = [
    "method",
    "p",
    "rho",
    "pattern",
    "l1_mean",
    "l1_sd",
    "pred_rms",
    "pred_mean_norm",
    "support_rate",
    "replicates_completed",
];

impl Report for SimReport {
    fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("SimReport serializes")
    }

    fn csv_header(&self) -> Vec<String> {
        SIM_CSV_HEADER.map(String::from).to_vec()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.per_method
            .iter()
            .map(|m| {
                vec![
                    m.method.to_string(),
                    self.config.p.to_string(),
                    num(self.config.rho),
                    self.config.pattern.to_string(),
                    num(m.l1_error_mean),
                    num(m.l1_error_sd),
                    num(m.pred_error_rms),
                    num(m.pred_error_mean_norm),
                    num(m.support_recovery_rate),
                    m.replicates_completed.to_string(),
                ]
            })
            .collect()
    }
}

/// Several simulation configurations in one table.
pub struct SimGrid<'a>(pub &'a [SimReport]);

impl Report for SimGrid<'_> {
    fn to_json(&self) -> Value {
        Value::Array(self.0.iter().map(Report::to_json).collect())
    }

    fn csv_header(&self) -> Vec<String> {
        SIM_CSV_HEADER.map(String::from).to_vec()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.0.iter().flat_map(Report::csv_rows).collect()
    }
}

/// Sorts object keys recursively; `serde_json::Map` is ordered by key, so a
/// rebuild through it is enough.
fn sorted(v: Value) -> Value {
    match v {
        Value::Object(m) => Value::Object(m.into_iter().map(|(k, v)| (k, sorted(v))).collect()),
        Value::Array(a) => Value::Array(a.into_iter().map(sorted).collect()),
        other => other,
    }
}

/// Pretty JSON with recursively sorted keys and a trailing newline.
pub fn json_string(value: Value) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&sorted(value))?;
    s.push('\n');
    Ok(s)
}

pub fn report_to_json_string(report: &dyn Report) -> Result<String> {
    json_string(report.to_json())
}

pub fn report_to_csv_string(report: &dyn Report) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(report.csv_header())?;
    for row in report.csv_rows() {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| invalid(e.to_string()))
}

pub fn write_report(report: &dyn Report, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let body = match format {
        Format::Json => report_to_json_string(report)?,
        Format::Csv => report_to_csv_string(report)?,
    };
    let mut f = fs::File::create(path)?;
    f.write_all(body.as_bytes())?;
    Ok(())
}

/// One aggregate row of a simulation CSV.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SimCsvRow {
    pub method: String,
    pub p: usize,
    pub rho: f64,
    pub pattern: String,
    pub l1_mean: f64,
    pub l1_sd: f64,
    pub pred_rms: f64,
    pub pred_mean_norm: f64,
    pub support_rate: f64,
    pub replicates_completed: usize,
}

pub fn read_sim_csv(path: impl AsRef<Path>) -> Result<Vec<SimCsvRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuningConfig {
    pub folds: usize,
    pub loss: LossKind,
    pub n_lambda: usize,
    pub min_ratio: f64,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            loss: LossKind::Deviance,
            n_lambda: 100,
            min_ratio: 1e-4,
        }
    }
}

/// JSON run configuration. Unknown keys are rejected; missing keys take the
/// defaults of each section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub solver: SolverConfig,
    pub weights: WeightConfig,
    pub sim: SimConfig,
    pub tuning: TuningConfig,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            weights: WeightConfig::default(),
            sim: SimConfig::default(),
            tuning: TuningConfig::default(),
            seed: 1,
            output_dir: None,
        }
    }
}

pub fn load_run_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn basic_shape() {
        let f = write_tmp("y,a,b\n1,0.5,2\n0,1.5,-1\n1,3,4\n");
        let d = load_csv(&CsvSpec::new(f.path())).unwrap();
        assert_eq!((d.n(), d.p()), (3, 2));
        assert_eq!(d.y().to_vec(), vec![1.0, 0.0, 1.0]);
        assert_eq!(d.x()[[1, 1]], -1.0);
    }

    #[test]
    fn named_response_and_labels() {
        let f = write_tmp("g1,label,g2\n0.1,ALL,2\n0.2,AML,3\n");
        let mut spec = CsvSpec::new(f.path());
        spec.response_column = ResponseColumn::Name("label".into());
        assert!(load_csv(&spec).is_err());
        spec.label_map = Some("ALL=1,AML=0".parse().unwrap());
        let t = load_csv_table(&spec).unwrap();
        assert_eq!(t.data.y().to_vec(), vec![1.0, 0.0]);
        assert_eq!(t.feature_names, vec!["g1", "g2"]);
    }

    #[test]
    fn na_policies() {
        let f = write_tmp("y,a\n1,0.5\n0,NA\n1,3\n");
        let mut spec = CsvSpec::new(f.path());
        match load_csv(&spec) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (3, 2)),
            other => panic!("expected parse error, got {other:?}"),
        }
        spec.na_policy = NaPolicy::DropRow;
        let t = load_csv_table(&spec).unwrap();
        assert_eq!(t.data.n(), 2);
        assert_eq!(t.dropped_rows, 1);
    }

    #[test]
    fn bad_cells_report_coordinates() {
        let f = write_tmp("y,a,b\n1,0.5,2\n0,abc,1\n");
        match load_csv(&CsvSpec::new(f.path())) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (3, 2)),
            other => panic!("expected parse error, got {other:?}"),
        }
        let f = write_tmp("y,a\n2,0.5\n");
        assert!(matches!(load_csv(&CsvSpec::new(f.path())), Err(Error::Parse { .. })));
    }

    #[test]
    fn label_map_parsing() {
        let m: LabelMap = "AML=0,ALL=1".parse().unwrap();
        assert_eq!(m.positive, "ALL");
        assert_eq!(m.negative, "AML");
        assert!("A".parse::<LabelMap>().is_err());
        assert!("A=1,B=1".parse::<LabelMap>().is_err());
    }

    #[test]
    fn run_config_rejects_unknown_keys() {
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 7, "solver": {"max_iter": 50}}"#).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.solver.max_iter, 50);
        assert_eq!(cfg.solver.tol_kkt, 1e-6);
        assert!(serde_json::from_str::<RunConfig>(r#"{"sede": 7}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"solver": {"maxiter": 5}}"#).is_err());
    }
}
