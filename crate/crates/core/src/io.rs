//! CSV readers and writers for records, beat series, cohorts and features.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rpeak::BeatToBeatSeries;
use crate::signal::EcgRecord;

pub const FEATURE_SCHEMA_VERSION: u32 = 1;

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line, message: message.into() }
}

/// Write to a sibling temp file, then rename over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::config(format!("{} has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// Format a value so it reads back bit-identical; NaN becomes an empty cell.
pub fn fmt_value(v: f64) -> String {
    if v.is_nan() { String::new() } else { v.to_string() }
}

fn parse_value(cell: &str) -> std::result::Result<f64, String> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(f64::NAN);
    }
    cell.parse::<f64>().map_err(|e| format!("bad number {cell:?}: {e}"))
}

/// Read an ECG CSV: `# fs=`, `# lead=` or `# leads=a,b` headers, then one
/// row of mV values per sample. Returns one record per lead.
pub fn read_ecg_csv(path: &Path) -> Result<Vec<EcgRecord>> {
    let text = fs::read_to_string(path)?;
    let mut fs_hz = None;
    let mut leads: Vec<String> = vec!["I".into()];
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(h) = line.strip_prefix('#') {
            let (k, v) = h.split_once('=').ok_or_else(|| parse_err(path, n, "header needs key=value"))?;
            match k.trim() {
                "fs" => {
                    fs_hz = Some(v.trim().parse::<f64>().map_err(|e| parse_err(path, n, format!("bad fs: {e}")))?)
                }
                "lead" => leads = vec![v.trim().to_string()],
                "leads" => leads = v.split(',').map(|s| s.trim().to_string()).collect(),
                "subject" => {}
                other => log::warn!("{}: line {n}: unknown header {other:?} ignored", path.display()),
            }
            continue;
        }
        if columns.is_empty() {
            columns = vec![Vec::new(); leads.len()];
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != leads.len() {
            return Err(parse_err(path, n, format!("{} columns, expected {}", cells.len(), leads.len())));
        }
        for (col, cell) in columns.iter_mut().zip(cells) {
            let v = parse_value(cell).map_err(|m| parse_err(path, n, m))?;
            if !v.is_finite() {
                return Err(parse_err(path, n, "missing or non-finite sample"));
            }
            col.push(v);
        }
    }
    let fs_hz = fs_hz.ok_or_else(|| parse_err(path, 1, "missing `# fs=` header"))?;
    if columns.is_empty() {
        return Err(parse_err(path, text.lines().count().max(1), "no samples"));
    }
    leads.into_iter().zip(columns).map(|(lead, col)| EcgRecord::new(col, fs_hz, lead)).collect()
}

pub fn write_ecg_csv(path: &Path, record: &EcgRecord) -> Result<()> {
    let mut s = format!("# fs={}\n# lead={}\n", record.fs(), record.lead());
    for v in record.samples() {
        writeln!(s, "{v}").expect("string write");
    }
    atomic_write(path, s.as_bytes())
}

/// Beat series CSV with columns onset_s,rr_ms[,segment].
pub fn read_rr_csv(path: &Path) -> Result<BeatToBeatSeries> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let has_segment = rdr.headers()?.iter().any(|h| h == "segment");
    let (mut onsets, mut rr, mut seg) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let cell = |k: usize| -> Result<f64> {
            let v = parse_value(rec.get(k).unwrap_or("")).map_err(|m| parse_err(path, line, m))?;
            if v.is_finite() { Ok(v) } else { Err(parse_err(path, line, format!("missing value in column {k}"))) }
        };
        onsets.push(cell(0)?);
        rr.push(cell(1)?);
        seg.push(if has_segment { cell(2)? as u32 } else { 0 });
    }
    BeatToBeatSeries::new(rr, onsets, seg)
}

pub fn write_rr_csv(path: &Path, bb: &BeatToBeatSeries) -> Result<()> {
    let mut s = String::from("onset_s,rr_ms,segment\n");
    for ((t, rr), g) in bb.onset_times().iter().zip(bb.intervals()).zip(bb.segment_ids()) {
        writeln!(s, "{t},{rr},{g}").expect("string write");
    }
    atomic_write(path, s.as_bytes())
}

pub const HISTORY_NAMES: [&str; 10] = [
    "atrial_fibrillation",
    "chronic_kidney_disease",
    "chronic_obstructive_pulmonary_disease",
    "diabetes_mellitus",
    "hyperlipidemia",
    "hypertension",
    "ischemic_heart_disease",
    "myocardial_infarction",
    "stroke",
    "valvular_heart_disease",
];

/// Demographics, clinical history and outcome of one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub sex: u8,
    pub age: f64,
    pub history: [bool; 10],
    pub y: Option<f64>,
    pub delta: Option<bool>,
}

impl SubjectRecord {
    pub fn validate(&self) -> Result<()> {
        if self.sex > 1 {
            return Err(Error::data(format!("{}: sex must be 0 or 1", self.subject_id)));
        }
        if !(0.0..=120.0).contains(&self.age) {
            return Err(Error::data(format!("{}: age {} outside [0, 120]", self.subject_id, self.age)));
        }
        if let Some(y) = self.y {
            if !(y > 0.0 && y.is_finite()) {
                return Err(Error::data(format!("{}: follow-up {y} must be positive", self.subject_id)));
            }
        }
        Ok(())
    }
}

fn parse_flag(cell: &str) -> std::result::Result<Option<bool>, String> {
    match cell.trim() {
        "" => Ok(None),
        "1" | "true" => Ok(Some(true)),
        "0" | "false" => Ok(Some(false)),
        other => Err(format!("bad flag {other:?}")),
    }
}

pub fn read_cohort_csv(path: &Path) -> Result<Vec<SubjectRecord>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).flexible(true).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let id_col = col("subject_id").ok_or_else(|| parse_err(path, 1, "no subject_id column"))?;
    let sex_col = col("sex").ok_or_else(|| parse_err(path, 1, "no sex column"))?;
    let age_col = col("age").ok_or_else(|| parse_err(path, 1, "no age column"))?;
    let flag_cols: Vec<Option<usize>> = HISTORY_NAMES.iter().map(|n| col(n)).collect();
    let (y_col, d_col) = (col("y"), col("delta"));
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let get = |c: Option<usize>| c.and_then(|c| rec.get(c)).unwrap_or("").trim();
        let err = |m: String| parse_err(path, line, m);
        let subject_id = get(Some(id_col)).to_string();
        if subject_id.is_empty() {
            return Err(err("empty subject_id".into()));
        }
        let sex = match get(Some(sex_col)) {
            "0" => 0,
            "1" => 1,
            other => return Err(err(format!("bad sex {other:?}"))),
        };
        let age = parse_value(get(Some(age_col))).map_err(err)?;
        let mut history = [false; 10];
        let mut missing = Vec::new();
        for (k, c) in flag_cols.iter().enumerate() {
            match parse_flag(get(*c)).map_err(err)? {
                Some(v) => history[k] = v,
                None => missing.push(HISTORY_NAMES[k]),
            }
        }
        if !missing.is_empty() {
            log::warn!("{}: line {line}: missing flags default to false: {}", path.display(), missing.join(","));
        }
        let y = parse_value(get(y_col)).map_err(err)?;
        let delta = parse_flag(get(d_col)).map_err(err)?;
        let r = SubjectRecord { subject_id, sex, age, history, y: (!y.is_nan()).then_some(y), delta };
        r.validate().map_err(|e| err(e.to_string()))?;
        out.push(r);
    }
    Ok(out)
}

pub fn write_cohort_csv(path: &Path, subjects: &[SubjectRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["subject_id", "sex", "age"];
    header.extend(HISTORY_NAMES);
    header.extend(["y", "delta"]);
    wtr.write_record(&header)?;
    for s in subjects {
        let mut row = vec![s.subject_id.clone(), s.sex.to_string(), s.age.to_string()];
        row.extend(s.history.iter().map(|&b| u8::from(b).to_string()));
        row.push(s.y.map(|v| v.to_string()).unwrap_or_default());
        row.push(s.delta.map(|d| u8::from(d).to_string()).unwrap_or_default());
        wtr.write_record(&row)?;
    }
    let bytes = wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    atomic_write(path, &bytes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub subject_id: String,
    /// NaN marks a missing value.
    pub values: Vec<f64>,
    pub y: Option<f64>,
    pub delta: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    /// Keep only the named columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<FeatureTable> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.names
                    .iter()
                    .position(|m| m == n)
                    .ok_or_else(|| Error::FeatureMismatch(format!("no column {n:?}")))
            })
            .collect::<Result<_>>()?;
        Ok(FeatureTable {
            names: names.to_vec(),
            rows: self
                .rows
                .iter()
                .map(|r| FeatureRow { values: idx.iter().map(|&i| r.values[i]).collect(), ..r.clone() })
                .collect(),
        })
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["subject_id".to_string()];
        header.extend(self.names.iter().cloned());
        header.extend(["y".to_string(), "delta".to_string()]);
        wtr.write_record(&header)?;
        for r in &self.rows {
            let mut row = vec![r.subject_id.clone()];
            row.extend(r.values.iter().map(|&v| fmt_value(v)));
            row.push(r.y.map(fmt_value).unwrap_or_default());
            row.push(r.delta.map(|d| u8::from(d).to_string()).unwrap_or_default());
            wtr.write_record(&row)?;
        }
        let body = wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        let body = String::from_utf8(body).expect("csv output is utf-8");
        Ok(format!("# schema_version={FEATURE_SCHEMA_VERSION}\n{body}"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.to_csv_string()?.as_bytes())
    }

    pub fn read_csv(path: &Path) -> Result<FeatureTable> {
        Self::parse_csv(&fs::read_to_string(path)?, path)
    }

    /// `path` only labels errors.
    pub fn parse_csv(text: &str, path: &Path) -> Result<FeatureTable> {
        let (first, body) = text.split_once('\n').unwrap_or((text, ""));
        let found = first
            .trim()
            .strip_prefix("# schema_version=")
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or_else(|| parse_err(path, 1, "expected `# schema_version=<n>`"))?;
        if found != FEATURE_SCHEMA_VERSION {
            return Err(Error::SchemaVersion { expected: FEATURE_SCHEMA_VERSION, found });
        }
        let mut rdr = csv::ReaderBuilder::new().from_reader(body.as_bytes());
        let headers = rdr.headers()?.clone();
        let n = headers.len();
        if n < 3 || &headers[0] != "subject_id" || &headers[n - 2] != "y" || &headers[n - 1] != "delta" {
            return Err(parse_err(path, 2, "header must be subject_id,<features>,y,delta"));
        }
        let names: Vec<String> = headers.iter().skip(1).take(n - 3).map(String::from).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize + 1);
                parse_err(path, line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize + 1);
            let err = |m: String| parse_err(path, line, m);
            let values = (1..n - 2).map(|k| parse_value(&rec[k])).collect::<std::result::Result<Vec<_>, _>>().map_err(err)?;
            let y = parse_value(&rec[n - 2]).map_err(err)?;
            let delta = parse_flag(&rec[n - 1]).map_err(err)?;
            rows.push(FeatureRow { subject_id: rec[0].to_string(), values, y: (!y.is_nan()).then_some(y), delta });
        }
        Ok(FeatureTable { names, rows })
    }
}
