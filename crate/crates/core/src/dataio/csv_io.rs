//! CSV ingestion and export.
//!
//! Schema: a header row is required; the first column is named `date` and
//! holds ISO-8601 dates (`YYYY-MM-DD`), the remaining columns are numeric.
//! Empty cells, `NA` and `NaN` mark missing values. Rows missing a required
//! value are dropped at the start and end of the file; a gap in the middle is
//! an error.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{forward_returns, SeriesPair};
use crate::{Error, Result};

/// Where a run reads its series from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSource {
    pub path: PathBuf,
    /// Price column of the target market.
    pub target: String,
    pub contexts: Vec<String>,
    /// Optional second file holding the context columns, joined on date.
    #[serde(default)]
    pub context_path: Option<PathBuf>,
}

struct Table {
    dates: Vec<NaiveDate>,
    /// Source line of each row, for error messages.
    lines: Vec<u64>,
    columns: Vec<(String, Vec<Option<f64>>)>,
}

fn parse_cell(raw: &str, line: u64, column: &str) -> Result<Option<f64>> {
    let s = raw.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    let v: f64 = s.parse().map_err(|_| Error::Parse {
        line,
        reason: format!("column '{column}': '{s}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            reason: format!("column '{column}': non-finite value"),
        });
    }
    Ok(Some(v))
}

fn read_table(path: &Path, wanted: &[&str]) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.get(0).map(str::trim) != Some("date") {
        return Err(Error::Parse {
            line: 1,
            reason: "first header must be 'date'".into(),
        });
    }
    let mut index = Vec::with_capacity(wanted.len());
    for name in wanted {
        let i = headers
            .iter()
            .position(|h| h.trim() == *name)
            .ok_or_else(|| Error::Parse {
                line: 1,
                reason: format!("no column named '{name}'"),
            })?;
        index.push(i);
    }
    let mut table = Table {
        dates: Vec::new(),
        lines: Vec::new(),
        columns: wanted.iter().map(|n| (n.to_string(), Vec::new())).collect(),
    };
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let raw_date = record.get(0).unwrap_or("").trim();
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d").map_err(|_| Error::Parse {
            line,
            reason: format!("'{raw_date}' is not an ISO-8601 date"),
        })?;
        if let Some(prev) = table.dates.last() {
            if date <= *prev {
                return Err(Error::Parse {
                    line,
                    reason: format!("date {date} is not after {prev}"),
                });
            }
        }
        table.dates.push(date);
        table.lines.push(line);
        for ((name, values), i) in table.columns.iter_mut().zip(&index) {
            values.push(parse_cell(record.get(*i).unwrap_or(""), line, name)?);
        }
    }
    Ok(table)
}

/// Trims incomplete leading/trailing rows and fails on interior gaps.
fn complete_rows(
    dates: &[NaiveDate],
    lines: &[u64],
    columns: &[&[Option<f64>]],
) -> Result<(Vec<NaiveDate>, Vec<Vec<f64>>)> {
    let complete = |t: usize| columns.iter().all(|c| c[t].is_some());
    let Some(first) = (0..dates.len()).find(|t| complete(*t)) else {
        return Ok((Vec::new(), vec![Vec::new(); columns.len()]));
    };
    let last = (0..dates.len()).rev().find(|t| complete(*t)).unwrap_or(first);
    if let Some(t) = (first..=last).find(|t| !complete(*t)) {
        return Err(Error::Parse {
            line: lines[t],
            reason: "missing value inside the series".into(),
        });
    }
    Ok((
        dates[first..=last].to_vec(),
        columns
            .iter()
            .map(|c| c[first..=last].iter().map(|v| v.unwrap_or_default()).collect())
            .collect(),
    ))
}

fn finish(
    dates: Vec<NaiveDate>,
    prices: Vec<f64>,
    context: Vec<f64>,
    target: &str,
    context_name: &str,
    horizon: usize,
    window: usize,
) -> Result<SeriesPair> {
    if dates.len() < window + horizon {
        return Err(Error::SegmentTooShort {
            len: dates.len(),
            needed: window + horizon,
        });
    }
    let y = forward_returns(&prices, horizon);
    let n = y.len();
    if let Some(t) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!(
            "forward return at {} is not finite (zero price?)",
            dates[t]
        )));
    }
    let pair = SeriesPair {
        dates: dates[..n].to_vec(),
        target: y,
        context: context[..n].to_vec(),
        target_name: target.to_string(),
        context_name: context_name.to_string(),
        horizon,
    };
    pair.validate()?;
    Ok(pair)
}

/// Reads `target` prices and one `context` column from a single file.
///
/// The result has `N - horizon` samples for `N` complete rows; `horizon = 0`
/// takes the target column as returns already.
pub fn load_csv(
    path: &Path,
    target: &str,
    context: &str,
    horizon: usize,
    window: usize,
) -> Result<SeriesPair> {
    let table = read_table(path, &[target, context])?;
    let (dates, mut cols) = complete_rows(
        &table.dates,
        &table.lines,
        &[&table.columns[0].1, &table.columns[1].1],
    )?;
    let ctx = cols.pop().unwrap_or_default();
    let prices = cols.pop().unwrap_or_default();
    finish(dates, prices, ctx, target, context, horizon, window)
}

/// Joins a target file and a context file on their common dates.
pub fn load_csv_pair(
    target_path: &Path,
    target: &str,
    context_path: &Path,
    context: &str,
    horizon: usize,
    window: usize,
) -> Result<SeriesPair> {
    let a = read_table(target_path, &[target])?;
    let b = read_table(context_path, &[context])?;
    let (mut dates, mut lines, mut prices, mut ctx) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let (mut i, mut j) = (0, 0);
    while i < a.dates.len() && j < b.dates.len() {
        match a.dates[i].cmp(&b.dates[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dates.push(a.dates[i]);
                lines.push(a.lines[i]);
                prices.push(a.columns[0].1[i]);
                ctx.push(b.columns[0].1[j]);
                i += 1;
                j += 1;
            }
        }
    }
    let (dates, mut cols) = complete_rows(&dates, &lines, &[&prices, &ctx])?;
    let c = cols.pop().unwrap_or_default();
    let p = cols.pop().unwrap_or_default();
    finish(dates, p, c, target, context, horizon, window)
}

/// Writes `date,<name>...` rows in the ingestion schema.
pub fn write_csv(path: &Path, dates: &[NaiveDate], columns: &[(&str, &[f64])]) -> Result<()> {
    if columns.iter().any(|(_, v)| v.len() != dates.len()) {
        return Err(Error::Data("columns and dates differ in length".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["date".to_string()];
    header.extend(columns.iter().map(|(n, _)| n.to_string()));
    w.write_record(&header)?;
    for (t, d) in dates.iter().enumerate() {
        let mut row = vec![d.format("%Y-%m-%d").to_string()];
        // `{:?}` round-trips f64 exactly
        row.extend(columns.iter().map(|(_, v)| format!("{:?}", v[t])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
