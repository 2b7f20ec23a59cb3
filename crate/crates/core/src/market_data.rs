//! Ingestion and validation of daily adjusted-close price files.
//!
//! Input format: UTF-8 CSV with the exact header `date,adj_close`, ISO-8601
//! dates (`YYYY-MM-DD`), `.` decimal point, one row per trading day. Calendar
//! gaps (weekends, holidays) are permitted; everything downstream is
//! index-based.

use std::fmt;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;

use chrono::NaiveDate;
use thiserror::Error;

/// Dated adjusted-close price vector for one ticker. `dates` and `closes`
/// are parallel vectors of equal length.
///
/// Immutable after construction; safe to share read-only across workers.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub ticker: String,
    pub dates: Vec<NaiveDate>,
    pub closes: Vec<f64>,
}

impl PriceSeries {
    /// Builds a series and rejects it unless every invariant holds.
    pub fn new(
        ticker: impl Into<String>,
        dates: Vec<NaiveDate>,
        closes: Vec<f64>,
    ) -> Result<Self, MarketDataError> {
        let series = Self { ticker: ticker.into(), dates, closes };
        let report = validate_series(&series);
        if report.ok() {
            Ok(series)
        } else {
            Err(MarketDataError::Invalid {
                first: report.errors[0].message.clone(),
                count: report.errors.len(),
            })
        }
    }

    pub fn len(&self) -> usize {
        self.closes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.closes.is_empty()
    }
}

/// What a validation issue is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IssueKind {
    LengthMismatch,
    TooShort,
    NonPositivePrice,
    NonFinitePrice,
    DatesNotIncreasing,
}

impl fmt::Display for IssueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            IssueKind::LengthMismatch => "length_mismatch",
            IssueKind::TooShort => "too_short",
            IssueKind::NonPositivePrice => "non_positive_price",
            IssueKind::NonFinitePrice => "non_finite_price",
            IssueKind::DatesNotIncreasing => "dates_not_increasing",
        };
        f.write_str(s)
    }
}

/// One invariant violation; `row` is the 0-based index into the data vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationIssue {
    pub row: usize,
    pub kind: IssueKind,
    pub message: String,
}

/// Outcome of checking a [`PriceSeries`] against its invariants.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub row_count: usize,
    pub errors: Vec<ValidationIssue>,
}

impl ValidationReport {
    /// True exactly when no violations were found.
    pub fn ok(&self) -> bool {
        self.errors.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum MarketDataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("bad header: expected `date,adj_close`, found `{found}`")]
    BadHeader { found: String },
    #[error("need at least 2 data rows, found {rows}")]
    TooFewRows { rows: usize },
    #[error("{message} at row {row}")]
    Row { row: usize, message: String },
    #[error("invalid series: {first} ({count} issue(s) total)")]
    Invalid { first: String, count: usize },
}

/// Enumerates every invariant violation in `series`. Violations are data,
/// not failures: the report always comes back.
pub fn validate_series(series: &PriceSeries) -> ValidationReport {
    let mut errors = Vec::new();
    let row_count = series.closes.len();

    if series.dates.len() != series.closes.len() {
        errors.push(ValidationIssue {
            row: 0,
            kind: IssueKind::LengthMismatch,
            message: format!(
                "dates and closes lengths differ: {} vs {}",
                series.dates.len(),
                series.closes.len()
            ),
        });
    }
    if row_count.min(series.dates.len()) < 2 {
        errors.push(ValidationIssue {
            row: 0,
            kind: IssueKind::TooShort,
            message: format!("series has {} row(s), need at least 2", row_count),
        });
    }
    for (i, &c) in series.closes.iter().enumerate() {
        if !c.is_finite() {
            errors.push(ValidationIssue {
                row: i,
                kind: IssueKind::NonFinitePrice,
                message: format!("non-finite price at index {i}"),
            });
        } else if c <= 0.0 {
            errors.push(ValidationIssue {
                row: i,
                kind: IssueKind::NonPositivePrice,
                message: format!("non-positive price {c} at index {i}"),
            });
        }
    }
    let n = series.dates.len();
    for i in 1..n {
        if series.dates[i] <= series.dates[i - 1] {
            errors.push(ValidationIssue {
                row: i,
                kind: IssueKind::DatesNotIncreasing,
                message: format!(
                    "dates not strictly increasing at index {i}: {} then {}",
                    series.dates[i - 1],
                    series.dates[i]
                ),
            });
        }
    }

    ValidationReport { row_count, errors }
}

/// Parses a price CSV; the ticker is the file stem unless overridden.
pub fn parse_price_csv(path: &Path) -> Result<PriceSeries, MarketDataError> {
    parse_price_csv_with_ticker(path, None)
}

pub fn parse_price_csv_with_ticker(
    path: &Path,
    ticker: Option<&str>,
) -> Result<PriceSeries, MarketDataError> {
    let file = fs::File::open(path).map_err(|source| MarketDataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let ticker = ticker
        .map(str::to_owned)
        .or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "UNKNOWN".to_owned());
    parse_price_reader(io::BufReader::new(file), &ticker)
}

/// Core parser. Data rows are numbered from 1 (the header is row 0) in error
/// messages. Dates must be strictly increasing and prices strictly positive.
pub fn parse_price_reader<R: BufRead>(
    reader: R,
    ticker: &str,
) -> Result<PriceSeries, MarketDataError> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(Ok(line)) => line,
        Some(Err(source)) => {
            return Err(MarketDataError::Io { path: ticker.to_owned(), source })
        }
        None => return Err(MarketDataError::BadHeader { found: String::new() }),
    };
    let header = header.trim_end_matches('\r');
    if header != "date,adj_close" {
        return Err(MarketDataError::BadHeader { found: header.to_owned() });
    }

    let mut dates = Vec::new();
    let mut closes = Vec::new();
    let mut row = 0usize;
    for line in lines {
        let line = line.map_err(|source| MarketDataError::Io {
            path: ticker.to_owned(),
            source,
        })?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue; // tolerate a trailing newline
        }
        row += 1;
        let (date_str, close_str) = line.split_once(',').ok_or(MarketDataError::Row {
            row,
            message: format!("expected `date,adj_close`, found `{line}`"),
        })?;
        let date = parse_iso_date(date_str).ok_or(MarketDataError::Row {
            row,
            message: format!("unparsable date `{date_str}`"),
        })?;
        let close: f64 = close_str.trim().parse().map_err(|_| MarketDataError::Row {
            row,
            message: format!("unparsable price `{close_str}`"),
        })?;
        if !close.is_finite() {
            return Err(MarketDataError::Row {
                row,
                message: format!("non-finite price `{close_str}`"),
            });
        }
        if close <= 0.0 {
            return Err(MarketDataError::Row {
                row,
                message: format!("non-positive price {close}"),
            });
        }
        if let Some(&prev) = dates.last() {
            if date <= prev {
                return Err(MarketDataError::Row {
                    row,
                    message: format!(
                        "dates not strictly increasing: {prev} then {date}"
                    ),
                });
            }
        }
        dates.push(date);
        closes.push(close);
    }

    if closes.len() < 2 {
        return Err(MarketDataError::TooFewRows { rows: closes.len() });
    }
    Ok(PriceSeries { ticker: ticker.to_owned(), dates, closes })
}

/// Strict `YYYY-MM-DD`: exactly 10 chars, zero-padded, calendar-valid.
fn parse_iso_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    let b = s.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return None;
    }
    if !b.iter().enumerate().all(|(i, &c)| i == 4 || i == 7 || c.is_ascii_digit()) {
        return None;
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

/// Serializes back to the input format. `{}` on f64 prints the shortest
/// string that reparses to the same bits, so parse -> write -> parse is
/// lossless.
pub fn price_csv_string(series: &PriceSeries) -> String {
    let mut out = String::with_capacity(series.len() * 24 + 16);
    out.push_str("date,adj_close\n");
    for (d, c) in series.dates.iter().zip(&series.closes) {
        out.push_str(&format!("{d},{c}\n"));
    }
    out
}

pub fn write_price_csv(series: &PriceSeries, path: &Path) -> Result<(), MarketDataError> {
    let mut file = fs::File::create(path).map_err(|source| MarketDataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(price_csv_string(series).as_bytes())
        .map_err(|source| MarketDataError::Io { path: path.display().to_string(), source })
}
