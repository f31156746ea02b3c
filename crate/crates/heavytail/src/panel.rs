//! Fund-month panel ingestion and cross-section construction.
//!
//! A panel is a flat list of [`FundRecord`]s read from delimited text. The
//! preparation pipeline is: drop rows without an asset value, keep funds
//! whose portfolio is mostly stocks, deflate every asset value to the base
//! month with a CPI table, then cut dated cross-sections ([`SizeSample`])
//! and summarize them.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Calendar year-month, the panel's time axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    year: i32,
    month: u8,
}

/// Records before this are not accepted; the data source starts in 1961.
const MIN_MONTH: YearMonth = YearMonth {
    year: 1961,
    month: 1,
};
/// Fixed far upper bound so validation never depends on the wall clock.
const MAX_MONTH: YearMonth = YearMonth {
    year: 2100,
    month: 12,
};

impl YearMonth {
    pub fn new(year: i32, month: u8) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Config(format!("month {month} outside 1..=12")));
        }
        let ym = YearMonth { year, month };
        if ym < MIN_MONTH || ym > MAX_MONTH {
            return Err(Error::Config(format!(
                "{ym} outside the supported range [{MIN_MONTH}, {MAX_MONTH}]"
            )));
        }
        Ok(ym)
    }

    pub fn december(year: i32) -> Result<Self> {
        YearMonth::new(year, 12)
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn month(&self) -> u8 {
        self.month
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| Error::Config(format!("month '{s}' is not YYYY-MM")))?;
        let year: i32 = y
            .parse()
            .map_err(|_| Error::Config(format!("month '{s}' is not YYYY-MM")))?;
        let month: u8 = m
            .parse()
            .map_err(|_| Error::Config(format!("month '{s}' is not YYYY-MM")))?;
        YearMonth::new(year, month)
    }
}

impl Serialize for YearMonth {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One fund-month observation.
#[derive(Debug, Clone, PartialEq)]
pub struct FundRecord {
    pub fund_id: String,
    pub month: YearMonth,
    /// Total assets managed, millions, nominal unless already deflated.
    pub tasm: f64,
    /// Net asset value per share; informational, never deflated.
    pub nav: Option<f64>,
    /// Fraction of the portfolio held in stocks, in [0, 1].
    pub equity_fraction: f64,
}

/// Consumer-price index table used to deflate nominal asset values.
#[derive(Debug, Clone)]
pub struct CpiTable {
    index: BTreeMap<YearMonth, f64>,
    base_month: YearMonth,
}

impl CpiTable {
    pub fn new(index: BTreeMap<YearMonth, f64>, base_month: YearMonth) -> Result<Self> {
        for (month, value) in &index {
            if !value.is_finite() || *value <= 0.0 {
                return Err(Error::Parameter {
                    name: "cpi",
                    value: *value,
                    reason: "index values must be positive and finite",
                });
            }
            let _ = month;
        }
        if !index.contains_key(&base_month) {
            return Err(Error::MissingCpiMonth {
                month: base_month.to_string(),
            });
        }
        Ok(CpiTable { index, base_month })
    }

    /// Reads a two-column `month,index` file.
    pub fn from_csv_path(path: &Path, base_month: YearMonth) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        check_schema(reader.headers()?, &["month", "index"])?;
        let mut index = BTreeMap::new();
        for row in reader.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let month: YearMonth = field(&row, 0, line, "month")?
                .parse()
                .map_err(|e| malformed(line, &format!("{e}")))?;
            let value: f64 = parse_f64(field(&row, 1, line, "index")?, line, "index")?;
            index.insert(month, value);
        }
        CpiTable::new(index, base_month)
    }

    pub fn base_month(&self) -> YearMonth {
        self.base_month
    }

    /// Deflator for `month`: index[base] / index[month].
    pub fn ratio(&self, month: YearMonth) -> Result<f64> {
        let base = self.index[&self.base_month];
        let at = self
            .index
            .get(&month)
            .ok_or_else(|| Error::MissingCpiMonth {
                month: month.to_string(),
            })?;
        Ok(base / at)
    }
}

/// A cross-section of positive sizes at one date, sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeSample {
    as_of: YearMonth,
    sizes: Vec<f64>,
    /// Records that fed the cross-section before zero-size exclusion.
    source_count: usize,
}

impl SizeSample {
    pub fn new(as_of: YearMonth, mut sizes: Vec<f64>, source_count: usize) -> Result<Self> {
        for &s in &sizes {
            if !s.is_finite() || s <= 0.0 {
                return Err(Error::Domain(format!("sample size {s} is not positive")));
            }
        }
        sizes.sort_by(f64::total_cmp);
        Ok(SizeSample {
            as_of,
            sizes,
            source_count,
        })
    }

    pub fn as_of(&self) -> YearMonth {
        self.as_of
    }

    pub fn sizes(&self) -> &[f64] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn source_count(&self) -> usize {
        self.source_count
    }

    /// The sorted slice of values at or above `s_min`.
    pub fn tail(&self, s_min: f64) -> &[f64] {
        let start = self.sizes.partition_point(|&s| s < s_min);
        &self.sizes[start..]
    }
}

/// Result of reading a panel file: parsed records plus the count of rows
/// dropped for having no asset value.
#[derive(Debug, Clone)]
pub struct PanelLoad {
    pub records: Vec<FundRecord>,
    pub dropped_missing_tasm: usize,
}

const PANEL_COLUMNS: [&str; 5] = ["fund_id", "month", "tasm_millions", "nav", "equity_fraction"];

/// Loads a `fund_id,month,tasm_millions,nav,equity_fraction` file.
///
/// Rows with an empty `tasm_millions` field are dropped and counted; any
/// other defect is a hard error naming the line.
pub fn load_fund_records(path: &Path) -> Result<PanelLoad> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    check_schema(reader.headers()?, &PANEL_COLUMNS)?;
    let mut records = Vec::new();
    let mut dropped = 0usize;
    for row in reader.records() {
        let row = row.map_err(csv_row_error)?;
        let line = row.position().map_or(0, |p| p.line());
        let fund_id = field(&row, 0, line, "fund_id")?;
        if fund_id.is_empty() {
            return Err(malformed(line, "empty fund_id"));
        }
        let month: YearMonth = field(&row, 1, line, "month")?
            .parse()
            .map_err(|e| malformed(line, &format!("{e}")))?;
        let tasm_raw = field(&row, 2, line, "tasm_millions")?;
        if tasm_raw.is_empty() {
            dropped += 1;
            continue;
        }
        let tasm = parse_f64(tasm_raw, line, "tasm_millions")?;
        if tasm < 0.0 {
            return Err(malformed(line, "tasm_millions must be non-negative"));
        }
        let nav_raw = field(&row, 3, line, "nav")?;
        let nav = if nav_raw.is_empty() {
            None
        } else {
            let v = parse_f64(nav_raw, line, "nav")?;
            if v < 0.0 {
                return Err(malformed(line, "nav must be non-negative"));
            }
            Some(v)
        };
        let equity_fraction = parse_f64(field(&row, 4, line, "equity_fraction")?, line, "equity_fraction")?;
        if !(0.0..=1.0).contains(&equity_fraction) {
            return Err(malformed(line, "equity_fraction must be in [0, 1]"));
        }
        records.push(FundRecord {
            fund_id: fund_id.to_string(),
            month,
            tasm,
            nav,
            equity_fraction,
        });
    }
    Ok(PanelLoad {
        records,
        dropped_missing_tasm: dropped,
    })
}

/// Loads a one-column `size_millions` sample file.
pub fn load_size_sample(path: &Path, as_of: YearMonth) -> Result<SizeSample> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    check_schema(reader.headers()?, &["size_millions"])?;
    let mut sizes = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_row_error)?;
        let line = row.position().map_or(0, |p| p.line());
        let s = parse_f64(field(&row, 0, line, "size_millions")?, line, "size_millions")?;
        if !s.is_finite() || s <= 0.0 {
            return Err(malformed(line, "size_millions must be positive"));
        }
        sizes.push(s);
    }
    let n = sizes.len();
    SizeSample::new(as_of, sizes, n)
}

/// Deflates every record to the CPI base month: tasm' = tasm × base/month.
pub fn adjust_inflation(records: &[FundRecord], cpi: &CpiTable) -> Result<Vec<FundRecord>> {
    records
        .iter()
        .map(|r| {
            let ratio = cpi.ratio(r.month)?;
            Ok(FundRecord {
                tasm: r.tasm * ratio,
                ..r.clone()
            })
        })
        .collect()
}

/// Keeps records whose equity fraction is at least `threshold` (inclusive).
pub fn filter_equity(records: Vec<FundRecord>, threshold: f64) -> Result<Vec<FundRecord>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Parameter {
            name: "threshold",
            value: threshold,
            reason: "equity threshold must be in [0, 1]",
        });
    }
    Ok(records
        .into_iter()
        .filter(|r| r.equity_fraction >= threshold)
        .collect())
}

/// Cross-section of funds with a record in exactly `month`.
///
/// One value per fund; a fund with duplicate records for the month
/// contributes its largest value, so the result is independent of input
/// order. Zero sizes are excluded from the sample but counted in
/// `source_count`.
pub fn month_snapshot(records: &[FundRecord], month: YearMonth) -> Result<SizeSample> {
    let mut per_fund: HashMap<&str, f64> = HashMap::new();
    for r in records {
        if r.month == month {
            per_fund
                .entry(r.fund_id.as_str())
                .and_modify(|t| *t = t.max(r.tasm))
                .or_insert(r.tasm);
        }
    }
    if per_fund.is_empty() {
        return Err(Error::EmptySnapshot {
            month: month.to_string(),
        });
    }
    let source_count = per_fund.len();
    let sizes: Vec<f64> = per_fund.into_values().filter(|&t| t > 0.0).collect();
    SizeSample::new(month, sizes, source_count)
}

/// Funds existing at the end of `year`: those with a December record.
pub fn year_end_snapshot(records: &[FundRecord], year: i32) -> Result<SizeSample> {
    month_snapshot(records, YearMonth::december(year)?)
}

/// Logarithm convention for the log-size summary rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    Natural,
    Base10,
}

impl fmt::Display for LogBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogBase::Natural => write!(f, "natural"),
            LogBase::Base10 => write!(f, "base10"),
        }
    }
}

impl FromStr for LogBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "natural" => Ok(LogBase::Natural),
            "base10" => Ok(LogBase::Base10),
            other => Err(Error::Config(format!(
                "log base '{other}' is neither 'natural' nor 'base10'"
            ))),
        }
    }
}

/// Cross-sectional moments of a [`SizeSample`].
///
/// Standard deviations use the population (1/N) convention. Sizes are in
/// millions; the size standard deviation is reported in billions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryStats {
    pub n_funds: usize,
    pub mean_size_millions: f64,
    pub std_size_billions: f64,
    pub mean_log_size: f64,
    pub std_log_size: f64,
}

pub fn summary_stats(sample: &SizeSample) -> Result<SummaryStats> {
    summary_stats_with_base(sample, LogBase::Natural)
}

pub fn summary_stats_with_base(sample: &SizeSample, base: LogBase) -> Result<SummaryStats> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let logs: Vec<f64> = sample
        .sizes()
        .iter()
        .map(|&s| match base {
            LogBase::Natural => s.ln(),
            LogBase::Base10 => s.log10(),
        })
        .collect();
    let (mean_size, std_size) = population_moments(sample.sizes());
    let (mean_log, std_log) = population_moments(&logs);
    Ok(SummaryStats {
        n_funds: sample.len(),
        mean_size_millions: mean_size,
        std_size_billions: std_size / 1000.0,
        mean_log_size: mean_log,
        std_log_size: std_log,
    })
}

fn population_moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn check_schema(headers: &csv::StringRecord, wanted: &[&str]) -> Result<()> {
    let missing: Vec<String> = wanted
        .iter()
        .filter(|w| !headers.iter().any(|h| h == **w))
        .map(|w| w.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::SchemaMismatch { missing });
    }
    // Column order is part of the format.
    for (i, w) in wanted.iter().enumerate() {
        if headers.get(i) != Some(*w) {
            return Err(Error::SchemaMismatch {
                missing: vec![format!("column {i} must be '{w}'")],
            });
        }
    }
    Ok(())
}

fn field<'a>(row: &'a csv::StringRecord, i: usize, line: u64, name: &str) -> Result<&'a str> {
    row.get(i)
        .ok_or_else(|| malformed(line, &format!("missing field '{name}'")))
}

fn parse_f64(raw: &str, line: u64, name: &str) -> Result<f64> {
    raw.parse::<f64>()
        .map_err(|_| malformed(line, &format!("field '{name}' is not a number: '{raw}'")))
}

fn malformed(line: u64, reason: &str) -> Error {
    Error::MalformedRow {
        line,
        reason: reason.to_string(),
    }
}

fn csv_row_error(e: csv::Error) -> Error {
    if let csv::ErrorKind::UnequalLengths { pos, .. } = e.kind() {
        return Error::MalformedRow {
            line: pos.as_ref().map_or(0, |p| p.line()),
            reason: "wrong number of fields".to_string(),
        };
    }
    Error::Csv(e)
}
