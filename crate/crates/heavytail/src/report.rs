//! Figure-ready data series and yearly summary tables.
//!
//! Nothing here renders graphics; the emitters produce plain two-column
//! series (CCDF and QQ data) and a delimited summary table with one row
//! per year, ready for any plotting tool.

use crate::dist::TailDistribution;
use crate::error::{Error, Result};
use crate::fit::{
    fit_lognormal_tail, scan_smin_with_floor, LogNormalTailFit, ParetoTailFit, DEFAULT_MIN_TAIL,
};
use crate::gof::{bootstrap_pvalue_with, log_likelihood_ratio, GofConfig, GofResult, ReplicateMode};
use crate::panel::{
    adjust_inflation, filter_equity, month_snapshot, summary_stats_with_base, CpiTable,
    FundRecord, LogBase, SizeSample, SummaryStats, YearMonth,
};
use crate::rng::derive_seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

/// Axis handling hint attached to an emitted series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisTransform {
    Linear,
    Log10,
}

impl fmt::Display for AxisTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AxisTransform::Linear => write!(f, "linear"),
            AxisTransform::Log10 => write!(f, "log10"),
        }
    }
}

/// One plottable series: ordered points plus per-axis transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureSeries {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub x_transform: AxisTransform,
    pub y_transform: AxisTransform,
}

/// Empirical survival points (s_(i), (n-i)/n) over ascending order
/// statistics, for double-logarithmic plotting.
///
/// The largest order statistic's survival value is zero and cannot sit on
/// a log axis, so the series stops at the second-largest point; its last y
/// value is 1/n.
pub fn ccdf_points(sample: &SizeSample) -> Result<FigureSeries> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let sizes = sample.sizes();
    let n = sizes.len() as f64;
    let points = sizes[..sizes.len() - 1]
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, (n - (i + 1) as f64) / n))
        .collect();
    Ok(FigureSeries {
        label: format!("ccdf_{}", sample.as_of()),
        points,
        x_transform: AxisTransform::Log10,
        y_transform: AxisTransform::Log10,
    })
}

/// Straight-line reference for double-log CCDF plots: an algebraic decay
/// with the given exponent, anchored at the empirical survival value at
/// `anchor`.
pub fn power_reference_series(
    sample: &SizeSample,
    exponent: f64,
    anchor: f64,
) -> Result<FigureSeries> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let sizes = sample.sizes();
    let n = sizes.len() as f64;
    let above = sizes.iter().filter(|&&s| s > anchor).count() as f64;
    if above == 0.0 {
        return Err(Error::Domain(format!(
            "no observations above the reference anchor {anchor}"
        )));
    }
    let y_anchor = above / n;
    let max = sizes[sizes.len() - 1];
    let steps = 50usize;
    let log_lo = anchor.ln();
    let log_hi = max.ln();
    let points = (0..=steps)
        .map(|k| {
            let x = (log_lo + (log_hi - log_lo) * k as f64 / steps as f64).exp();
            (x, y_anchor * (x / anchor).powf(exponent))
        })
        .collect();
    Ok(FigureSeries {
        label: format!("reference_pow{exponent}"),
        points,
        x_transform: AxisTransform::Log10,
        y_transform: AxisTransform::Log10,
    })
}

/// Quantile-quantile series of the tail against a fitted model.
///
/// x is the base-10 log of the i-th tail order statistic, y the base-10
/// log of the model quantile at plotting position (i - 0.5)/n_tail. A
/// perfectly matching model puts every point on y = x.
pub fn qq_points(
    sample: &SizeSample,
    model: &dyn TailDistribution,
    s_min: f64,
) -> Result<FigureSeries> {
    let tail = sample.tail(s_min);
    if tail.len() < 2 {
        return Err(Error::InsufficientTail {
            needed: 2,
            got: tail.len(),
        });
    }
    let m = tail.len() as f64;
    let mut points = Vec::with_capacity(tail.len());
    for (i, &s) in tail.iter().enumerate() {
        let u = (i as f64 + 0.5) / m;
        let q = model.quantile(u)?;
        points.push((s.log10(), q.log10()));
    }
    Ok(FigureSeries {
        label: "qq".to_string(),
        points,
        x_transform: AxisTransform::Linear,
        y_transform: AxisTransform::Linear,
    })
}

/// Writes a series as a header line (label and transforms) followed by
/// tab-separated x/y rows.
pub fn write_figure_series<W: Write>(w: &mut W, series: &FigureSeries) -> Result<()> {
    writeln!(
        w,
        "label={}\tx={}\ty={}",
        series.label, series.x_transform, series.y_transform
    )?;
    for (x, y) in &series.points {
        writeln!(w, "{x}\t{y}")?;
    }
    Ok(())
}

/// Whether a year's row comes from the December cross-section or from
/// averaging twelve monthly cross-sections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotMode {
    YearEnd,
    MonthlyAverage,
}

impl fmt::Display for SnapshotMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SnapshotMode::YearEnd => write!(f, "year_end"),
            SnapshotMode::MonthlyAverage => write!(f, "monthly_average"),
        }
    }
}

impl FromStr for SnapshotMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "year_end" => Ok(SnapshotMode::YearEnd),
            "monthly_average" => Ok(SnapshotMode::MonthlyAverage),
            other => Err(Error::Config(format!(
                "snapshot mode '{other}' is neither 'year_end' nor 'monthly_average'"
            ))),
        }
    }
}

/// Knobs of a yearly-table run. Echoed into every output for
/// reproducibility; the worker count is deliberately not part of this
/// because it cannot affect any result.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ReportConfig {
    pub threshold: f64,
    pub n_replicates: usize,
    pub master_seed: u64,
    pub replicate_mode: ReplicateMode,
    pub snapshot_mode: SnapshotMode,
    pub min_tail: usize,
    pub log_base: LogBase,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            threshold: 0.80,
            n_replicates: 10_000,
            master_seed: 0,
            replicate_mode: ReplicateMode::Semiparametric,
            snapshot_mode: SnapshotMode::YearEnd,
            min_tail: DEFAULT_MIN_TAIL,
            log_base: LogBase::Natural,
        }
    }
}

/// One row of the yearly summary table.
#[derive(Debug, Clone, Copy)]
pub struct YearlySummaryRow {
    pub year: i32,
    pub n_funds: usize,
    pub mean_size_millions: f64,
    pub std_size_billions: f64,
    pub mean_log_size: f64,
    pub std_log_size: f64,
    pub zeta: f64,
    pub s_min: f64,
    pub n_tail: usize,
    pub p_value: f64,
    pub r_base10: f64,
    pub replicate_mode: ReplicateMode,
    pub seed: u64,
    pub valid: bool,
}

impl YearlySummaryRow {
    fn invalid(year: i32, mode: ReplicateMode, seed: u64) -> Self {
        YearlySummaryRow {
            year,
            n_funds: 0,
            mean_size_millions: f64::NAN,
            std_size_billions: f64::NAN,
            mean_log_size: f64::NAN,
            std_log_size: f64::NAN,
            zeta: f64::NAN,
            s_min: f64::NAN,
            n_tail: 0,
            p_value: f64::NAN,
            r_base10: f64::NAN,
            replicate_mode: mode,
            seed,
            valid: false,
        }
    }

    /// Bitwise equality, treating NaN fields as equal to themselves.
    pub fn same_bits(&self, other: &Self) -> bool {
        self.year == other.year
            && self.n_funds == other.n_funds
            && self.n_tail == other.n_tail
            && self.replicate_mode == other.replicate_mode
            && self.seed == other.seed
            && self.valid == other.valid
            && [
                (self.mean_size_millions, other.mean_size_millions),
                (self.std_size_billions, other.std_size_billions),
                (self.mean_log_size, other.mean_log_size),
                (self.std_log_size, other.std_log_size),
                (self.zeta, other.zeta),
                (self.s_min, other.s_min),
                (self.p_value, other.p_value),
                (self.r_base10, other.r_base10),
            ]
            .iter()
            .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Everything computed for one valid year-end cross-section, kept so
/// callers can emit figure series without refitting.
#[derive(Debug, Clone)]
pub struct YearDetail {
    pub sample: SizeSample,
    pub pareto: ParetoTailFit,
    pub lognormal: LogNormalTailFit,
    pub gof: GofResult,
}

/// Outcome of one panel year: the table row, the failure messages that
/// made it invalid (if any), and fit details for figure emission when the
/// year-end mode produced a single cross-section.
#[derive(Debug, Clone)]
pub struct YearOutcome {
    pub row: YearlySummaryRow,
    pub errors: Vec<String>,
    pub detail: Option<YearDetail>,
}

/// Runs the full per-year pipeline over the panel: cross-section,
/// summary moments, cutoff scan, both tail fits, bootstrap p-value, and
/// the likelihood ratio at the shared cutoff.
///
/// A failed year produces an invalid-flagged row and its error messages;
/// other years are unaffected. Output order follows `years`.
pub fn yearly_table(
    records: &[FundRecord],
    cpi: &CpiTable,
    years: &[i32],
    config: &ReportConfig,
) -> Result<Vec<YearOutcome>> {
    let filtered = filter_equity(records.to_vec(), config.threshold)?;
    let outcomes: Vec<YearOutcome> = years
        .par_iter()
        .map(|&year| run_year(&filtered, cpi, year, config))
        .collect();
    Ok(outcomes)
}

fn run_year(
    filtered: &[FundRecord],
    cpi: &CpiTable,
    year: i32,
    config: &ReportConfig,
) -> YearOutcome {
    let seed = derive_seed(config.master_seed, year as u64);
    match config.snapshot_mode {
        SnapshotMode::YearEnd => match run_cross_section(filtered, cpi, year, 12, seed, config) {
            Ok((pieces, detail)) => YearOutcome {
                row: pieces.into_row(year, config, seed),
                errors: Vec::new(),
                detail: Some(detail),
            },
            Err(e) => YearOutcome {
                row: YearlySummaryRow::invalid(year, config.replicate_mode, seed),
                errors: vec![e.to_string()],
                detail: None,
            },
        },
        SnapshotMode::MonthlyAverage => {
            let mut monthly: Vec<RowPieces> = Vec::new();
            let mut errors = Vec::new();
            for month in 1..=12u8 {
                let present = filtered
                    .iter()
                    .any(|r| r.month.year() == year && r.month.month() == month);
                if !present {
                    continue;
                }
                let month_seed = derive_seed(seed, month as u64);
                match run_cross_section(filtered, cpi, year, month, month_seed, config) {
                    Ok((pieces, _)) => monthly.push(pieces),
                    Err(e) => errors.push(format!("{year}-{month:02}: {e}")),
                }
            }
            if monthly.is_empty() {
                errors.push(format!("{year}: no month produced a valid cross-section"));
                return YearOutcome {
                    row: YearlySummaryRow::invalid(year, config.replicate_mode, seed),
                    errors,
                    detail: None,
                };
            }
            YearOutcome {
                row: RowPieces::average(&monthly).into_row(year, config, seed),
                errors,
                detail: None,
            }
        }
    }
}

/// The per-cross-section numbers that become table columns.
struct RowPieces {
    stats: SummaryStats,
    zeta: f64,
    s_min: f64,
    n_tail: usize,
    p_value: f64,
    r_base10: f64,
}

impl RowPieces {
    fn into_row(self, year: i32, config: &ReportConfig, seed: u64) -> YearlySummaryRow {
        YearlySummaryRow {
            year,
            n_funds: self.stats.n_funds,
            mean_size_millions: self.stats.mean_size_millions,
            std_size_billions: self.stats.std_size_billions,
            mean_log_size: self.stats.mean_log_size,
            std_log_size: self.stats.std_log_size,
            zeta: self.zeta,
            s_min: self.s_min,
            n_tail: self.n_tail,
            p_value: self.p_value,
            r_base10: self.r_base10,
            replicate_mode: config.replicate_mode,
            seed,
            valid: true,
        }
    }

    /// Plain arithmetic mean of each column over the months that fit;
    /// counts are rounded to the nearest integer.
    fn average(monthly: &[Self]) -> Self {
        let k = monthly.len() as f64;
        let mean = |f: &dyn Fn(&Self) -> f64| monthly.iter().map(f).sum::<f64>() / k;
        RowPieces {
            stats: SummaryStats {
                n_funds: mean(&|p| p.stats.n_funds as f64).round() as usize,
                mean_size_millions: mean(&|p| p.stats.mean_size_millions),
                std_size_billions: mean(&|p| p.stats.std_size_billions),
                mean_log_size: mean(&|p| p.stats.mean_log_size),
                std_log_size: mean(&|p| p.stats.std_log_size),
            },
            zeta: mean(&|p| p.zeta),
            s_min: mean(&|p| p.s_min),
            n_tail: mean(&|p| p.n_tail as f64).round() as usize,
            p_value: mean(&|p| p.p_value),
            r_base10: mean(&|p| p.r_base10),
        }
    }
}

fn run_cross_section(
    filtered: &[FundRecord],
    cpi: &CpiTable,
    year: i32,
    month: u8,
    seed: u64,
    config: &ReportConfig,
) -> Result<(RowPieces, YearDetail)> {
    let ym = YearMonth::new(year, month)?;
    let subset: Vec<FundRecord> = filtered
        .iter()
        .filter(|r| r.month == ym)
        .cloned()
        .collect();
    let adjusted = adjust_inflation(&subset, cpi)?;
    let sample = month_snapshot(&adjusted, ym)?;
    let stats = summary_stats_with_base(&sample, config.log_base)?;
    let pareto = scan_smin_with_floor(&sample, None, config.min_tail)?;
    let lognormal = fit_lognormal_tail(&sample, pareto.s_min)?;
    let gof = bootstrap_pvalue_with(
        &sample,
        &pareto,
        &GofConfig {
            n_replicates: config.n_replicates,
            master_seed: seed,
            mode: config.replicate_mode,
            min_tail: config.min_tail,
        },
    )?;
    let ratio = log_likelihood_ratio(&sample, &pareto, &lognormal)?;
    Ok((
        RowPieces {
            stats,
            zeta: pareto.zeta_hat,
            s_min: pareto.s_min,
            n_tail: pareto.n_tail,
            p_value: gof.p_value,
            r_base10: ratio.r_base10,
        },
        YearDetail {
            sample,
            pareto,
            lognormal,
            gof,
        },
    ))
}

pub const TABLE_HEADER: &str = "year,N,E_s_millions,Std_s_billions,E_omega,Std_omega,zeta,s_min,N_tail,p_value,R_log10,replicate_mode,seed,valid";

/// Writes the summary table in its fixed column layout. Floats use the
/// shortest representation that parses back to the identical bits.
pub fn write_table<W: Write>(w: &mut W, rows: &[YearlySummaryRow]) -> Result<()> {
    writeln!(w, "{TABLE_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.year,
            r.n_funds,
            r.mean_size_millions,
            r.std_size_billions,
            r.mean_log_size,
            r.std_log_size,
            r.zeta,
            r.s_min,
            r.n_tail,
            r.p_value,
            r.r_base10,
            r.replicate_mode,
            r.seed,
            r.valid
        )?;
    }
    Ok(())
}

/// Parses a table written by [`write_table`] back into rows.
pub fn read_table<R: BufRead>(r: R) -> Result<Vec<YearlySummaryRow>> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header != TABLE_HEADER {
        return Err(Error::SchemaMismatch {
            missing: vec![format!("expected table header '{TABLE_HEADER}'")],
        });
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 14 {
            return Err(Error::MalformedRow {
                line: i as u64 + 2,
                reason: format!("expected 14 fields, got {}", fields.len()),
            });
        }
        let bad = |what: &str| Error::MalformedRow {
            line: i as u64 + 2,
            reason: format!("unparseable {what}"),
        };
        rows.push(YearlySummaryRow {
            year: fields[0].parse().map_err(|_| bad("year"))?,
            n_funds: fields[1].parse().map_err(|_| bad("N"))?,
            mean_size_millions: fields[2].parse().map_err(|_| bad("E_s_millions"))?,
            std_size_billions: fields[3].parse().map_err(|_| bad("Std_s_billions"))?,
            mean_log_size: fields[4].parse().map_err(|_| bad("E_omega"))?,
            std_log_size: fields[5].parse().map_err(|_| bad("Std_omega"))?,
            zeta: fields[6].parse().map_err(|_| bad("zeta"))?,
            s_min: fields[7].parse().map_err(|_| bad("s_min"))?,
            n_tail: fields[8].parse().map_err(|_| bad("N_tail"))?,
            p_value: fields[9].parse().map_err(|_| bad("p_value"))?,
            r_base10: fields[10].parse().map_err(|_| bad("R_log10"))?,
            replicate_mode: fields[11].parse()?,
            seed: fields[12].parse().map_err(|_| bad("seed"))?,
            valid: fields[13].parse().map_err(|_| bad("valid"))?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::ParetoTail;

    fn sample(values: Vec<f64>) -> SizeSample {
        let n = values.len();
        SizeSample::new(YearMonth::new(1998, 12).unwrap(), values, n).unwrap()
    }

    #[test]
    fn ccdf_of_two_points_has_survival_half() {
        let series = ccdf_points(&sample(vec![1.0, 10.0])).unwrap();
        assert_eq!(series.points, vec![(1.0, 0.5)]);
        assert_eq!(series.x_transform, AxisTransform::Log10);
    }

    #[test]
    fn ccdf_drops_the_zero_survival_point_and_ends_at_one_over_n() {
        let series = ccdf_points(&sample(vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(series.points.len(), 3);
        let last = series.points.last().unwrap();
        assert_eq!(last.0, 3.0);
        assert!((last.1 - 0.25).abs() < 1e-15);
        // Non-increasing in x.
        for pair in series.points.windows(2) {
            assert!(pair[1].1 <= pair[0].1);
            assert!(pair[1].0 >= pair[0].0);
        }
    }

    #[test]
    fn ccdf_of_empty_sample_errors() {
        let empty = SizeSample::new(YearMonth::new(1998, 12).unwrap(), vec![], 0).unwrap();
        assert!(matches!(ccdf_points(&empty), Err(Error::EmptySample)));
    }

    #[test]
    fn qq_points_on_exact_quantiles_fall_on_the_diagonal() {
        let model = ParetoTail::new(1.0, 1.0).unwrap();
        let n = 25;
        let values: Vec<f64> = (1..=n)
            .map(|i| model.quantile((i as f64 - 0.5) / n as f64).unwrap())
            .collect();
        let series = qq_points(&sample(values), &model, 1.0).unwrap();
        assert_eq!(series.points.len(), n);
        for (x, y) in series.points {
            assert!((y - x).abs() < 1e-9, "({x}, {y}) off the diagonal");
        }
    }

    #[test]
    fn qq_with_two_tail_points_emits_exactly_two() {
        let model = ParetoTail::new(1.0, 5.0).unwrap();
        let series = qq_points(&sample(vec![1.0, 6.0, 9.0]), &model, 5.0).unwrap();
        assert_eq!(series.points.len(), 2);
        assert!(qq_points(&sample(vec![1.0, 6.0]), &model, 5.0).is_err());
    }

    #[test]
    fn qq_x_series_is_non_decreasing() {
        let model = ParetoTail::new(1.3, 2.0).unwrap();
        let values: Vec<f64> = (0..40).map(|i| 2.0 + i as f64).collect();
        let series = qq_points(&sample(values), &model, 2.0).unwrap();
        for pair in series.points.windows(2) {
            assert!(pair[1].0 >= pair[0].0);
        }
    }

    #[test]
    fn reference_series_is_anchored_at_the_empirical_ccdf() {
        let values: Vec<f64> = (1..=200).map(|i| i as f64).collect();
        let s = sample(values);
        let series = power_reference_series(&s, -1.0, 100.0).unwrap();
        let (x0, y0) = series.points[0];
        assert!((x0 - 100.0).abs() < 1e-9);
        assert!((y0 - 0.5).abs() < 1e-12);
        // Slope -1 in log-log space.
        let (x1, y1) = *series.points.last().unwrap();
        let slope = (y1.ln() - y0.ln()) / (x1.ln() - x0.ln());
        assert!((slope + 1.0).abs() < 1e-12);
    }

    #[test]
    fn reference_series_requires_mass_above_anchor() {
        let s = sample(vec![1.0, 2.0, 3.0]);
        assert!(power_reference_series(&s, -1.0, 100.0).is_err());
    }

    #[test]
    fn figure_series_writer_format() {
        let series = FigureSeries {
            label: "demo".into(),
            points: vec![(1.0, 0.5), (2.0, 0.25)],
            x_transform: AxisTransform::Log10,
            y_transform: AxisTransform::Linear,
        };
        let mut buf = Vec::new();
        write_figure_series(&mut buf, &series).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "label=demo\tx=log10\ty=linear\n1\t0.5\n2\t0.25\n");
    }

    #[test]
    #[allow(clippy::excessive_precision)] // values chosen to stress shortest round-trip printing
    fn table_round_trips_exactly_including_invalid_rows() {
        let rows = vec![
            YearlySummaryRow {
                year: 1998,
                n_funds: 4885,
                mean_size_millions: 619.607421875,
                std_size_billions: 3.3800000000001,
                mean_log_size: 3.85,
                std_log_size: 2.51,
                zeta: 1.1000000000000001,
                s_min: 1945.0,
                n_tail: 283,
                p_value: 0.11,
                r_base10: -1.29,
                replicate_mode: ReplicateMode::Semiparametric,
                seed: 123456789,
                valid: true,
            },
            YearlySummaryRow::invalid(1999, ReplicateMode::TailOnly, 42),
        ];
        let mut buf = Vec::new();
        write_table(&mut buf, &rows).unwrap();
        let parsed = read_table(std::io::Cursor::new(&buf)).unwrap();
        assert_eq!(parsed.len(), rows.len());
        for (a, b) in rows.iter().zip(&parsed) {
            assert!(a.same_bits(b), "{a:?} != {b:?}");
        }
    }

    #[test]
    fn table_reader_rejects_wrong_header() {
        let text = "year,N\n";
        assert!(read_table(std::io::Cursor::new(text)).is_err());
    }
}
