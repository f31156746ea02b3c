//! The `heavytail` executable: ingest, fit, gof, compare, synth, report.
//!
//! Every subcommand echoes its configuration into its outputs, seeds all
//! randomness from `--seed`, and produces byte-identical files at any
//! `--workers` setting. Exit codes: 0 ok, 1 configuration, 2 data,
//! 3 numerical.

use crate::dist::{LogNormalTail, ParetoTail, TailDistribution};
use crate::error::{Error, ExitClass, Result};
use crate::fit::{fit_lognormal_tail, fit_pareto_given_smin, scan_smin_with_floor};
use crate::gof::{bootstrap_pvalue_with, log_likelihood_ratio, GofConfig, ReplicateMode};
use crate::panel::{
    adjust_inflation, filter_equity, load_fund_records, load_size_sample, CpiTable, FundRecord, SizeSample, YearMonth,
};
use crate::report::{
    ccdf_points, power_reference_series, qq_points, write_figure_series, write_table,
    ReportConfig, YearOutcome,
};
use crate::rng::RandomStream;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

/// Environment variable that overrides the default worker count.
pub const WORKERS_ENV: &str = "HEAVYTAIL_WORKERS";

#[derive(Parser)]
#[command(
    name = "heavytail",
    version,
    about = "Power-law vs truncated log-normal tail analysis for positive size data"
)]
struct Cli {
    /// Worker threads; falls back to HEAVYTAIL_WORKERS, then to all cores
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a fund panel, apply the equity filter, deflate to the base month
    Ingest(IngestArgs),
    /// Fit both tail models to one size sample
    Fit(FitArgs),
    /// Bootstrap goodness-of-fit p-value for the power-law tail
    Gof(GofArgs),
    /// Log likelihood ratio of power law vs log-normal at a shared cutoff
    Compare(CompareArgs),
    /// Write synthetic samples drawn from either tail model
    Synth(SynthArgs),
    /// Full yearly pipeline: snapshots, fits, p-values, ratios, figures
    Report(ReportArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Fund panel CSV (fund_id,month,tasm_millions,nav,equity_fraction)
    #[arg(long)]
    input: PathBuf,
    /// CPI table CSV (month,index)
    #[arg(long)]
    cpi: PathBuf,
    /// Minimum equity fraction a fund must hold
    #[arg(long, default_value_t = 0.80)]
    threshold: f64,
    /// Month every asset value is deflated to
    #[arg(long, default_value = "2007-07")]
    base_month: String,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Size sample CSV (size_millions)
    #[arg(long)]
    input: PathBuf,
    /// Date attached to the sample
    #[arg(long, default_value = "2007-07")]
    as_of: String,
    /// Fixed cutoff; omit to select it by KS scan
    #[arg(long)]
    smin: Option<f64>,
    /// Minimum tail points a cutoff candidate must keep
    #[arg(long, default_value_t = 10)]
    min_tail: usize,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GofArgs {
    #[command(flatten)]
    fit: FitArgs,
    /// Synthetic datasets to draw
    #[arg(long, default_value_t = 10_000)]
    n_replicates: usize,
    /// Master seed for the replicate substreams
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replicate construction: semiparametric or tail_only
    #[arg(long, default_value = "semiparametric")]
    replicate_mode: String,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Args)]
struct SynthArgs {
    #[command(subcommand)]
    model: SynthModel,
}

#[derive(Subcommand)]
enum SynthModel {
    /// Draw from a power-law tail
    Pareto {
        /// Tail exponent
        #[arg(long)]
        zeta: f64,
        /// Lower cutoff
        #[arg(long)]
        smin: f64,
        /// Number of draws
        #[arg(short = 'n', long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output sample file
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw from a log-normal tail (smin 0 = untruncated)
    Lognormal {
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 0.0)]
        smin: f64,
        /// Number of draws
        #[arg(short = 'n', long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output sample file
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ReportArgs {
    /// Fund panel CSV (fund_id,month,tasm_millions,nav,equity_fraction)
    #[arg(long)]
    input: PathBuf,
    /// CPI table CSV (month,index)
    #[arg(long)]
    cpi: PathBuf,
    /// Minimum equity fraction a fund must hold
    #[arg(long, default_value_t = 0.80)]
    threshold: f64,
    /// Month every asset value is deflated to
    #[arg(long, default_value = "2007-07")]
    base_month: String,
    /// Years to report: "1993-1995" or "1993,1994"; default all panel years
    #[arg(long)]
    years: Option<String>,
    /// Synthetic datasets per year for the p-value
    #[arg(long, default_value_t = 10_000)]
    n_replicates: usize,
    /// Master seed; each year derives its own sub-seed from it
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replicate construction: semiparametric or tail_only
    #[arg(long, default_value = "semiparametric")]
    replicate_mode: String,
    /// Cross-section rule: year_end or monthly_average
    #[arg(long, default_value = "year_end")]
    snapshot_mode: String,
    /// Minimum tail points a cutoff candidate must keep
    #[arg(long, default_value_t = 10)]
    min_tail: usize,
    /// Log convention for the E_omega/Std_omega columns: natural or base10
    #[arg(long, default_value = "natural")]
    log_base: String,
    /// Skip CCDF/QQ series files
    #[arg(long)]
    no_figures: bool,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

/// Entry point used by the binary; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let _ = e.print();
            return ExitClass::Config as i32;
        }
    };

    let workers = match resolve_workers(cli.workers) {
        Ok(w) => w,
        Err(e) => return report_error(&e),
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(p) => p,
        Err(e) => return report_error(&Error::Config(format!("cannot build worker pool: {e}"))),
    };

    let mut outputs = OutputSet::default();
    let result = pool.install(|| dispatch(&cli.command, &mut outputs));
    match result {
        Ok(()) => 0,
        Err(e) => {
            outputs.remove_partial();
            report_error(&e)
        }
    }
}

fn report_error(e: &Error) -> i32 {
    let class = e.exit_class();
    let name = match class {
        ExitClass::Config => "config",
        ExitClass::Data => "data",
        ExitClass::Numerical => "numerical",
    };
    eprintln!("error: code={} class={name}: {e}", class as i32);
    class as i32
}

fn resolve_workers(flag: Option<usize>) -> Result<usize> {
    let validate = |w: usize, origin: &str| {
        if w == 0 {
            Err(Error::Config(format!("{origin} must be at least 1")))
        } else {
            Ok(w)
        }
    };
    if let Some(w) = flag {
        return validate(w, "--workers");
    }
    if let Ok(raw) = std::env::var(WORKERS_ENV) {
        let w: usize = raw
            .parse()
            .map_err(|_| Error::Config(format!("{WORKERS_ENV}='{raw}' is not a worker count")))?;
        return validate(w, WORKERS_ENV);
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Files created by the current run; removed if the run fails so no
/// partial outputs survive.
#[derive(Default)]
struct OutputSet {
    files: Vec<PathBuf>,
}

impl OutputSet {
    fn write_bytes(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        self.files.push(path.to_path_buf());
        fs::write(path, bytes)?;
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, path: &Path, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_bytes(path, text.as_bytes())
    }

    fn remove_partial(&self) {
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
    }
}

fn dispatch(command: &Command, outs: &mut OutputSet) -> Result<()> {
    match command {
        Command::Ingest(args) => run_ingest(args, outs),
        Command::Fit(args) => {
            let (sample, fitted, config) = fit_sample(args)?;
            #[derive(Serialize)]
            struct FitDoc {
                config: FitConfigEcho,
                sample: SampleEcho,
                pareto: crate::fit::ParetoTailFit,
                lognormal: crate::fit::LogNormalTailFit,
            }
            outs.write_json(
                &args.out.join("fit.json"),
                &FitDoc {
                    config,
                    sample: SampleEcho::of(&sample),
                    pareto: fitted.pareto,
                    lognormal: fitted.lognormal,
                },
            )
        }
        Command::Gof(args) => run_gof(args, outs),
        Command::Compare(args) => run_compare(args, outs),
        Command::Synth(args) => run_synth(&args.model, outs),
        Command::Report(args) => run_report(args, outs),
    }
}

#[derive(Serialize)]
struct FitConfigEcho {
    input: String,
    as_of: YearMonth,
    smin: Option<f64>,
    min_tail: usize,
}

#[derive(Serialize)]
struct SampleEcho {
    n: usize,
    as_of: YearMonth,
    source_count: usize,
}

impl SampleEcho {
    fn of(sample: &SizeSample) -> Self {
        SampleEcho {
            n: sample.len(),
            as_of: sample.as_of(),
            source_count: sample.source_count(),
        }
    }
}

struct FittedPair {
    pareto: crate::fit::ParetoTailFit,
    lognormal: crate::fit::LogNormalTailFit,
}

fn fit_sample(args: &FitArgs) -> Result<(SizeSample, FittedPair, FitConfigEcho)> {
    let as_of: YearMonth = args.as_of.parse()?;
    let sample = load_size_sample(&args.input, as_of)?;
    let pareto = match args.smin {
        Some(smin) => fit_pareto_given_smin(&sample, smin)?,
        None => scan_smin_with_floor(&sample, None, args.min_tail)?,
    };
    let lognormal = fit_lognormal_tail(&sample, pareto.s_min)?;
    let config = FitConfigEcho {
        input: args.input.display().to_string(),
        as_of,
        smin: args.smin,
        min_tail: args.min_tail,
    };
    Ok((sample, FittedPair { pareto, lognormal }, config))
}

fn run_ingest(args: &IngestArgs, outs: &mut OutputSet) -> Result<()> {
    let base_month: YearMonth = args.base_month.parse()?;
    let load = load_fund_records(&args.input)?;
    let records_read = load.records.len();
    let cpi = CpiTable::from_csv_path(&args.cpi, base_month)?;
    let kept = filter_equity(load.records, args.threshold)?;
    let records_after_filter = kept.len();
    let adjusted = adjust_inflation(&kept, &cpi)?;

    let mut csv_text = String::from("fund_id,month,tasm_millions,nav,equity_fraction\n");
    for r in &adjusted {
        let nav = r.nav.map_or(String::new(), |v| v.to_string());
        csv_text.push_str(&format!(
            "{},{},{},{},{}\n",
            r.fund_id, r.month, r.tasm, nav, r.equity_fraction
        ));
    }
    outs.write_bytes(&args.out.join("panel_normalized.csv"), csv_text.as_bytes())?;

    #[derive(Serialize)]
    struct IngestDoc {
        config: IngestConfigEcho,
        records_read: usize,
        dropped_missing_tasm: usize,
        records_after_filter: usize,
    }
    #[derive(Serialize)]
    struct IngestConfigEcho {
        input: String,
        cpi: String,
        threshold: f64,
        base_month: YearMonth,
    }
    outs.write_json(
        &args.out.join("ingest.json"),
        &IngestDoc {
            config: IngestConfigEcho {
                input: args.input.display().to_string(),
                cpi: args.cpi.display().to_string(),
                threshold: args.threshold,
                base_month,
            },
            records_read,
            dropped_missing_tasm: load.dropped_missing_tasm,
            records_after_filter,
        },
    )
}

fn run_gof(args: &GofArgs, outs: &mut OutputSet) -> Result<()> {
    let mode: ReplicateMode = args.replicate_mode.parse()?;
    let (sample, fitted, fit_config) = fit_sample(&args.fit)?;
    let gof = bootstrap_pvalue_with(
        &sample,
        &fitted.pareto,
        &GofConfig {
            n_replicates: args.n_replicates,
            master_seed: args.seed,
            mode,
            min_tail: args.fit.min_tail,
        },
    )?;
    #[derive(Serialize)]
    struct GofDoc {
        config: GofConfigEcho,
        sample: SampleEcho,
        pareto: crate::fit::ParetoTailFit,
        gof: crate::gof::GofResult,
    }
    #[derive(Serialize)]
    struct GofConfigEcho {
        #[serde(flatten)]
        fit: FitConfigEcho,
        n_replicates: usize,
        seed: u64,
        replicate_mode: ReplicateMode,
    }
    outs.write_json(
        &args.fit.out.join("gof.json"),
        &GofDoc {
            config: GofConfigEcho {
                fit: fit_config,
                n_replicates: args.n_replicates,
                seed: args.seed,
                replicate_mode: mode,
            },
            sample: SampleEcho::of(&sample),
            pareto: fitted.pareto,
            gof,
        },
    )
}

fn run_compare(args: &CompareArgs, outs: &mut OutputSet) -> Result<()> {
    let (sample, fitted, config) = fit_sample(&args.fit)?;
    let ratio = log_likelihood_ratio(&sample, &fitted.pareto, &fitted.lognormal)?;
    #[derive(Serialize)]
    struct CompareDoc {
        config: FitConfigEcho,
        sample: SampleEcho,
        pareto: crate::fit::ParetoTailFit,
        lognormal: crate::fit::LogNormalTailFit,
        ratio: crate::gof::LikelihoodRatioResult,
    }
    outs.write_json(
        &args.fit.out.join("compare.json"),
        &CompareDoc {
            config,
            sample: SampleEcho::of(&sample),
            pareto: fitted.pareto,
            lognormal: fitted.lognormal,
            ratio,
        },
    )
}

fn run_synth(model: &SynthModel, outs: &mut OutputSet) -> Result<()> {
    let (sizes, out) = match model {
        SynthModel::Pareto {
            zeta,
            smin,
            count,
            seed,
            out,
        } => {
            let dist = ParetoTail::new(*zeta, *smin)?;
            let mut stream = RandomStream::from_master(*seed, 0);
            (dist.sample(*count, &mut stream)?, out)
        }
        SynthModel::Lognormal {
            mu,
            sigma,
            smin,
            count,
            seed,
            out,
        } => {
            let dist = LogNormalTail::new(*mu, *sigma, *smin)?;
            let mut stream = RandomStream::from_master(*seed, 0);
            (dist.sample(*count, &mut stream)?, out)
        }
    };
    let mut text = String::from("size_millions\n");
    for s in sizes {
        text.push_str(&format!("{s}\n"));
    }
    outs.write_bytes(out, text.as_bytes())
}

fn run_report(args: &ReportArgs, outs: &mut OutputSet) -> Result<()> {
    let base_month: YearMonth = args.base_month.parse()?;
    let config = ReportConfig {
        threshold: args.threshold,
        n_replicates: args.n_replicates,
        master_seed: args.seed,
        replicate_mode: args.replicate_mode.parse()?,
        snapshot_mode: args.snapshot_mode.parse()?,
        min_tail: args.min_tail,
        log_base: args.log_base.parse()?,
    };
    let load = load_fund_records(&args.input)?;
    let cpi = CpiTable::from_csv_path(&args.cpi, base_month)?;
    let years = match &args.years {
        Some(expr) => parse_years(expr)?,
        None => panel_years(&load.records),
    };
    if years.is_empty() {
        return Err(Error::Config("no years to report".to_string()));
    }

    let outcomes = crate::report::yearly_table(&load.records, &cpi, &years, &config)?;

    let rows: Vec<_> = outcomes.iter().map(|o| o.row).collect();
    let mut table = Vec::new();
    write_table(&mut table, &rows)?;
    outs.write_bytes(&args.out.join("table.csv"), &table)?;

    let mut figure_files: Vec<String> = Vec::new();
    if !args.no_figures {
        for outcome in &outcomes {
            figure_files.extend(emit_year_figures(outcome, &args.out, outs)?);
        }
    }

    #[derive(Serialize)]
    struct RunDoc {
        config: RunConfigEcho,
        years: Vec<i32>,
        year_errors: Vec<YearErrorEcho>,
        figure_files: Vec<String>,
    }
    #[derive(Serialize)]
    struct RunConfigEcho {
        input: String,
        cpi: String,
        base_month: YearMonth,
        #[serde(flatten)]
        report: ReportConfig,
    }
    #[derive(Serialize)]
    struct YearErrorEcho {
        year: i32,
        errors: Vec<String>,
    }
    let year_errors: Vec<YearErrorEcho> = outcomes
        .iter()
        .filter(|o| !o.errors.is_empty())
        .map(|o| YearErrorEcho {
            year: o.row.year,
            errors: o.errors.clone(),
        })
        .collect();
    outs.write_json(
        &args.out.join("run.json"),
        &RunDoc {
            config: RunConfigEcho {
                input: args.input.display().to_string(),
                cpi: args.cpi.display().to_string(),
                base_month,
                report: config,
            },
            years,
            year_errors,
            figure_files,
        },
    )
}

/// CCDF, reference line, and both QQ series for one valid year.
fn emit_year_figures(
    outcome: &YearOutcome,
    out_dir: &Path,
    outs: &mut OutputSet,
) -> Result<Vec<String>> {
    let mut written = Vec::new();
    let Some(detail) = &outcome.detail else {
        return Ok(written);
    };
    let year = outcome.row.year;
    let mut emit = |name: String, series: &crate::report::FigureSeries| -> Result<()> {
        let mut buf = Vec::new();
        write_figure_series(&mut buf, series)?;
        outs.write_bytes(&out_dir.join(&name), &buf)?;
        written.push(name);
        Ok(())
    };

    let ccdf = ccdf_points(&detail.sample)?;
    emit(format!("ccdf_{year}.tsv"), &ccdf)?;

    // Zipf guide line; skipped when nothing sits above the anchor.
    if let Ok(reference) = power_reference_series(&detail.sample, -1.0, 100.0) {
        emit(format!("ccdf_ref_{year}.tsv"), &reference)?;
    }

    let pl_model = detail.pareto.model()?;
    let mut qq_pl = qq_points(&detail.sample, &pl_model, detail.pareto.s_min)?;
    qq_pl.label = format!("qq_powerlaw_{year}");
    emit(format!("qq_pl_{year}.tsv"), &qq_pl)?;

    let ln_model = detail.lognormal.model()?;
    let mut qq_ln = qq_points(&detail.sample, &ln_model, detail.lognormal.s_min)?;
    qq_ln.label = format!("qq_lognormal_{year}");
    emit(format!("qq_ln_{year}.tsv"), &qq_ln)?;

    Ok(written)
}

fn parse_years(expr: &str) -> Result<Vec<i32>> {
    let bad = || Error::Config(format!("years '{expr}' is neither YYYY-YYYY nor a YYYY list"));
    let mut years = Vec::new();
    if let Some((a, b)) = expr.split_once('-') {
        let lo: i32 = a.trim().parse().map_err(|_| bad())?;
        let hi: i32 = b.trim().parse().map_err(|_| bad())?;
        if lo > hi {
            return Err(bad());
        }
        years.extend(lo..=hi);
    } else {
        for part in expr.split(',') {
            years.push(part.trim().parse().map_err(|_| bad())?);
        }
        years.sort_unstable();
        years.dedup();
    }
    Ok(years)
}

fn panel_years(records: &[FundRecord]) -> Vec<i32> {
    let mut years: Vec<i32> = records.iter().map(|r| r.month.year()).collect();
    years.sort_unstable();
    years.dedup();
    years
}
