//! Report-layer oracles that need sampled data: the log-log CCDF slope
//! and the yearly pipeline's behavior on a power-law panel.

mod common;

use common::draw;
use heavytail::dist::ParetoTail;
use heavytail::panel::{CpiTable, FundRecord, YearMonth};
use heavytail::report::{ccdf_points, yearly_table, ReportConfig, SnapshotMode};
use heavytail::rng::{derive_seed, RandomStream};
use std::collections::BTreeMap;

#[test]
fn loglog_ccdf_slope_matches_the_tail_exponent() {
    // Regression oracle: ordinary least squares on the log-log CCDF over
    // the top decade recovers the decay exponent. The decade is taken in
    // survival terms (the largest 10% of funds down to the largest 1%),
    // which for a unit exponent is also exactly one decade in size and
    // keeps the regression away from the noise-dominated extreme order
    // statistics.
    let model = ParetoTail::new(1.0, 1.0).unwrap();
    let sample = draw(&model, 100_000, 0x51073, 0);
    let series = ccdf_points(&sample).unwrap();
    let decade: Vec<(f64, f64)> = series
        .points
        .iter()
        .filter(|(_, y)| (0.01..=0.1).contains(y))
        .map(|(x, y)| (x.log10(), y.log10()))
        .collect();
    assert!(decade.len() >= 5, "only {} points in the top decade", decade.len());
    let n = decade.len() as f64;
    let mx = decade.iter().map(|(x, _)| x).sum::<f64>() / n;
    let my = decade.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = decade.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let sxy: f64 = decade.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    assert!((slope + 1.0).abs() <= 0.1, "slope {slope}");
}

fn flat_cpi() -> CpiTable {
    let mut index = BTreeMap::new();
    index.insert(YearMonth::new(1998, 12).unwrap(), 150.0);
    index.insert(YearMonth::new(2007, 7).unwrap(), 150.0);
    CpiTable::new(index, YearMonth::new(2007, 7).unwrap()).unwrap()
}

fn pareto_panel(n_funds: usize, seed: u64) -> Vec<FundRecord> {
    let model = ParetoTail::new(1.0, 10.0).unwrap();
    let month = YearMonth::new(1998, 12).unwrap();
    let mut stream = RandomStream::from_master(seed, 0);
    let sizes =
        heavytail::dist::TailDistribution::sample(&model, n_funds, &mut stream).unwrap();
    sizes
        .into_iter()
        .enumerate()
        .map(|(i, tasm)| FundRecord {
            fund_id: format!("f{i:04}"),
            month,
            tasm,
            nav: None,
            equity_fraction: 1.0,
        })
        .collect()
}

#[test]
fn power_law_year_is_rarely_rejected() {
    // Null-acceptance oracle: when the year really is a power law, the
    // bootstrap p-value lands at or above 0.1 about 90% of the time.
    // Band frozen from seeded oracle runs with a margin for the
    // discreteness of 300-replicate p-values.
    let mut accepted = 0;
    for trial in 0..40u64 {
        let records = pareto_panel(150, derive_seed(0x9A9, trial));
        let config = ReportConfig {
            n_replicates: 300,
            master_seed: derive_seed(0x9AA, trial),
            snapshot_mode: SnapshotMode::YearEnd,
            ..ReportConfig::default()
        };
        let outcomes = yearly_table(&records, &flat_cpi(), &[1998], &config).unwrap();
        assert_eq!(outcomes.len(), 1);
        let row = outcomes[0].row;
        assert!(row.valid, "errors: {:?}", outcomes[0].errors);
        if row.p_value >= 0.1 {
            accepted += 1;
        }
    }
    assert!(accepted >= 32, "p >= 0.1 in only {accepted}/40 trials");
}

#[test]
fn yearly_table_is_deterministic_for_a_fixed_config() {
    let records = pareto_panel(120, 0xDE7);
    let config = ReportConfig {
        n_replicates: 100,
        master_seed: 31,
        ..ReportConfig::default()
    };
    let a = yearly_table(&records, &flat_cpi(), &[1998], &config).unwrap();
    let b = yearly_table(&records, &flat_cpi(), &[1998], &config).unwrap();
    assert!(a[0].row.same_bits(&b[0].row));
}
