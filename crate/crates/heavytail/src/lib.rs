//! Heavy-tail analysis of positive cross-sectional size data.
//!
//! The library decides whether the upper tail of a sample is better described
//! by a power law or by a log-normal truncated from below, using the standard
//! pipeline for this problem: a Kolmogorov-Smirnov scan to pick the tail
//! cutoff, maximum-likelihood fits of both models above the cutoff, a seeded
//! parametric bootstrap for the goodness-of-fit p-value, and a log likelihood
//! ratio to compare the two hypotheses. A panel layer ingests fund-month
//! records, adjusts them for inflation, and produces yearly summary tables
//! together with figure-ready CCDF and QQ series.
//!
//! All randomness flows through [`rng::RandomStream`] substreams derived from
//! a single master seed, so every result is bit-reproducible at any worker
//! count.

pub mod cli;
pub mod dist;
pub mod error;
pub mod fit;
pub mod gof;
pub mod panel;
pub mod report;
pub mod rng;
pub mod special;

pub use error::{Error, Result};
