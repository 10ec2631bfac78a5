//! Convert arbitrary stock clusterings into synthetic APT-style factor
//! models and evaluate them head-to-head in a weekly roll-forward,
//! out-of-sample prediction backtest.

pub mod backtest;
pub mod cli;
pub mod clustering;
pub mod error;
pub mod factor;
pub mod ingest;
pub mod similarity;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
