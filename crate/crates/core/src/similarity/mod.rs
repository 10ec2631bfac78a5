//! Pairwise similarity matrices from return correlations and embedding
//! cosines, plus the headline preprocessing pipeline.

pub mod text;

pub use text::{filter_headlines, stub_embed, tfidf_dedup, weekly_concat, WeeklyDocument};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::ingest::{EmbeddingSeries, ReturnsPanel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityKind {
    ReturnCorrelation,
    EmbeddingCosine,
}

/// Symmetric N x N similarity matrix over an ordered ticker universe.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    pub tickers: Vec<String>,
    values: Vec<f64>, // row-major N x N
    pub as_of: NaiveDate,
    pub lookback_weeks: usize,
    pub kind: SimilarityKind,
    /// Tickers excluded during construction (zero variance, zero pooled
    /// vector), with the reason.
    pub warnings: Vec<String>,
}

impl SimilarityMatrix {
    pub fn new(
        tickers: Vec<String>,
        values: Vec<f64>,
        as_of: NaiveDate,
        lookback_weeks: usize,
        kind: SimilarityKind,
        warnings: Vec<String>,
    ) -> Result<Self> {
        let n = tickers.len();
        if values.len() != n * n {
            return Err(Error::Validation(format!(
                "similarity matrix shape mismatch: {n} tickers, {} values",
                values.len()
            )));
        }
        for i in 0..n {
            if (values[i * n + i] - 1.0).abs() > 1e-12 {
                return Err(Error::Validation(format!(
                    "diagonal entry for {} is {}, expected 1",
                    tickers[i],
                    values[i * n + i]
                )));
            }
            for j in 0..n {
                let v = values[i * n + j];
                if values[j * n + i] != v {
                    return Err(Error::Validation(format!(
                        "asymmetry at ({i},{j}): {v} vs {}",
                        values[j * n + i]
                    )));
                }
                if !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&v) {
                    return Err(Error::Validation(format!("entry ({i},{j}) = {v} out of [-1,1]")));
                }
            }
        }
        Ok(Self { tickers, values, as_of, lookback_weeks, kind, warnings })
    }

    pub fn n(&self) -> usize {
        self.tickers.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.tickers.len() + j]
    }

    /// Row i as a feature vector.
    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.tickers.len();
        &self.values[i * n..(i + 1) * n]
    }
}

/// Pearson correlation of daily returns over the trailing `lookback_weeks`
/// trading weeks ending at `as_of` (inclusive). Tickers must be members on
/// `as_of` and have at least 80% of window observations; pairs use
/// pairwise-complete observations.
pub fn return_correlation(
    panel: &ReturnsPanel,
    as_of: NaiveDate,
    lookback_weeks: usize,
) -> Result<SimilarityMatrix> {
    let cal = panel.calendar();
    let as_of_idx = cal
        .index_of(as_of)
        .ok_or_else(|| Error::Validation(format!("{as_of} is not a trading date")))?;
    // window = (previous boundary `lookback_weeks` back, as_of]
    let start_idx = match cal.week_end_back(as_of_idx, lookback_weeks) {
        Some(b) => b + 1,
        None => 0,
    };
    let window: Vec<usize> = (start_idx..=as_of_idx).collect();
    if window.len() < 5 {
        return Err(Error::Validation(format!(
            "lookback window has {} trading days, need at least 5",
            window.len()
        )));
    }

    let min_obs = (0.8 * window.len() as f64).ceil() as usize;
    let mut warnings = Vec::new();
    let mut eligible: Vec<usize> = Vec::new();
    for ti in 0..panel.n_tickers() {
        if !panel.is_member(as_of_idx, ti) {
            continue;
        }
        let obs: Vec<f64> = window.iter().filter_map(|&d| panel.ret(d, ti)).collect();
        if obs.len() < min_obs {
            continue;
        }
        let lo = obs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = obs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if lo == hi {
            warnings.push(format!("{}: zero variance in window", panel.tickers()[ti]));
            continue;
        }
        eligible.push(ti);
    }
    if eligible.len() < 2 {
        return Err(Error::InsufficientUniverse(format!(
            "{} eligible tickers at {as_of}",
            eligible.len()
        )));
    }

    let n = eligible.len();
    // pre-extract window series per eligible ticker
    let series: Vec<Vec<Option<f64>>> = eligible
        .iter()
        .map(|&ti| window.iter().map(|&d| panel.ret(d, ti)).collect())
        .collect();

    let mut values = vec![0.0; n * n];
    for i in 0..n {
        values[i * n + i] = 1.0;
        for j in (i + 1)..n {
            let c = pairwise_pearson(&series[i], &series[j]);
            values[i * n + j] = c;
            values[j * n + i] = c;
        }
    }
    let tickers = eligible.iter().map(|&ti| panel.tickers()[ti].clone()).collect();
    SimilarityMatrix::new(
        tickers,
        values,
        as_of,
        lookback_weeks,
        SimilarityKind::ReturnCorrelation,
        warnings,
    )
}

fn pairwise_pearson(a: &[Option<f64>], b: &[Option<f64>]) -> f64 {
    let mut xs = Vec::with_capacity(a.len());
    let mut ys = Vec::with_capacity(a.len());
    for (x, y) in a.iter().zip(b) {
        if let (Some(x), Some(y)) = (x, y) {
            xs.push(*x);
            ys.push(*y);
        }
    }
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

/// Cosine similarity of average-pooled weekly embedding vectors over the
/// trailing `lookback_weeks` calendar weeks ending at `as_of`.
pub fn embedding_similarity(
    series: &EmbeddingSeries,
    panel: &ReturnsPanel,
    as_of: NaiveDate,
    lookback_weeks: usize,
) -> Result<SimilarityMatrix> {
    let cal = panel.calendar();
    let as_of_idx = cal
        .index_of(as_of)
        .ok_or_else(|| Error::Validation(format!("{as_of} is not a trading date")))?;
    let after = as_of - chrono::Duration::days(7 * lookback_weeks as i64);

    let mut warnings = Vec::new();
    let mut tickers = Vec::new();
    let mut pooled: Vec<Vec<f64>> = Vec::new();
    for ti in 0..panel.n_tickers() {
        if !panel.is_member(as_of_idx, ti) {
            continue;
        }
        let ticker = &panel.tickers()[ti];
        let mut sum = vec![0.0; series.dimension()];
        let mut count = 0usize;
        for v in series.vectors_in_window(ticker, after, as_of) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            count += 1;
        }
        if count == 0 {
            continue;
        }
        for s in sum.iter_mut() {
            *s /= count as f64;
        }
        if sum.iter().all(|&x| x == 0.0) {
            warnings.push(format!("{ticker}: zero pooled embedding"));
            continue;
        }
        tickers.push(ticker.clone());
        pooled.push(sum);
    }
    if tickers.len() < 2 {
        return Err(Error::InsufficientUniverse(format!(
            "{} tickers with embeddings at {as_of}",
            tickers.len()
        )));
    }

    let n = tickers.len();
    let norms: Vec<f64> =
        pooled.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        values[i * n + i] = 1.0;
        for j in (i + 1)..n {
            let dot: f64 = pooled[i].iter().zip(&pooled[j]).map(|(a, b)| a * b).sum();
            let c = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            values[i * n + j] = c;
            values[j * n + i] = c;
        }
    }
    SimilarityMatrix::new(
        tickers,
        values,
        as_of,
        lookback_weeks,
        SimilarityKind::EmbeddingCosine,
        warnings,
    )
}
