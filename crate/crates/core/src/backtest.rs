//! Weekly roll-forward protocol: re-cluster at each week end, refit OLS over
//! the trailing month, score daily out-of-sample errors over the following
//! week, for every configured method.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rayon::prelude::*;

use crate::clustering::{
    gics_cluster, hierarchical_cluster, kmeans_cluster, random_cluster, ClusterAssignment,
    ClusterConfig,
};
use crate::error::{Error, Result};
use crate::factor::{build_factor_returns, fit_ols, prediction_errors, FactorModel};
use crate::ingest::{EmbeddingSeries, ReturnsPanel, SectorMap};
use crate::similarity::{embedding_similarity, return_correlation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Returns,
    Embedding,
    Gics,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    KMeans,
    Hierarchical,
}

/// One clustering method, identified by its Table-style name:
/// `returns_{kmeans|hierarchical}_{L}w`, `embedding_{L}w_{kmeans|hierarchical}`,
/// `gics_sector_tracking`, `random`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodSpec {
    pub method_id: String,
    pub family: Family,
    pub algo: Option<Algo>,
    pub lookback_weeks: Option<usize>,
}

impl MethodSpec {
    pub fn parse(id: &str) -> Result<Self> {
        let mk = |family, algo, lookback| MethodSpec {
            method_id: id.to_string(),
            family,
            algo,
            lookback_weeks: lookback,
        };
        match id {
            "gics_sector_tracking" => return Ok(mk(Family::Gics, None, None)),
            "random" => return Ok(mk(Family::Random, None, None)),
            _ => {}
        }
        let parse_algo = |s: &str| match s {
            "kmeans" => Some(Algo::KMeans),
            "hierarchical" => Some(Algo::Hierarchical),
            _ => None,
        };
        let parse_weeks = |s: &str| -> Option<usize> {
            s.strip_suffix('w').and_then(|n| n.parse().ok()).filter(|&n| n > 0)
        };
        let parts: Vec<&str> = id.split('_').collect();
        if parts.len() == 3 {
            if parts[0] == "returns" {
                if let (Some(algo), Some(w)) = (parse_algo(parts[1]), parse_weeks(parts[2])) {
                    return Ok(mk(Family::Returns, Some(algo), Some(w)));
                }
            }
            if parts[0] == "embedding" {
                if let (Some(w), Some(algo)) = (parse_weeks(parts[1]), parse_algo(parts[2])) {
                    return Ok(mk(Family::Embedding, Some(algo), Some(w)));
                }
            }
        }
        Err(Error::UnknownMethod(id.to_string()))
    }

    /// The 17 methods reported in the study.
    pub fn full_roster() -> Vec<MethodSpec> {
        let mut ids = Vec::new();
        for algo in ["hierarchical", "kmeans"] {
            for w in [1, 4, 12, 24] {
                ids.push(format!("returns_{algo}_{w}w"));
            }
        }
        for w in [1, 4, 12, 24] {
            ids.push(format!("embedding_{w}w_kmeans"));
        }
        for w in [1, 4, 12] {
            ids.push(format!("embedding_{w}w_hierarchical"));
        }
        ids.push("gics_sector_tracking".to_string());
        ids.push("random".to_string());
        ids.iter().map(|id| MethodSpec::parse(id).expect("roster ids are valid")).collect()
    }
}

#[derive(Debug, Clone)]
pub struct BacktestConfig {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub methods: Vec<MethodSpec>,
    pub k: usize,
    pub estimation_days: usize,
    pub seed: u64,
}

impl BacktestConfig {
    pub fn new(start: NaiveDate, end: NaiveDate, methods: Vec<MethodSpec>) -> Self {
        Self { start, end, methods, k: 11, estimation_days: 21, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.start >= self.end {
            return Err(Error::Validation("start must precede end".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Validation("methods must be non-empty".into()));
        }
        if self.estimation_days < self.k + 2 {
            return Err(Error::Validation(format!(
                "estimation_days {} < k + 2 = {}",
                self.estimation_days,
                self.k + 2
            )));
        }
        Ok(())
    }
}

/// Per-day error metrics for one method, with the per-stock error matrix
/// retained for pairwise significance tests.
#[derive(Debug, Clone)]
pub struct DailyErrorSeries {
    pub method_id: String,
    pub dates: Vec<NaiveDate>,
    pub rmse: Vec<f64>,
    pub mae: Vec<f64>,
    pub n_stocks: Vec<usize>,
    /// date-major [date x panel ticker]
    pub per_stock: Vec<Option<f64>>,
    pub n_tickers: usize,
    pub weeks_skipped: usize,
}

impl DailyErrorSeries {
    pub fn error(&self, date_pos: usize, ticker_idx: usize) -> Option<f64> {
        self.per_stock[date_pos * self.n_tickers + ticker_idx]
    }
}

/// Cross-sectional RMSE and MAE over defined errors on one date.
pub fn daily_metrics(
    errors: &crate::factor::PredictionErrors,
    date_pos: usize,
) -> Result<(f64, f64, usize)> {
    let defined: Vec<f64> = (0..errors.tickers.len())
        .filter_map(|tp| errors.get(date_pos, tp))
        .collect();
    if defined.is_empty() {
        return Err(Error::NoObservations(format!("{}", errors.dates[date_pos])));
    }
    let n = defined.len() as f64;
    let rmse = (defined.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let mae = defined.iter().map(|e| e.abs()).sum::<f64>() / n;
    Ok((rmse, mae, defined.len()))
}

/// Derive a sub-seed from the base seed, a component tag, and a date.
pub fn derive_seed(base: u64, tag: &str, date: NaiveDate) -> u64 {
    let mut h = 0xcbf29ce484222325u64 ^ base.wrapping_mul(0x9e3779b97f4a7c15);
    for b in tag.bytes().chain(date.to_string().bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h ^= h >> 33;
    h.wrapping_mul(0xff51afd7ed558ccd)
}

struct WeekOutcome {
    /// per eval date: (calendar idx, rmse, mae, n, per-panel-ticker errors)
    days: Vec<(usize, f64, f64, usize, Vec<Option<f64>>)>,
    skipped: bool,
}

fn assignment_for(
    method: &MethodSpec,
    panel: &ReturnsPanel,
    sector_map: &SectorMap,
    embeddings: &EmbeddingSeries,
    as_of: NaiveDate,
    as_of_idx: usize,
    cfg: &BacktestConfig,
) -> Result<ClusterAssignment> {
    match method.family {
        Family::Returns | Family::Embedding => {
            let lookback = method.lookback_weeks.expect("validated by parse");
            let sim = match method.family {
                Family::Returns => return_correlation(panel, as_of, lookback)?,
                Family::Embedding => embedding_similarity(embeddings, panel, as_of, lookback)?,
                _ => unreachable!(),
            };
            let ccfg = ClusterConfig {
                k: cfg.k,
                seed: derive_seed(cfg.seed, &method.method_id, as_of),
                ..Default::default()
            };
            let mut a = match method.algo.expect("validated by parse") {
                Algo::KMeans => kmeans_cluster(&sim, &ccfg)?,
                Algo::Hierarchical => hierarchical_cluster(&sim, &ccfg)?,
            };
            a.method_id = method.method_id.clone();
            a.as_of = as_of;
            Ok(a)
        }
        Family::Gics => {
            let mut a = gics_cluster(sector_map, panel, as_of)?;
            a.method_id = method.method_id.clone();
            Ok(a)
        }
        Family::Random => {
            let members: Vec<String> = panel
                .tickers()
                .iter()
                .enumerate()
                .filter(|(ti, _)| panel.is_member(as_of_idx, *ti))
                .map(|(_, t)| t.clone())
                .collect();
            random_cluster(&members, cfg.k, derive_seed(cfg.seed, "random", as_of), as_of)
        }
    }
}

fn run_week(
    method: &MethodSpec,
    panel: &ReturnsPanel,
    sector_map: &SectorMap,
    embeddings: &EmbeddingSeries,
    rebalance_idx: usize,
    eval_idxs: &[usize],
    cfg: &BacktestConfig,
) -> WeekOutcome {
    let skipped = WeekOutcome { days: Vec::new(), skipped: true };
    let as_of = panel.calendar().date(rebalance_idx);

    // need a full estimation window ending at the rebalance date
    let est_start = match (rebalance_idx + 1).checked_sub(cfg.estimation_days) {
        Some(s) => s,
        None => return skipped,
    };
    let assignment = match assignment_for(
        method, panel, sector_map, embeddings, as_of, rebalance_idx, cfg,
    ) {
        Ok(a) => a,
        Err(_) => return skipped,
    };

    let last_eval = *eval_idxs.last().expect("non-empty eval window");
    let factors = match build_factor_returns(panel, &assignment, est_start..=last_eval) {
        Ok(f) => f,
        Err(_) => return skipped,
    };

    let mut models: BTreeMap<String, FactorModel> = BTreeMap::new();
    for ticker in assignment.labels.keys() {
        if let Ok(m) = fit_ols(panel, &factors, ticker, est_start..=rebalance_idx) {
            models.insert(ticker.clone(), m);
        }
    }
    if models.is_empty() {
        return skipped;
    }

    let errors = prediction_errors(panel, &models, &factors, eval_idxs);
    let mut days = Vec::new();
    for (dp, &di) in eval_idxs.iter().enumerate() {
        let (rmse, mae, n) = match daily_metrics(&errors, dp) {
            Ok(m) => m,
            Err(_) => continue, // no defined errors on this day
        };
        // re-key onto the panel's ticker order
        let mut row = vec![None; panel.n_tickers()];
        for (tp, t) in errors.tickers.iter().enumerate() {
            if let (Some(ti), Some(e)) = (panel.ticker_index(t), errors.get(dp, tp)) {
                row[ti] = Some(e);
            }
        }
        days.push((di, rmse, mae, n, row));
    }
    if days.is_empty() {
        return skipped;
    }
    WeekOutcome { days, skipped: false }
}

/// Run the weekly roll-forward backtest for every configured method.
///
/// For each week end W in [start, end): rebuild the cluster assignment as of
/// W, rebuild factors, refit per-stock OLS on the trailing estimation
/// window, and score daily cross-sectional errors over (W, next W].
/// Deterministic for a fixed config; (method, week) cells are evaluated in
/// parallel and reduced in week order.
pub fn run_backtest(
    panel: &ReturnsPanel,
    sector_map: &SectorMap,
    embeddings: &EmbeddingSeries,
    cfg: &BacktestConfig,
) -> Result<BTreeMap<String, DailyErrorSeries>> {
    cfg.validate()?;
    let cal = panel.calendar();

    // rebalance grid: week ends in [start, end)
    let boundaries: Vec<usize> = cal
        .week_boundaries()
        .iter()
        .copied()
        .filter(|&i| cal.date(i) >= cfg.start && cal.date(i) < cfg.end)
        .collect();
    if boundaries.is_empty() {
        return Err(Error::Validation(format!(
            "no rebalance week ends in [{}, {})",
            cfg.start, cfg.end
        )));
    }
    let end_idx = cal
        .index_at_or_before(cfg.end)
        .ok_or_else(|| Error::Validation("end precedes the calendar".into()))?;

    // evaluation span per week: (W, next boundary] capped at end
    let mut weeks: Vec<(usize, Vec<usize>)> = Vec::new();
    for (bi, &w) in boundaries.iter().enumerate() {
        let next = boundaries
            .get(bi + 1)
            .copied()
            .unwrap_or_else(|| {
                // last rebalance: evaluate through the end of the range
                let pos = cal.week_boundaries().partition_point(|&b| b <= w);
                cal.week_boundaries().get(pos).copied().unwrap_or(end_idx)
            })
            .min(end_idx);
        let eval: Vec<usize> = (w + 1..=next).collect();
        if !eval.is_empty() {
            weeks.push((w, eval));
        }
    }

    let cells: Vec<(usize, usize)> = (0..cfg.methods.len())
        .flat_map(|m| (0..weeks.len()).map(move |w| (m, w)))
        .collect();
    let outcomes: Vec<WeekOutcome> = cells
        .par_iter()
        .map(|&(mi, wi)| {
            let (w, eval) = &weeks[wi];
            run_week(&cfg.methods[mi], panel, sector_map, embeddings, *w, eval, cfg)
        })
        .collect();

    let mut out = BTreeMap::new();
    for (mi, method) in cfg.methods.iter().enumerate() {
        let mut series = DailyErrorSeries {
            method_id: method.method_id.clone(),
            dates: Vec::new(),
            rmse: Vec::new(),
            mae: Vec::new(),
            n_stocks: Vec::new(),
            per_stock: Vec::new(),
            n_tickers: panel.n_tickers(),
            weeks_skipped: 0,
        };
        for wi in 0..weeks.len() {
            let outcome = &outcomes[mi * weeks.len() + wi];
            if outcome.skipped {
                series.weeks_skipped += 1;
                continue;
            }
            for (di, rmse, mae, n, row) in &outcome.days {
                series.dates.push(cal.date(*di));
                series.rmse.push(*rmse);
                series.mae.push(*mae);
                series.n_stocks.push(*n);
                series.per_stock.extend_from_slice(row);
            }
        }
        if series.dates.is_empty() {
            return Err(Error::MethodFailed(method.method_id.clone()));
        }
        out.insert(method.method_id.clone(), series);
    }
    Ok(out)
}

/// Aggregate table row: per-method averages of the daily metrics.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub method_id: String,
    pub avg_rmse: f64,
    pub avg_mae: f64,
    pub n_days: usize,
    pub n_weeks_skipped: usize,
}

#[derive(Debug, Clone)]
pub struct ReportTable {
    /// rows sorted ascending by average RMSE
    pub rows: Vec<ReportRow>,
}

pub fn aggregate_report(series: &BTreeMap<String, DailyErrorSeries>) -> ReportTable {
    let mut rows: Vec<ReportRow> = series
        .values()
        .map(|s| {
            let n = s.rmse.len();
            ReportRow {
                method_id: s.method_id.clone(),
                avg_rmse: s.rmse.iter().sum::<f64>() / n as f64,
                avg_mae: s.mae.iter().sum::<f64>() / n as f64,
                n_days: n,
                n_weeks_skipped: s.weeks_skipped,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        a.avg_rmse
            .partial_cmp(&b.avg_rmse)
            .unwrap()
            .then_with(|| a.method_id.cmp(&b.method_id))
    });
    ReportTable { rows }
}
