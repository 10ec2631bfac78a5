//! Cluster factor construction, OLS loading estimation, and out-of-sample
//! prediction errors.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use chrono::NaiveDate;

use crate::clustering::ClusterAssignment;
use crate::error::{Error, Result};
use crate::ingest::ReturnsPanel;

/// Daily equal-weighted cluster index returns, in percent. Membership is
/// frozen at the assignment's as_of date for the whole range.
#[derive(Debug, Clone)]
pub struct FactorReturns {
    pub method_id: String,
    pub as_of: NaiveDate,
    pub k: usize,
    /// calendar indices into the source panel
    pub date_indices: Vec<usize>,
    pub dates: Vec<NaiveDate>,
    /// date-major [date x k]; None when a factor has no present member
    values: Vec<Option<f64>>,
}

impl FactorReturns {
    pub fn value(&self, date_pos: usize, cluster: usize) -> Option<f64> {
        self.values[date_pos * self.k + cluster]
    }

    /// Position within this factor range of a panel calendar index.
    pub fn position_of(&self, date_idx: usize) -> Option<usize> {
        self.date_indices.binary_search(&date_idx).ok()
    }

    /// All k factor values at a position, or None if any is missing.
    pub fn row(&self, date_pos: usize) -> Option<Vec<f64>> {
        let row = &self.values[date_pos * self.k..(date_pos + 1) * self.k];
        row.iter().copied().collect()
    }
}

/// Equal-weighted per-day mean over cluster members with a present return.
pub fn build_factor_returns(
    panel: &ReturnsPanel,
    assignment: &ClusterAssignment,
    date_indices: RangeInclusive<usize>,
) -> Result<FactorReturns> {
    let k = assignment.k;
    let members: Vec<Vec<usize>> = {
        let mut m = vec![Vec::new(); k];
        for (t, &l) in &assignment.labels {
            if let Some(ti) = panel.ticker_index(t) {
                m[l].push(ti);
            }
        }
        m
    };

    let idxs: Vec<usize> = date_indices.collect();
    let mut values = vec![None; idxs.len() * k];
    let mut any_value = vec![false; k];
    for (pos, &di) in idxs.iter().enumerate() {
        for (c, m) in members.iter().enumerate() {
            let mut sum = 0.0;
            let mut count = 0usize;
            for &ti in m {
                if let Some(r) = panel.ret(di, ti) {
                    sum += r;
                    count += 1;
                }
            }
            if count > 0 {
                values[pos * k + c] = Some(sum / count as f64);
                any_value[c] = true;
            }
        }
    }
    if let Some(c) = any_value.iter().position(|&v| !v) {
        return Err(Error::DegenerateFactor(c));
    }

    Ok(FactorReturns {
        method_id: assignment.method_id.clone(),
        as_of: assignment.as_of,
        k,
        dates: idxs.iter().map(|&i| panel.calendar().date(i)).collect(),
        date_indices: idxs,
        values,
    })
}

/// Per-stock intercept and k loadings estimated by OLS with intercept.
#[derive(Debug, Clone)]
pub struct FactorModel {
    pub ticker: String,
    pub alpha: f64,
    pub betas: Vec<f64>,
    pub estimation_window: (NaiveDate, NaiveDate),
    pub n_obs: usize,
    /// true when the ridge fallback was applied to an ill-conditioned design
    pub ridged: bool,
}

/// OLS of the ticker's returns on the k factor returns over the window
/// (inclusive calendar-index range), solved via normal equations with a
/// ridge fallback when the design is ill-conditioned.
pub fn fit_ols(
    panel: &ReturnsPanel,
    factors: &FactorReturns,
    ticker: &str,
    window: RangeInclusive<usize>,
) -> Result<FactorModel> {
    let k = factors.k;
    let ti = panel
        .ticker_index(ticker)
        .ok_or_else(|| Error::Validation(format!("unknown ticker {ticker}")))?;

    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for di in window.clone() {
        let pos = match factors.position_of(di) {
            Some(p) => p,
            None => continue,
        };
        let (y, f) = match (panel.ret(di, ti), factors.row(pos)) {
            (Some(y), Some(f)) => (y, f),
            _ => continue,
        };
        rows.push((f, y));
    }
    let n = rows.len();
    if n < k + 2 {
        return Err(Error::WindowTooShort(format!(
            "{ticker}: {n} usable observations, need {}",
            k + 2
        )));
    }

    // zero-variance regressor is unrecoverable: fail rather than ridge
    for c in 0..k {
        let first = rows[0].0[c];
        if rows.iter().all(|(f, _)| f[c] == first) {
            return Err(Error::SingularDesign(format!(
                "{ticker}: factor {c} constant over the window"
            )));
        }
    }

    // normal equations on the design [1, F_0..F_{k-1}]
    let p = k + 1;
    let mut ata = vec![0.0f64; p * p];
    let mut atb = vec![0.0f64; p];
    for (f, y) in &rows {
        let mut x = Vec::with_capacity(p);
        x.push(1.0);
        x.extend_from_slice(f);
        for i in 0..p {
            atb[i] += x[i] * y;
            for j in 0..p {
                ata[i * p + j] += x[i] * x[j];
            }
        }
    }

    let (coef, ridged) = match solve_cholesky(&ata, &atb, p) {
        Some(c) => (c, false),
        None => {
            let trace: f64 = (0..p).map(|i| ata[i * p + i]).sum();
            let ridge = 1e-8 * trace / k as f64;
            let mut a = ata.clone();
            for i in 0..p {
                a[i * p + i] += ridge;
            }
            let c = solve_cholesky(&a, &atb, p)
                .ok_or_else(|| Error::SingularDesign(format!("{ticker}: singular after ridge")))?;
            (c, true)
        }
    };
    if coef.iter().any(|c| !c.is_finite()) {
        return Err(Error::SingularDesign(format!("{ticker}: non-finite coefficients")));
    }

    let lo = *window.start();
    let hi = *window.end();
    Ok(FactorModel {
        ticker: ticker.to_string(),
        alpha: coef[0],
        betas: coef[1..].to_vec(),
        estimation_window: (panel.calendar().date(lo), panel.calendar().date(hi)),
        n_obs: n,
        ridged,
    })
}

/// Cholesky solve of a symmetric positive definite system; None when the
/// pivot ratio implies condition number above 1e10 or a pivot fails.
fn solve_cholesky(a: &[f64], b: &[f64], p: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0f64; p * p];
    let mut min_piv = f64::INFINITY;
    let mut max_piv: f64 = 0.0;
    for i in 0..p {
        for j in 0..=i {
            let mut s = a[i * p + j];
            for m in 0..j {
                s -= l[i * p + m] * l[j * p + m];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                let piv = s.sqrt();
                min_piv = min_piv.min(piv);
                max_piv = max_piv.max(piv);
                l[i * p + i] = piv;
            } else {
                l[i * p + j] = s / l[j * p + j];
            }
        }
    }
    // cond(A) ~= (max_piv / min_piv)^2 for the Cholesky factor
    if (max_piv / min_piv).powi(2) > 1e10 {
        return None;
    }
    // forward then backward substitution
    let mut y = vec![0.0f64; p];
    for i in 0..p {
        let mut s = b[i];
        for m in 0..i {
            s -= l[i * p + m] * y[m];
        }
        y[i] = s / l[i * p + i];
    }
    let mut x = vec![0.0f64; p];
    for i in (0..p).rev() {
        let mut s = y[i];
        for m in (i + 1)..p {
            s -= l[m * p + i] * x[m];
        }
        x[i] = s / l[i * p + i];
    }
    Some(x)
}

/// alpha + sum(beta_c * F_{c,date}), using realized same-day factor returns
/// with previously estimated loadings.
pub fn predict(model: &FactorModel, factors: &FactorReturns, date_idx: usize) -> Result<f64> {
    let pos = factors.position_of(date_idx).ok_or(Error::MissingFactor {
        cluster: 0,
        date: factors.dates.first().copied().unwrap_or_default(),
    })?;
    let mut out = model.alpha;
    for c in 0..factors.k {
        let f = factors.value(pos, c).ok_or(Error::MissingFactor {
            cluster: c,
            date: factors.dates[pos],
        })?;
        out += model.betas[c] * f;
    }
    Ok(out)
}

/// Realized residuals (actual - predicted) per date and ticker.
#[derive(Debug, Clone)]
pub struct PredictionErrors {
    pub dates: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    /// date-major [date x ticker]; None when actual or prediction missing
    pub per_stock: Vec<Option<f64>>,
}

impl PredictionErrors {
    pub fn get(&self, date_pos: usize, ticker_pos: usize) -> Option<f64> {
        self.per_stock[date_pos * self.tickers.len() + ticker_pos]
    }
}

/// Compute per-day, per-ticker out-of-sample errors for a set of fitted
/// models over the given calendar indices.
pub fn prediction_errors(
    panel: &ReturnsPanel,
    models: &BTreeMap<String, FactorModel>,
    factors: &FactorReturns,
    date_indices: &[usize],
) -> PredictionErrors {
    let tickers: Vec<String> = models.keys().cloned().collect();
    let mut per_stock = vec![None; date_indices.len() * tickers.len()];
    for (dp, &di) in date_indices.iter().enumerate() {
        for (tp, t) in tickers.iter().enumerate() {
            let ti = match panel.ticker_index(t) {
                Some(i) => i,
                None => continue,
            };
            let actual = match panel.ret(di, ti) {
                Some(a) => a,
                None => continue,
            };
            if let Ok(pred) = predict(&models[t], factors, di) {
                per_stock[dp * tickers.len() + tp] = Some(actual - pred);
            }
        }
    }
    PredictionErrors {
        dates: date_indices.iter().map(|&i| panel.calendar().date(i)).collect(),
        tickers,
        per_stock,
    }
}
