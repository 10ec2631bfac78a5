//! Daily returns panel with point-in-time universe membership.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::ingest::calendar::TradingCalendar;

/// Ingest knobs. Currently only controls whether membership defaults to
/// present-where-a-row-exists or is read from a separate membership file.
#[derive(Debug, Clone, Default)]
pub struct IngestConfig {
    pub membership_path: Option<std::path::PathBuf>,
}

/// Per-date, per-ticker daily simple returns in percent, with a point-in-time
/// membership mask. Immutable after construction.
#[derive(Debug, Clone)]
pub struct ReturnsPanel {
    calendar: TradingCalendar,
    tickers: Vec<String>,
    /// date-major, len = n_dates * n_tickers
    returns: Vec<Option<f64>>,
    membership: Vec<bool>,
}

impl ReturnsPanel {
    pub fn from_parts(
        calendar: TradingCalendar,
        tickers: Vec<String>,
        returns: Vec<Option<f64>>,
        membership: Vec<bool>,
    ) -> Result<Self> {
        let n = calendar.len() * tickers.len();
        if returns.len() != n || membership.len() != n {
            return Err(Error::Validation(format!(
                "panel shape mismatch: {} dates x {} tickers vs {} returns / {} membership",
                calendar.len(),
                tickers.len(),
                returns.len(),
                membership.len()
            )));
        }
        for (i, r) in returns.iter().enumerate() {
            if let Some(v) = r {
                if !v.is_finite() {
                    return Err(Error::Validation(format!(
                        "non-finite return at flat index {i}"
                    )));
                }
            }
        }
        Ok(Self { calendar, tickers, returns, membership })
    }

    pub fn calendar(&self) -> &TradingCalendar {
        &self.calendar
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn n_tickers(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_dates(&self) -> usize {
        self.calendar.len()
    }

    pub fn ticker_index(&self, ticker: &str) -> Option<usize> {
        self.tickers.iter().position(|t| t == ticker)
    }

    /// Return for (date index, ticker index), masked by membership: a ticker
    /// that is not a member on the date yields None regardless of data.
    pub fn ret(&self, date_idx: usize, ticker_idx: usize) -> Option<f64> {
        let flat = date_idx * self.tickers.len() + ticker_idx;
        if self.membership[flat] {
            self.returns[flat]
        } else {
            None
        }
    }

    pub fn is_member(&self, date_idx: usize, ticker_idx: usize) -> bool {
        self.membership[date_idx * self.tickers.len() + ticker_idx]
    }

    /// Copy with one return overwritten (test instrumentation for
    /// look-ahead checks).
    pub fn with_return(&self, date_idx: usize, ticker_idx: usize, value: Option<f64>) -> Self {
        let mut out = self.clone();
        out.returns[date_idx * self.tickers.len() + ticker_idx] = value;
        out
    }
}

/// Load a returns CSV (`date,ticker,return_pct`) into a panel. Membership
/// defaults to true exactly where a return row exists; an optional membership
/// CSV (`date,ticker,member`) overrides that.
pub fn load_returns(path: &Path, config: &IngestConfig) -> Result<ReturnsPanel> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut cells: BTreeMap<(NaiveDate, String), f64> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2; // header is line 1
        let rec = rec?;
        if rec.len() != 3 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 3 fields, got {}", rec.len()),
            });
        }
        let date: NaiveDate = rec[0].parse().map_err(|e| Error::Parse {
            line,
            msg: format!("bad date `{}`: {e}", &rec[0]),
        })?;
        let ticker = rec[1].trim().to_string();
        if ticker.is_empty() {
            return Err(Error::Parse { line, msg: "empty ticker".into() });
        }
        let value: f64 = rec[2].parse().map_err(|e| Error::Parse {
            line,
            msg: format!("bad return `{}`: {e}", &rec[2]),
        })?;
        if !value.is_finite() {
            return Err(Error::Validation(format!(
                "non-finite return for ({date},{ticker}) at line {line}"
            )));
        }
        if cells.insert((date, ticker.clone()), value).is_some() {
            return Err(Error::DuplicateKey(format!("({date},{ticker})")));
        }
    }
    if cells.is_empty() {
        return Err(Error::Validation("returns file has no data rows".into()));
    }

    let mut dates: Vec<NaiveDate> = cells.keys().map(|(d, _)| *d).collect();
    dates.dedup();
    let mut tickers: Vec<String> = cells.keys().map(|(_, t)| t.clone()).collect();
    tickers.sort();
    tickers.dedup();

    let calendar = TradingCalendar::new(dates)?;
    let nt = tickers.len();
    let mut returns = vec![None; calendar.len() * nt];
    let mut membership = vec![false; calendar.len() * nt];
    let tix: BTreeMap<&str, usize> =
        tickers.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    for ((date, ticker), v) in &cells {
        let di = calendar.index_of(*date).expect("date came from cells");
        let ti = tix[ticker.as_str()];
        returns[di * nt + ti] = Some(*v);
        membership[di * nt + ti] = true;
    }

    if let Some(mpath) = &config.membership_path {
        load_membership_into(mpath, &calendar, &tix, &mut membership)?;
    }

    ReturnsPanel::from_parts(calendar, tickers, returns, membership)
}

fn load_membership_into(
    path: &Path,
    calendar: &TradingCalendar,
    tix: &BTreeMap<&str, usize>,
    membership: &mut [bool],
) -> Result<()> {
    let nt = tix.len();
    let mut rdr = csv::Reader::from_path(path)?;
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let date: NaiveDate = rec[0].parse().map_err(|e| Error::Parse {
            line,
            msg: format!("bad date `{}`: {e}", &rec[0]),
        })?;
        let flag = match &rec[2] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Parse {
                    line,
                    msg: format!("member must be 0 or 1, got `{other}`"),
                })
            }
        };
        let (di, ti) = match (calendar.index_of(date), tix.get(rec[1].trim())) {
            (Some(d), Some(&t)) => (d, t),
            _ => continue, // membership rows outside the panel are ignored
        };
        membership[di * nt + ti] = flag;
    }
    Ok(())
}

/// Write a panel back out in the returns CSV schema. Only cells with a
/// present return are emitted.
pub fn write_returns<W: Write>(panel: &ReturnsPanel, mut w: W) -> Result<()> {
    writeln!(w, "date,ticker,return_pct")?;
    for di in 0..panel.n_dates() {
        for ti in 0..panel.n_tickers() {
            let flat = di * panel.n_tickers() + ti;
            if let Some(v) = panel.returns[flat] {
                writeln!(w, "{},{},{}", panel.calendar.date(di), panel.tickers[ti], v)?;
            }
        }
    }
    Ok(())
}

/// Write the membership mask (`date,ticker,member`).
pub fn write_membership<W: Write>(panel: &ReturnsPanel, mut w: W) -> Result<()> {
    writeln!(w, "date,ticker,member")?;
    for di in 0..panel.n_dates() {
        for ti in 0..panel.n_tickers() {
            let flat = di * panel.n_tickers() + ti;
            writeln!(
                w,
                "{},{},{}",
                panel.calendar.date(di),
                panel.tickers[ti],
                if panel.membership[flat] { 1 } else { 0 }
            )?;
        }
    }
    Ok(())
}
