//! Point-in-time sector classification map.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// The 11 two-digit GICS sector codes.
pub const CANONICAL_SECTOR_CODES: [u8; 11] = [10, 15, 20, 25, 30, 35, 40, 45, 50, 55, 60];

/// Effective-dated ticker -> sector assignments. For each ticker the
/// effective dates are strictly increasing.
#[derive(Debug, Clone, Default)]
pub struct SectorMap {
    entries: BTreeMap<String, Vec<(NaiveDate, u8)>>,
}

impl SectorMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, effective_date: NaiveDate, ticker: &str, code: u8) -> Result<()> {
        if !CANONICAL_SECTOR_CODES.contains(&code) {
            return Err(Error::Validation(format!(
                "unknown sector code {code} for {ticker} (canonical set: {CANONICAL_SECTOR_CODES:?})"
            )));
        }
        let series = self.entries.entry(ticker.to_string()).or_default();
        match series.binary_search_by_key(&effective_date, |(d, _)| *d) {
            Ok(_) => Err(Error::DuplicateKey(format!("({effective_date},{ticker})"))),
            Err(pos) => {
                series.insert(pos, (effective_date, code));
                Ok(())
            }
        }
    }

    /// Sector code in force for `ticker` on `date`: the latest entry with
    /// effective_date <= date, or None before the first entry.
    pub fn sector_at(&self, ticker: &str, date: NaiveDate) -> Option<u8> {
        let series = self.entries.get(ticker)?;
        let pos = series.partition_point(|(d, _)| *d <= date);
        pos.checked_sub(1).map(|p| series[p].1)
    }

    pub fn tickers(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Load a sector CSV (`effective_date,ticker,sector_code`).
pub fn load_sector_map(path: &Path) -> Result<SectorMap> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut map = SectorMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let date: NaiveDate = rec[0].parse().map_err(|e| Error::Parse {
            line,
            msg: format!("bad date `{}`: {e}", &rec[0]),
        })?;
        let code: u8 = rec[2].trim().parse().map_err(|e| Error::Parse {
            line,
            msg: format!("bad sector code `{}`: {e}", &rec[2]),
        })?;
        map.insert(date, rec[1].trim(), code)?;
    }
    Ok(map)
}

pub fn write_sector_map<W: Write>(map: &SectorMap, mut w: W) -> Result<()> {
    writeln!(w, "effective_date,ticker,sector_code")?;
    for (ticker, series) in &map.entries {
        for (date, code) in series {
            writeln!(w, "{date},{ticker},{code}")?;
        }
    }
    Ok(())
}
