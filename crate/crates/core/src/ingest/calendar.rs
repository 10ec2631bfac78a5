//! Trading calendar with ISO-week boundaries.

use chrono::{Datelike, NaiveDate};

use crate::error::{Error, Result};

/// Ordered set of trading dates plus the index of the last trading date of
/// each ISO week.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TradingCalendar {
    dates: Vec<NaiveDate>,
    week_boundaries: Vec<usize>,
}

fn iso_week_key(d: NaiveDate) -> (i32, u32) {
    let w = d.iso_week();
    (w.year(), w.week())
}

impl TradingCalendar {
    /// Build from a strictly increasing list of trading dates.
    pub fn new(dates: Vec<NaiveDate>) -> Result<Self> {
        if dates.is_empty() {
            return Err(Error::Validation("calendar has no dates".into()));
        }
        for w in dates.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Validation(format!(
                    "calendar dates not strictly increasing at {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        let mut week_boundaries = Vec::new();
        for i in 0..dates.len() {
            let last_of_week =
                i + 1 == dates.len() || iso_week_key(dates[i + 1]) != iso_week_key(dates[i]);
            if last_of_week {
                week_boundaries.push(i);
            }
        }
        Ok(Self { dates, week_boundaries })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn date(&self, idx: usize) -> NaiveDate {
        self.dates[idx]
    }

    /// Index of an exact trading date.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    /// Index of the latest trading date <= `date`.
    pub fn index_at_or_before(&self, date: NaiveDate) -> Option<usize> {
        match self.dates.binary_search(&date) {
            Ok(i) => Some(i),
            Err(0) => None,
            Err(i) => Some(i - 1),
        }
    }

    /// Indices of week-end (last trading date of each ISO week) dates.
    pub fn week_boundaries(&self) -> &[usize] {
        &self.week_boundaries
    }

    /// Week-end dates falling in `[start, end]`.
    pub fn week_ends_between(&self, start: NaiveDate, end: NaiveDate) -> Vec<usize> {
        self.week_boundaries
            .iter()
            .copied()
            .filter(|&i| self.dates[i] >= start && self.dates[i] <= end)
            .collect()
    }

    /// Index of the week-end `weeks_back` boundaries before the week
    /// containing `idx` (0 = the week end of `idx`'s own week). Returns None
    /// when the calendar does not reach that far back.
    pub fn week_end_back(&self, idx: usize, weeks_back: usize) -> Option<usize> {
        // position of the first boundary >= idx, i.e. idx's own week end
        let pos = self.week_boundaries.partition_point(|&b| b < idx);
        if pos >= self.week_boundaries.len() {
            return None;
        }
        pos.checked_sub(weeks_back).map(|p| self.week_boundaries[p])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    #[test]
    fn week_boundaries_are_last_trading_day_of_iso_week() {
        // Mon 2022-01-03 .. Fri 2022-01-14, two full weeks
        let dates: Vec<NaiveDate> = (3..=14)
            .filter_map(|day| NaiveDate::from_ymd_opt(2022, 1, day))
            .filter(|dt| dt.weekday().num_days_from_monday() < 5)
            .collect();
        let cal = TradingCalendar::new(dates).unwrap();
        let ends: Vec<NaiveDate> =
            cal.week_boundaries().iter().map(|&i| cal.date(i)).collect();
        assert_eq!(ends, vec![d("2022-01-07"), d("2022-01-14")]);
    }

    #[test]
    fn rejects_unordered_dates() {
        let err = TradingCalendar::new(vec![d("2022-01-04"), d("2022-01-03")]);
        assert!(err.is_err());
    }

    #[test]
    fn week_end_back_walks_boundaries() {
        let dates: Vec<NaiveDate> = (3..=21)
            .filter_map(|day| NaiveDate::from_ymd_opt(2022, 1, day))
            .filter(|dt| dt.weekday().num_days_from_monday() < 5)
            .collect();
        let cal = TradingCalendar::new(dates).unwrap();
        let idx = cal.index_of(d("2022-01-14")).unwrap();
        assert_eq!(cal.date(cal.week_end_back(idx, 0).unwrap()), d("2022-01-14"));
        assert_eq!(cal.date(cal.week_end_back(idx, 1).unwrap()), d("2022-01-07"));
        assert!(cal.week_end_back(idx, 2).is_none());
    }
}
