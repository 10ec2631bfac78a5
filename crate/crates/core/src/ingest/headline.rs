//! Headline records for the text preprocessing pipeline.

use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadlineRecord {
    pub timestamp: NaiveDate,
    pub ticker: String,
    pub text: String,
    pub relevance: u8,
    pub article_type: String,
}

impl HeadlineRecord {
    pub fn new(
        timestamp: NaiveDate,
        ticker: &str,
        text: &str,
        relevance: u8,
        article_type: &str,
    ) -> Result<Self> {
        if relevance > 100 {
            return Err(Error::Validation(format!(
                "relevance {relevance} out of [0,100] for {ticker} on {timestamp}"
            )));
        }
        let text = text.trim();
        if text.is_empty() {
            return Err(Error::Validation(format!(
                "empty headline text for {ticker} on {timestamp}"
            )));
        }
        Ok(Self {
            timestamp,
            ticker: ticker.to_string(),
            text: text.to_string(),
            relevance,
            article_type: article_type.to_string(),
        })
    }
}

/// Load a headlines CSV (`date,ticker,relevance,article_type,text`), sorted
/// by timestamp (stable within a day).
pub fn load_headlines(path: &Path) -> Result<Vec<HeadlineRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        if rec.len() != 5 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 5 fields, got {}", rec.len()),
            });
        }
        let date: NaiveDate = rec[0].parse().map_err(|e| Error::Parse {
            line,
            msg: format!("bad date `{}`: {e}", &rec[0]),
        })?;
        let relevance: u8 = rec[2].trim().parse().map_err(|e| Error::Parse {
            line,
            msg: format!("bad relevance `{}`: {e}", &rec[2]),
        })?;
        out.push(HeadlineRecord::new(date, rec[1].trim(), &rec[4], relevance, rec[3].trim())?);
    }
    out.sort_by_key(|r| r.timestamp); // stable: same-day order preserved
    Ok(out)
}

/// Parse an article-type exclusion list: one tag per line, `#` comments and
/// blank lines allowed.
pub fn parse_excluded_types(content: &str) -> std::collections::BTreeSet<String> {
    content
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| l.to_string())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relevance_bounds_enforced() {
        let d: NaiveDate = "2022-01-03".parse().unwrap();
        assert!(HeadlineRecord::new(d, "AAA", "x", 101, "pr").is_err());
        assert!(HeadlineRecord::new(d, "AAA", "x", 100, "pr").is_ok());
    }

    #[test]
    fn empty_text_rejected() {
        let d: NaiveDate = "2022-01-03".parse().unwrap();
        assert!(HeadlineRecord::new(d, "AAA", "   ", 100, "pr").is_err());
    }

    #[test]
    fn exclusion_list_parsing() {
        let set = parse_excluded_types("# noise types\nspam\n\nrumor  # unverified\n");
        assert!(set.contains("spam"));
        assert!(set.contains("rumor"));
        assert_eq!(set.len(), 2);
    }
}
