//! Headline preprocessing: relevance/type filtering, same-day TF-IDF
//! near-duplicate removal, weekly concatenation, and a deterministic stub
//! embedder for pipeline verification.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, NaiveDate};

use crate::error::{Error, Result};
use crate::ingest::{HeadlineRecord, TradingCalendar};

/// One ticker-week of concatenated surviving headlines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeeklyDocument {
    pub ticker: String,
    pub week_start: NaiveDate,
    pub text: String,
}

/// Keep records with relevance exactly 100 and an article type outside the
/// exclusion set. Order preserved.
pub fn filter_headlines(
    records: Vec<HeadlineRecord>,
    excluded_types: &BTreeSet<String>,
) -> Vec<HeadlineRecord> {
    records
        .into_iter()
        .filter(|r| r.relevance == 100 && !excluded_types.contains(&r.article_type))
        .collect()
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_string())
        .collect()
}

/// Sparse TF-IDF weights over a group's vocabulary: tf = raw count,
/// idf = ln((1+n)/(1+df)) + 1.
fn group_tfidf(texts: &[&str]) -> Vec<BTreeMap<String, f64>> {
    let docs: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t)).collect();
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in &docs {
        let uniq: BTreeSet<&str> = doc.iter().map(|s| s.as_str()).collect();
        for t in uniq {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    let n = docs.len() as f64;
    docs.iter()
        .map(|doc| {
            let mut tf: BTreeMap<String, f64> = BTreeMap::new();
            for t in doc {
                *tf.entry(t.clone()).or_insert(0.0) += 1.0;
            }
            for (t, w) in tf.iter_mut() {
                let d = df[t.as_str()] as f64;
                *w *= ((1.0 + n) / (1.0 + d)).ln() + 1.0;
            }
            tf
        })
        .collect()
}

fn sparse_cosine(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
    let dot: f64 = a
        .iter()
        .filter_map(|(t, x)| b.get(t).map(|y| x * y))
        .sum();
    let na: f64 = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Within each (ticker, date) group, drop any record whose TF-IDF cosine
/// with an earlier surviving same-day record exceeds `threshold`. The
/// earlier record always survives. Records must be sorted by timestamp
/// (stable); output preserves input order.
///
/// IDF is local to the group, so dropping a record shifts the remaining
/// vectors. The greedy pass is therefore repeated on the survivors until
/// no further record is dropped; this fixed point makes the operation
/// idempotent.
pub fn tfidf_dedup(records: Vec<HeadlineRecord>, threshold: f64) -> Vec<HeadlineRecord> {
    assert!(threshold > 0.0 && threshold <= 1.0, "threshold must be in (0,1]");

    // group indices by (ticker, date), preserving in-group order
    let mut groups: BTreeMap<(String, NaiveDate), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry((r.ticker.clone(), r.timestamp)).or_default().push(i);
    }

    let mut keep = vec![true; records.len()];
    for idxs in groups.values() {
        let mut alive: Vec<usize> = idxs.clone();
        loop {
            if alive.len() < 2 {
                break;
            }
            let texts: Vec<&str> = alive.iter().map(|&i| records[i].text.as_str()).collect();
            let vecs = group_tfidf(&texts);
            let mut survivors: Vec<usize> = Vec::new(); // positions within `alive`
            for (pos, &i) in alive.iter().enumerate() {
                let dup = survivors
                    .iter()
                    .any(|&s| sparse_cosine(&vecs[s], &vecs[pos]) > threshold);
                if dup {
                    keep[i] = false;
                } else {
                    survivors.push(pos);
                }
            }
            if survivors.len() == alive.len() {
                break;
            }
            alive = survivors.into_iter().map(|p| alive[p]).collect();
        }
    }

    records
        .into_iter()
        .enumerate()
        .filter_map(|(i, r)| keep[i].then_some(r))
        .collect()
}

fn iso_week_monday(d: NaiveDate) -> NaiveDate {
    let w = d.iso_week();
    NaiveDate::from_isoywd_opt(w.year(), w.week(), chrono::Weekday::Mon)
        .expect("valid ISO week")
}

/// Concatenate surviving headlines into one document per (ticker, ISO week),
/// joined by single spaces in timestamp order. Records outside the
/// calendar's span are dropped.
pub fn weekly_concat(
    records: &[HeadlineRecord],
    calendar: &TradingCalendar,
) -> Vec<WeeklyDocument> {
    let lo = iso_week_monday(calendar.date(0));
    let hi = calendar.date(calendar.len() - 1);
    let mut groups: BTreeMap<(String, NaiveDate), Vec<&str>> = BTreeMap::new();
    for r in records {
        if r.timestamp < lo || r.timestamp > hi + chrono::Duration::days(6) {
            continue;
        }
        let week_start = iso_week_monday(r.timestamp);
        groups
            .entry((r.ticker.clone(), week_start))
            .or_default()
            .push(r.text.as_str());
    }
    groups
        .into_iter()
        .map(|((ticker, week_start), texts)| WeeklyDocument {
            ticker,
            week_start,
            text: texts.join(" "),
        })
        .collect()
}

fn fnv1a64(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf29ce484222325u64 ^ seed.wrapping_mul(0x9e3779b97f4a7c15);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    // final avalanche
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51afd7ed558ccd);
    h ^= h >> 33;
    h
}

/// Deterministic bag-of-hashed-tokens embedding: each token adds a signed
/// unit contribution to a hashed bucket; the result is L2-normalized.
/// Identical text and seed give identical vectors.
pub fn stub_embed(doc: &WeeklyDocument, dimension: usize, seed: u64) -> Result<Vec<f64>> {
    assert!(dimension >= 2, "dimension must be at least 2");
    let tokens = tokenize(&doc.text);
    if tokens.is_empty() {
        return Err(Error::ZeroDocument);
    }
    let mut v = vec![0.0; dimension];
    for t in &tokens {
        let h = fnv1a64(t.as_bytes(), seed);
        let bucket = (h % dimension as u64) as usize;
        let sign = if h & (1 << 63) == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    }
    let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        // all contributions cancelled; fall back to a single text-level bucket
        let h = fnv1a64(doc.text.as_bytes(), seed);
        v[(h % dimension as u64) as usize] = 1.0;
        return Ok(v);
    }
    Ok(v.into_iter().map(|x| x / norm).collect())
}
