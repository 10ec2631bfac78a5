//! Weekly per-ticker embedding vectors.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// Dense semantic vectors keyed by (ticker, week_start). All vectors share
/// one dimension and contain only finite components.
#[derive(Debug, Clone)]
pub struct EmbeddingSeries {
    dimension: usize,
    entries: BTreeMap<(String, NaiveDate), Vec<f64>>,
}

impl EmbeddingSeries {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Validation("embedding dimension must be positive".into()));
        }
        Ok(Self { dimension, entries: BTreeMap::new() })
    }

    pub fn insert(&mut self, ticker: &str, week_start: NaiveDate, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dimension {
            return Err(Error::Validation(format!(
                "ragged embedding for ({ticker},{week_start}): got dimension {}, expected {}",
                vector.len(),
                self.dimension
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite embedding component for ({ticker},{week_start})"
            )));
        }
        self.entries.insert((ticker.to_string(), week_start), vector);
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, ticker: &str, week_start: NaiveDate) -> Option<&[f64]> {
        self.entries.get(&(ticker.to_string(), week_start)).map(|v| v.as_slice())
    }

    /// Vectors for `ticker` with week_start in `(after, up_to]`.
    pub fn vectors_in_window(
        &self,
        ticker: &str,
        after: NaiveDate,
        up_to: NaiveDate,
    ) -> impl Iterator<Item = &[f64]> {
        let lo = (ticker.to_string(), after + chrono::Duration::days(1));
        let hi = (ticker.to_string(), up_to);
        self.entries.range(lo..=hi).map(|(_, v)| v.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, NaiveDate, &[f64])> {
        self.entries.iter().map(|((t, w), v)| (t.as_str(), *w, v.as_slice()))
    }
}

/// Load an embeddings CSV (`ticker,week_start,v0,...,v{D-1}`). The dimension
/// is inferred from the first row; every row must match it.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingSeries> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut series: Option<EmbeddingSeries> = None;
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        if rec.len() < 3 {
            return Err(Error::Parse {
                line,
                msg: format!("expected at least 3 fields, got {}", rec.len()),
            });
        }
        let week_start: NaiveDate = rec[1].parse().map_err(|e| Error::Parse {
            line,
            msg: format!("bad week_start `{}`: {e}", &rec[1]),
        })?;
        let mut vector = Vec::with_capacity(rec.len() - 2);
        for f in rec.iter().skip(2) {
            let v: f64 = f.trim().parse().map_err(|e| Error::Parse {
                line,
                msg: format!("bad component `{f}`: {e}"),
            })?;
            vector.push(v);
        }
        let s = match &mut series {
            Some(s) => s,
            None => series.get_or_insert(EmbeddingSeries::new(vector.len())?),
        };
        s.insert(rec[0].trim(), week_start, vector)?;
    }
    series.ok_or_else(|| Error::Validation("embeddings file has no data rows".into()))
}

pub fn write_embeddings<W: Write>(series: &EmbeddingSeries, mut w: W) -> Result<()> {
    write!(w, "ticker,week_start")?;
    for i in 0..series.dimension {
        write!(w, ",v{i}")?;
    }
    writeln!(w)?;
    for ((ticker, week_start), v) in &series.entries {
        write!(w, "{ticker},{week_start}")?;
        for x in v {
            write!(w, ",{x}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
