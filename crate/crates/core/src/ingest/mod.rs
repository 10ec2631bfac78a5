//! Parsing, validation, and indexing of all external data files.

pub mod calendar;
pub mod embeddings;
pub mod headline;
pub mod panel;
pub mod sector;

pub use calendar::TradingCalendar;
pub use embeddings::{load_embeddings, write_embeddings, EmbeddingSeries};
pub use headline::{load_headlines, parse_excluded_types, HeadlineRecord};
pub use panel::{load_returns, write_membership, write_returns, IngestConfig, ReturnsPanel};
pub use sector::{load_sector_map, write_sector_map, SectorMap, CANONICAL_SECTOR_CODES};
