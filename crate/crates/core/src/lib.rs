//! Event-study toolkit for cryptocurrency forks: price ingestion, returns,
//! fork calendars, EGARCH estimation with Student-t shocks and group tests.

pub mod egarch;
pub mod estimation;
pub mod error;
pub mod events;
pub mod grouptests;
pub mod ingestion;
pub mod timeseries;

pub use error::{Error, Result};
