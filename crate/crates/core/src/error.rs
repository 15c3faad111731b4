use thiserror::Error;

use crate::model::InstrumentId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("instrument code must be exactly 6 decimal digits, got {0:?}")]
    InvalidInstrumentId(String),
    #[error("close price must be strictly positive, got {0}")]
    NonPositivePrice(f64),
    #[error("dollar volume must be non-negative, got {0}")]
    NegativeVolume(f64),
    #[error("unknown market {0:?}")]
    UnknownMarket(String),
    #[error("invalid industry category {0:?}")]
    InvalidCategory(String),
    #[error("unknown sector {0:?}")]
    UnknownSector(String),
    #[error("unknown region {0:?}")]
    UnknownRegion(String),
    #[error("invalid session calendar: {0}")]
    InvalidSession(String),
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("rejection threshold exceeded: {rejected} of {read} rows rejected (limit {threshold})")]
    RejectionThreshold {
        rejected: usize,
        read: usize,
        threshold: f64,
    },
    #[error("invalid prefix map: {0}")]
    PrefixMap(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AggregateError {
    #[error("no bars to aggregate")]
    NoBars,
    #[error("delta_t must be at least 1 minute, got {0}")]
    InvalidDeltaT(i64),
    #[error("bars mix instruments {0} and {1}")]
    MixedInstruments(InstrumentId, InstrumentId),
    #[error("bars are not strictly increasing in time at {0}")]
    Unsorted(String),
    #[error("bar at {0} lies outside the session calendar")]
    OutOfSession(String),
    #[error("series belong to different instruments ({0} vs {1})")]
    InstrumentMismatch(InstrumentId, InstrumentId),
    #[error("series were built on different calendars: {0}")]
    CalendarMismatch(String),
    #[error("expected a 1-minute series, got delta_t = {0}")]
    NotOneMinute(u32),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("empty series")]
    EmptySeries,
    #[error("empty sample")]
    EmptySample,
    #[error("insufficient points: {usable} usable, {excluded} excluded, need at least 3")]
    InsufficientPoints { usable: usize, excluded: usize },
    #[error("degenerate abscissa: all x values are identical")]
    DegenerateAbscissa,
    #[error("x and y lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GroupError {
    #[error("unknown grouping key {0:?}")]
    UnknownKey(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error("grid must be non-empty, strictly increasing and >= 1: {0}")]
    InvalidGrid(String),
    #[error("no delta_t produced a usable fit")]
    NoEntries,
    #[error("need at least {needed} entries, have {have}")]
    TooFewEntries { needed: usize, have: usize },
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
