//! Taylor's-law fluctuation scaling of Amihud illiquidity from minute bars.
//!
//! The pipeline is `ingest` (CSV bars, metadata, calendar) → `aggregate`
//! (Δt blocks and illiquidity) → `taylor` (mean-variance points and the
//! log-log fit) → `groups` / `sweep`. `synth` generates universes whose
//! exponent is known in closed form.

pub mod aggregate;
pub mod error;
pub mod groups;
pub mod ingest;
pub mod model;
pub mod numeric;
pub mod sweep;
pub mod synth;
pub mod taylor;

pub use error::{AggregateError, GroupError, IngestError, ModelError, StatsError, SweepError, SynthError};
pub use model::{
    Category, IlliquiditySeries, InstrumentId, InstrumentMeta, Market, MeanVariancePoint, MinuteBar, Region, Sector,
    SessionCalendar, SessionWindow, SummaryStats, SweepCurve, SweepEntry, TaylorFit, Timestamp,
};
