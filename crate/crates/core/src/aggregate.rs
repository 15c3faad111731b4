//! Δt-interval returns, volumes and illiquidity from minute bars.
//!
//! Each trading day's session minutes are numbered `1..=L` and cut into
//! consecutive blocks `(kΔt, (k+1)Δt]` starting at the first open. The block
//! return is `ln P(end) - ln P(start)` using the last close at or before each
//! boundary; the price at position 0 is the opening print. Blocks never span
//! two days. A block is complete when it has full length, every constituent
//! minute bar is present and a bar sits exactly on its start boundary.

use std::collections::HashMap;
use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::AggregateError;
use crate::model::{IlliquiditySeries, InstrumentId, MinuteBar, SessionCalendar, Timestamp};
use crate::numeric::NeumaierSum;

/// Relative tolerance for the additivity checks on returns and volumes.
pub const ADDITIVITY_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalSample {
    /// Label of the block's last minute.
    pub timestamp: Timestamp,
    /// Session-minute position of the start boundary (exclusive).
    pub start: u32,
    /// Session-minute position of the end boundary (inclusive).
    pub end: u32,
    pub ret: f64,
    pub volume: f64,
    pub complete: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntervalSeries {
    pub instrument: InstrumentId,
    pub delta_t: u32,
    pub samples: Vec<IntervalSample>,
}

impl IntervalSeries {
    pub fn complete(&self) -> impl Iterator<Item = &IntervalSample> + '_ {
        self.samples.iter().filter(|s| s.complete)
    }

    /// Debug dump as `timestamp,r,v,complete`.
    pub fn write_csv<W: Write>(&self, sink: W) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(sink);
        writeln!(out, "timestamp,r,v,complete")?;
        for s in &self.samples {
            writeln!(out, "{},{},{},{}", s.timestamp, s.ret, s.volume, s.complete)?;
        }
        out.flush()
    }
}

struct DayScratch {
    price: Vec<Option<f64>>,
    volume: Vec<Option<f64>>,
}

impl DayScratch {
    fn reset(&mut self, length: usize) {
        self.price.clear();
        self.price.resize(length + 1, None);
        self.volume.clear();
        self.volume.resize(length + 1, None);
    }
}

fn validate_sequence(bars: &[MinuteBar]) -> Result<InstrumentId, AggregateError> {
    let first = bars.first().ok_or(AggregateError::NoBars)?;
    for pair in bars.windows(2) {
        if pair[1].instrument != first.instrument {
            return Err(AggregateError::MixedInstruments(first.instrument, pair[1].instrument));
        }
        if pair[1].timestamp <= pair[0].timestamp {
            return Err(AggregateError::Unsorted(pair[1].timestamp.to_string()));
        }
    }
    Ok(first.instrument)
}

/// Partitions every trading day into Δt blocks.
///
/// `bars` must belong to one instrument and be strictly increasing in time.
pub fn build_intervals(
    bars: &[MinuteBar],
    delta_t: u32,
    calendar: &SessionCalendar,
) -> Result<IntervalSeries, AggregateError> {
    if delta_t == 0 {
        return Err(AggregateError::InvalidDeltaT(0));
    }
    let instrument = validate_sequence(bars)?;
    let mut samples = Vec::new();
    let mut scratch = DayScratch {
        price: Vec::new(),
        volume: Vec::new(),
    };
    for day in bars.chunk_by(|a, b| a.timestamp.date == b.timestamp.date) {
        build_day(day, delta_t, calendar, &mut scratch, &mut samples)?;
    }
    Ok(IntervalSeries {
        instrument,
        delta_t,
        samples,
    })
}

fn build_day(
    day: &[MinuteBar],
    delta_t: u32,
    calendar: &SessionCalendar,
    scratch: &mut DayScratch,
    out: &mut Vec<IntervalSample>,
) -> Result<(), AggregateError> {
    let date: NaiveDate = day[0].timestamp.date;
    let length = calendar
        .session_length(date)
        .ok_or_else(|| AggregateError::OutOfSession(day[0].timestamp.to_string()))?;
    scratch.reset(length as usize);
    for bar in day {
        let pos = calendar
            .position(bar.timestamp)
            .ok_or_else(|| AggregateError::OutOfSession(bar.timestamp.to_string()))? as usize;
        scratch.price[pos] = Some(bar.close);
        if pos > 0 {
            scratch.volume[pos] = Some(bar.dollar_volume);
        }
    }
    let first_close = day[0].close;

    // Last close at or before each position.
    let mut filled = Vec::with_capacity(length as usize + 1);
    let mut last = None;
    for p in &scratch.price {
        if p.is_some() {
            last = *p;
        }
        filled.push(last);
    }

    let mut start = 0u32;
    while start < length {
        let end = (start + delta_t).min(length);
        let p_start = filled[start as usize].unwrap_or(first_close);
        let p_end = filled[end as usize].unwrap_or(first_close);
        let mut volume = 0.0;
        let mut all_present = true;
        for v in &scratch.volume[start as usize + 1..=end as usize] {
            match v {
                Some(v) => volume += v,
                None => all_present = false,
            }
        }
        let complete = all_present && end - start == delta_t && scratch.price[start as usize].is_some();
        let minute = calendar.minute_at(date, end).expect("position within session");
        out.push(IntervalSample {
            timestamp: Timestamp::new(date, minute),
            start,
            end,
            ret: p_end.ln() - p_start.ln(),
            volume,
            complete,
        });
        start = end;
    }
    Ok(())
}

/// `f = |r| / v` on complete blocks with positive volume; everything else is missing.
pub fn illiquidity(series: &IntervalSeries) -> IlliquiditySeries {
    IlliquiditySeries {
        instrument: series.instrument,
        delta_t: series.delta_t,
        samples: series
            .complete()
            .filter(|s| s.volume > 0.0)
            .map(|s| (s.timestamp, s.ret.abs() / s.volume))
            .collect(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub returns: f64,
    pub volumes: f64,
    pub illiquidity: f64,
}

/// A block where the coarse illiquidity differs from the sum of its 1-min parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonAdditivityWitness {
    pub timestamp: Timestamp,
    pub coarse: f64,
    pub sum_of_parts: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdditivityReport {
    pub delta_t: u32,
    pub blocks_checked: usize,
    /// Complete coarse blocks whose 1-min constituents were not all complete.
    pub blocks_skipped: usize,
    pub illiquidity_compared: usize,
    pub returns_additive: bool,
    pub volumes_additive: bool,
    pub illiquidity_additive: bool,
    pub max_abs_discrepancy: Discrepancy,
    pub max_rel_discrepancy: Discrepancy,
    pub witness: Option<NonAdditivityWitness>,
}

fn relative(diff: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / scale
    }
}

/// Compares every complete block of `coarse` with the sum of the matching
/// blocks of `one_minute`.
pub fn check_additivity(
    one_minute: &IntervalSeries,
    coarse: &IntervalSeries,
) -> Result<AdditivityReport, AggregateError> {
    if one_minute.delta_t != 1 {
        return Err(AggregateError::NotOneMinute(one_minute.delta_t));
    }
    if one_minute.instrument != coarse.instrument {
        return Err(AggregateError::InstrumentMismatch(one_minute.instrument, coarse.instrument));
    }
    let fine: HashMap<(NaiveDate, u32), &IntervalSample> = one_minute
        .samples
        .iter()
        .map(|s| ((s.timestamp.date, s.end), s))
        .collect();

    let mut report = AdditivityReport {
        delta_t: coarse.delta_t,
        blocks_checked: 0,
        blocks_skipped: 0,
        illiquidity_compared: 0,
        returns_additive: true,
        volumes_additive: true,
        illiquidity_additive: true,
        max_abs_discrepancy: Discrepancy::default(),
        max_rel_discrepancy: Discrepancy::default(),
        witness: None,
    };

    for block in coarse.complete() {
        let date = block.timestamp.date;
        if let Some(s) = fine.get(&(date, block.end)) {
            if s.timestamp != block.timestamp {
                return Err(AggregateError::CalendarMismatch(format!(
                    "block ending at position {} is {} in one series and {} in the other",
                    block.end, block.timestamp, s.timestamp
                )));
            }
        }
        let parts: Option<Vec<&IntervalSample>> = (block.start + 1..=block.end)
            .map(|p| fine.get(&(date, p)).copied().filter(|s| s.complete))
            .collect();
        let Some(parts) = parts else {
            report.blocks_skipped += 1;
            continue;
        };
        report.blocks_checked += 1;

        let mut ret_sum = NeumaierSum::default();
        let mut ret_scale = NeumaierSum::default();
        let mut vol_sum = 0.0;
        for s in &parts {
            ret_sum.add(s.ret);
            ret_scale.add(s.ret.abs());
            vol_sum += s.volume;
        }
        let ret_diff = (block.ret - ret_sum.total()).abs();
        let ret_rel = relative(ret_diff, block.ret.abs().max(ret_scale.total()));
        let vol_diff = (block.volume - vol_sum).abs();
        let vol_rel = relative(vol_diff, block.volume.abs().max(vol_sum.abs()));
        let abs = &mut report.max_abs_discrepancy;
        abs.returns = abs.returns.max(ret_diff);
        abs.volumes = abs.volumes.max(vol_diff);
        let rel = &mut report.max_rel_discrepancy;
        rel.returns = rel.returns.max(ret_rel);
        rel.volumes = rel.volumes.max(vol_rel);
        report.returns_additive &= ret_rel <= ADDITIVITY_TOLERANCE;
        report.volumes_additive &= vol_rel <= ADDITIVITY_TOLERANCE;

        if block.volume > 0.0 && parts.iter().all(|s| s.volume > 0.0) {
            report.illiquidity_compared += 1;
            let coarse_f = block.ret.abs() / block.volume;
            let mut sum = NeumaierSum::default();
            for s in &parts {
                sum.add(s.ret.abs() / s.volume);
            }
            let parts_f = sum.total();
            let diff = (coarse_f - parts_f).abs();
            let rel_f = relative(diff, coarse_f.max(parts_f));
            report.max_abs_discrepancy.illiquidity = report.max_abs_discrepancy.illiquidity.max(diff);
            report.max_rel_discrepancy.illiquidity = report.max_rel_discrepancy.illiquidity.max(rel_f);
            if rel_f > ADDITIVITY_TOLERANCE {
                report.illiquidity_additive = false;
                report.witness.get_or_insert(NonAdditivityWitness {
                    timestamp: block.timestamp,
                    coarse: coarse_f,
                    sum_of_parts: parts_f,
                });
            }
        }
    }
    Ok(report)
}
