//! Bar, metadata and calendar files, and market classification by code prefix.
//!
//! File schemas (UTF-8 CSV with a header row):
//!
//! * bars: `instrument_id,date,minute,close,dollar_volume`
//! * metadata: `code,category,sector,region,market,listing_date,delisting_date`
//! * calendar: `date,open1,close1,open2,close2` (second session optional)
//!
//! Dates are `YYYY-MM-DD`, minutes are `HH:MM` exchange local time and mark
//! the end of the bar's minute.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{IngestError, ModelError};
use crate::model::{
    format_hhmm, parse_hhmm, Category, InstrumentId, InstrumentMeta, Market, MinuteBar, Region,
    Sector, SessionCalendar, SessionWindow, Timestamp,
};

pub const BAR_HEADER: [&str; 5] = ["instrument_id", "date", "minute", "close", "dollar_volume"];
pub const META_HEADER: [&str; 7] = [
    "code",
    "category",
    "sector",
    "region",
    "market",
    "listing_date",
    "delisting_date",
];
pub const CALENDAR_HEADER: [&str; 5] = ["date", "open1", "close1", "open2", "close2"];

/// Accepted bars per instrument, each sequence strictly increasing in time.
pub type BarCollection = BTreeMap<InstrumentId, Vec<MinuteBar>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    BadPrice,
    BadVolume,
    BadTimestamp,
    OutOfSession,
    Duplicate,
    Malformed,
}

impl RejectReason {
    pub fn label(&self) -> &'static str {
        match self {
            RejectReason::BadPrice => "bad price",
            RejectReason::BadVolume => "bad volume",
            RejectReason::BadTimestamp => "bad timestamp",
            RejectReason::OutOfSession => "out-of-session",
            RejectReason::Duplicate => "duplicate",
            RejectReason::Malformed => "malformed",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_accepted: usize,
    pub rows_rejected: usize,
    pub rejections: BTreeMap<RejectReason, usize>,
}

impl IngestReport {
    pub fn count(&self, reason: RejectReason) -> usize {
        self.rejections.get(&reason).copied().unwrap_or(0)
    }

    fn reject(&mut self, reason: RejectReason) {
        self.rows_rejected += 1;
        *self.rejections.entry(reason).or_default() += 1;
    }

    pub fn rejection_rate(&self) -> f64 {
        if self.rows_read == 0 {
            0.0
        } else {
            self.rows_rejected as f64 / self.rows_read as f64
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.rows_read == self.rows_accepted + self.rows_rejected
            && self.rejections.values().sum::<usize>() == self.rows_rejected
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParseOptions {
    /// Fraction of rejected rows above which parsing fails outright.
    pub rejection_threshold: f64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            rejection_threshold: 0.10,
        }
    }
}

fn strip_bom(s: &str) -> &str {
    s.strip_prefix('\u{feff}').unwrap_or(s)
}

fn check_header(headers: &csv::StringRecord, expected: &[&str], required: usize) -> Result<(), IngestError> {
    let got: Vec<&str> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| if i == 0 { strip_bom(h).trim() } else { h.trim() })
        .collect();
    let ok = got.len() >= required
        && got.len() <= expected.len()
        && got.iter().zip(expected).all(|(g, e)| g == e);
    if ok {
        Ok(())
    } else {
        Err(IngestError::Schema(format!(
            "expected header `{}`, got `{}`",
            expected.join(","),
            got.join(",")
        )))
    }
}

fn reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source)
}

/// Fast `YYYY-MM-DD` parser.
pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let b = s.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return None;
    }
    let num = |r: std::ops::Range<usize>| -> Option<u32> {
        b[r].iter().try_fold(0u32, |acc, c| {
            c.is_ascii_digit().then(|| acc * 10 + u32::from(c - b'0'))
        })
    };
    NaiveDate::from_ymd_opt(num(0..4)? as i32, num(5..7)?, num(8..10)?)
}

fn parse_optional_date(s: &str) -> Result<Option<NaiveDate>, String> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_date(s).map(Some).ok_or_else(|| format!("bad date {s:?}"))
    }
}

fn classify_row(record: &csv::StringRecord, calendar: &SessionCalendar) -> Result<MinuteBar, RejectReason> {
    if record.len() != BAR_HEADER.len() {
        return Err(RejectReason::Malformed);
    }
    let instrument: InstrumentId = record[0].parse().map_err(|_| RejectReason::Malformed)?;
    let date = parse_date(&record[1]).ok_or(RejectReason::BadTimestamp)?;
    let minute = parse_hhmm(&record[2]).ok_or(RejectReason::BadTimestamp)?;
    let close: f64 = record[3].parse().map_err(|_| RejectReason::BadPrice)?;
    let volume: f64 = record[4].parse().map_err(|_| RejectReason::BadVolume)?;
    let timestamp = Timestamp::new(date, minute);
    let bar = MinuteBar::new(instrument, timestamp, close, volume).map_err(|e| match e {
        ModelError::NonPositivePrice(_) => RejectReason::BadPrice,
        _ => RejectReason::BadVolume,
    })?;
    if !calendar.contains(timestamp) {
        return Err(RejectReason::OutOfSession);
    }
    Ok(bar)
}

/// Sorts each sequence by time and drops repeated timestamps, keeping the
/// first occurrence in input order. Returns the number dropped.
fn sort_and_dedup(bars: &mut Vec<MinuteBar>) -> usize {
    if !bars.windows(2).all(|w| w[0].timestamp < w[1].timestamp) {
        bars.sort_by_key(|b| b.timestamp);
    }
    let before = bars.len();
    bars.dedup_by_key(|b| b.timestamp);
    before - bars.len()
}

/// Parses one bar file, validating every row against `calendar`.
pub fn parse_bars<R: Read>(
    source: R,
    calendar: &SessionCalendar,
    options: &ParseOptions,
) -> Result<(BarCollection, IngestReport), IngestError> {
    let mut rdr = reader(source);
    let headers = rdr
        .headers()
        .map_err(|e| IngestError::Schema(format!("unreadable header: {e}")))?
        .clone();
    check_header(&headers, &BAR_HEADER, BAR_HEADER.len())?;

    let mut report = IngestReport::default();
    let mut bars = BarCollection::new();
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(_) => {
                report.rows_read += 1;
                report.reject(RejectReason::Malformed);
                continue;
            }
        }
        report.rows_read += 1;
        match classify_row(&record, calendar) {
            Ok(bar) => bars.entry(bar.instrument).or_default().push(bar),
            Err(reason) => report.reject(reason),
        }
    }

    let mut duplicates = 0;
    for seq in bars.values_mut() {
        duplicates += sort_and_dedup(seq);
    }
    for _ in 0..duplicates {
        report.reject(RejectReason::Duplicate);
    }
    report.rows_accepted = report.rows_read - report.rows_rejected;

    if report.rejection_rate() > options.rejection_threshold {
        return Err(IngestError::RejectionThreshold {
            rejected: report.rows_rejected,
            read: report.rows_read,
            threshold: options.rejection_threshold,
        });
    }
    Ok((bars, report))
}

/// Merges per-file results in order; cross-file duplicates keep the earlier file's row.
pub fn merge_collections(parts: Vec<(BarCollection, IngestReport)>) -> (BarCollection, IngestReport) {
    let mut merged = BarCollection::new();
    let mut report = IngestReport::default();
    let mut touched = std::collections::BTreeSet::new();
    for (bars, part) in parts {
        report.rows_read += part.rows_read;
        report.rows_accepted += part.rows_accepted;
        report.rows_rejected += part.rows_rejected;
        for (reason, n) in part.rejections {
            *report.rejections.entry(reason).or_default() += n;
        }
        for (id, seq) in bars {
            match merged.get_mut(&id) {
                Some(existing) => {
                    existing.extend(seq);
                    touched.insert(id);
                }
                None => {
                    merged.insert(id, seq);
                }
            }
        }
    }
    for id in touched {
        let dropped = sort_and_dedup(merged.get_mut(&id).expect("present"));
        report.rows_accepted -= dropped;
        for _ in 0..dropped {
            report.reject(RejectReason::Duplicate);
        }
    }
    (merged, report)
}

/// Writes bars on the bar schema. Floats use the shortest round-trip form.
pub fn write_bars<'a, W: Write>(
    sink: W,
    bars: impl IntoIterator<Item = &'a MinuteBar>,
) -> Result<(), IngestError> {
    let mut out = std::io::BufWriter::new(sink);
    writeln!(out, "{}", BAR_HEADER.join(","))?;
    for bar in bars {
        write_bar_row(&mut out, bar)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_bar_row<W: Write>(out: &mut W, bar: &MinuteBar) -> std::io::Result<()> {
    writeln!(
        out,
        "{},{},{},{},{}",
        bar.instrument,
        bar.timestamp.date.format("%Y-%m-%d"),
        format_hhmm(bar.timestamp.minute),
        bar.close,
        bar.dollar_volume
    )
}

/// Code-prefix rules for assigning instruments to markets.
///
/// The longest matching prefix wins.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrefixMap {
    rules: Vec<(String, Market)>,
}

impl Default for PrefixMap {
    fn default() -> Self {
        PrefixMap::new(vec![
            ("000".into(), Market::SZMB),
            ("001".into(), Market::SZMB),
            ("300".into(), Market::SZSMEB),
            ("002".into(), Market::SZSB),
            ("600".into(), Market::SHA),
            ("200".into(), Market::SZB),
            ("9009".into(), Market::SHB),
        ])
        .expect("default rules are valid")
    }
}

impl PrefixMap {
    pub fn new(rules: Vec<(String, Market)>) -> Result<Self, IngestError> {
        for (prefix, _) in &rules {
            if prefix.is_empty() || prefix.len() > 6 || !prefix.bytes().all(|b| b.is_ascii_digit()) {
                return Err(IngestError::PrefixMap(format!("bad prefix {prefix:?}")));
            }
        }
        Ok(PrefixMap { rules })
    }

    pub fn rules(&self) -> &[(String, Market)] {
        &self.rules
    }

    fn lookup(&self, code: &str) -> Option<Market> {
        self.rules
            .iter()
            .filter(|(p, _)| code.starts_with(p.as_str()))
            .max_by_key(|(p, _)| p.len())
            .map(|&(_, m)| m)
    }
}

/// `000=SZMB,001=SZMB,...`
impl FromStr for PrefixMap {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let rules = s
            .split(',')
            .filter(|part| !part.trim().is_empty())
            .map(|part| {
                let (prefix, market) = part
                    .split_once('=')
                    .ok_or_else(|| IngestError::PrefixMap(format!("expected prefix=MARKET, got {part:?}")))?;
                Ok((prefix.trim().to_string(), market.parse::<Market>()?))
            })
            .collect::<Result<Vec<_>, IngestError>>()?;
        PrefixMap::new(rules)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    Market(Market),
    Unclassified,
}

impl Classification {
    pub fn market(self) -> Option<Market> {
        match self {
            Classification::Market(m) => Some(m),
            Classification::Unclassified => None,
        }
    }
}

pub fn classify_market(code: &str, prefix_map: &PrefixMap) -> Result<Classification, ModelError> {
    let id: InstrumentId = code.parse()?;
    Ok(prefix_map
        .lookup(id.as_str())
        .map_or(Classification::Unclassified, Classification::Market))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataReport {
    pub rows_read: usize,
    /// `(1-based data row, reason)` per rejected row.
    pub rejected: Vec<(usize, String)>,
}

fn parse_meta_row(record: &csv::StringRecord, prefix_map: &PrefixMap) -> Result<InstrumentMeta, String> {
    if record.len() > META_HEADER.len() {
        return Err(format!("{} fields, expected at most {}", record.len(), META_HEADER.len()));
    }
    let field = |i: usize| record.get(i).unwrap_or("");
    let code: InstrumentId = field(0).parse().map_err(|e: ModelError| e.to_string())?;
    let optional = |i: usize| Some(field(i)).filter(|s| !s.is_empty());
    let category = optional(1)
        .map(Category::from_str)
        .transpose()
        .map_err(|e| e.to_string())?;
    let sector = optional(2)
        .map(Sector::from_str)
        .transpose()
        .map_err(|e| e.to_string())?;
    let region = optional(3)
        .map(Region::from_str)
        .transpose()
        .map_err(|e| e.to_string())?;
    let inferred = prefix_map.lookup(code.as_str());
    let market = match optional(4) {
        Some(name) => {
            let market: Market = name.parse().map_err(|e: ModelError| e.to_string())?;
            if inferred != Some(market) {
                return Err(format!("market {market} inconsistent with code {code}"));
            }
            market
        }
        None => inferred.ok_or_else(|| format!("code {code} matches no market prefix"))?,
    };
    let listing_date = parse_optional_date(field(5))?;
    let delisting_date = parse_optional_date(field(6))?;
    Ok(InstrumentMeta {
        code,
        market,
        category,
        sector,
        region,
        listing_date,
        delisting_date,
    })
}

/// Parses the instrument universe file. Trailing empty fields may be omitted.
pub fn parse_metadata<R: Read>(
    source: R,
    prefix_map: &PrefixMap,
) -> Result<(Vec<InstrumentMeta>, MetadataReport), IngestError> {
    let mut rdr = reader(source);
    let headers = rdr
        .headers()
        .map_err(|e| IngestError::Schema(format!("unreadable header: {e}")))?
        .clone();
    check_header(&headers, &META_HEADER, 1)?;

    let mut metas = Vec::new();
    let mut report = MetadataReport::default();
    let mut seen = std::collections::HashSet::new();
    for (row, record) in rdr.records().enumerate() {
        report.rows_read += 1;
        let record = match record {
            Ok(r) => r,
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(e) => {
                report.rejected.push((row + 1, e.to_string()));
                continue;
            }
        };
        match parse_meta_row(&record, prefix_map) {
            Ok(meta) if !seen.insert(meta.code) => {
                report.rejected.push((row + 1, format!("duplicate code {}", meta.code)));
            }
            Ok(meta) => metas.push(meta),
            Err(reason) => report.rejected.push((row + 1, reason)),
        }
    }
    Ok((metas, report))
}

pub fn write_metadata<'a, W: Write>(
    sink: W,
    metas: impl IntoIterator<Item = &'a InstrumentMeta>,
) -> Result<(), IngestError> {
    let mut out = std::io::BufWriter::new(sink);
    writeln!(out, "{}", META_HEADER.join(","))?;
    let date = |d: Option<NaiveDate>| d.map(|d| d.format("%Y-%m-%d").to_string()).unwrap_or_default();
    for m in metas {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            m.code,
            m.category.map(|c| c.to_string()).unwrap_or_default(),
            csv_field(m.sector.map(|s| s.name()).unwrap_or("")),
            csv_field(m.region.map(|r| r.name()).unwrap_or("")),
            m.market,
            date(m.listing_date),
            date(m.delisting_date)
        )?;
    }
    out.flush()?;
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn parse_calendar<R: Read>(source: R) -> Result<SessionCalendar, IngestError> {
    let mut rdr = reader(source);
    let headers = rdr
        .headers()
        .map_err(|e| IngestError::Schema(format!("unreadable header: {e}")))?
        .clone();
    check_header(&headers, &CALENDAR_HEADER, 3)?;

    let mut cal = SessionCalendar::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| IngestError::Schema(format!("calendar row {}: {e}", row + 1)))?;
        let bad = |what: &str| IngestError::Schema(format!("calendar row {}: {what}", row + 1));
        let field = |i: usize| record.get(i).unwrap_or("");
        let date = parse_date(field(0)).ok_or_else(|| bad("bad date"))?;
        let minute = |i: usize| parse_hhmm(field(i)).ok_or_else(|| bad("bad HH:MM"));
        let mut windows = vec![SessionWindow::new(minute(1)?, minute(2)?)?];
        match (field(3).is_empty(), field(4).is_empty()) {
            (true, true) => {}
            (false, false) => windows.push(SessionWindow::new(minute(3)?, minute(4)?)?),
            _ => return Err(bad("second session needs both open2 and close2")),
        }
        cal.add_day(date, windows)?;
    }
    Ok(cal)
}

pub fn write_calendar<W: Write>(sink: W, calendar: &SessionCalendar) -> Result<(), IngestError> {
    let mut out = std::io::BufWriter::new(sink);
    writeln!(out, "{}", CALENDAR_HEADER.join(","))?;
    for (date, windows) in calendar.days() {
        let mut row = date.format("%Y-%m-%d").to_string();
        for w in windows.iter().take(2) {
            row.push_str(&format!(",{},{}", format_hhmm(w.open), format_hhmm(w.close)));
        }
        if windows.len() == 1 {
            row.push_str(",,");
        }
        writeln!(out, "{row}")?;
    }
    out.flush()?;
    Ok(())
}
