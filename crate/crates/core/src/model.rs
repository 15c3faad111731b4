//! Domain types shared by every stage of the pipeline.
//!
//! Nothing in here performs I/O. Constructors enforce the invariants that
//! the rest of the crate relies on (positive prices, six-digit codes,
//! disjoint session windows), so downstream code can take them for granted.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Six-digit exchange code, e.g. `000016` or `900901`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InstrumentId([u8; 6]);

impl InstrumentId {
    pub fn as_str(&self) -> &str {
        // Only ASCII digits are ever stored.
        std::str::from_utf8(&self.0).expect("ascii digits")
    }

    pub fn digits(&self) -> &[u8; 6] {
        &self.0
    }
}

impl FromStr for InstrumentId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = s.as_bytes();
        if bytes.len() != 6 || !bytes.iter().all(u8::is_ascii_digit) {
            return Err(ModelError::InvalidInstrumentId(s.to_string()));
        }
        let mut code = [0u8; 6];
        code.copy_from_slice(bytes);
        Ok(InstrumentId(code))
    }
}

impl fmt::Display for InstrumentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for InstrumentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "InstrumentId({})", self.as_str())
    }
}

impl Serialize for InstrumentId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for InstrumentId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Calendar date plus minute-of-day in exchange local time.
///
/// A bar labelled `t` covers the minute `(t - 1, t]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Timestamp {
    pub date: NaiveDate,
    pub minute: u16,
}

impl Timestamp {
    pub fn new(date: NaiveDate, minute: u16) -> Self {
        Timestamp { date, minute }
    }

    pub fn hhmm(&self) -> String {
        format_hhmm(self.minute)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.date.format("%Y-%m-%d"), format_hhmm(self.minute))
    }
}

pub fn format_hhmm(minute: u16) -> String {
    format!("{:02}:{:02}", minute / 60, minute % 60)
}

/// Parses `HH:MM` into minutes after midnight.
pub fn parse_hhmm(s: &str) -> Option<u16> {
    let (h, m) = s.split_once(':')?;
    if h.is_empty() || h.len() > 2 || m.len() != 2 {
        return None;
    }
    let h: u16 = h.parse().ok()?;
    let m: u16 = m.parse().ok()?;
    (h < 24 && m < 60).then_some(h * 60 + m)
}

/// One price/volume observation for one instrument at one minute.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinuteBar {
    pub instrument: InstrumentId,
    pub timestamp: Timestamp,
    pub close: f64,
    pub dollar_volume: f64,
}

impl MinuteBar {
    pub fn new(
        instrument: InstrumentId,
        timestamp: Timestamp,
        close: f64,
        dollar_volume: f64,
    ) -> Result<Self, ModelError> {
        if !(close.is_finite() && close > 0.0) {
            return Err(ModelError::NonPositivePrice(close));
        }
        if !(dollar_volume.is_finite() && dollar_volume >= 0.0) {
            return Err(ModelError::NegativeVolume(dollar_volume));
        }
        Ok(MinuteBar {
            instrument,
            timestamp,
            close,
            dollar_volume,
        })
    }
}

/// The six boards of the Shanghai and Shenzhen exchanges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Market {
    SZMB,
    SZSMEB,
    SZSB,
    SHA,
    SZB,
    SHB,
}

impl Market {
    pub const ALL: [Market; 6] = [
        Market::SZMB,
        Market::SZSMEB,
        Market::SZSB,
        Market::SHA,
        Market::SZB,
        Market::SHB,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Market::SZMB => "SZMB",
            Market::SZSMEB => "SZSMEB",
            Market::SZSB => "SZSB",
            Market::SHA => "SHA",
            Market::SZB => "SZB",
            Market::SHB => "SHB",
        }
    }

    pub fn is_b_share(&self) -> bool {
        matches!(self, Market::SZB | Market::SHB)
    }
}

impl fmt::Display for Market {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Market {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        Market::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(t))
            .ok_or_else(|| ModelError::UnknownMarket(s.to_string()))
    }
}

/// Industry category letter. `O` and `P` never occur among listed companies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Category(char);

impl Category {
    pub const LETTERS: [char; 17] = [
        'A', 'B', 'C', 'D', 'E', 'F', 'G', 'H', 'I', 'J', 'K', 'L', 'M', 'N', 'Q', 'R', 'S',
    ];

    pub fn letter(&self) -> char {
        self.0
    }
}

impl FromStr for Category {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let mut chars = t.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) if Category::LETTERS.contains(&c.to_ascii_uppercase()) => {
                Ok(Category(c.to_ascii_uppercase()))
            }
            _ => Err(ModelError::InvalidCategory(s.to_string())),
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub const SECTORS: [&str; 28] = [
    "Agriculture",
    "Architectural ornament",
    "Automobile",
    "Bank",
    "Building material",
    "Catering & tourism",
    "Chemical",
    "Commerce & trade",
    "Computer",
    "Electrical equipment",
    "Electrical household appliances",
    "Electronic component",
    "Ferrous metal",
    "Financial",
    "Food & beverage",
    "Light industry manufacturing",
    "Mechanical equipment",
    "Medias",
    "Medical biology",
    "Mining",
    "Miscellaneous",
    "Nonferrous metal",
    "Property",
    "Public utility",
    "Telecommunication",
    "Textile & clothing",
    "Transportation & infrastructure",
    "War industry",
];

pub const REGIONS: [&str; 31] = [
    "Anhui",
    "Beijing",
    "Chongqing",
    "Fujian",
    "Gansu",
    "Guangdong",
    "Guangxi",
    "Guizhou",
    "Hainan",
    "Hebei",
    "Heilongjiang",
    "Henan",
    "Hubei",
    "Hunan",
    "Inner Mongolia",
    "Jiangsu",
    "Jiangxi",
    "Jilin",
    "Liaoning",
    "Ningxia",
    "Qinghai",
    "Shaanxi",
    "Shandong",
    "Shanghai",
    "Shanxi",
    "Sichuan",
    "Tianjin",
    "Tibet",
    "Xinjiang",
    "Yunnan",
    "Zhejiang",
];

fn normalized(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_ascii_lowercase()
}

fn lookup(table: &[&str], s: &str) -> Option<usize> {
    let wanted = normalized(s);
    table.iter().position(|name| name.to_ascii_lowercase() == wanted)
}

/// One of the 28 industrial sectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sector(u8);

impl Sector {
    pub fn name(&self) -> &'static str {
        SECTORS[self.0 as usize]
    }

    pub fn all() -> impl Iterator<Item = Sector> {
        (0..SECTORS.len() as u8).map(Sector)
    }
}

impl FromStr for Sector {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        lookup(&SECTORS, s)
            .map(|i| Sector(i as u8))
            .ok_or_else(|| ModelError::UnknownSector(s.to_string()))
    }
}

impl fmt::Display for Sector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One of the 31 provinces and direct-controlled municipalities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Region(u8);

impl Region {
    pub fn name(&self) -> &'static str {
        REGIONS[self.0 as usize]
    }

    pub fn all() -> impl Iterator<Item = Region> {
        (0..REGIONS.len() as u8).map(Region)
    }
}

impl FromStr for Region {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        // Spelling used in some published tables.
        let s = if normalized(s) == "xijiang" { "Xinjiang" } else { s };
        lookup(&REGIONS, s)
            .map(|i| Region(i as u8))
            .ok_or_else(|| ModelError::UnknownRegion(s.to_string()))
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstrumentMeta {
    pub code: InstrumentId,
    pub market: Market,
    pub category: Option<Category>,
    pub sector: Option<Sector>,
    pub region: Option<Region>,
    pub listing_date: Option<NaiveDate>,
    pub delisting_date: Option<NaiveDate>,
}

impl InstrumentMeta {
    pub fn new(code: InstrumentId, market: Market) -> Self {
        InstrumentMeta {
            code,
            market,
            category: None,
            sector: None,
            region: None,
            listing_date: None,
            delisting_date: None,
        }
    }
}

/// Non-additive Δt-interval illiquidity `|r| / v` for one instrument.
///
/// Intervals with zero volume or missing bars are absent rather than zero.
#[derive(Clone, Debug, PartialEq)]
pub struct IlliquiditySeries {
    pub instrument: InstrumentId,
    pub delta_t: u32,
    pub samples: Vec<(Timestamp, f64)>,
}

impl IlliquiditySeries {
    pub fn defined_count(&self) -> usize {
        self.samples.len()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|&(_, f)| f)
    }

    /// Multiplies every sample by `factor`.
    pub fn scaled(&self, factor: f64) -> IlliquiditySeries {
        IlliquiditySeries {
            instrument: self.instrument,
            delta_t: self.delta_t,
            samples: self.samples.iter().map(|&(t, f)| (t, f * factor)).collect(),
        }
    }
}

/// One dot on the variance-versus-mean scatter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanVariancePoint {
    pub instrument: InstrumentId,
    pub delta_t: u32,
    pub mean: f64,
    pub variance: f64,
    pub sample_count: usize,
}

/// Log-log OLS fit of `log10 V = log10 a + b log10 m` with inference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaylorFit {
    pub n: usize,
    pub b: f64,
    pub se_b: f64,
    pub p_b: f64,
    pub log_a: f64,
    pub se_log_a: f64,
    pub p_a: f64,
    pub adj_r2: f64,
    /// Points dropped because their mean or variance was not positive.
    pub excluded: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub count: usize,
    pub max: f64,
    pub min: f64,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    /// `None` when the sample has zero dispersion.
    pub skewness: Option<f64>,
    /// Raw (non-excess) kurtosis; `None` when the sample has zero dispersion.
    pub kurtosis: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub delta_t: u32,
    pub fit: TaylorFit,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurveFlags {
    /// No post-peak suffix of length two or more stayed within the plateau tolerance.
    pub no_plateau: bool,
    /// Fewer than three entries up to the regime end; no log-regime slope.
    pub log_regime_unavailable: bool,
}

/// Scaling exponent as a function of the aggregation interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub entries: Vec<SweepEntry>,
    pub dt_max: u32,
    pub log_slope: Option<f64>,
    pub log_intercept: Option<f64>,
    pub stable_level: f64,
    pub flags: CurveFlags,
}

impl SweepCurve {
    pub fn entry(&self, delta_t: u32) -> Option<&SweepEntry> {
        self.entries.iter().find(|e| e.delta_t == delta_t)
    }
}

/// A continuous trading window: bars labelled in `(open, close]` belong to it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionWindow {
    pub open: u16,
    pub close: u16,
}

impl SessionWindow {
    pub fn new(open: u16, close: u16) -> Result<Self, ModelError> {
        if open >= close || close > 24 * 60 {
            return Err(ModelError::InvalidSession(format!(
                "window {}-{} is empty or out of range",
                format_hhmm(open),
                format_hhmm(close)
            )));
        }
        Ok(SessionWindow { open, close })
    }

    pub fn len(&self) -> u32 {
        u32::from(self.close - self.open)
    }

    pub fn is_empty(&self) -> bool {
        self.open == self.close
    }
}

/// Trading days and their session windows.
///
/// Session minutes of a day are numbered by position `1..=L`, with position
/// `0` reserved for the opening print stamped exactly at the first open.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SessionCalendar {
    days: BTreeMap<NaiveDate, Vec<SessionWindow>>,
}

impl SessionCalendar {
    pub fn new() -> Self {
        SessionCalendar::default()
    }

    /// The Shanghai/Shenzhen continuous sessions 09:30-11:30 and 13:00-15:00.
    pub fn china_sessions() -> [SessionWindow; 2] {
        [
            SessionWindow {
                open: 9 * 60 + 30,
                close: 11 * 60 + 30,
            },
            SessionWindow {
                open: 13 * 60,
                close: 15 * 60,
            },
        ]
    }

    /// `count` consecutive weekdays from `start` (inclusive), each with the China sessions.
    pub fn weekdays(start: NaiveDate, count: usize) -> Self {
        use chrono::{Datelike, Weekday};
        let mut cal = SessionCalendar::new();
        let mut date = start;
        while cal.days.len() < count {
            if !matches!(date.weekday(), Weekday::Sat | Weekday::Sun) {
                cal.days.insert(date, Self::china_sessions().to_vec());
            }
            date = date.succ_opt().expect("date in range");
        }
        cal
    }

    pub fn add_day(&mut self, date: NaiveDate, windows: Vec<SessionWindow>) -> Result<(), ModelError> {
        if windows.is_empty() {
            return Err(ModelError::InvalidSession(format!("{date}: no session windows")));
        }
        for pair in windows.windows(2) {
            if pair[0].close > pair[1].open {
                return Err(ModelError::InvalidSession(format!(
                    "{date}: windows overlap or are out of order"
                )));
            }
        }
        if self.days.insert(date, windows).is_some() {
            return Err(ModelError::InvalidSession(format!("{date}: listed twice")));
        }
        Ok(())
    }

    pub fn windows(&self, date: NaiveDate) -> Option<&[SessionWindow]> {
        self.days.get(&date).map(Vec::as_slice)
    }

    pub fn days(&self) -> impl Iterator<Item = (NaiveDate, &[SessionWindow])> + '_ {
        self.days.iter().map(|(d, w)| (*d, w.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    /// Total session minutes on `date`.
    pub fn session_length(&self, date: NaiveDate) -> Option<u32> {
        self.windows(date).map(|w| w.iter().map(SessionWindow::len).sum())
    }

    /// Session-minute position of a bar label, `None` when outside every window.
    pub fn position(&self, ts: Timestamp) -> Option<u32> {
        let windows = self.windows(ts.date)?;
        if ts.minute == windows[0].open {
            return Some(0);
        }
        let mut offset = 0;
        for w in windows {
            if ts.minute > w.open && ts.minute <= w.close {
                return Some(offset + u32::from(ts.minute - w.open));
            }
            offset += w.len();
        }
        None
    }

    /// Bar label at session-minute position `pos` (`0` is the first open).
    pub fn minute_at(&self, date: NaiveDate, pos: u32) -> Option<u16> {
        let windows = self.windows(date)?;
        if pos == 0 {
            return Some(windows[0].open);
        }
        let mut offset = 0;
        for w in windows {
            if pos <= offset + w.len() {
                return Some(w.open + (pos - offset) as u16);
            }
            offset += w.len();
        }
        None
    }

    pub fn contains(&self, ts: Timestamp) -> bool {
        self.position(ts).is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn instrument_id_requires_six_digits() {
        assert!("000016".parse::<InstrumentId>().is_ok());
        assert!("00016".parse::<InstrumentId>().is_err());
        assert!("00001a".parse::<InstrumentId>().is_err());
        assert!("0000160".parse::<InstrumentId>().is_err());
    }

    #[test]
    fn bar_rejects_bad_price_and_volume() {
        let id: InstrumentId = "600000".parse().unwrap();
        let ts = Timestamp::new(d("2011-01-04"), 9 * 60 + 31);
        assert!(MinuteBar::new(id, ts, 0.0, 1.0).is_err());
        assert!(MinuteBar::new(id, ts, -1.0, 1.0).is_err());
        assert!(MinuteBar::new(id, ts, f64::NAN, 1.0).is_err());
        assert!(MinuteBar::new(id, ts, 1.0, -0.5).is_err());
        assert!(MinuteBar::new(id, ts, 1.0, 0.0).is_ok());
    }

    #[test]
    fn category_domain_skips_o_and_p() {
        assert_eq!("c".parse::<Category>().unwrap().letter(), 'C');
        assert!("O".parse::<Category>().is_err());
        assert!("P".parse::<Category>().is_err());
        assert!("Z".parse::<Category>().is_err());
        assert!("AB".parse::<Category>().is_err());
        assert_eq!(Category::LETTERS.len(), 17);
    }

    #[test]
    fn sector_and_region_lookup_is_case_insensitive() {
        assert_eq!("miscellaneous".parse::<Sector>().unwrap().name(), "Miscellaneous");
        assert_eq!(
            "Catering  &  Tourism".parse::<Sector>().unwrap().name(),
            "Catering & tourism"
        );
        assert!("Shenzhen-omitted".parse::<Region>().is_err());
        assert_eq!("Xijiang".parse::<Region>().unwrap().name(), "Xinjiang");
        assert_eq!("inner mongolia".parse::<Region>().unwrap().name(), "Inner Mongolia");
    }

    #[test]
    fn hhmm_round_trip() {
        assert_eq!(parse_hhmm("09:31"), Some(571));
        assert_eq!(parse_hhmm("9:31"), Some(571));
        assert_eq!(format_hhmm(571), "09:31");
        assert_eq!(parse_hhmm("24:00"), None);
        assert_eq!(parse_hhmm("12:5"), None);
        assert_eq!(parse_hhmm("ab:cd"), None);
    }

    #[test]
    fn china_day_has_240_minutes_and_positions() {
        let cal = SessionCalendar::weekdays(d("2011-01-07"), 2);
        let days: Vec<_> = cal.days().map(|(d, _)| d).collect();
        // Friday then Monday.
        assert_eq!(days, vec![d("2011-01-07"), d("2011-01-10")]);
        let day = days[0];
        assert_eq!(cal.session_length(day), Some(240));
        let ts = |m: u16| Timestamp::new(day, m);
        assert_eq!(cal.position(ts(9 * 60 + 30)), Some(0));
        assert_eq!(cal.position(ts(9 * 60 + 31)), Some(1));
        assert_eq!(cal.position(ts(11 * 60 + 30)), Some(120));
        assert_eq!(cal.position(ts(13 * 60)), None);
        assert_eq!(cal.position(ts(13 * 60 + 1)), Some(121));
        assert_eq!(cal.position(ts(15 * 60)), Some(240));
        assert_eq!(cal.position(ts(15 * 60 + 1)), None);
        for pos in 0..=240 {
            let m = cal.minute_at(day, pos).unwrap();
            assert_eq!(cal.position(ts(m)), Some(pos));
        }
        assert_eq!(cal.minute_at(day, 241), None);
    }

    #[test]
    fn overlapping_windows_rejected() {
        let mut cal = SessionCalendar::new();
        let w = vec![
            SessionWindow::new(570, 700).unwrap(),
            SessionWindow::new(690, 900).unwrap(),
        ];
        assert!(cal.add_day(d("2011-01-04"), w).is_err());
        assert!(SessionWindow::new(700, 700).is_err());
    }
}
