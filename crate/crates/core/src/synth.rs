//! Synthetic universes with known scaling exponents.
//!
//! Every random draw comes from a ChaCha8 stream keyed by `(seed, instrument,
//! purpose)`, so instruments can be generated in any order or in parallel
//! without changing the output.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::SynthError;
use crate::ingest::{write_bar_row, write_calendar, write_metadata, BAR_HEADER};
use crate::model::{
    Category, IlliquiditySeries, InstrumentId, InstrumentMeta, Market, MinuteBar, Region, Sector, SessionCalendar,
    Timestamp,
};

pub const MINUTES_PER_DAY: usize = 240;
const START_PRICE: f64 = 10.0;
/// Log-price step per Poisson event.
const POISSON_TICK: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    /// Poisson(μ) values: V = μ.
    PoissonFlux,
    /// Gamma(k, μ/k) values: V = μ²/k.
    GammaFixedShape { shape: f64 },
    /// Lognormal values with V = 10^log10_prefactor · μ^exponent.
    LognormalPowerLaw { exponent: f64, log10_prefactor: f64 },
    /// Gaussian random-walk prices and lognormal minute volumes.
    BarLevelMarket {
        /// Per-minute log-return volatility, drawn log-uniformly.
        sigma_range: (f64, f64),
        /// Log-standard deviation of minute volumes.
        volume_dispersion: f64,
    },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::PoissonFlux => "poisson-flux",
            Family::GammaFixedShape { .. } => "gamma-fixed-shape",
            Family::LognormalPowerLaw { .. } => "lognormal-power-law",
            Family::BarLevelMarket { .. } => "bar-level-market",
        }
    }

    pub fn bar_level_default() -> Family {
        Family::BarLevelMarket {
            sigma_range: (5e-4, 3e-3),
            volume_dispersion: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pathologies {
    pub duplicate_rate: f64,
    pub zero_volume_rate: f64,
    pub missing_rate: f64,
}

impl Pathologies {
    pub fn is_clean(&self) -> bool {
        self.duplicate_rate == 0.0 && self.zero_volume_rate == 0.0 && self.missing_rate == 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub family: Family,
    pub instrument_count: usize,
    pub samples_per_instrument: usize,
    /// Instrument means are log-uniform in `[m_lo, m_hi]`.
    pub mean_range: (f64, f64),
    pub seed: u64,
    pub pathologies: Pathologies,
}

impl SynthSpec {
    pub fn new(family: Family, instrument_count: usize, samples_per_instrument: usize, mean_range: (f64, f64), seed: u64) -> Self {
        SynthSpec {
            family,
            instrument_count,
            samples_per_instrument,
            mean_range,
            seed,
            pathologies: Pathologies::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::InvalidSpec(msg));
        let (lo, hi) = self.mean_range;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return bad(format!("mean range must satisfy 0 < m_lo < m_hi, got [{lo}, {hi}]"));
        }
        if self.instrument_count < 3 {
            return bad(format!("need at least 3 instruments, got {}", self.instrument_count));
        }
        if self.instrument_count > market_capacity() {
            return bad(format!("at most {} instruments can be coded", market_capacity()));
        }
        if self.samples_per_instrument == 0 {
            return bad("samples_per_instrument must be positive".into());
        }
        match self.family {
            Family::PoissonFlux => {}
            Family::GammaFixedShape { shape } => {
                if !(shape > 0.0 && shape.is_finite()) {
                    return bad(format!("gamma shape must be positive, got {shape}"));
                }
            }
            Family::LognormalPowerLaw {
                exponent,
                log10_prefactor,
            } => {
                if !(exponent.is_finite() && log10_prefactor.is_finite()) {
                    return bad("lognormal exponent and prefactor must be finite".into());
                }
            }
            Family::BarLevelMarket {
                sigma_range: (s_lo, s_hi),
                volume_dispersion,
            } => {
                if !(s_lo > 0.0 && s_hi >= s_lo && s_hi.is_finite()) {
                    return bad(format!("sigma range must satisfy 0 < lo <= hi, got [{s_lo}, {s_hi}]"));
                }
                if !(volume_dispersion >= 0.0 && volume_dispersion.is_finite()) {
                    return bad(format!("volume dispersion must be >= 0, got {volume_dispersion}"));
                }
            }
        }
        let p = self.pathologies;
        for (name, rate) in [
            ("duplicate", p.duplicate_rate),
            ("zero-volume", p.zero_volume_rate),
            ("missing", p.missing_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return bad(format!("{name} rate must be in [0, 1], got {rate}"));
            }
        }
        Ok(())
    }

    /// Whole trading days needed to hold `samples_per_instrument` minutes.
    pub fn days(&self) -> usize {
        self.samples_per_instrument.div_ceil(MINUTES_PER_DAY)
    }
}

#[derive(Clone, Copy)]
enum Purpose {
    Params = 0,
    Values = 1,
    Pathology = 2,
    Metadata = 3,
    Signs = 4,
}

fn stream(seed: u64, index: usize, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 * 8 + purpose as u64);
    rng
}

fn log_uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi <= lo {
        return lo;
    }
    let u: f64 = rng.random();
    (lo.ln() + u * (hi.ln() - lo.ln())).exp()
}

/// Value sampler for one instrument's value family.
enum ValueSampler {
    Poisson(Poisson<f64>),
    Gamma(Gamma<f64>),
    LogNormal(LogNormal<f64>),
}

impl ValueSampler {
    fn new(family: &Family, mean: f64) -> Result<Self, SynthError> {
        let invalid = |e: String| SynthError::InvalidSpec(e);
        Ok(match *family {
            Family::PoissonFlux => ValueSampler::Poisson(Poisson::new(mean).map_err(|e| invalid(e.to_string()))?),
            Family::GammaFixedShape { shape } => {
                ValueSampler::Gamma(Gamma::new(shape, mean / shape).map_err(|e| invalid(e.to_string()))?)
            }
            Family::LognormalPowerLaw {
                exponent,
                log10_prefactor,
            } => {
                let (mu, sigma) = lognormal_parameters(mean, 10f64.powf(log10_prefactor), exponent);
                ValueSampler::LogNormal(LogNormal::new(mu, sigma).map_err(|e| invalid(e.to_string()))?)
            }
            Family::BarLevelMarket { .. } => {
                return Err(invalid("bar-level-market has no value distribution".into()));
            }
        })
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            ValueSampler::Poisson(d) => d.sample(rng),
            ValueSampler::Gamma(d) => d.sample(rng),
            ValueSampler::LogNormal(d) => d.sample(rng),
        }
    }
}

/// `(log-mean, log-sd)` of the lognormal with mean `m` and variance `a·m^b`.
pub fn lognormal_parameters(mean: f64, a: f64, b: f64) -> (f64, f64) {
    let s2 = (a * mean.powf(b - 2.0)).ln_1p();
    (mean.ln() - 0.5 * s2, s2.sqrt())
}

/// The population mean of instrument `index`.
pub fn instrument_mean(spec: &SynthSpec, index: usize) -> f64 {
    log_uniform(&mut stream(spec.seed, index, Purpose::Params), spec.mean_range)
}

fn start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date")
}

/// Weekday calendar long enough for the spec.
pub fn synthetic_calendar(spec: &SynthSpec) -> SessionCalendar {
    SessionCalendar::weekdays(start_date(), spec.days())
}

/// Value-family samples as 1-minute illiquidity series.
pub fn gen_value_ensemble(spec: &SynthSpec) -> Result<Vec<IlliquiditySeries>, SynthError> {
    spec.validate()?;
    let calendar = synthetic_calendar(spec);
    let stamps = minute_stamps(&calendar);
    let codes = instrument_codes(spec.instrument_count)?;
    codes
        .par_iter()
        .enumerate()
        .map(|(i, &(code, _))| {
            let sampler = ValueSampler::new(&spec.family, instrument_mean(spec, i))?;
            let mut rng = stream(spec.seed, i, Purpose::Values);
            let samples = stamps
                .iter()
                .take(spec.samples_per_instrument)
                .map(|&ts| (ts, sampler.sample(&mut rng)))
                .collect();
            Ok(IlliquiditySeries {
                instrument: code,
                delta_t: 1,
                samples,
            })
        })
        .collect()
}

fn minute_stamps(calendar: &SessionCalendar) -> Vec<Timestamp> {
    let mut out = Vec::with_capacity(calendar.len() * MINUTES_PER_DAY);
    for (date, _) in calendar.days() {
        let len = calendar.session_length(date).unwrap_or(0);
        for pos in 1..=len {
            out.push(Timestamp::new(date, calendar.minute_at(date, pos).expect("in session")));
        }
    }
    out
}

/// Code ranges per market, in round-robin order.
const CODE_BLOCKS: [(Market, u32, u32); 6] = [
    (Market::SZMB, 0, 1000),
    (Market::SZSMEB, 300_000, 1000),
    (Market::SZSB, 2_000, 1000),
    (Market::SHA, 600_000, 1000),
    (Market::SZB, 200_000, 1000),
    (Market::SHB, 900_900, 100),
];

fn market_capacity() -> usize {
    CODE_BLOCKS.iter().map(|b| b.2 as usize).sum()
}

/// Codes and markets for the first `count` instruments.
pub fn instrument_codes(count: usize) -> Result<Vec<(InstrumentId, Market)>, SynthError> {
    let mut used = [0u32; 6];
    let mut slot = 0usize;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut tries = 0;
        while used[slot] >= CODE_BLOCKS[slot].2 {
            slot = (slot + 1) % CODE_BLOCKS.len();
            tries += 1;
            if tries > CODE_BLOCKS.len() {
                return Err(SynthError::InvalidSpec("too many instruments".into()));
            }
        }
        let (market, base, _) = CODE_BLOCKS[slot];
        let code = format!("{:06}", base + used[slot]).parse().expect("six digits");
        out.push((code, market));
        used[slot] += 1;
        slot = (slot + 1) % CODE_BLOCKS.len();
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathologyCounts {
    pub duplicates: usize,
    pub zero_volume: usize,
    pub missing: usize,
}

impl PathologyCounts {
    fn add(&mut self, other: &PathologyCounts) {
        self.duplicates += other.duplicates;
        self.zero_volume += other.zero_volume;
        self.missing += other.missing;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticInstrument {
    pub meta: InstrumentMeta,
    /// Rows in emission order, duplicates included.
    pub rows: Vec<MinuteBar>,
    pub injected: PathologyCounts,
}

fn random_meta(spec: &SynthSpec, index: usize, code: InstrumentId, market: Market) -> InstrumentMeta {
    let mut rng = stream(spec.seed, index, Purpose::Metadata);
    let sectors = Sector::all().count();
    let regions = Region::all().count();
    let mut meta = InstrumentMeta::new(code, market);
    let letter = Category::LETTERS[rng.random_range(0..Category::LETTERS.len())];
    meta.category = Some(letter.to_string().parse().expect("valid letter"));
    meta.sector = Sector::all().nth(rng.random_range(0..sectors));
    meta.region = Region::all().nth(rng.random_range(0..regions));
    meta.listing_date = Some(NaiveDate::from_ymd_opt(1995, 1, 3).expect("valid date"));
    meta
}

/// Per-minute (log return, dollar volume) generator.
enum MinuteModel {
    /// Embeds value `f` as return `±f·v0` over constant volume `v0`.
    Value { sampler: ValueSampler, volume: f64 },
    /// Return `±tick·N`, sign fixed per day, N ~ Poisson(μ).
    Poisson { sampler: ValueSampler },
    Walk {
        returns: Normal<f64>,
        volume: LogNormal<f64>,
    },
}

impl MinuteModel {
    fn new(spec: &SynthSpec, index: usize) -> Result<Self, SynthError> {
        let mean = instrument_mean(spec, index);
        Ok(match spec.family {
            Family::PoissonFlux => MinuteModel::Poisson {
                sampler: ValueSampler::new(&spec.family, mean)?,
            },
            Family::GammaFixedShape { .. } | Family::LognormalPowerLaw { .. } => MinuteModel::Value {
                sampler: ValueSampler::new(&spec.family, mean)?,
                volume: value_volume(spec),
            },
            Family::BarLevelMarket {
                sigma_range,
                volume_dispersion: tau,
            } => {
                let mut params = stream(spec.seed, index, Purpose::Params);
                let _ = log_uniform(&mut params, spec.mean_range);
                let sigma = log_uniform(&mut params, sigma_range);
                // E|r|/v = sigma sqrt(2/pi) e^{tau^2/2} / scale = mean.
                let scale = sigma * (2.0 / std::f64::consts::PI).sqrt() * (0.5 * tau * tau).exp() / mean;
                MinuteModel::Walk {
                    returns: Normal::new(0.0, sigma).map_err(|e| SynthError::InvalidSpec(e.to_string()))?,
                    volume: LogNormal::new(scale.ln(), tau).map_err(|e| SynthError::InvalidSpec(e.to_string()))?,
                }
            }
        })
    }

    /// `(log return, dollar volume)`; `day_sign` is ±1.
    fn next(&self, values: &mut ChaCha8Rng, signs: &mut ChaCha8Rng, day_sign: f64) -> (f64, f64) {
        match self {
            MinuteModel::Value { sampler, volume } => {
                let f = sampler.sample(values);
                let sign = if signs.random::<bool>() { 1.0 } else { -1.0 };
                (sign * f * volume, *volume)
            }
            MinuteModel::Poisson { sampler } => (day_sign * POISSON_TICK * sampler.sample(values), POISSON_TICK),
            MinuteModel::Walk { returns, volume } => (returns.sample(values), volume.sample(values)),
        }
    }
}

/// Constant minute volume for embedded value families, so returns are O(1e-3).
fn value_volume(spec: &SynthSpec) -> f64 {
    let (lo, hi) = spec.mean_range;
    1e-3 / (lo * hi).sqrt()
}

/// Generates one instrument's minute rows, pathologies included.
pub fn gen_instrument(
    spec: &SynthSpec,
    index: usize,
    calendar: &SessionCalendar,
    code: InstrumentId,
    market: Market,
) -> Result<SyntheticInstrument, SynthError> {
    let model = MinuteModel::new(spec, index)?;
    let mut values = stream(spec.seed, index, Purpose::Values);
    let mut signs = stream(spec.seed, index, Purpose::Signs);
    let mut faults = stream(spec.seed, index, Purpose::Pathology);
    let p = spec.pathologies;
    let mut injected = PathologyCounts::default();
    let mut rows = Vec::with_capacity(calendar.len() * (MINUTES_PER_DAY + 1));
    let mut log_price = START_PRICE.ln();

    for (day_index, (date, windows)) in calendar.days().enumerate() {
        let day_sign = if day_index % 2 == 0 { 1.0 } else { -1.0 };
        let open = windows[0].open;
        rows.push(make_bar(code, Timestamp::new(date, open), log_price, 0.0)?);
        let len = calendar.session_length(date).unwrap_or(0);
        for pos in 1..=len {
            let (ret, volume) = model.next(&mut values, &mut signs, day_sign);
            // Three draws per minute regardless of outcome.
            let (u_missing, u_zero, u_dup): (f64, f64, f64) = (faults.random(), faults.random(), faults.random());
            let minute = calendar.minute_at(date, pos).expect("in session");
            let ts = Timestamp::new(date, minute);
            if u_zero < p.zero_volume_rate {
                // No trade: price holds.
                injected.zero_volume += 1;
                if u_missing < p.missing_rate {
                    injected.missing += 1;
                    continue;
                }
                rows.push(make_bar(code, ts, log_price, 0.0)?);
            } else {
                log_price += ret;
                if u_missing < p.missing_rate {
                    injected.missing += 1;
                    continue;
                }
                rows.push(make_bar(code, ts, log_price, volume)?);
            }
            if u_dup < p.duplicate_rate {
                injected.duplicates += 1;
                let last = *rows.last().expect("just pushed");
                rows.push(last);
            }
        }
    }
    Ok(SyntheticInstrument {
        meta: random_meta(spec, index, code, market),
        rows,
        injected,
    })
}

fn make_bar(code: InstrumentId, ts: Timestamp, log_price: f64, volume: f64) -> Result<MinuteBar, SynthError> {
    MinuteBar::new(code, ts, log_price.exp(), volume).map_err(|e| SynthError::InvalidSpec(e.to_string()))
}

/// Whole universe in memory.
pub fn gen_bar_level_market(spec: &SynthSpec, calendar: &SessionCalendar) -> Result<Vec<SyntheticInstrument>, SynthError> {
    spec.validate()?;
    let codes = instrument_codes(spec.instrument_count)?;
    codes
        .par_iter()
        .enumerate()
        .map(|(i, &(code, market))| gen_instrument(spec, i, calendar, code, market))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthReport {
    pub spec: SynthSpec,
    pub instruments: usize,
    pub days: usize,
    pub rows_written: usize,
    pub injected: PathologyCounts,
}

/// Writes `calendar.csv`, `meta.csv`, `bars/<code>.csv` and `synth.json` under `out`.
pub fn write_dataset(spec: &SynthSpec, out: &Path) -> Result<SynthReport, SynthError> {
    spec.validate()?;
    let calendar = synthetic_calendar(spec);
    let bars_dir = out.join("bars");
    fs::create_dir_all(&bars_dir)?;
    write_calendar(fs::File::create(out.join("calendar.csv"))?, &calendar).map_err(ingest_to_synth)?;

    let codes = instrument_codes(spec.instrument_count)?;
    let results: Vec<(InstrumentMeta, usize, PathologyCounts)> = codes
        .par_iter()
        .enumerate()
        .map(|(i, &(code, market))| {
            let inst = gen_instrument(spec, i, &calendar, code, market)?;
            let path = bars_dir.join(format!("{code}.csv"));
            let mut w = BufWriter::with_capacity(1 << 16, fs::File::create(path)?);
            writeln!(w, "{}", BAR_HEADER.join(","))?;
            for bar in &inst.rows {
                write_bar_row(&mut w, bar)?;
            }
            w.flush()?;
            Ok((inst.meta, inst.rows.len(), inst.injected))
        })
        .collect::<Result<_, SynthError>>()?;

    let mut report = SynthReport {
        spec: *spec,
        instruments: results.len(),
        days: calendar.len(),
        rows_written: 0,
        injected: PathologyCounts::default(),
    };
    let metas: Vec<InstrumentMeta> = results
        .into_iter()
        .map(|(meta, rows, injected)| {
            report.rows_written += rows;
            report.injected.add(&injected);
            meta
        })
        .collect();
    write_metadata(fs::File::create(out.join("meta.csv"))?, &metas).map_err(ingest_to_synth)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    fs::write(out.join("synth.json"), json + "\n")?;
    Ok(report)
}

fn ingest_to_synth(e: crate::error::IngestError) -> SynthError {
    match e {
        crate::error::IngestError::Io(io) => SynthError::Io(io),
        crate::error::IngestError::Csv(c) => SynthError::Csv(c),
        other => SynthError::InvalidSpec(other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taylor::population_moments;

    fn spec(family: Family, n: usize, samples: usize, range: (f64, f64)) -> SynthSpec {
        SynthSpec::new(family, n, samples, range, 7)
    }

    #[test]
    fn validation() {
        let ok = spec(Family::PoissonFlux, 3, 10, (1.0, 10.0));
        assert!(ok.validate().is_ok());
        assert!(spec(Family::PoissonFlux, 2, 10, (1.0, 10.0)).validate().is_err());
        assert!(spec(Family::PoissonFlux, 3, 10, (0.0, 10.0)).validate().is_err());
        assert!(spec(Family::PoissonFlux, 3, 10, (5.0, 5.0)).validate().is_err());
        assert!(spec(Family::GammaFixedShape { shape: 0.0 }, 3, 10, (1.0, 2.0)).validate().is_err());
        let mut p = ok;
        p.pathologies.missing_rate = 1.5;
        assert!(p.validate().is_err());
        assert!(gen_value_ensemble(&spec(Family::bar_level_default(), 3, 10, (1.0, 2.0))).is_err());
    }

    #[test]
    fn lognormal_moment_matching() {
        let (mu, s) = lognormal_parameters(3.0, 2.0, 2.5);
        let mean = (mu + 0.5 * s * s).exp();
        let var = ((s * s).exp() - 1.0) * (2.0 * mu + s * s).exp();
        assert!((mean - 3.0).abs() < 1e-12);
        assert!((var - 2.0 * 3f64.powf(2.5)).abs() < 1e-9);
    }

    #[test]
    fn ensemble_is_deterministic() {
        let s = spec(Family::GammaFixedShape { shape: 4.0 }, 5, 100, (1.0, 2.0));
        assert_eq!(gen_value_ensemble(&s).unwrap(), gen_value_ensemble(&s).unwrap());
        let mut other = s;
        other.seed = 8;
        assert_ne!(gen_value_ensemble(&s).unwrap(), gen_value_ensemble(&other).unwrap());
    }

    fn converged_fraction(s: &SynthSpec) -> f64 {
        let series = gen_value_ensemble(s).unwrap();
        let bound = 5.0 / (s.samples_per_instrument as f64).sqrt();
        let ok = series
            .iter()
            .enumerate()
            .filter(|(i, ser)| {
                let mu = instrument_mean(s, *i);
                let (mean, _) = population_moments(ser.values()).unwrap();
                ((mean - mu) / mu).abs() < bound
            })
            .count();
        ok as f64 / series.len() as f64
    }

    #[test]
    fn sample_means_converge() {
        let families = [
            (Family::PoissonFlux, (1.0, 1000.0)),
            (Family::GammaFixedShape { shape: 4.0 }, (1e-8, 1e-6)),
            (
                Family::LognormalPowerLaw {
                    exponent: 2.24,
                    log10_prefactor: 4.70,
                },
                (1e-22, 1e-18),
            ),
        ];
        for (family, range) in families {
            let frac = converged_fraction(&spec(family, 200, 2000, range));
            assert!(frac >= 0.99, "{}: {frac}", family.name());
        }
    }

    #[test]
    fn codes_round_robin_with_capacity() {
        let codes = instrument_codes(12).unwrap();
        assert_eq!(codes[0].0.as_str(), "000000");
        assert_eq!(codes[1].0.as_str(), "300000");
        assert_eq!(codes[5].0.as_str(), "900900");
        assert_eq!(codes[6].0.as_str(), "000001");
        let all = instrument_codes(market_capacity()).unwrap();
        assert_eq!(all.iter().filter(|c| c.1 == Market::SHB).count(), 100);
        assert!(instrument_codes(market_capacity() + 1).is_err());
        let map = crate::ingest::PrefixMap::default();
        for (code, market) in &all {
            assert_eq!(
                crate::ingest::classify_market(code.as_str(), &map).unwrap(),
                crate::ingest::Classification::Market(*market)
            );
        }
    }

    #[test]
    fn bar_embedding_reproduces_values() {
        let s = spec(Family::GammaFixedShape { shape: 4.0 }, 3, 500, (1e-8, 1e-6));
        let cal = synthetic_calendar(&s);
        let values = gen_value_ensemble(&s).unwrap();
        let insts = gen_bar_level_market(&s, &cal).unwrap();
        let v0 = value_volume(&s);
        for (series, inst) in values.iter().zip(&insts) {
            let mut k = 0;
            for pair in inst.rows.windows(2) {
                if pair[1].timestamp.date != pair[0].timestamp.date && pair[1].dollar_volume == 0.0 {
                    continue;
                }
                let f = (pair[1].close.ln() - pair[0].close.ln()).abs() / pair[1].dollar_volume;
                let expected = series.samples[k].1;
                assert!(((f - expected) / expected).abs() < 1e-9, "{f} vs {expected}");
                assert_eq!(pair[1].dollar_volume, v0);
                k += 1;
                if k == series.samples.len() {
                    break;
                }
            }
            assert_eq!(k, 500);
        }
    }

    #[test]
    fn clean_rows_have_opening_prints() {
        let s = spec(Family::bar_level_default(), 3, 480, (1e-9, 1e-8));
        let cal = synthetic_calendar(&s);
        let insts = gen_bar_level_market(&s, &cal).unwrap();
        for inst in &insts {
            assert_eq!(inst.rows.len(), 2 * 241);
            assert_eq!(inst.injected, PathologyCounts::default());
            assert_eq!(inst.rows[0].timestamp.hhmm(), "09:30");
            assert_eq!(inst.rows[0].dollar_volume, 0.0);
        }
    }

    #[test]
    fn pathologies_are_injected() {
        let mut s = spec(Family::bar_level_default(), 3, 2400, (1e-9, 1e-8));
        s.pathologies = Pathologies {
            duplicate_rate: 0.01,
            zero_volume_rate: 0.05,
            missing_rate: 0.02,
        };
        let cal = synthetic_calendar(&s);
        let insts = gen_bar_level_market(&s, &cal).unwrap();
        for inst in &insts {
            let c = inst.injected;
            assert!(c.duplicates > 0 && c.zero_volume > 0 && c.missing > 0);
            assert_eq!(inst.rows.len(), 10 * 241 - c.missing + c.duplicates);
        }
    }

    #[test]
    fn pathology_stream_leaves_clean_draws_alone() {
        let clean = spec(Family::bar_level_default(), 3, 240, (1e-9, 1e-8));
        let mut dirty = clean;
        dirty.pathologies.missing_rate = 0.3;
        let cal = synthetic_calendar(&clean);
        let a = gen_bar_level_market(&clean, &cal).unwrap();
        let b = gen_bar_level_market(&dirty, &cal).unwrap();
        for (x, y) in a.iter().zip(&b) {
            for bar in &y.rows {
                assert!(x.rows.contains(bar));
            }
        }
    }
}
