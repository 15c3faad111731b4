//! The exponent as a function of the aggregation interval.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{build_intervals, illiquidity};
use crate::error::{StatsError, SweepError};
use crate::model::{
    CurveFlags, InstrumentId, Market, MeanVariancePoint, MinuteBar, SessionCalendar, SweepCurve, SweepEntry,
};
use crate::numeric::{compensated_sum, Precision};
use crate::taylor::{fit_taylor, mean_variance, ols};

pub const DEFAULT_PLATEAU_EPSILON: f64 = 0.05;

const DEFAULT_GRID: [u32; 20] = [1, 2, 3, 4, 5, 6, 8, 10, 12, 15, 16, 20, 24, 30, 40, 48, 60, 80, 120, 240];

/// Divisors of the 240-minute trading day.
pub fn default_grid() -> Vec<u32> {
    DEFAULT_GRID.to_vec()
}

pub fn validate_grid(grid: &[u32]) -> Result<(), SweepError> {
    if grid.is_empty() {
        return Err(SweepError::InvalidGrid("empty".into()));
    }
    if grid[0] < 1 {
        return Err(SweepError::InvalidGrid(format!("{} < 1", grid[0])));
    }
    if let Some(w) = grid.windows(2).find(|w| w[1] <= w[0]) {
        return Err(SweepError::InvalidGrid(format!("{} follows {}", w[1], w[0])));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepScope {
    WholeSample,
    PerMarket,
}

impl std::str::FromStr for SweepScope {
    type Err = SweepError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(SweepScope::WholeSample),
            "per-market" => Ok(SweepScope::PerMarket),
            other => Err(SweepError::InvalidGrid(format!("unknown scope {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct InstrumentBars {
    pub instrument: InstrumentId,
    /// `None` for codes that match no market prefix.
    pub market: Option<Market>,
    pub bars: Vec<MinuteBar>,
}

/// One instrument's mean-variance point at every grid Δt (`None`: no defined samples).
pub fn instrument_points(
    bars: &[MinuteBar],
    grid: &[u32],
    calendar: &SessionCalendar,
) -> Result<Vec<Option<MeanVariancePoint>>, SweepError> {
    grid.iter()
        .map(|&dt| {
            let intervals = build_intervals(bars, dt, calendar)?;
            match mean_variance(&illiquidity(&intervals)) {
                Ok(p) => Ok(Some(p)),
                Err(StatsError::EmptySeries) => Ok(None),
                Err(e) => Err(e.into()),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepWarning {
    pub scope: String,
    pub delta_t: u32,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScopedCurve {
    /// `All` or a market name.
    pub scope: String,
    pub curve: SweepCurve,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub curves: Vec<ScopedCurve>,
    pub warnings: Vec<SweepWarning>,
}

/// Accumulates per-instrument points into per-scope, per-Δt point sets.
#[derive(Clone, Debug)]
pub struct SweepAccumulator {
    grid: Vec<u32>,
    scope: SweepScope,
    points: BTreeMap<String, Vec<Vec<MeanVariancePoint>>>,
}

impl SweepAccumulator {
    pub fn new(grid: &[u32], scope: SweepScope) -> Result<Self, SweepError> {
        validate_grid(grid)?;
        Ok(SweepAccumulator {
            grid: grid.to_vec(),
            scope,
            points: BTreeMap::new(),
        })
    }

    pub fn grid(&self) -> &[u32] {
        &self.grid
    }

    fn scope_key(&self, market: Option<Market>) -> Option<String> {
        match self.scope {
            SweepScope::WholeSample => Some("All".into()),
            SweepScope::PerMarket => market.map(|m| m.name().to_string()),
        }
    }

    /// `points` must be aligned with the grid, as returned by [`instrument_points`].
    pub fn push(&mut self, market: Option<Market>, points: Vec<Option<MeanVariancePoint>>) {
        let Some(key) = self.scope_key(market) else {
            return;
        };
        let n = self.grid.len();
        let slot = self.points.entry(key).or_insert_with(|| vec![Vec::new(); n]);
        for (bucket, p) in slot.iter_mut().zip(points) {
            if let Some(p) = p {
                bucket.push(p);
            }
        }
    }

    pub fn finish(self, plateau_epsilon: f64) -> SweepOutput {
        let mut out = SweepOutput::default();
        let keys: Vec<String> = match self.scope {
            SweepScope::WholeSample => self.points.keys().cloned().collect(),
            SweepScope::PerMarket => Market::ALL
                .iter()
                .map(|m| m.name().to_string())
                .filter(|k| self.points.contains_key(k))
                .collect(),
        };
        for key in keys {
            let buckets = &self.points[&key];
            let mut entries = Vec::new();
            for (&dt, pts) in self.grid.iter().zip(buckets) {
                match fit_taylor(pts) {
                    Ok(fit) => entries.push(SweepEntry { delta_t: dt, fit }),
                    Err(e) => out.warnings.push(SweepWarning {
                        scope: key.clone(),
                        delta_t: dt,
                        message: e.to_string(),
                    }),
                }
            }
            match assemble_curve(entries, plateau_epsilon) {
                Ok(curve) => out.curves.push(ScopedCurve { scope: key, curve }),
                Err(e) => out.warnings.push(SweepWarning {
                    scope: key,
                    delta_t: 0,
                    message: e.to_string(),
                }),
            }
        }
        out
    }
}

/// Runs the full sweep over an in-memory universe.
pub fn sweep_dt(
    universe: &[InstrumentBars],
    grid: &[u32],
    scope: SweepScope,
    calendar: &SessionCalendar,
    plateau_epsilon: f64,
) -> Result<SweepOutput, SweepError> {
    let mut acc = SweepAccumulator::new(grid, scope)?;
    let per_instrument: Vec<_> = universe
        .par_iter()
        .map(|inst| instrument_points(&inst.bars, grid, calendar).map(|p| (inst.market, p)))
        .collect::<Result<_, _>>()?;
    for (market, points) in per_instrument {
        acc.push(market, points);
    }
    Ok(acc.finish(plateau_epsilon))
}

/// Builds the curve descriptors from fitted entries (ascending Δt).
pub fn assemble_curve(entries: Vec<SweepEntry>, plateau_epsilon: f64) -> Result<SweepCurve, SweepError> {
    if entries.is_empty() {
        return Err(SweepError::NoEntries);
    }
    let mut curve = SweepCurve {
        dt_max: peak_index(&entries).map(|i| entries[i].delta_t).unwrap_or(entries[0].delta_t),
        stable_level: entries.last().map(|e| e.fit.b).unwrap_or(f64::NAN),
        entries,
        log_slope: None,
        log_intercept: None,
        flags: CurveFlags::default(),
    };
    match find_peak_and_plateau(&curve, plateau_epsilon) {
        Ok(peak) => {
            curve.dt_max = peak.dt_max;
            curve.stable_level = peak.stable_level;
            curve.flags.no_plateau = peak.no_plateau;
        }
        Err(_) => curve.flags.no_plateau = true,
    }
    match fit_log_regime(&curve, curve.dt_max) {
        Ok((slope, intercept)) => {
            curve.log_slope = Some(slope);
            curve.log_intercept = Some(intercept);
        }
        Err(_) => curve.flags.log_regime_unavailable = true,
    }
    Ok(curve)
}

fn peak_index(entries: &[SweepEntry]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, e) in entries.iter().enumerate() {
        if best.is_none_or(|j| e.fit.b > entries[j].fit.b) {
            best = Some(i);
        }
    }
    best
}

/// `(slope, intercept)` of b against log10 Δt over entries with Δt <= `regime_end`.
pub fn fit_log_regime(curve: &SweepCurve, regime_end: u32) -> Result<(f64, f64), SweepError> {
    let regime: Vec<_> = curve.entries.iter().filter(|e| e.delta_t <= regime_end).collect();
    if regime.len() < 3 {
        return Err(SweepError::TooFewEntries {
            needed: 3,
            have: regime.len(),
        });
    }
    let x: Vec<f64> = regime.iter().map(|e| (e.delta_t as f64).log10()).collect();
    let y: Vec<f64> = regime.iter().map(|e| e.fit.b).collect();
    let fit = ols(&x, &y)?;
    Ok((fit.slope, fit.intercept))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakPlateau {
    pub dt_max: u32,
    pub stable_level: f64,
    pub no_plateau: bool,
}

/// Peak location and the mean exponent over the longest calm suffix after it.
pub fn find_peak_and_plateau(curve: &SweepCurve, plateau_epsilon: f64) -> Result<PeakPlateau, SweepError> {
    let entries = &curve.entries;
    if entries.len() < 4 {
        return Err(SweepError::TooFewEntries {
            needed: 4,
            have: entries.len(),
        });
    }
    let peak = peak_index(entries).expect("non-empty");
    let b: Vec<f64> = entries.iter().map(|e| e.fit.b).collect();

    // Walk back from the end while successive steps stay within epsilon.
    let last = b.len() - 1;
    let mut start = last;
    while start > peak + 1 && (b[start] - b[start - 1]).abs() < plateau_epsilon {
        start -= 1;
    }
    let suffix = &b[start..];
    Ok(if suffix.len() >= 2 {
        PeakPlateau {
            dt_max: entries[peak].delta_t,
            stable_level: compensated_sum(suffix.iter().copied()) / suffix.len() as f64,
            no_plateau: false,
        }
    } else {
        PeakPlateau {
            dt_max: entries[peak].delta_t,
            stable_level: b[last],
            no_plateau: true,
        }
    })
}

impl SweepCurve {
    /// `delta_t\tb\tse_b\tlog_a\tadj_r2\tn`
    pub fn to_tsv(&self, precision: Precision) -> String {
        let mut out = String::from("delta_t\tb\tse_b\tlog_a\tadj_r2\tn\n");
        for e in &self.entries {
            let f = &e.fit;
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                e.delta_t,
                precision.format(f.b),
                precision.format(f.se_b),
                precision.format(f.log_a),
                precision.format(f.adj_r2),
                f.n
            ));
        }
        out
    }

    pub fn sidecar(&self) -> CurveSidecar {
        CurveSidecar {
            dt_max: self.dt_max,
            log_slope: self.log_slope,
            log_intercept: self.log_intercept,
            stable_level: self.stable_level,
            flags: self.flags,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSidecar {
    pub dt_max: u32,
    pub log_slope: Option<f64>,
    pub log_intercept: Option<f64>,
    pub stable_level: f64,
    pub flags: CurveFlags,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TaylorFit;

    fn entry(dt: u32, b: f64) -> SweepEntry {
        SweepEntry {
            delta_t: dt,
            fit: TaylorFit {
                n: 10,
                b,
                se_b: 0.01,
                p_b: 0.0,
                log_a: 0.0,
                se_log_a: 0.01,
                p_a: 1.0,
                adj_r2: 0.9,
                excluded: 0,
            },
        }
    }

    fn curve(bs: &[(u32, f64)]) -> SweepCurve {
        assemble_curve(bs.iter().map(|&(d, b)| entry(d, b)).collect(), DEFAULT_PLATEAU_EPSILON).unwrap()
    }

    #[test]
    fn rise_peak_decay() {
        let c = curve(&[(1, 2.0), (2, 2.4), (3, 2.6), (4, 2.3), (5, 2.21), (6, 2.20)]);
        assert_eq!(c.dt_max, 3);
        assert!((c.stable_level - 2.205).abs() < 1e-12);
        assert!(!c.flags.no_plateau);
    }

    #[test]
    fn increasing_has_no_plateau() {
        let c = curve(&[(1, 1.0), (2, 1.2), (4, 1.5), (8, 1.9)]);
        assert_eq!(c.dt_max, 8);
        assert!(c.flags.no_plateau);
        assert_eq!(c.stable_level, 1.9);
    }

    #[test]
    fn constant_curve() {
        let c = curve(&[(1, 2.0), (2, 2.0), (3, 2.0), (4, 2.0), (5, 2.0)]);
        assert_eq!(c.dt_max, 1);
        assert_eq!(c.stable_level, 2.0);
        assert!(!c.flags.no_plateau);
        assert_eq!(c.log_slope, None);
        assert!(c.flags.log_regime_unavailable);
    }

    #[test]
    fn singleton_curve() {
        let c = curve(&[(5, 1.7)]);
        assert_eq!(c.entries.len(), 1);
        assert_eq!(c.dt_max, 5);
        assert!(c.flags.no_plateau);
        assert!(c.flags.log_regime_unavailable);
    }

    #[test]
    fn log_regime_collinear() {
        let c = curve(&[(1, 1.0), (10, 2.0), (100, 3.0), (1000, 2.0)]);
        let (slope, intercept) = fit_log_regime(&c, 100).unwrap();
        assert!((slope - 1.0).abs() < 1e-12);
        assert!((intercept - 1.0).abs() < 1e-12);
        assert_eq!(c.log_slope, Some(slope));

        let flat = curve(&[(1, 2.5), (10, 2.5), (100, 2.5)]);
        assert_eq!(fit_log_regime(&flat, 100).unwrap().0, 0.0);
        assert!(matches!(
            fit_log_regime(&flat, 10),
            Err(SweepError::TooFewEntries { needed: 3, have: 2 })
        ));
    }

    #[test]
    fn grid_validation() {
        assert!(validate_grid(&default_grid()).is_ok());
        assert_eq!(default_grid().len(), 20);
        assert!(default_grid().iter().all(|d| 240 % d == 0));
        assert!(validate_grid(&[]).is_err());
        assert!(validate_grid(&[0, 1]).is_err());
        assert!(validate_grid(&[2, 2]).is_err());
        assert!(validate_grid(&[5, 3]).is_err());
    }

    #[test]
    fn too_few_for_plateau() {
        let c = SweepCurve {
            entries: vec![entry(1, 1.0), entry(2, 1.0), entry(3, 1.0)],
            dt_max: 1,
            log_slope: None,
            log_intercept: None,
            stable_level: 1.0,
            flags: CurveFlags::default(),
        };
        assert!(matches!(
            find_peak_and_plateau(&c, 0.05),
            Err(SweepError::TooFewEntries { needed: 4, have: 3 })
        ));
    }

    #[test]
    fn tsv_layout() {
        let c = curve(&[(1, 2.0), (2, 2.5)]);
        let tsv = c.to_tsv(Precision::default());
        let lines: Vec<_> = tsv.lines().collect();
        assert_eq!(lines[0], "delta_t\tb\tse_b\tlog_a\tadj_r2\tn");
        assert_eq!(lines[2], "2\t2.5\t0.01\t0\t0.9\t10");
    }
}
