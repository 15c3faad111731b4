//! Mean-variance points, summary statistics and the log-log fit of Taylor's law.
//!
//! The fit regresses `log10 V` on `log10 m` by ordinary least squares; the
//! intercept is therefore `log10 a`. Sums of squares are accumulated around
//! the means with compensated summation, so results do not depend on point
//! order beyond the last couple of ulps.

pub mod student_t;

use serde::{Deserialize, Serialize};

use crate::error::StatsError;
use crate::model::{IlliquiditySeries, MeanVariancePoint, SummaryStats, TaylorFit};
use crate::numeric::NeumaierSum;

/// Population mean and variance `<f^2> - <f>^2` of one series.
pub fn mean_variance(series: &IlliquiditySeries) -> Result<MeanVariancePoint, StatsError> {
    let (mean, variance) = population_moments(series.values()).ok_or(StatsError::EmptySeries)?;
    Ok(MeanVariancePoint {
        instrument: series.instrument,
        delta_t: series.delta_t,
        mean,
        variance,
        sample_count: series.defined_count(),
    })
}

/// `(mean, variance)` with the population denominator, or `None` for no data.
///
/// Moments are taken about the first sample; the shifted identity keeps the
/// difference of second and squared first moments from cancelling.
pub fn population_moments(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let mut values = values.peekable();
    let shift = *values.peek()?;
    let mut n = 0usize;
    let mut s1 = NeumaierSum::default();
    let mut s2 = NeumaierSum::default();
    for f in values {
        let d = f - shift;
        n += 1;
        s1.add(d);
        s2.add(d * d);
    }
    let n = n as f64;
    let m1 = s1.total() / n;
    let variance = (s2.total() / n - m1 * m1).max(0.0);
    Some((shift + m1, variance))
}

pub fn summary_stats(values: &[f64]) -> Result<SummaryStats, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let n = values.len() as f64;
    let mean = values.iter().copied().collect::<NeumaierSum>().total() / n;
    let (mut m2, mut m3, mut m4) = (NeumaierSum::default(), NeumaierSum::default(), NeumaierSum::default());
    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    for &x in values {
        let d = x - mean;
        let d2 = d * d;
        m2.add(d2);
        m3.add(d2 * d);
        m4.add(d2 * d2);
        max = max.max(x);
        min = min.min(x);
    }
    let (m2, m3, m4) = (m2.total() / n, m3.total() / n, m4.total() / n);

    let mut sorted = values.to_vec();
    let mid = (sorted.len() - 1) / 2;
    let (_, median, _) = sorted.select_nth_unstable_by(mid, f64::total_cmp);
    let median = *median;

    let (skewness, kurtosis) = if m2 > 0.0 {
        (Some(m3 / m2.powf(1.5)), Some(m4 / (m2 * m2)))
    } else {
        (None, None)
    };
    Ok(SummaryStats {
        count: values.len(),
        max,
        min,
        mean,
        median,
        std: m2.sqrt(),
        skewness,
        kurtosis,
    })
}

/// Simple linear regression `y = intercept + slope * x` with t-based inference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub n: usize,
    pub slope: f64,
    pub se_slope: f64,
    pub p_slope: f64,
    pub intercept: f64,
    pub se_intercept: f64,
    pub p_intercept: f64,
    pub r2: f64,
    pub adj_r2: f64,
    pub rss: f64,
}

fn p_value(estimate: f64, se: f64, df: f64) -> f64 {
    if se == 0.0 {
        0.0
    } else {
        student_t::two_sided_p(estimate / se, df)
    }
}

pub fn ols(x: &[f64], y: &[f64]) -> Result<LinearFit, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::InsufficientPoints {
            usable: n,
            excluded: 0,
        });
    }
    if x.iter().all(|&v| v == x[0]) {
        return Err(StatsError::DegenerateAbscissa);
    }
    let nf = n as f64;
    let x_mean = x.iter().copied().collect::<NeumaierSum>().total() / nf;
    let y_mean = y.iter().copied().collect::<NeumaierSum>().total() / nf;
    let (mut sxx, mut sxy, mut syy) = (NeumaierSum::default(), NeumaierSum::default(), NeumaierSum::default());
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - x_mean;
        let dy = yi - y_mean;
        sxx.add(dx * dx);
        sxy.add(dx * dy);
        syy.add(dy * dy);
    }
    let (sxx, sxy, syy) = (sxx.total(), sxy.total(), syy.total());
    if sxx <= 0.0 {
        return Err(StatsError::DegenerateAbscissa);
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let rss = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let r = yi - (intercept + slope * xi);
            r * r
        })
        .collect::<NeumaierSum>()
        .total();

    let df = nf - 2.0;
    let s2 = rss / df;
    let se_slope = (s2 / sxx).sqrt();
    let se_intercept = (s2 * (1.0 / nf + x_mean * x_mean / sxx)).sqrt();
    let r2 = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    let adj_r2 = 1.0 - (1.0 - r2) * (nf - 1.0) / df;
    Ok(LinearFit {
        n,
        slope,
        se_slope,
        p_slope: p_value(slope, se_slope, df),
        intercept,
        se_intercept,
        p_intercept: p_value(intercept, se_intercept, df),
        r2,
        adj_r2,
        rss,
    })
}

/// Fits `log10 V = log10 a + b log10 m` over points with positive mean and variance.
pub fn fit_taylor(points: &[MeanVariancePoint]) -> Result<TaylorFit, StatsError> {
    let usable = |p: &&MeanVariancePoint| p.mean > 0.0 && p.variance > 0.0 && p.mean.is_finite() && p.variance.is_finite();
    let (x, y): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(usable)
        .map(|p| (p.mean.log10(), p.variance.log10()))
        .unzip();
    let excluded = points.len() - x.len();
    if x.len() < 3 {
        return Err(StatsError::InsufficientPoints {
            usable: x.len(),
            excluded,
        });
    }
    let fit = ols(&x, &y)?;
    Ok(TaylorFit {
        n: fit.n,
        b: fit.slope,
        se_b: fit.se_slope,
        p_b: fit.p_slope,
        log_a: fit.intercept,
        se_log_a: fit.se_intercept,
        p_a: fit.p_intercept,
        adj_r2: fit.adj_r2,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InstrumentId, Timestamp};
    use chrono::NaiveDate;

    fn id() -> InstrumentId {
        "600000".parse().unwrap()
    }

    fn series(values: &[f64]) -> IlliquiditySeries {
        let date = NaiveDate::from_ymd_opt(2011, 1, 4).unwrap();
        IlliquiditySeries {
            instrument: id(),
            delta_t: 1,
            samples: values
                .iter()
                .enumerate()
                .map(|(i, &v)| (Timestamp::new(date, 571 + i as u16), v))
                .collect(),
        }
    }

    fn point(m: f64, v: f64) -> MeanVariancePoint {
        MeanVariancePoint {
            instrument: id(),
            delta_t: 1,
            mean: m,
            variance: v,
            sample_count: 10,
        }
    }

    fn xy_points(xy: &[(f64, f64)]) -> Vec<MeanVariancePoint> {
        xy.iter().map(|&(x, y)| point(10f64.powf(x), 10f64.powf(y))).collect()
    }

    #[test]
    fn mean_variance_examples() {
        let p = mean_variance(&series(&[1.0, 2.0, 3.0])).unwrap();
        assert!((p.mean - 2.0).abs() < 1e-15);
        assert!((p.variance - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(p.sample_count, 3);

        let c = 1.234_567_890_123e-7;
        let p = mean_variance(&series(&[c; 1000])).unwrap();
        assert_eq!(p.mean, c);
        assert_eq!(p.variance, 0.0);

        let p = mean_variance(&series(&[0.0, 2e-8])).unwrap();
        assert!((p.mean - 1e-8).abs() < 1e-22);
        assert!((p.variance - 1e-16).abs() < 1e-28);

        let p = mean_variance(&series(&[4.2])).unwrap();
        assert_eq!(p.variance, 0.0);

        assert_eq!(mean_variance(&series(&[])), Err(StatsError::EmptySeries));
    }

    #[test]
    fn summary_examples() {
        let s = summary_stats(&[0.0, 0.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.median, s.max, s.min), (1.0, 0.0, 3.0, 0.0));
        let s = summary_stats(&[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(s.skewness, Some(0.0));
        // Raw kurtosis of {-1, 0, 1}: m4 / m2^2 = (2/3) / (4/9).
        assert!((s.kurtosis.unwrap() - 1.5).abs() < 1e-15);
        let s = summary_stats(&[5.0]).unwrap();
        assert_eq!(s.std, 0.0);
        assert_eq!((s.skewness, s.kurtosis), (None, None));
        // Lower median for even counts.
        assert_eq!(summary_stats(&[4.0, 1.0, 3.0, 2.0]).unwrap().median, 2.0);
        assert_eq!(summary_stats(&[]), Err(StatsError::EmptySample));
    }

    #[test]
    fn exact_line() {
        let fit = fit_taylor(&xy_points(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)])).unwrap();
        assert!((fit.b - 2.0).abs() < 1e-12);
        assert!((fit.log_a - 1.0).abs() < 1e-12);
        assert!(fit.se_b < 1e-7);
        assert!((fit.adj_r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_line_in_linear_coordinates_reports_zero_errors() {
        let fit = ols(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert_eq!((fit.slope, fit.intercept, fit.rss), (2.0, 1.0, 0.0));
        assert_eq!((fit.se_slope, fit.se_intercept), (0.0, 0.0));
        assert_eq!((fit.p_slope, fit.p_intercept), (0.0, 0.0));
        assert_eq!(fit.adj_r2, 1.0);
    }

    #[test]
    fn hand_computed_three_points() {
        // From the closed form: Sxx = 2, Sxy = 4.1, Syy = 8.42, RSS = 0.015.
        let fit = ols(&[0.0, 1.0, 2.0], &[1.0, 2.9, 5.1]).unwrap();
        assert!((fit.slope - 2.05).abs() < 1e-12);
        assert!((fit.intercept - 0.95).abs() < 1e-12);
        assert!((fit.rss - 0.015).abs() < 1e-12);
        assert!((fit.se_slope - 0.0075f64.sqrt()).abs() < 1e-12);
        assert!((fit.adj_r2 - (1.0 - 2.0 * 0.015 / 8.42)).abs() < 1e-12);
        // t = 2.05 / sqrt(0.0075) with one degree of freedom: p = 1 - 2 atan(t) / pi.
        let t = 2.05 / 0.0075f64.sqrt();
        let p = 1.0 - 2.0 * t.atan() / std::f64::consts::PI;
        assert!((fit.p_slope - p).abs() < 1e-10);
    }

    #[test]
    fn fit_errors() {
        assert_eq!(
            fit_taylor(&xy_points(&[(0.0, 1.0), (1.0, 3.0)])),
            Err(StatsError::InsufficientPoints { usable: 2, excluded: 0 })
        );
        let mut pts = xy_points(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)]);
        pts[1].variance = 0.0;
        pts.push(point(0.0, 1.0));
        assert_eq!(
            fit_taylor(&pts),
            Err(StatsError::InsufficientPoints { usable: 2, excluded: 2 })
        );
        assert_eq!(
            fit_taylor(&xy_points(&[(1.0, 1.0), (1.0, 3.0), (1.0, 5.0)])),
            Err(StatsError::DegenerateAbscissa)
        );
    }

    #[test]
    fn excluded_points_counted() {
        let mut pts = xy_points(&[(0.0, 1.0), (1.0, 2.9), (2.0, 5.1)]);
        pts.push(point(1e-8, 0.0));
        let fit = fit_taylor(&pts).unwrap();
        assert_eq!((fit.n, fit.excluded), (3, 1));
        assert!((fit.b - 2.05).abs() < 1e-9);
    }
}
