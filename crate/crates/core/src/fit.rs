//! Log-log slope fits and ratio-band checks for scaling sweeps.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; zero for two points.
    pub slope_stderr: f64,
    pub points: usize,
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("x and y lengths differ"));
    }
    if xs.len() < 2 {
        return Err(Error::invalid("a fit needs at least two points"));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in fit data"));
    }
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::Degenerate("all x values coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if xs.len() > 2 {
        let ss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (ss / (m - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LineFit {
        slope,
        intercept,
        slope_stderr,
        points: xs.len(),
    })
}

/// Slope of `log y` against `log x`, optionally dropping the first point.
pub fn loglog_slope(xs: &[f64], ys: &[f64], drop_first: bool) -> Result<LineFit> {
    if xs.iter().chain(ys).any(|v| *v <= 0.0) {
        return Err(Error::invalid("log-log fit needs positive data"));
    }
    let skip = usize::from(drop_first);
    let lx: Vec<f64> = xs.iter().skip(skip).map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().skip(skip).map(|v| v.ln()).collect();
    least_squares(&lx, &ly)
}

/// `max/min` of a set of positive ratios.
pub fn band_width(ratios: &[f64]) -> f64 {
    let (lo, hi) = ratios
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &r| (lo.min(r.abs()), hi.max(r.abs())));
    if ratios.is_empty() {
        1.0
    } else {
        hi / lo
    }
}

/// Largest relative change between consecutive ratios.
pub fn max_step_drift(ratios: &[f64]) -> f64 {
    ratios.windows(2).map(|w| ((w[1] - w[0]) / w[0]).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-1.7)).collect();
        let f = loglog_slope(&xs, &ys, false).unwrap();
        assert!((f.slope + 1.7).abs() < 1e-12);
        assert!(f.slope_stderr < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(least_squares(&[1.0], &[1.0]).is_err());
        assert!(least_squares(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(loglog_slope(&[1.0, -1.0], &[1.0, 2.0], false).is_err());
    }

    #[test]
    fn bands() {
        assert_eq!(band_width(&[1.0, 2.0, 1.5]), 2.0);
        assert!((max_step_drift(&[1.0, 1.1, 1.0]) - 0.1).abs() < 1e-12);
    }
}
