use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqspace::least_squares_slope;

/// Cost measurements at one target accuracy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityPoint {
    pub eps: f64,
    pub support: f64,
    pub flops: f64,
}

/// Slope of a log-log fit and the root-mean-square residual of the fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub residual: f64,
    /// Set when a reference slope exists and the fit misses it by over 20%.
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub points: usize,
    /// Expected slope `1/s`, when `s` is known.
    pub reference_slope: Option<f64>,
    pub support: SlopeFit,
    pub flops: SlopeFit,
}

/// Relative deviation allowed before a slope is flagged.
pub const SLOPE_TOLERANCE: f64 = 0.2;

fn fit(pts: &[(f64, f64)], reference: Option<f64>) -> SlopeFit {
    let slope = least_squares_slope(pts);
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let rss: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    SlopeFit {
        slope,
        residual: (rss / n).sqrt(),
        flagged: reference.is_some_and(|r| (slope - r).abs() > SLOPE_TOLERANCE * r.abs()),
    }
}

/// Least-squares slopes of `log support` and `log flops` against `log(1/eps)`.
pub fn complexity_report(points: &[ComplexityPoint], known_s: Option<f64>) -> Result<ComplexityReport> {
    if points.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "complexity fit needs at least 3 accuracies, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !(p.eps > 0.0) || !(p.support > 0.0) || !(p.flops > 0.0)) {
        return Err(Error::InvalidParameter("complexity points must be positive".into()));
    }
    let x: Vec<f64> = points.iter().map(|p| (1.0 / p.eps).ln()).collect();
    let distinct = x.iter().any(|&v| (v - x[0]).abs() > 1e-12);
    if !distinct {
        return Err(Error::InvalidParameter("complexity fit needs distinct accuracies".into()));
    }
    let reference = known_s.map(|s| 1.0 / s);
    let support: Vec<(f64, f64)> = x.iter().zip(points).map(|(&a, p)| (a, p.support.ln())).collect();
    let flops: Vec<(f64, f64)> = x.iter().zip(points).map(|(&a, p)| (a, p.flops.ln())).collect();
    Ok(ComplexityReport {
        points: points.len(),
        reference_slope: reference,
        support: fit(&support, reference),
        flops: fit(&flops, reference),
    })
}
