//! Least-squares rate extraction from error curves.

use super::HarnessError;

/// Fit of `ln(err) = intercept + slope * u`, where `u` is `x` or `ln(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
    /// Points discarded because the error was exactly zero.
    pub dropped_zeros: usize,
}

impl RateFit {
    /// Negative slope with `r² >= min_r2`.
    pub fn decreasing_with(&self, min_r2: f64) -> bool {
        self.slope < 0.0 && self.r_squared >= min_r2
    }
}

/// Ordinary least squares of `ln(errs)` against `xs` (or `ln(xs)` when `log_x`).
/// Zero errors are dropped and counted; fewer than three usable points is an error.
pub fn fit_log_rate(xs: &[f64], errs: &[f64], log_x: bool) -> Result<RateFit, HarnessError> {
    if xs.len() != errs.len() {
        return Err(HarnessError::LengthMismatch(xs.len(), errs.len()));
    }
    let mut dropped_zeros = 0;
    let mut pts = Vec::with_capacity(xs.len());
    for (&x, &e) in xs.iter().zip(errs) {
        if e == 0.0 {
            dropped_zeros += 1;
            continue;
        }
        if !(e > 0.0 && e.is_finite()) {
            return Err(HarnessError::BadValue("error", e));
        }
        let u = if log_x {
            if x.is_nan() || x <= 0.0 {
                return Err(HarnessError::BadValue("abscissa", x));
            }
            x.ln()
        } else {
            x
        };
        if !u.is_finite() {
            return Err(HarnessError::BadValue("abscissa", x));
        }
        pts.push((u, e.ln()));
    }
    if pts.len() < 3 {
        return Err(HarnessError::TooFewPoints(pts.len()));
    }

    let n = pts.len() as f64;
    let mean_u = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_v = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut suu, mut suv, mut svv) = (0.0, 0.0, 0.0);
    for &(u, v) in &pts {
        let (du, dv) = (u - mean_u, v - mean_v);
        suu += du * du;
        suv += du * dv;
        svv += dv * dv;
    }
    if suu == 0.0 {
        return Err(HarnessError::DegenerateAbscissa);
    }
    let slope = suv / suu;
    let intercept = mean_v - slope * mean_u;
    let r_squared = if svv == 0.0 {
        1.0
    } else {
        (suv * suv / (suu * svv)).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        n_points: pts.len(),
        dropped_zeros,
    })
}
