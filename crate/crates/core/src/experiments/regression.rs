//! Least-squares fit of `log(err) = rho log(dt) + c`.

use crate::Real;

use super::ExperimentError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogLogFit<T> {
    pub slope: T,
    pub intercept: T,
    pub r_squared: T,
}

/// Ordinary least squares on `(ln dt, ln err)`.
pub fn ols_loglog<T: Real>(points: &[(T, T)]) -> Result<LogLogFit<T>, ExperimentError> {
    if points.len() < 2 {
        return Err(ExperimentError::InsufficientPoints {
            got: points.len(),
            needed: 2,
        });
    }
    if let Some(&(dt, err)) = points
        .iter()
        .find(|(dt, err)| !(*dt > T::zero() && *err > T::zero()))
    {
        return Err(ExperimentError::NonPositivePoint {
            dt: dt.to_f64_lossy(),
            err: err.to_f64_lossy(),
        });
    }
    let n = T::from_count(points.len());
    let xs: Vec<T> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<T> = points.iter().map(|p| p.1.ln()).collect();
    let mean_x = xs.iter().fold(T::zero(), |a, &x| a + x) / n;
    let mean_y = ys.iter().fold(T::zero(), |a, &y| a + y) / n;
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(&ys) {
        let (dx, dy) = (x - mean_x, y - mean_y);
        sxx = sxx + dx * dx;
        sxy = sxy + dx * dy;
        syy = syy + dy * dy;
    }
    if !(sxx > T::zero()) {
        return Err(ExperimentError::DegenerateRegression);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r_squared = if syy > T::zero() {
        (sxy * sxy / (sxx * syy)).min(T::one())
    } else {
        T::one()
    };
    Ok(LogLogFit {
        slope,
        intercept,
        r_squared,
    })
}
