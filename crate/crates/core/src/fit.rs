//! Small least-squares and slope-fitting helpers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

type C = Complex64;

/// Complex least squares `min ‖A x - b‖` via the SVD.
pub fn lstsq(a: &DMatrix<C>, b: &DVector<C>) -> Result<DVector<C>> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    svd.solve(b, 1e-13 * smax).map_err(|e| Error::Fit(e.to_string()))
}

/// Slope and intercept of the least-squares line through `(x, y)`.
pub fn line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Log-log slope of positive samples `(r, v)`.
pub fn loglog_slope(samples: &[(f64, f64)]) -> f64 {
    let x: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    line(&x, &y).0
}

/// Spectral norm of a complex matrix.
pub fn spectral_norm(a: &DMatrix<C>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.max()
}

/// Condition number in the spectral norm.
pub fn condition(a: &DMatrix<C>) -> f64 {
    let s = a.clone().svd(false, false).singular_values;
    s.max() / s.min()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_coefficients() {
        let a = DMatrix::from_fn(6, 2, |i, j| C::new((i + 1) as f64, (j * i) as f64));
        let x = DVector::from_vec(vec![C::new(1.0, -2.0), C::new(0.5, 0.25)]);
        let b = &a * &x;
        assert!((lstsq(&a, &b).unwrap() - x).norm() < 1e-12);
    }

    #[test]
    fn slope_of_power_law() {
        let s: Vec<(f64, f64)> = [2.0, 4.0, 8.0].iter().map(|&r: &f64| (r, 3.0 * r.powf(-1.5))).collect();
        assert!((loglog_slope(&s) + 1.5).abs() < 1e-12);
    }
}
