//! Large-argument asymptotics of the Riccati–Hankel functions
//! `w±(r) ~ e^{±ikr} Σ_j (±i)^j a_j(ν) / (kr)^j`, the exterior solutions of
//! `-½ v'' + (ν² - ¼)/(2r²) v = ½k² v`.

use num_complex::Complex64;

type C = Complex64;

/// Coefficients `a_j(ν) = Π_{l=1}^{j} (4ν² - (2l-1)²) / (j! 8^j)`.
pub fn coefficients(nu: f64, count: usize) -> Vec<f64> {
    let mut a = Vec::with_capacity(count);
    let mut cur = 1.0;
    a.push(cur);
    for j in 1..count {
        let l = (2 * j - 1) as f64;
        cur *= (4.0 * nu * nu - l * l) / (j as f64 * 8.0);
        a.push(cur);
    }
    a
}

/// Value and `r`-derivative of `w±` at `r`; `sign = ±1`. The series is cut
/// at its smallest term.
pub fn riccati_hankel(nu: f64, k: f64, r: f64, sign: f64) -> (C, C) {
    let z = k * r;
    let a = coefficients(nu, 40);
    let unit = C::new(0.0, sign);
    let mut sum = C::new(0.0, 0.0);
    let mut dsum = C::new(0.0, 0.0);
    let mut pow = C::new(1.0, 0.0);
    let mut last = f64::INFINITY;
    for (j, &aj) in a.iter().enumerate() {
        let term = pow * aj / z.powi(j as i32);
        if term.norm() > last && j > 1 {
            break;
        }
        last = term.norm();
        sum += term;
        // d/dr of (kr)^{-j} = -j k (kr)^{-j-1}
        dsum += pow * aj * (-(j as f64)) * k / z.powi(j as i32 + 1);
        if last < 1e-17 {
            break;
        }
        pow *= unit;
    }
    let e = C::from_polar(1.0, sign * z);
    (e * sum, e * (unit * k * sum + dsum))
}
