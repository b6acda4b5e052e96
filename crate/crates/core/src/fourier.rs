//! The free spectral representation `F_{0,±}(λ)` and half-line projections
//! on `M_f`.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modal::ModalSystem;

type C = Complex64;

/// Which dispersion relation ties `λ` to the wavenumber.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Dispersion {
    /// `λ = k^2 / 2`.
    Continuum,
    /// `λ = (1 - cos kΔr) / Δr^2`, the exact symbol of the discrete `P_f`.
    #[default]
    Lattice,
}

/// Wavenumber and spectral density `(dλ/dk)^{-1/2}` at energy `λ`.
pub fn wavenumber(lambda: f64, dr: f64, disp: Dispersion) -> Result<(f64, f64)> {
    if lambda <= 0.0 {
        return Err(Error::Resolution(format!("energy λ = {lambda} must be positive")));
    }
    match disp {
        Dispersion::Continuum => {
            let k = (2.0 * lambda).sqrt();
            Ok((k, k.powf(-0.5)))
        }
        Dispersion::Lattice => {
            let c = 1.0 - lambda * dr * dr;
            if c <= -1.0 + 1e-12 {
                return Err(Error::Resolution(format!("λ = {lambda} lies above the band edge of Δr = {dr}")));
            }
            let k = c.acos() / dr;
            let slope = (k * dr).sin() / dr;
            Ok((k, slope.powf(-0.5)))
        }
    }
}

/// `F_{0,±}(λ) φ` as a vector of mode coefficients.
pub fn f0_apply(sys: &ModalSystem, lambda: f64, x: &[C], sign: f64, disp: Dispersion) -> Result<Vec<C>> {
    let (k, dens) = wavenumber(lambda, sys.grid.dr, disp)?;
    let m = sys.modes;
    let pref = dens * (2.0 * std::f64::consts::PI).powf(-0.5) * sys.grid.dr.sqrt();
    let mut out = vec![C::new(0.0, 0.0); m];
    for (i, &r) in sys.free.r_nodes.iter().enumerate() {
        let ph = C::from_polar(pref, -sign * k * r);
        for (q, o) in out.iter_mut().enumerate() {
            *o += ph * x[i * m + q];
        }
    }
    Ok(out)
}

/// `F_{0,±}(λ)* ψ`: the plane wave `(dλ/dk)^{-1/2} (2π)^{-1/2} e^{±ikr} ψ`.
pub fn f0_adjoint(sys: &ModalSystem, lambda: f64, psi: &[C], sign: f64, disp: Dispersion) -> Result<Vec<C>> {
    let (k, dens) = wavenumber(lambda, sys.grid.dr, disp)?;
    let m = sys.modes;
    let pref = dens * (2.0 * std::f64::consts::PI).powf(-0.5) * sys.grid.dr.sqrt();
    let mut out = vec![C::new(0.0, 0.0); sys.free_dim()];
    for (i, &r) in sys.free.r_nodes.iter().enumerate() {
        let ph = C::from_polar(pref, sign * k * r);
        for q in 0..m {
            out[i * m + q] = ph * psi[q];
        }
    }
    Ok(out)
}

/// Splits a free state into its positive- and negative-frequency parts with
/// the discrete Fourier transform on the symmetric box. The zero frequency
/// is shared equally.
pub fn split_half_lines(sys: &ModalSystem, x: &[C]) -> (Vec<C>, Vec<C>) {
    let n = sys.free.len();
    let m = sys.modes;
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut plus = vec![C::new(0.0, 0.0); x.len()];
    let mut minus = vec![C::new(0.0, 0.0); x.len()];
    let mut buf = vec![C::new(0.0, 0.0); n];
    for q in 0..m {
        for i in 0..n {
            buf[i] = x[i * m + q];
        }
        fwd.process(&mut buf);
        let mut bp = buf.clone();
        let mut bm = buf.clone();
        for f in 0..n {
            // signed frequency index
            let s = if f <= n / 2 { f as isize } else { f as isize - n as isize };
            let (wp, wm) = match s.cmp(&0) {
                std::cmp::Ordering::Greater => (1.0, 0.0),
                std::cmp::Ordering::Less => (0.0, 1.0),
                std::cmp::Ordering::Equal => (0.5, 0.5),
            };
            bp[f] *= wp / n as f64;
            bm[f] *= wm / n as f64;
        }
        inv.process(&mut bp);
        inv.process(&mut bm);
        for i in 0..n {
            plus[i * m + q] = bp[i];
            minus[i * m + q] = bm[i];
        }
    }
    (plus, minus)
}

/// `|∫ ‖F_{0,±}(λ)φ‖² dλ - ‖φ_±‖²| / ‖φ‖²`, with the λ-integral taken in
/// the wavenumber over `k_range` by composite Gauss–Legendre (8 nodes per
/// panel). `k_range` must cover the packet's spectrum.
pub fn parseval_defect(
    sys: &ModalSystem,
    x: &[C],
    sign: f64,
    disp: Dispersion,
    k_range: (f64, f64),
    panels: usize,
) -> Result<f64> {
    let dr = sys.grid.dr;
    let (k0, k1) = k_range;
    let k_top = match disp {
        Dispersion::Lattice => std::f64::consts::PI / dr,
        Dispersion::Continuum => f64::INFINITY,
    };
    if !(k0 >= 0.0 && k1 > k0 && k1 < k_top) || panels == 0 {
        return Err(Error::Quadrature(format!("wavenumber range [{k0}, {k1}] is not inside the band")));
    }
    let rule = gauss_quad::GaussLegendre::new(std::num::NonZeroUsize::new(8).expect("nonzero"));
    let h = (k1 - k0) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let (a, b) = (k0 + p as f64 * h, k0 + (p + 1) as f64 * h);
        for (t, w) in rule.iter() {
            let k = 0.5 * (b - a) * t + 0.5 * (a + b);
            if k <= 0.0 {
                continue;
            }
            let (lambda, slope) = match disp {
                Dispersion::Lattice => ((1.0 - (k * dr).cos()) / (dr * dr), (k * dr).sin() / dr),
                Dispersion::Continuum => (0.5 * k * k, k),
            };
            let f = f0_apply(sys, lambda, x, sign, disp)?;
            total += 0.5 * (b - a) * w * slope * f.iter().map(|v| v.norm_sqr()).sum::<f64>();
        }
    }
    let (plus, minus) = split_half_lines(sys, x);
    let part = if sign > 0.0 { plus } else { minus };
    let reference: f64 = part.iter().map(|v| v.norm_sqr()).sum();
    let scale: f64 = x.iter().map(|v| v.norm_sqr()).sum();
    Ok((total - reference).abs() / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::CoefficientField;
    use crate::cross_section::CrossSection;
    use crate::grid::{CapPolicy, RadialGrid};
    use crate::modal::norm;

    fn free_system() -> ModalSystem {
        let cs = CrossSection::circle(8).unwrap();
        let grid = RadialGrid::build(40.0, 2000, CapPolicy::HalfLineRegular, 2, 1.0).unwrap();
        ModalSystem::build(&cs, &CoefficientField::exact_cone(2), &grid, 2, 2.0).unwrap()
    }

    #[test]
    fn lattice_wavenumber_inverts_the_symbol() {
        let dr = 0.02;
        let (k, _) = wavenumber(2.0, dr, Dispersion::Lattice).unwrap();
        assert!(((1.0 - (k * dr).cos()) / (dr * dr) - 2.0).abs() < 1e-10);
        let (kc, d) = wavenumber(2.0, dr, Dispersion::Continuum).unwrap();
        assert_eq!(kc, 2.0);
        assert!((d - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn adjoint_pairing() {
        let s = free_system();
        let x = s.free_from_profile(1, |r| C::new((-(r - 3.0f64).powi(2)).exp(), 0.2 * r.sin() * (-r * r / 50.0).exp()));
        let psi = vec![C::new(0.3, -0.1), C::new(0.7, 0.4)];
        for sign in [1.0, -1.0] {
            let a = crate::modal::dot(&psi, &f0_apply(&s, 1.3, &x, sign, Dispersion::Lattice).unwrap());
            let b = crate::modal::dot(&f0_adjoint(&s, 1.3, &psi, sign, Dispersion::Lattice).unwrap(), &x);
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn half_line_split_separates_directions() {
        let s = free_system();
        let x = s.free_from_profile(0, |r| C::from_polar((-(r / 8.0).powi(2)).exp(), 2.0 * r));
        let (p, m) = split_half_lines(&s, &x);
        assert!((norm(&m) / norm(&x)).powi(2) < 1e-12);
        assert!((norm(&p) - norm(&x)).abs() < 1e-12);
    }

    #[test]
    fn parseval_on_a_packet() {
        let sys = free_system();
        let x = sys.free_from_profile(0, |r| C::from_polar((-(r - 3.0) * (r - 3.0) / 8.0).exp(), 1.5 * r));
        for disp in [Dispersion::Lattice, Dispersion::Continuum] {
            let d = parseval_defect(&sys, &x, 1.0, disp, (1e-6, 4.0), 400).unwrap();
            let tol = if disp == Dispersion::Lattice { 1e-5 } else { 2e-2 };
            assert!(d <= tol, "{disp:?}: {d}");
        }
    }
}
