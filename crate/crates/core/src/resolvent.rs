//! Limiting-absorption resolvents: complex absorption beyond `R_phys` plus an
//! ε ladder extrapolated to ε = 0.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::blocktri::{BlockLu, SymBlockTri};
use crate::cutoff::cutoff_j;
use crate::error::{Error, Result};
use crate::modal::ModalSystem;

type C = Complex64;

/// Absorber `-iη j((r - R_phys)/L)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Absorber {
    pub eta: f64,
    pub width: f64,
}

impl Absorber {
    /// `η = k/2`, `L = 40/k`. The ramp of `j` spans `L/2`, about three
    /// wavelengths, which keeps the reflected amplitude near 1e-4.
    pub fn for_wavenumber(k: f64) -> Self {
        Self { eta: 0.5 * k, width: 40.0 / k }
    }

    /// Outer radius needed behind the ramp: a plateau in which the wave
    /// decays by `e^{-5}` each way.
    pub fn required_r_max(&self, r_phys: f64, k: f64) -> f64 {
        r_phys + self.width + 5.0 * k / self.eta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResolventConfig {
    pub epsilon0: f64,
    pub rungs: usize,
    pub s_weight: f64,
    pub r_phys: f64,
    /// `None` selects [`Absorber::for_wavenumber`] at each energy.
    pub absorber: Option<Absorber>,
    /// Extrapolate the ladder to ε = 0 (otherwise the last rung is used).
    pub extrapolate: bool,
    /// Ratio between successive rungs.
    pub ladder_ratio: f64,
}

impl Default for ResolventConfig {
    fn default() -> Self {
        Self {
            epsilon0: 0.1,
            rungs: 5,
            s_weight: 1.0,
            r_phys: 30.0,
            absorber: None,
            extrapolate: true,
            ladder_ratio: 0.5,
        }
    }
}

impl ResolventConfig {
    pub fn ladder(&self) -> Vec<f64> {
        (0..self.rungs).map(|k| self.epsilon0 * self.ladder_ratio.powi(k as i32)).collect()
    }

    /// Ladder used at wavenumber `k`: the top rung is lowered to `k / (2 R_phys)`
    /// when larger, so that `ε r / k <= 1/2` inside the physical region and the
    /// polynomial extrapolation stays accurate.
    pub fn ladder_for(&self, k: f64) -> Vec<f64> {
        let top = self.epsilon0.min(0.5 * k / self.r_phys);
        (0..self.rungs).map(|j| top * self.ladder_ratio.powi(j as i32)).collect()
    }

    pub fn absorber_at(&self, k: f64) -> Absorber {
        self.absorber.unwrap_or_else(|| Absorber::for_wavenumber(k))
    }

    pub fn validate(&self, r_max: f64, k: f64) -> Result<()> {
        if self.rungs == 0 || self.epsilon0 <= 0.0 || !(self.ladder_ratio > 0.0 && self.ladder_ratio < 1.0) {
            return Err(Error::Configuration(
                "ε ladder needs ε0 > 0, at least one rung and a ratio in (0, 1)".into(),
            ));
        }
        if self.s_weight <= 0.5 {
            return Err(Error::Configuration(format!("LAP weight s = {} must exceed 1/2", self.s_weight)));
        }
        let a = self.absorber_at(k);
        if a.eta <= 0.0 || a.width <= 0.0 {
            return Err(Error::Configuration("absorber strength and width must be positive".into()));
        }
        if self.r_phys + a.width > r_max {
            return Err(Error::Configuration(format!(
                "R_phys + L_abs = {} exceeds R_max = {r_max}",
                self.r_phys + a.width
            )));
        }
        Ok(())
    }
}

/// Diagonal of the absorber on the modal grid, sign `σ`: `-iση·ramp`.
pub fn absorber_diagonal(sys: &ModalSystem, r_phys: f64, a: Absorber, sigma: f64) -> Vec<C> {
    let m = sys.modes;
    let mut d = vec![C::new(0.0, 0.0); sys.dim()];
    for i in 0..sys.grid.len() {
        let w = cutoff_j((sys.r(i) - r_phys) / a.width);
        for q in 0..m {
            d[i * m + q] = C::new(0.0, -sigma * a.eta * w);
        }
    }
    d
}

/// Factorizations of `P + absorber - λ - iσε_k` along the ladder.
pub struct LadderSolver {
    pub eps: Vec<f64>,
    factors: Vec<BlockLu>,
    extrapolate: bool,
}

/// Solution with its extrapolation residual (relative).
#[derive(Debug, Clone)]
pub struct LadderSolution {
    pub value: Vec<C>,
    pub residual: f64,
    pub rungs: Vec<Vec<C>>,
}

impl LadderSolver {
    /// `sigma = +1` realizes `(P - λ - i0)^{-1}`, `sigma = -1` the incoming one.
    pub fn new(sys: &ModalSystem, lambda: f64, sigma: f64, cfg: &ResolventConfig, k: f64) -> Result<Self> {
        let absorber = absorber_diagonal(sys, cfg.r_phys, cfg.absorber_at(k), sigma);
        Self::with_operator(&sys.p, Some(&absorber), cfg.ladder_for(k), lambda, sigma, cfg.extrapolate)
    }

    /// Ladder for an explicit operator and absorber diagonal.
    pub fn with_operator(
        op: &SymBlockTri,
        absorber: Option<&[C]>,
        eps: Vec<f64>,
        lambda: f64,
        sigma: f64,
        extrapolate: bool,
    ) -> Result<Self> {
        let mut factors = Vec::with_capacity(eps.len());
        for &e in &eps {
            let z = C::new(lambda, sigma * e);
            factors.push(op.shifted(z, absorber).factor()?);
        }
        Ok(Self { eps, factors, extrapolate })
    }

    /// Plain resolvent at a complex point, no absorber and no ladder.
    pub fn at_point(sys: &ModalSystem, z: C) -> Result<Self> {
        if z.im == 0.0 && z.re >= 0.0 {
            return Err(Error::Solve(format!("z = {z} lies on the continuous spectrum")));
        }
        Ok(Self { eps: vec![z.im.abs()], factors: vec![sys.p.shifted(z, None).factor()?], extrapolate: false })
    }

    /// Solve at a single rung without extrapolation.
    pub fn solve_rung(&self, rung: usize, rhs: &[C]) -> Result<Vec<C>> {
        self.factors[rung].solve(rhs)
    }

    /// Adjoint solve at one rung. The shifted matrices are complex symmetric,
    /// so `(A*)^{-1} v = conj(A^{-1} conj(v))`.
    pub fn solve_rung_adjoint(&self, rung: usize, rhs: &[C]) -> Result<Vec<C>> {
        let c: Vec<C> = rhs.iter().map(|v| v.conj()).collect();
        Ok(self.factors[rung].solve(&c)?.into_iter().map(|v| v.conj()).collect())
    }

    pub fn solve(&self, rhs: &[C]) -> Result<LadderSolution> {
        let rungs: Vec<Vec<C>> = self.factors.iter().map(|f| f.solve(rhs)).collect::<Result<_>>()?;
        if !self.extrapolate || rungs.len() == 1 {
            let value = rungs.last().cloned().unwrap_or_default();
            let residual = if rungs.len() >= 2 { rel_diff(&rungs[rungs.len() - 1], &rungs[rungs.len() - 2]) } else { 0.0 };
            return Ok(LadderSolution { value, residual, rungs });
        }
        let value = neville_at_zero(&self.eps, &rungs);
        let coarse = neville_at_zero(&self.eps[..self.eps.len() - 1], &rungs[..rungs.len() - 1]);
        let residual = rel_diff(&value, &coarse);
        Ok(LadderSolution { value, residual, rungs })
    }
}

fn rel_diff(a: &[C], b: &[C]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    let den: f64 = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Polynomial extrapolation of vector samples `y(x_k)` to `x = 0`.
pub fn neville_at_zero(x: &[f64], y: &[Vec<C>]) -> Vec<C> {
    let n = x.len();
    let mut p: Vec<Vec<C>> = y.to_vec();
    for level in 1..n {
        for i in 0..n - level {
            let (xi, xj) = (x[i], x[i + level]);
            let next: Vec<C> = p[i]
                .iter()
                .zip(&p[i + 1])
                .map(|(a, b)| (b * xi - a * xj) / (xi - xj))
                .collect();
            p[i] = next;
        }
    }
    p.swap_remove(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neville_recovers_polynomials() {
        let xs = [0.1, 0.05, 0.025, 0.0125];
        let ys: Vec<Vec<C>> = xs.iter().map(|&x| vec![C::new(1.0 + 2.0 * x - 3.0 * x * x + x * x * x, x)]).collect();
        let v = neville_at_zero(&xs, &ys);
        assert!((v[0] - C::new(1.0, 0.0)).norm() < 1e-12);
    }
}
