//! From a scattering metric `g = m1 dr² + 2 m2 dr (r dθ) + m3 (r dθ)²` on a
//! conic end to the coefficients of `P = -½ U Δ_g U⁻¹`.
//!
//! `m2` is the off-diagonal entry of the metric matrix in the frame
//! `(dr, r dθ)`, and `(b1, b2, b3)` are the entries of its inverse, so that
//! `g* = b1 ∂_r² + 2 b2 ∂_r (r⁻¹∂_θ) + b3 (r⁻¹∂_θ)²`.

use std::sync::Arc;

use serde::Serialize;

use crate::coefficients::{ladder, CoefficientField, Decay, DecayReport, Rule, DEFAULT_LADDER_MAX, FAST_DECAY};
use crate::cross_section::CrossSection;
use crate::cutoff::ramp;
use crate::error::{Error, Result};

#[derive(Clone)]
pub struct ScatteringMetricSpec {
    pub m1: Rule,
    pub m2: Rule,
    pub m3: Rule,
    /// Limit `h₀³(θ)` of `m3`; the cross-section carries `h = 1/h₀³` and `H = (h₀³)^{1/2}`.
    pub h0: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Claimed `(ν1, ν2, ν3)`.
    pub rates: (f64, f64, f64),
    /// Below `gamma` the metric is blended into the flat cone over one unit.
    pub gamma: f64,
    pub n: usize,
}

impl std::fmt::Debug for ScatteringMetricSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScatteringMetricSpec").field("rates", &self.rates).field("gamma", &self.gamma).finish()
    }
}

impl ScatteringMetricSpec {
    pub fn flat_cone() -> Self {
        Self {
            m1: Arc::new(|_, _| 1.0),
            m2: Arc::new(|_, _| 0.0),
            m3: Arc::new(|_, _| 1.0),
            h0: Arc::new(|_| 1.0),
            rates: (FAST_DECAY, FAST_DECAY, FAST_DECAY),
            gamma: 0.0,
            n: 2,
        }
    }

    /// `m3 = 1 + c/r`, flat otherwise.
    pub fn angular_tail(c: f64) -> Self {
        Self {
            m3: Arc::new(move |r, _| 1.0 + c / r),
            rates: (FAST_DECAY, FAST_DECAY, 1.0),
            gamma: 1.0,
            ..Self::flat_cone()
        }
    }

    /// Blended metric matrix `(m1, m2, m3)` at a point.
    pub fn matrix(&self, r: f64, t: f64) -> [f64; 3] {
        let s = if self.gamma > 0.0 { ramp(r, self.gamma - 1.0, 2.0) } else { 1.0 };
        if s == 0.0 {
            return [1.0, 0.0, (self.h0)(t)];
        }
        [
            1.0 + s * ((self.m1)(r, t) - 1.0),
            s * (self.m2)(r, t),
            (self.h0)(t) + s * ((self.m3)(r, t) - (self.h0)(t)),
        ]
    }

    /// `(b1, b2, b3)`.
    pub fn inverse(&self, r: f64, t: f64) -> Result<[f64; 3]> {
        let [a, b, c] = self.matrix(r, t);
        let det = a * c - b * b;
        if !(det > 0.0 && a > 0.0) {
            return Err(Error::Geometry(format!("metric block singular or indefinite at r={r}, θ={t}")));
        }
        Ok([c / det, -b / det, a / det])
    }

    /// Density `H = (h₀³)^{1/2}`.
    pub fn density(&self, t: f64) -> f64 {
        (self.h0)(t).sqrt()
    }

    /// Cross-section matching the metric's limit.
    pub fn cross_section(&self, theta_count: usize) -> Result<CrossSection> {
        let h0 = self.h0.clone();
        let h1 = self.h0.clone();
        CrossSection::build(theta_count, move |t| h0(t).sqrt(), move |t| 1.0 / h1(t))
    }

    /// `Ψ = (√det g / G)^{1/2}`.
    pub fn psi(&self, r: f64, t: f64) -> f64 {
        let [a, b, c] = self.matrix(r, t);
        ((a * c - b * b).sqrt() / self.density(t)).sqrt()
    }

    /// `W` in `U Δ_g U⁻¹ = G⁻¹ ∂_j g^{jk} G ∂_k + W`, i.e.
    /// `W = -(GΨ)⁻¹ ∂_j (g^{jk} G ∂_k Ψ)`.
    pub fn w(&self, r: f64, t: f64) -> f64 {
        let flux = |r: f64, t: f64| -> [f64; 2] {
            let [b1, b2, b3] = self.inverse(r, t).unwrap_or([1.0, 0.0, 1.0]);
            let g = r * self.density(t);
            let pr = d4r(|x| self.psi(x, t), r);
            let pt = d4(|x| self.psi(r, x), t);
            [g * (b1 * pr + b2 / r * pt), g * (b2 / r * pr + b3 / (r * r) * pt)]
        };
        let div = d4r(|x| flux(x, t)[0], r) + d4(|x| flux(r, x)[1], t);
        -div / (r * self.density(t) * self.psi(r, t))
    }

    /// `-½ Ψ Δ_g (f/Ψ)` by direct composition, with `Δ_g = ρ⁻¹ ∂_j ρ g^{jk} ∂_k`
    /// and `ρ = √det g`.
    pub fn direct_operator(&self, f: &dyn Fn(f64, f64) -> f64, r: f64, t: f64) -> f64 {
        let rho = |r: f64, t: f64| {
            let [a, b, c] = self.matrix(r, t);
            r * (a * c - b * b).sqrt()
        };
        let v = |r: f64, t: f64| f(r, t) / self.psi(r, t);
        let flux = |r: f64, t: f64| -> [f64; 2] {
            let [b1, b2, b3] = self.inverse(r, t).unwrap_or([1.0, 0.0, 1.0]);
            let vr = d4r(|x| v(x, t), r);
            let vt = d4(|x| v(r, x), t);
            let p = rho(r, t);
            [p * (b1 * vr + b2 / r * vt), p * (b2 / r * vr + b3 / (r * r) * vt)]
        };
        let lap = (d4r(|x| flux(x, t)[0], r) + d4(|x| flux(r, x)[1], t)) / rho(r, t);
        -0.5 * self.psi(r, t) * lap
    }
}

const FD_STEP: f64 = 1e-3;

/// Fourth-order centered first derivative.
fn d4(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    d4h(f, x, FD_STEP)
}

/// Radial derivative with a step proportional to `r`.
fn d4r(f: impl Fn(f64) -> f64, r: f64) -> f64 {
    d4h(f, r, FD_STEP * r.max(1.0))
}

fn d4h(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (8.0 * (f(x + h) - f(x - h)) - (f(x + 2.0 * h) - f(x - 2.0 * h))) / (12.0 * h)
}

/// Measured decay of the inverse metric, `Ψ` and `W`.
#[derive(Debug, Clone, Serialize)]
pub struct MetricRates {
    pub nu1_prime: f64,
    pub nu2_prime: f64,
    pub nu3_prime: f64,
    pub psi: f64,
    pub w: f64,
    /// `ν1' > 1`, `ν2' > 1/2`, `ν3' > 0`.
    pub scattering_class: bool,
    /// The weaker `μ2 > 0` demanded of the coefficients.
    pub assumption_class: bool,
}

pub struct MetricOperator {
    pub field: CoefficientField,
    pub psi: Rule,
    pub w: Rule,
    pub rates: MetricRates,
}

fn measured(samples: &[(f64, f64)]) -> f64 {
    let report = DecayReport::from_samples("metric", 0.0, samples);
    if report.slope.is_finite() {
        (-report.slope).min(FAST_DECAY)
    } else {
        FAST_DECAY
    }
}

/// Builds the coefficient field with `a = b`, `V = -W/2` and measured decay.
pub fn metric_to_operator(g: &ScatteringMetricSpec, cs: &CrossSection) -> Result<MetricOperator> {
    if g.n != 2 {
        return Err(Error::Configuration(format!(
            "metrics are supported on surfaces only (n = 2), got n = {}",
            g.n
        )));
    }
    for (j, &t) in cs.theta_nodes.iter().enumerate() {
        if (cs.h_density[j] - g.density(t)).abs() > 1e-12 * g.density(t) {
            return Err(Error::Geometry(format!("cross-section density differs from (h₀³)^1/2 at θ = {t}")));
        }
    }
    for r in (1..=400).map(|i| 0.05 * i as f64).chain(ladder(DEFAULT_LADDER_MAX)) {
        for &t in &cs.theta_nodes {
            g.inverse(r, t)?;
        }
    }
    let sup = |f: &dyn Fn(f64, f64) -> f64| -> Vec<(f64, f64)> {
        ladder(DEFAULT_LADDER_MAX)
            .map(|r| (r, cs.theta_nodes.iter().map(|&t| f(r, t).abs()).fold(0.0, f64::max)))
            .collect()
    };
    let inv = |r: f64, t: f64| g.inverse(r, t).unwrap_or([1.0, 0.0, 1.0]);
    let nu1 = measured(&sup(&|r, t| inv(r, t)[0] - 1.0));
    let nu2 = measured(&sup(&|r, t| inv(r, t)[1]));
    let nu3 = measured(&sup(&|r, t| inv(r, t)[2] - 1.0 / (g.h0)(t)));
    let psi_rate = measured(&sup(&|r, t| g.psi(r, t) - 1.0));
    let w_rate = measured(&sup(&|r, t| g.w(r, t)));
    let rates = MetricRates {
        nu1_prime: nu1,
        nu2_prime: nu2,
        nu3_prime: nu3,
        psi: psi_rate,
        w: w_rate,
        scattering_class: nu1 > 1.0 && nu2 > 0.5 && nu3 > 0.0,
        assumption_class: nu1 > 1.0 && nu2 > 0.0 && nu3 > 0.0,
    };
    let (g1, g2, g3, g4, g5) = (g.clone(), g.clone(), g.clone(), g.clone(), g.clone());
    let radial = is_radial(g, cs);
    let field = CoefficientField {
        n: 2,
        a1: Arc::new(move |r, t| g1.inverse(r, t).map_or(1.0, |b| b[0])),
        a2: Arc::new(move |r, t| g2.inverse(r, t).map_or(0.0, |b| b[1])),
        a3_factor: Arc::new(move |r, t| g3.inverse(r, t).map_or(1.0, |b| b[2] * (g3.h0)(t))),
        v1: Arc::new(|_, _| 0.0),
        v1_support: 0.0,
        v2: Arc::new(move |r, t| -0.5 * g4.w(r, t)),
        decay: Decay { mu1: nu1, mu2: nu2, mu3: nu3, mu4: w_rate, nu: w_rate },
        label: "metric".into(),
        radial_only: radial,
    };
    let psi: Rule = Arc::new(move |r, t| g5.psi(r, t));
    let gw = g.clone();
    Ok(MetricOperator { field, psi, w: Arc::new(move |r, t| gw.w(r, t)), rates })
}

/// Errors of the assembled `P` against [`ScatteringMetricSpec::direct_operator`]
/// for one smooth state, sup over `r ∈ [2, 9]`, at `(Δr, N_θ)` and `(Δr/2, 2N_θ)`.
pub struct CompositionCheck {
    pub coarse: f64,
    pub fine: f64,
    pub ratio: f64,
}

/// Direct-composition check on `count` seeded smooth states
/// `e^{-(r-c)²/(2w²)} (1 + Σ a_k cos kθ + b_k sin kθ)`, `k ≤ 2`.
pub fn composition_check(g: &ScatteringMetricSpec, seed: u64, count: usize, dr: f64, nt: usize) -> Result<Vec<CompositionCheck>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let states: Vec<[f64; 6]> = (0..count)
        .map(|_| {
            let mut p = [0.0; 6];
            p[0] = rng.gen_range(4.5..6.5);
            p[1] = rng.gen_range(0.8..1.5);
            for v in &mut p[2..] {
                *v = rng.gen_range(-0.4..0.4);
            }
            p
        })
        .collect();
    let run = |dr: f64, nt: usize| -> Result<Vec<f64>> {
        let cs = g.cross_section(nt)?;
        let op = metric_to_operator(g, &cs)?;
        let grid = crate::grid::RadialGrid::with_spacing(12.0, dr, 2)?;
        let ops = crate::assembly::OperatorSet::assemble(&cs, &op.field, &grid, 4.0)?;
        states
            .iter()
            .map(|p| {
                let f = move |r: f64, t: f64| {
                    let d = (r - p[0]) / p[1];
                    (-0.5 * d * d).exp()
                        * (1.0 + p[2] * t.cos() + p[3] * t.sin() + p[4] * (2.0 * t).cos() + p[5] * (2.0 * t).sin())
                };
                let u: Vec<num_complex::Complex64> = (0..ops.dim())
                    .map(|a| num_complex::Complex64::new(f(ops.r_nodes[a / nt], cs.theta_nodes[a % nt]), 0.0))
                    .collect();
                let pu = ops.unscale(&crate::assembly::apply(&ops.p, &ops.scale(&u)));
                let mut err = 0.0f64;
                for (a, v) in pu.iter().enumerate() {
                    let (r, t) = (ops.r_nodes[a / nt], cs.theta_nodes[a % nt]);
                    if (2.0..=9.0).contains(&r) {
                        err = err.max((v.re - g.direct_operator(&f, r, t)).abs());
                    }
                }
                Ok(err)
            })
            .collect()
    };
    let (a, b) = (run(dr, nt)?, run(0.5 * dr, 2 * nt)?);
    Ok(a.into_iter().zip(b).map(|(coarse, fine)| CompositionCheck { coarse, fine, ratio: fine / coarse }).collect())
}

/// Sampled check that nothing depends on θ and the metric is diagonal.
fn is_radial(g: &ScatteringMetricSpec, cs: &CrossSection) -> bool {
    let t0 = cs.theta_nodes[0];
    (1..=200).map(|i| 0.1 * i as f64).chain(ladder(DEFAULT_LADDER_MAX)).all(|r| {
        let base = g.matrix(r, t0);
        let w0 = g.w(r, t0);
        base[1] == 0.0
            && cs.theta_nodes.iter().all(|&t| {
                (g.h0)(t) == (g.h0)(t0) && g.matrix(r, t) == base && (g.w(r, t) - w0).abs() <= 1e-12 * (1.0 + w0.abs())
            })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{apply, OperatorSet};
    use crate::grid::RadialGrid;
    use num_complex::Complex64 as C;

    #[test]
    fn flat_cone_is_a_fixed_point() {
        let g = ScatteringMetricSpec::flat_cone();
        let cs = g.cross_section(16).unwrap();
        let op = metric_to_operator(&g, &cs).unwrap();
        let cone = CoefficientField::exact_cone(2);
        assert!(op.field.radial_only);
        for r in (1..=100).map(|i| 0.2 * i as f64) {
            for &t in &cs.theta_nodes {
                assert!(((op.field.a1)(r, t) - (cone.a1)(r, t)).abs() <= 1e-12);
                assert!(((op.field.a2)(r, t) - (cone.a2)(r, t)).abs() <= 1e-12);
                assert!(((op.field.a3_factor)(r, t) - (cone.a3_factor)(r, t)).abs() <= 1e-12);
                assert!((op.field.v(r, t) - cone.v(r, t)).abs() <= 1e-12);
                assert!(((op.psi)(r, t) - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn angular_tail_against_closed_forms() {
        let g = ScatteringMetricSpec::angular_tail(1.0);
        let cs = g.cross_section(8).unwrap();
        let op = metric_to_operator(&g, &cs).unwrap();
        for r in [3.0, 5.0, 10.0, 40.0] {
            let q = 1.0 + 1.0 / r;
            assert!(((op.field.a3_factor)(r, 0.3) - 1.0 / q).abs() < 1e-14);
            let psi = q.powf(0.25);
            let d = 0.25 * q.powf(-0.75) / (r * r) - 3.0 / 16.0 * q.powf(-1.75) / r.powi(3);
            let w = -d / (r * psi);
            let got = (op.w)(r, 0.3);
            assert!((got - w).abs() < 1e-6 * w.abs(), "r={r}: {got} vs {w}");
        }
        assert!((op.rates.nu3_prime - 1.0).abs() < 0.1, "{:?}", op.rates);
        assert!((op.rates.w - 3.0).abs() < 0.3, "{:?}", op.rates);
        assert!(op.rates.scattering_class && op.rates.assumption_class);
    }

    #[test]
    fn rejects_singular_blocks_and_other_dimensions() {
        let mut g = ScatteringMetricSpec::flat_cone();
        g.m2 = Arc::new(|_, _| 2.0);
        let cs = g.cross_section(8).unwrap();
        assert!(matches!(metric_to_operator(&g, &cs), Err(Error::Geometry(_))));
        let h = ScatteringMetricSpec { n: 3, ..ScatteringMetricSpec::flat_cone() };
        assert!(metric_to_operator(&h, &cs).is_err());
    }

    #[test]
    fn assembled_operator_matches_direct_composition() {
        let mut g = ScatteringMetricSpec::angular_tail(1.0);
        g.m2 = Arc::new(|r, t| 0.3 * t.sin() / (1.0 + r));
        let state = |r: f64, t: f64| (-(r - 5.0f64).powi(2) / 2.0).exp() * (1.0 + 0.4 * t.cos() + 0.2 * (2.0 * t).sin());
        let run = |dr: f64, nt: usize| {
            let cs = g.cross_section(nt).unwrap();
            let op = metric_to_operator(&g, &cs).unwrap();
            let grid = RadialGrid::with_spacing(12.0, dr, 2).unwrap();
            let ops = OperatorSet::assemble(&cs, &op.field, &grid, 4.0).unwrap();
            let u: Vec<C> = (0..ops.dim())
                .map(|a| C::new(state(ops.r_nodes[a / nt], cs.theta_nodes[a % nt]), 0.0))
                .collect();
            let pu = ops.unscale(&apply(&ops.p, &ops.scale(&u)));
            let mut err = 0.0f64;
            for (a, v) in pu.iter().enumerate() {
                let (r, t) = (ops.r_nodes[a / nt], cs.theta_nodes[a % nt]);
                if (2.0..=9.0).contains(&r) {
                    err = err.max((v.re - g.direct_operator(&state, r, t)).abs());
                }
            }
            err
        };
        let (e1, e2) = (run(0.1, 16), run(0.05, 32));
        assert!(e2 / e1 <= 0.3, "{e1} -> {e2}");
    }

    #[test]
    fn composition_converges_on_random_states() {
        let g = ScatteringMetricSpec::angular_tail(1.0);
        let checks = composition_check(&g, 10, 10, 0.1, 16).unwrap();
        assert_eq!(checks.len(), 10);
        for c in &checks {
            assert!(c.ratio <= 0.3, "{} -> {}", c.coarse, c.fine);
        }
    }
}
