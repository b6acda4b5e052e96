//! Coefficient fields `a1, a2, a3, V` of the operator on the conic end, with
//! claimed decay rates and their numerical validation.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cross_section::CrossSection;
use crate::error::{Error, Result};

/// A real field on `(r, θ)`.
pub type Rule = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

fn constant(c: f64) -> Rule {
    Arc::new(move |_, _| c)
}

/// Rates used when a perturbation vanishes faster than any power.
pub const FAST_DECAY: f64 = 10.0;

/// Claimed decay rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Decay {
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub mu4: f64,
    pub nu: f64,
}

impl Default for Decay {
    fn default() -> Self {
        Self { mu1: FAST_DECAY, mu2: FAST_DECAY, mu3: FAST_DECAY, mu4: FAST_DECAY, nu: FAST_DECAY }
    }
}

impl Decay {
    /// The short-range exponent `min(μ1, μ2 + 1, μ3 + 2, μ4, ν)` governing `T`.
    pub fn short_range_exponent(&self) -> f64 {
        self.mu1.min(self.mu2 + 1.0).min(self.mu3 + 2.0).min(self.mu4).min(self.nu)
    }

    pub fn check_standing(&self) -> Result<()> {
        let checks = [
            ("mu1", self.mu1, 1.0),
            ("mu4", self.mu4, 1.0),
            ("nu", self.nu, 1.0),
            ("mu2", self.mu2, 0.0),
            ("mu3", self.mu3, 0.0),
        ];
        for (name, v, floor) in checks {
            if !(v > floor) {
                return Err(Error::Configuration(format!(
                    "decay rate {name} = {v} must exceed {floor}"
                )));
            }
        }
        Ok(())
    }
}

/// Named presets of the configuration vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum Preset {
    ExactCone,
    Well {
        #[serde(default = "default_depth")]
        depth: f64,
    },
    TailPerturbation(TailParams),
}

fn default_depth() -> f64 {
    5.0
}

/// Power-law perturbations `amp <r>^{-exponent}`; `a3_theta` adds a `cos θ`
/// dependence to the `a3` perturbation, which couples angular modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailParams {
    pub a1_amp: f64,
    pub a1_exponent: f64,
    pub a2_amp: f64,
    pub a2_exponent: f64,
    pub a3_amp: f64,
    pub a3_exponent: f64,
    pub a3_theta: f64,
    pub v_amp: f64,
    pub v_exponent: f64,
}

impl Default for TailParams {
    fn default() -> Self {
        Self {
            a1_amp: 0.0,
            a1_exponent: 2.0,
            a2_amp: 0.0,
            a2_exponent: 1.5,
            a3_amp: 0.5,
            a3_exponent: 1.5,
            a3_theta: 0.5,
            v_amp: 0.0,
            v_exponent: 2.0,
        }
    }
}

impl TailParams {
    pub fn actual_decay(&self) -> Decay {
        let pick = |amp: f64, e: f64| if amp == 0.0 { FAST_DECAY } else { e };
        Decay {
            mu1: pick(self.a1_amp, self.a1_exponent),
            mu2: pick(self.a2_amp, self.a2_exponent),
            mu3: pick(self.a3_amp, self.a3_exponent),
            mu4: pick(self.v_amp, self.v_exponent),
            nu: pick(self.v_amp, self.v_exponent),
        }
    }
}

fn japanese(r: f64) -> f64 {
    (1.0 + r * r).sqrt()
}

/// The coefficient data of `P`. `a3` is stored relative to `h`:
/// `a3(r, θ) = h(θ) a3_factor(r, θ)`.
#[derive(Clone)]
pub struct CoefficientField {
    pub n: usize,
    pub a1: Rule,
    pub a2: Rule,
    pub a3_factor: Rule,
    /// Compactly supported bounded part of the potential.
    pub v1: Rule,
    pub v1_support: f64,
    /// Smooth decaying part of the potential.
    pub v2: Rule,
    pub decay: Decay,
    pub label: String,
    /// True when a2 vanishes and nothing depends on θ.
    pub radial_only: bool,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("n", &self.n)
            .field("label", &self.label)
            .field("decay", &self.decay)
            .field("v1_support", &self.v1_support)
            .field("radial_only", &self.radial_only)
            .finish()
    }
}

impl CoefficientField {
    pub fn exact_cone(n: usize) -> Self {
        Self {
            n,
            a1: constant(1.0),
            a2: constant(0.0),
            a3_factor: constant(1.0),
            v1: constant(0.0),
            v1_support: 0.0,
            v2: constant(0.0),
            decay: Decay::default(),
            label: "exact_cone".into(),
            radial_only: true,
        }
    }

    pub fn from_preset(preset: &Preset, n: usize) -> Self {
        match *preset {
            Preset::ExactCone => Self::exact_cone(n),
            Preset::Well { depth } => Self {
                v2: Arc::new(move |r, _| -depth * (-r * r).exp()),
                label: "well".into(),
                ..Self::exact_cone(n)
            },
            Preset::TailPerturbation(p) => Self {
                a1: Arc::new(move |r, _| 1.0 + p.a1_amp * japanese(r).powf(-p.a1_exponent)),
                a2: Arc::new(move |r, t| p.a2_amp * japanese(r).powf(-p.a2_exponent) * t.sin()),
                a3_factor: Arc::new(move |r, t| {
                    1.0 + p.a3_amp * japanese(r).powf(-p.a3_exponent) * (1.0 + p.a3_theta * t.cos())
                }),
                v2: Arc::new(move |r, _| p.v_amp * japanese(r).powf(-p.v_exponent)),
                decay: p.actual_decay(),
                label: "tail_perturbation".into(),
                radial_only: p.a2_amp == 0.0 && p.a3_theta == 0.0,
                ..Self::exact_cone(n)
            },
        }
    }

    /// Build from a preset with a decay claim, validating the claim.
    pub fn make(preset: &Preset, decay: Option<Decay>, n: usize, cs: &CrossSection) -> Result<Self> {
        if n < 2 {
            return Err(Error::Configuration(format!("dimension n = {n} must be at least 2")));
        }
        let mut field = Self::from_preset(preset, n);
        if let Some(d) = decay {
            field.decay = d;
        }
        field.validate(cs, DEFAULT_LADDER_MAX)?;
        Ok(field)
    }

    pub fn v(&self, r: f64, t: f64) -> f64 {
        (self.v1)(r, t) + (self.v2)(r, t)
    }

    /// Runs every decay and ellipticity check; the first failure is returned.
    pub fn validate(&self, cs: &CrossSection, ladder_max: f64) -> Result<()> {
        self.decay.check_standing()?;
        for report in self.decay_reports(cs, ladder_max) {
            if !report.passes {
                return Err(Error::Assumption {
                    field: report.field,
                    claimed: report.claimed,
                    measured: -report.slope,
                    radius: report.radius,
                });
            }
        }
        self.check_ellipticity(cs)
    }

    /// `a1 > 0`, `a3 > 0` and `a1 a3/h - a2^2 > 0` on a sample grid.
    pub fn check_ellipticity(&self, cs: &CrossSection) -> Result<()> {
        let radii = (0..200).map(|i| 0.05 * (i as f64 + 1.0)).chain(ladder(DEFAULT_LADDER_MAX));
        for r in radii {
            for &t in &cs.theta_nodes {
                let a1 = (self.a1)(r, t);
                let a2 = (self.a2)(r, t);
                let a3 = (self.a3_factor)(r, t);
                if !(a1 > 0.0 && a3 > 0.0 && a1 * a3 - a2 * a2 > 0.0) {
                    return Err(Error::Assembly(format!(
                        "coefficient block not positive definite at r={r:.3}, θ={t:.3}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// One report per decaying quantity.
    pub fn decay_reports(&self, cs: &CrossSection, ladder_max: f64) -> Vec<DecayReport> {
        let items: [(&'static str, f64, Box<dyn Fn(f64, f64, usize) -> f64 + '_>); 4] = [
            ("a1", self.decay.mu1, Box::new(|r, t, _| ((self.a1)(r, t) - 1.0).abs())),
            ("a2", self.decay.mu2, Box::new(|r, t, _| (self.a2)(r, t).abs())),
            (
                "a3",
                self.decay.mu3,
                Box::new(|r, t, j| (cs.h_tensor[j] * ((self.a3_factor)(r, t) - 1.0)).abs()),
            ),
            ("V", self.decay.nu.min(self.decay.mu4), Box::new(|r, t, _| (self.v2)(r, t).abs())),
        ];
        items
            .iter()
            .map(|(field, claimed, f)| {
                let samples: Vec<(f64, f64)> = ladder(ladder_max)
                    .map(|r| {
                        let sup = cs
                            .theta_nodes
                            .iter()
                            .enumerate()
                            .map(|(j, &t)| f(r, t, j))
                            .fold(0.0, f64::max);
                        (r, sup)
                    })
                    .collect();
                DecayReport::from_samples(field, *claimed, &samples)
            })
            .collect()
    }
}

pub const DEFAULT_LADDER_MAX: f64 = 1024.0;

/// Geometric radius ladder `2, 4, 8, ..., <= rmax`.
pub fn ladder(rmax: f64) -> impl Iterator<Item = f64> {
    (1..).map(|k| 2f64.powi(k)).take_while(move |r| *r <= rmax * (1.0 + 1e-12))
}

/// Outcome of a log-log slope test for one coefficient.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub field: &'static str,
    pub claimed: f64,
    /// Fitted log-log slope; `-inf` when the samples vanish.
    pub slope: f64,
    /// `max r^claimed |value|` over the whole ladder and over its lower half.
    pub constant: f64,
    pub constant_half: f64,
    pub radius: f64,
    pub passes: bool,
}

impl DecayReport {
    /// Slope test: passes when the fitted slope is at most `-claimed + 0.1`.
    pub fn from_samples(field: &'static str, claimed: f64, samples: &[(f64, f64)]) -> Self {
        let pts: Vec<(f64, f64)> = samples
            .iter()
            .filter(|(_, v)| *v > 1e-300)
            .map(|(r, v)| (r.ln(), v.ln()))
            .collect();
        let radius = samples.last().map(|s| s.0).unwrap_or(0.0);
        let constant_over = |upto: usize| {
            samples[..upto]
                .iter()
                .map(|(r, v)| v * r.powf(claimed))
                .fold(0.0, f64::max)
        };
        let constant = constant_over(samples.len());
        let constant_half = constant_over(samples.len().saturating_sub(1));
        if pts.len() < 2 {
            return Self { field, claimed, slope: f64::NEG_INFINITY, constant, constant_half, radius, passes: true };
        }
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let slope = sxy / sxx;
        Self { field, claimed, slope, constant, constant_half, radius, passes: slope <= -claimed + 0.1 }
    }

    /// Fitted constant stable under doubling the largest radius (within 20%).
    pub fn constant_stable(&self) -> bool {
        self.constant <= 1.2 * self.constant_half + 1e-300
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn circle() -> CrossSection {
        CrossSection::circle(16).unwrap()
    }

    #[test]
    fn exact_cone_passes_vacuously() {
        let cs = circle();
        let f = CoefficientField::make(&Preset::ExactCone, None, 2, &cs).unwrap();
        for r in f.decay_reports(&cs, 1024.0) {
            assert!(r.passes && r.slope == f64::NEG_INFINITY);
        }
        assert_eq!((f.a1)(3.0, 0.2), 1.0);
        assert_eq!((f.a2)(3.0, 0.2), 0.0);
        assert_eq!(f.v(3.0, 0.2), 0.0);
    }

    #[test]
    fn gaussian_well_counts_as_fast_decay() {
        let cs = circle();
        let f = CoefficientField::make(&Preset::Well { depth: 5.0 }, None, 3, &cs).unwrap();
        assert_eq!(f.decay.nu, FAST_DECAY);
        assert!((f.v(0.0, 0.0) + 5.0).abs() < 1e-15);
    }

    #[test]
    fn slow_a3_tail_is_rejected_by_name() {
        let cs = circle();
        let p = TailParams { a3_exponent: 0.5, ..TailParams::default() };
        let claim = Decay { mu3: 1.0, ..p.actual_decay() };
        let err = CoefficientField::make(&Preset::TailPerturbation(p), Some(claim), 2, &cs).unwrap_err();
        match err {
            Error::Assumption { field, measured, .. } => {
                assert_eq!(field, "a3");
                assert!((measured - 0.5).abs() < 0.05, "{measured}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn standing_inequalities_enforced() {
        let d = Decay { mu1: 1.0, ..Decay::default() };
        assert!(d.check_standing().is_err());
        assert_eq!(Decay { mu3: 1.5, ..Decay::default() }.short_range_exponent(), 3.5);
    }

    proptest! {
        #[test]
        fn decay_validation_is_monotone(actual in 0.3f64..4.0, claim in 0.1f64..4.0, lower in 0.0f64..1.0) {
            let cs = circle();
            let p = TailParams { a3_exponent: actual, a3_theta: 0.0, ..TailParams::default() };
            let field = CoefficientField::from_preset(&Preset::TailPerturbation(p), 2);
            let reports = |mu3: f64| {
                let f = CoefficientField { decay: Decay { mu3, ..field.decay }, ..field.clone() };
                f.decay_reports(&cs, 1024.0).into_iter().find(|r| r.field == "a3").unwrap()
            };
            if reports(claim).passes {
                prop_assert!(reports(claim * lower).passes);
            }
        }
    }
}
