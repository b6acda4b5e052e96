//! Time-dependent scattering: Crank–Nicolson propagation, wave packets on
//! `M_f`, Cook's integral for the wave operators and a time-domain
//! scattering operator.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::blocktri::{BlockLu, SymBlockTri};
use crate::error::{Error, Result};
use crate::fit::loglog_slope;
use crate::fourier::split_half_lines;
use crate::modal::{norm, ModalSystem};

type C = Complex64;

/// Which Hilbert space a state lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    Manifold,
    Free,
}

/// Scaled modal values on `M` or `M_f`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub space: Space,
    pub values: Vec<C>,
}

impl StateVector {
    pub fn new(space: Space, values: Vec<C>) -> Result<Self> {
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Numerical("state has non-finite entries".into()));
        }
        Ok(Self { space, values })
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }
}

/// One Crank–Nicolson step `(1 + i dt H/2) ψ' = (1 - i dt H/2) ψ`.
pub struct Propagator {
    op: SymBlockTri,
    lu: BlockLu,
    pub dt: f64,
}

impl Propagator {
    pub fn new(op: &SymBlockTri, dt: f64) -> Result<Self> {
        if dt == 0.0 || !dt.is_finite() {
            return Err(Error::Configuration(format!("time step {dt} must be finite and nonzero")));
        }
        // 1 + i dt H / 2 = (i dt / 2)(H - z) with z = 2i / dt
        let lu = op.shifted(C::new(0.0, 2.0 / dt), None).factor()?;
        Ok(Self { op: op.clone(), lu, dt })
    }

    /// `(1 - i dt H/2) ψ`.
    pub fn explicit_half(&self, psi: &[C]) -> Vec<C> {
        let h = self.op.apply(psi);
        let f = C::new(0.0, -0.5 * self.dt);
        psi.iter().zip(h).map(|(p, q)| p + f * q).collect()
    }

    /// `(1 + i dt H/2)⁻¹ v`.
    pub fn implicit_solve(&self, v: &[C]) -> Result<Vec<C>> {
        let scale = C::new(0.0, 0.5 * self.dt).inv();
        Ok(self.lu.solve(v)?.into_iter().map(|x| x * scale).collect())
    }

    pub fn step(&self, psi: &[C]) -> Result<Vec<C>> {
        self.implicit_solve(&self.explicit_half(psi))
    }

    /// `‖Hψ‖ / ‖ψ‖`, the energy scale seen by `ψ`.
    pub fn energy_scale(&self, psi: &[C]) -> f64 {
        norm(&self.op.apply(psi)) / norm(psi).max(1e-300)
    }
}

/// Accuracy guard: `dt · ‖Hψ₀‖/‖ψ₀‖ <= 1`.
pub fn check_step(prop: &Propagator, psi0: &[C]) -> Result<()> {
    let e = prop.energy_scale(psi0) * prop.dt.abs();
    if e > 1.0 {
        return Err(Error::Configuration(format!(
            "dt · ‖Hψ‖/‖ψ‖ = {e:.2} exceeds 1; reduce dt"
        )));
    }
    Ok(())
}

/// Propagates `psi0` to `t_final` (negative values run backward) with steps
/// of size at most `dt`. `observe(t, ψ)` is called after every step.
pub fn propagate(
    op: &SymBlockTri,
    psi0: &StateVector,
    t_final: f64,
    dt: f64,
    mut observe: impl FnMut(f64, &[C]),
) -> Result<StateVector> {
    if dt <= 0.0 {
        return Err(Error::Configuration("dt must be positive".into()));
    }
    let steps = (t_final.abs() / dt).ceil() as usize;
    if steps == 0 {
        return Ok(psi0.clone());
    }
    let h = t_final / steps as f64;
    let prop = Propagator::new(op, h)?;
    check_step(&prop, &psi0.values)?;
    let mut psi = psi0.values.clone();
    for s in 1..=steps {
        psi = prop.step(&psi)?;
        observe(s as f64 * h, &psi);
    }
    StateVector::new(psi0.space, psi)
}

/// A Gaussian wave packet on `M_f` in a single cross-section mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavePacketSpec {
    /// `+1` targets `H_f^+`, `-1` targets `H_f^-`.
    pub sign: f64,
    pub k_center: f64,
    pub k_width: f64,
    pub r_center: f64,
    /// Position of the mode within the system's retained modes.
    pub mode: usize,
}

impl WavePacketSpec {
    pub fn delta(&self) -> f64 {
        self.k_center - 3.0 * self.k_width
    }
}

/// `φ(r) ∝ exp(-k_w²(r - r_c)²/2) e^{±i k_c (r - r_c)}`, whose transform is a
/// Gaussian of standard deviation `k_w/√2` around `±k_c`. The opposite
/// half-line is removed spectrally and the result normalized.
pub fn make_wavepacket(spec: &WavePacketSpec, sys: &ModalSystem) -> Result<StateVector> {
    if spec.sign.abs() != 1.0 {
        return Err(Error::Configuration("packet sign must be +1 or -1".into()));
    }
    if spec.k_width <= 0.0 || spec.delta() <= 0.0 {
        return Err(Error::Configuration(format!(
            "need k_center - 3 k_width > 0 (got {} - 3·{})",
            spec.k_center, spec.k_width
        )));
    }
    if spec.mode >= sys.modes {
        return Err(Error::Configuration(format!("packet mode {} not retained", spec.mode)));
    }
    let r_max = sys.free.r_max();
    if spec.r_center.abs() + 6.0 / spec.k_width >= r_max {
        return Err(Error::Configuration(format!(
            "packet |r_c| + 6/k_w = {} does not fit in R_max = {r_max}",
            spec.r_center.abs() + 6.0 / spec.k_width
        )));
    }
    let raw = sys.free_from_profile(spec.mode, |r| {
        let x = r - spec.r_center;
        C::from_polar((-0.5 * (spec.k_width * x).powi(2)).exp(), spec.sign * spec.k_center * x)
    });
    let (plus, minus) = split_half_lines(sys, &raw);
    let mut v = if spec.sign > 0.0 { plus } else { minus };
    let n = norm(&v);
    for x in v.iter_mut() {
        *x /= n;
    }
    StateVector::new(Space::Free, v)
}

/// Result of Cook's integral.
#[derive(Debug, Clone)]
pub struct CookResult {
    pub limit_state: StateVector,
    pub t_max: f64,
    /// `∫_{T}^{∞} ‖T e^{-isP_f} φ‖ ds`, extrapolated from the late integrand.
    pub tail_estimate: f64,
    /// Measured decay exponent of the integrand (`None` once it vanished).
    pub integrand_decay: Option<f64>,
    /// `|‖W φ‖ - ‖P^± φ‖|` for the half-line matching `direction`.
    pub isometry_defect: f64,
    /// `(s, ‖T e^{-isP_f} φ‖)` samples.
    pub integrand: Vec<(f64, f64)>,
    /// Mass reaching the outer walls, relative.
    pub wall_mass: f64,
}

/// Relative mass of a state in the outermost `width` of a grid.
fn edge_mass(values: &[C], modes: usize, r: &[f64], r_edge: f64, width: f64) -> f64 {
    let total: f64 = values.iter().map(|v| v.norm_sqr()).sum();
    let edge: f64 = r
        .iter()
        .enumerate()
        .filter(|(_, &x)| x.abs() > r_edge - width)
        .map(|(i, _)| (0..modes).map(|q| values[i * modes + q].norm_sqr()).sum::<f64>())
        .sum();
    if total > 0.0 {
        edge / total
    } else {
        0.0
    }
}

/// Wall-mass bound above which a run is rejected.
pub const WALL_MASS_LIMIT: f64 = 1e-6;

/// `W_± φ ≈ e^{itP}J e^{-itP_f}φ = Jφ + i ∫_0^t e^{isP} T e^{-isP_f} φ ds`
/// with `t = ±T_max`.
///
/// With `Y(t) = e^{-itP} W(t)` the integral becomes `Y' = -iPY + iTφ(t)`,
/// `Y(0) = Jφ`, integrated by Crank–Nicolson with the trapezoid rule for the
/// source; `W(t) = e^{itP}Y(t)` by a final propagation.
pub fn cook_wave_operator(
    sys: &ModalSystem,
    phi: &StateVector,
    direction: f64,
    t_max: f64,
    dt: f64,
) -> Result<CookResult> {
    if phi.space != Space::Free {
        return Err(Error::Configuration("Cook's integral needs a state on M_f".into()));
    }
    if t_max <= 0.0 || dt <= 0.0 {
        return Err(Error::Configuration("T_max and dt must be positive".into()));
    }
    let steps = (t_max / dt).ceil() as usize;
    let h = direction.signum() * t_max / steps as f64;
    let p_op = sys.p.clone();
    let pf_op = sys.pf_blocktri();
    let prop_p = Propagator::new(&p_op, h)?;
    let prop_f = Propagator::new(&pf_op, h)?;
    check_step(&prop_f, &phi.values)?;
    let mut phi_t = phi.values.clone();
    let mut y = sys.j_apply(&phi_t);
    let mut src = sys.t_apply(&phi_t);
    let mut integrand = vec![(0.0, norm(&src))];
    let ih2 = C::new(0.0, 0.5 * h);
    let mut wall = 0.0f64;
    for s in 1..=steps {
        let next_phi = prop_f.step(&phi_t)?;
        let next_src = sys.t_apply(&next_phi);
        let mut rhs = prop_p.explicit_half(&y);
        for ((r, a), b) in rhs.iter_mut().zip(&src).zip(&next_src) {
            *r += ih2 * (a + b);
        }
        y = prop_p.implicit_solve(&rhs)?;
        phi_t = next_phi;
        src = next_src;
        integrand.push(((s as f64 * h).abs(), norm(&src)));
        if s % 50 == 0 || s == steps {
            wall = wall.max(edge_mass(&phi_t, sys.modes, &sys.free.r_nodes, sys.free.r_max(), 2.0));
            wall = wall.max(edge_mass(&y, sys.modes, &sys.grid.r_nodes, sys.grid.r_max, 2.0));
        }
    }
    if wall > WALL_MASS_LIMIT {
        return Err(Error::Horizon(format!(
            "relative mass {wall:.1e} reached the box wall; enlarge R_max or shorten T_max"
        )));
    }
    // W = e^{itP} Y(t): propagate back over the same horizon
    let back = Propagator::new(&p_op, -h)?;
    for _ in 0..steps {
        y = back.step(&y)?;
    }
    let (tail_estimate, integrand_decay) = extrapolate_tail(&integrand, t_max, coupling_decay(sys));
    let (plus, minus) = split_half_lines(sys, &phi.values);
    let matched = if direction > 0.0 { norm(&plus) } else { norm(&minus) };
    let isometry_defect = (norm(&y) - matched).abs();
    Ok(CookResult {
        limit_state: StateVector::new(Space::Manifold, y)?,
        t_max,
        tail_estimate,
        integrand_decay,
        isometry_defect,
        integrand,
        wall_mass: wall,
    })
}

/// Decay exponent of the coefficients of `T`: the smallest log-log slope of
/// `|T 1|` on `[R/4, R/2]` over the modes where it is visible.
pub fn coupling_decay(sys: &ModalSystem) -> f64 {
    let ones = vec![C::new(1.0, 0.0); sys.free_dim()];
    let t1 = sys.t_apply(&ones);
    let r_max = sys.grid.r_max;
    let mut worst = f64::INFINITY;
    for q in 0..sys.modes {
        let samples: Vec<(f64, f64)> = (0..sys.grid.len())
            .filter(|&i| sys.r(i) >= 0.25 * r_max && sys.r(i) <= 0.5 * r_max)
            .map(|i| (sys.r(i), t1[i * sys.modes + q].norm()))
            .collect();
        if samples.len() < 4 || samples.iter().any(|s| s.1 < 1e-12) {
            continue;
        }
        worst = worst.min(-loglog_slope(&samples));
    }
    worst
}

/// Fits `C s^{-p}` to the last half of the integrand and returns
/// `∫_T^∞ C s^{-p} ds` and `p`. The fitted `p` is capped at `p_cap`: while
/// the packet is still leaving the fit window is steeper than the tail, which
/// cannot decay faster than the coefficients of `T`. An integrand already
/// below `1e-12` of its peak has no tail; `p <= 1` gives an infinite tail.
pub fn extrapolate_tail(samples: &[(f64, f64)], t_max: f64, p_cap: f64) -> (f64, Option<f64>) {
    let peak = samples.iter().map(|s| s.1).fold(0.0, f64::max);
    let late: Vec<(f64, f64)> = samples.iter().copied().filter(|s| s.0 >= 0.5 * t_max && s.0 > 0.0).collect();
    let last = late.last().map_or(0.0, |s| s.1);
    if peak == 0.0 || last <= 1e-12 * peak || late.len() < 4 {
        return (0.0, None);
    }
    let p = (-loglog_slope(&late)).min(p_cap);
    if p <= 1.0 {
        return (f64::INFINITY, Some(p));
    }
    // anchor the power law at the last sample
    let (t, v) = *late.last().unwrap();
    (v * t / (p - 1.0), Some(p))
}

/// Time-domain scattering operator applied to a packet in `H_f^-`.
#[derive(Debug, Clone)]
pub struct TimeScattering {
    /// `S φ` projected onto `H_f^+`.
    pub output: StateVector,
    /// Mass fraction removed by the projection.
    pub discarded_fraction: f64,
    pub cook: CookResult,
}

/// `S φ = W₊* W₋ φ ≈ e^{iT₂P_f} J* e^{-iT₂P} W₋ φ`, with `W₋φ` from Cook's
/// integral over `horizons.0` and the exit time `horizons.1`.
pub fn scattering_operator_time(
    sys: &ModalSystem,
    phi_minus: &StateVector,
    horizons: (f64, f64),
    dt: f64,
    discard_limit: f64,
) -> Result<TimeScattering> {
    let cook = cook_wave_operator(sys, phi_minus, -1.0, horizons.0, dt)?;
    let out = propagate(&sys.p, &cook.limit_state, horizons.1, dt, |_, _| {})?;
    let wall = edge_mass(&out.values, sys.modes, &sys.grid.r_nodes, sys.grid.r_max, 2.0);
    if wall > WALL_MASS_LIMIT {
        return Err(Error::Horizon(format!("relative mass {wall:.1e} reached the outer wall")));
    }
    let free = StateVector::new(Space::Free, sys.j_adjoint(&out.values))?;
    let back = propagate(&sys.pf_blocktri(), &free, -horizons.1, dt, |_, _| {})?;
    let (plus, minus) = split_half_lines(sys, &back.values);
    let total = norm(&back.values).powi(2);
    let discarded = if total > 0.0 { norm(&minus).powi(2) / total } else { 0.0 };
    if discarded > discard_limit {
        return Err(Error::Horizon(format!(
            "projection onto H_f^+ discards {:.1}% of the mass",
            100.0 * discarded
        )));
    }
    Ok(TimeScattering { output: StateVector::new(Space::Free, plus)?, discarded_fraction: discarded, cook })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::CoefficientField;
    use crate::cross_section::CrossSection;
    use crate::grid::RadialGrid;
    use crate::modal::dot;
    use crate::problem::Problem;

    fn small_system(r_max: f64) -> ModalSystem {
        let cs = CrossSection::circle(16).unwrap();
        let grid = RadialGrid::with_spacing(r_max, 0.05, 2).unwrap();
        Problem::new(cs, CoefficientField::exact_cone(2), grid, 2.0)
            .system_with_modes(&[0], r_max)
            .unwrap()
    }

    fn spec(sign: f64, r_center: f64) -> WavePacketSpec {
        WavePacketSpec { sign, k_center: 2.0, k_width: 0.25, r_center, mode: 0 }
    }

    #[test]
    fn packet_energy_and_sign() {
        let sys = small_system(60.0);
        let s = spec(1.0, -10.0);
        let phi = make_wavepacket(&s, &sys).unwrap();
        assert!((phi.norm() - 1.0).abs() < 1e-12);
        let e = dot(&phi.values, &sys.pf_blocktri().apply(&phi.values)).re;
        let expected = 0.5 * (s.k_center.powi(2) + 0.5 * s.k_width.powi(2));
        assert!((e - expected).abs() < 0.05 * expected, "{e} vs {expected}");
        let (_, minus) = split_half_lines(&sys, &phi.values);
        assert!(norm(&minus).powi(2) < 1e-12);
    }

    #[test]
    fn packet_rejects_bad_specs() {
        let sys = small_system(30.0);
        assert!(make_wavepacket(&spec(1.0, 15.0), &sys).is_err());
        let wide = WavePacketSpec { k_width: 1.0, ..spec(1.0, 0.0) };
        assert!(make_wavepacket(&spec(1.0, 10.0), &small_system(30.0)).is_err());
        assert!(make_wavepacket(&spec(1.0, 4.0), &small_system(30.0)).is_ok());
        assert!(make_wavepacket(&wide, &sys).is_err());
        assert!(make_wavepacket(&spec(0.5, 0.0), &sys).is_err());
    }

    #[test]
    fn crank_nicolson_preserves_norm() {
        let sys = small_system(40.0);
        let v = sys.from_profile(0, |r| C::from_polar((-(r - 10.0).powi(2) / 4.0).exp(), 1.5 * r));
        let n0 = norm(&v);
        let psi = StateVector::new(Space::Manifold, v).unwrap();
        let out = propagate(&sys.p, &psi, 5.0, 0.01, |_, _| {}).unwrap();
        assert!((out.norm() - n0).abs() < 1e-10 * n0);
        let back = propagate(&sys.p, &out, -5.0, 0.01, |_, _| {}).unwrap();
        let err = norm(&crate::modal::sub(&back.values, &psi.values));
        assert!(err < 1e-9 * n0, "{err}");
    }

    #[test]
    fn step_guard_rejects_coarse_steps() {
        let sys = small_system(40.0);
        let phi = make_wavepacket(&spec(1.0, 0.0), &sys).unwrap();
        assert!(propagate(&sys.pf_blocktri(), &phi, 10.0, 1.0, |_, _| {}).is_err());
    }

    #[test]
    fn tail_of_inverse_square() {
        let samples: Vec<(f64, f64)> = (1..=200).map(|k| {
            let s = 0.1 * k as f64;
            (s, 3.0 / (s * s))
        }).collect();
        let (tail, p) = extrapolate_tail(&samples, 20.0, f64::INFINITY);
        assert!((p.unwrap() - 2.0).abs() < 1e-9);
        assert!((tail - 3.0 / 20.0).abs() < 1e-9);
        let flat: Vec<(f64, f64)> = samples.iter().map(|&(s, _)| (s, 1.0 / s)).collect();
        assert!(extrapolate_tail(&flat, 20.0, f64::INFINITY).0.is_infinite());
        let steep: Vec<(f64, f64)> = samples.iter().map(|&(s, _)| (s, s.powi(-4))).collect();
        let (capped, p) = extrapolate_tail(&steep, 20.0, 2.0);
        assert_eq!(p, Some(2.0));
        assert!((capped - 20.0f64.powi(-3)).abs() < 1e-15);
    }

    #[test]
    fn cook_dichotomy_on_small_box() {
        let sys = small_system(80.0);
        let matched = make_wavepacket(&spec(1.0, -10.0), &sys).unwrap();
        let w = cook_wave_operator(&sys, &matched, 1.0, 20.0, 0.02).unwrap();
        assert!(w.isometry_defect < 1e-8);
        let wrong = make_wavepacket(&spec(-1.0, 10.0), &sys).unwrap();
        let z = cook_wave_operator(&sys, &wrong, 1.0, 20.0, 0.02).unwrap();
        assert!(z.limit_state.norm() < 1e-2, "{}", z.limit_state.norm());
        assert!(cook_wave_operator(&sys, &z.limit_state, 1.0, 1.0, 0.02).is_err());
    }

    #[test]
    fn cone_coupling_is_inverse_square() {
        let p = coupling_decay(&small_system(80.0));
        assert!((p - 2.0).abs() < 0.05, "{p}");
    }
}
