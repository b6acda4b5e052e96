//! Stationary scattering theory: the scattering matrix from the resolvent
//! formula `S(λ) = -2πi F₊ (J*T - T*(P-λ-i0)⁻¹T) F₋*`, generalized
//! eigenfunctions, the absolute scattering matrix and stationary wave
//! operators.

use std::f64::consts::PI;

use gauss_quad::GaussLegendre;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{condition, loglog_slope, lstsq, spectral_norm};
use crate::fourier::{f0_adjoint, f0_apply, wavenumber, Dispersion};
use crate::hankel::riccati_hankel;
use crate::modal::{norm, sub, ModalSystem};
use crate::problem::Problem;
use crate::resolvent::{LadderSolver, ResolventConfig};

type C = Complex64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StationaryConfig {
    pub resolvent: ResolventConfig,
    pub dispersion: Dispersion,
    /// Window `[R₁, R₂]` of the eigenfunction fit; default `[R_phys/2, R_phys]`.
    pub fit_window: Option<(f64, f64)>,
    /// Number of inverse powers `r^{-p}`, `p = 0..fit_powers`, per direction.
    pub fit_powers: usize,
    /// Relative bound on `‖(P - λ)Ψ‖` inside the physical region.
    pub eigen_tolerance: f64,
    /// When set, `‖S*S - I‖` above this bound is an error.
    pub unitarity_bound: Option<f64>,
}

impl Default for StationaryConfig {
    fn default() -> Self {
        Self {
            resolvent: ResolventConfig::default(),
            dispersion: Dispersion::Lattice,
            fit_window: None,
            fit_powers: 5,
            eigen_tolerance: 1e-3,
            unitarity_bound: None,
        }
    }
}

/// Everything computed at one energy.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralSlice {
    pub lambda: f64,
    /// `√(2λ)`.
    pub k: f64,
    /// Wavenumber used by the discrete spectral representation.
    pub k_grid: f64,
    pub mode_count: usize,
    /// Scattering matrix (rows: outgoing mode, columns: incoming mode).
    #[serde(serialize_with = "ser_matrix")]
    pub s_matrix: DMatrix<C>,
    /// `T(λ) = S(λ) / (-2πi)`.
    #[serde(serialize_with = "ser_matrix")]
    pub t_matrix: DMatrix<C>,
    /// The resolvent formula evaluated on the truncated domain, before the
    /// exterior completion.
    #[serde(serialize_with = "ser_matrix")]
    pub s_truncated: DMatrix<C>,
    /// Largest entry of `S - S_truncated`.
    pub tail_correction: f64,
    /// Incoming-amplitude matrix found by the exterior matching (≈ I).
    #[serde(serialize_with = "ser_matrix")]
    pub incoming: DMatrix<C>,
    /// `‖S*S - I‖₂`.
    pub unitarity_defect: f64,
    /// Largest relative ε-extrapolation residual among the columns.
    pub eps_residual: f64,
    /// Largest relative `‖(P - λ)Ψ‖` inside the physical region.
    pub eigen_residual: f64,
    pub r_phys: f64,
    pub r_max: f64,
}

fn ser_matrix<S: serde::Serializer>(m: &DMatrix<C>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for i in 0..m.nrows() {
        let row: Vec<[f64; 2]> = (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

/// Slice plus the generalized eigenfunctions `Ψ_m` (scaled modal vectors on
/// the system grid) for each incoming unit mode.
pub struct StationarySolution {
    pub slice: SpectralSlice,
    pub sys: ModalSystem,
    pub psi: Vec<Vec<C>>,
    /// `(dλ/dk)^{-1/2}` of the spectral representation.
    pub density: f64,
}

fn truncate(sys: &ModalSystem, x: &mut [C], r_phys: f64) {
    let m = sys.modes;
    for i in 0..sys.grid.len() {
        if sys.r(i) > r_phys {
            for q in 0..m {
                x[i * m + q] = C::new(0.0, 0.0);
            }
        }
    }
}

fn unit(m: usize, len: usize) -> Vec<C> {
    let mut v = vec![C::new(0.0, 0.0); len];
    v[m] = C::new(1.0, 0.0);
    v
}

/// Radial tail strength of mode `q` at ring `i`: `ν² = 2 U r² + 1/4` with `U`
/// the row sum of the scaled operator.
fn local_order(sys: &ModalSystem, i: usize, q: usize) -> f64 {
    let mut u = sys.p.diag[i][(q, q)];
    if i + 1 < sys.grid.len() {
        u += sys.p.upper[i][(q, q)];
    }
    if i > 0 {
        u += sys.p.upper[i - 1][(q, q)];
    }
    let r = sys.r(i);
    (2.0 * u * r * r + 0.25).max(0.0).sqrt()
}

/// Operator norm `‖S*S - I‖₂`.
pub fn unitarity_defect(s: &DMatrix<C>) -> f64 {
    let n = s.nrows();
    spectral_norm(&(s.adjoint() * s - DMatrix::identity(n, n)))
}

/// The scattering matrix on the lowest `mode_cut` modes.
///
/// Each column is computed from the resolvent formula on the domain
/// truncated at `R_phys`. The truncated value converges only like `1/R_phys`
/// because the centrifugal tail of `T` decays like `r^{-2}`; it is completed
/// by matching `Ψ = (J - (P-λ-i0)⁻¹T)F₋*ψ` just inside `R_phys` to the
/// exterior Riccati–Hankel solutions, `S = B A⁻¹`.
pub fn smatrix_stationary(
    problem: &Problem,
    lambda: f64,
    cfg: &StationaryConfig,
    mode_cut: usize,
) -> Result<StationarySolution> {
    let k = (2.0 * lambda).sqrt();
    let dr = problem.grid.dr;
    let (k_grid, density) = wavenumber(lambda, dr, cfg.dispersion)?;
    let rc = &cfg.resolvent;
    let absorber = rc.absorber_at(k);
    let r_max = problem.grid.r_max.max(absorber.required_r_max(rc.r_phys, k));
    let sys = problem.system(mode_cut, r_max)?;
    rc.validate(sys.grid.r_max, k)?;
    let m = sys.modes;
    let solver = LadderSolver::new(&sys, lambda, 1.0, rc, k)?;

    let mut s_trunc = DMatrix::zeros(m, m);
    let mut psi = Vec::with_capacity(m);
    let mut eps_residual = 0.0f64;
    let mut eigen_residual = 0.0f64;
    for col in 0..m {
        let phi = f0_adjoint(&sys, lambda, &unit(col, m), -1.0, cfg.dispersion)?;
        let mut g = sys.t_apply(&phi);
        truncate(&sys, &mut g, rc.r_phys);
        let sol = solver.solve(&g)?;
        eps_residual = eps_residual.max(sol.residual);
        let big_phi = sub(&sys.j_adjoint(&g), &sys.t_adjoint(&sol.value));
        let s_col = f0_apply(&sys, lambda, &big_phi, 1.0, cfg.dispersion)?;
        for q in 0..m {
            s_trunc[(q, col)] = s_col[q] * C::new(0.0, -2.0 * PI);
        }
        let p = sub(&sys.j_apply(&phi), &sol.value);
        eigen_residual = eigen_residual.max(eigen_defect(&sys, &p, lambda, rc.r_phys));
        psi.push(p);
    }
    if eigen_residual > cfg.eigen_tolerance {
        return Err(Error::Solve(format!(
            "generalized eigenfunction residual {eigen_residual:.2e} exceeds {:.1e}",
            cfg.eigen_tolerance
        )));
    }

    // exterior matching over two wavelengths just inside R_phys
    let amp = density * (2.0 * PI).powf(-0.5) * dr.sqrt();
    let lo = sys.grid.index_at(rc.r_phys - 4.0 * PI / k_grid).max(1);
    let hi = sys.grid.index_at(rc.r_phys);
    if hi <= lo + 8 {
        return Err(Error::Fit("matching window holds too few nodes".into()));
    }
    let mut a_mat = DMatrix::zeros(m, m);
    let mut b_mat = DMatrix::zeros(m, m);
    for q in 0..m {
        let nu = local_order(&sys, (lo + hi) / 2, q);
        let basis = DMatrix::from_fn(hi - lo + 1, 2, |row, c| {
            let r = sys.r(lo + row);
            riccati_hankel(nu, k_grid, r, if c == 0 { -1.0 } else { 1.0 }).0
        });
        for col in 0..m {
            let rhs = DVector::from_fn(hi - lo + 1, |row, _| psi[col][(lo + row) * m + q] / amp);
            let x = lstsq(&basis, &rhs)?;
            a_mat[(q, col)] = x[0];
            b_mat[(q, col)] = x[1];
        }
    }
    let a_inv = a_mat
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Fit("incoming amplitude matrix is singular".into()))?;
    let s = &b_mat * a_inv;
    let tail_correction = (&s - &s_trunc).iter().map(|v| v.norm()).fold(0.0, f64::max);
    let defect = unitarity_defect(&s);
    if let Some(bound) = cfg.unitarity_bound {
        if defect > bound {
            return Err(Error::Accuracy(format!(
                "unitarity defect {defect:.2e} at λ = {lambda} exceeds {bound:.1e}; \\
                 try a finer grid, a larger R_phys or a wider absorber"
            )));
        }
    }
    let t_matrix = &s / C::new(0.0, -2.0 * PI);
    let slice = SpectralSlice {
        lambda,
        k,
        k_grid,
        mode_count: m,
        s_matrix: s,
        t_matrix,
        s_truncated: s_trunc,
        tail_correction,
        incoming: a_mat,
        unitarity_defect: defect,
        eps_residual,
        eigen_residual,
        r_phys: rc.r_phys,
        r_max: sys.grid.r_max,
    };
    Ok(StationarySolution { slice, sys, psi, density })
}

/// Relative residual `‖(P - λ)Ψ‖ / (|λ| ‖Ψ‖)` over rings with `r < R_phys`.
fn eigen_defect(sys: &ModalSystem, psi: &[C], lambda: f64, r_phys: f64) -> f64 {
    let m = sys.modes;
    let hi = sys.grid.index_at(r_phys).saturating_sub(1);
    let ppsi = sys.p_apply(psi);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..hi {
        for q in 0..m {
            num += (ppsi[i * m + q] - psi[i * m + q] * lambda).norm_sqr();
            den += psi[i * m + q].norm_sqr();
        }
    }
    (num / den).sqrt() / lambda.abs()
}

/// Fit of a generalized eigenfunction to incoming and outgoing waves.
#[derive(Debug, Clone, Serialize)]
pub struct EigenfunctionFit {
    pub lambda: f64,
    pub fit_window: (f64, f64),
    /// Per-mode amplitudes of `r^{-(n-1)/2} e^{∓ikr}`, multiplied by
    /// `(dλ/dk)^{1/2} √(2π)` (which is `√(2πk)` for the continuum relation).
    #[serde(serialize_with = "ser_vector")]
    pub incoming_amp: Vec<C>,
    #[serde(serialize_with = "ser_vector")]
    pub outgoing_amp: Vec<C>,
    /// Measured decay exponent of the remainder beyond the leading waves.
    pub delta_fit: f64,
    /// True when the remainder is at round-off level and `delta_fit` is a cap.
    pub remainder_at_noise: bool,
    /// Relative least-squares residual.
    pub residual: f64,
    /// Relative `‖(P - λ)Ψ‖` inside the physical region.
    pub eigen_residual: f64,
    /// Conjugated profiles `r^{(n-1)/2} Ψ_m(r)` on the fit window.
    #[serde(skip)]
    pub profile: Vec<(f64, Vec<C>)>,
}

fn ser_vector<S: serde::Serializer>(v: &[C], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for z in v {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

/// Amplitudes of one conjugated profile.
#[derive(Debug, Clone, Copy)]
pub struct ProfileFit {
    pub incoming: C,
    pub outgoing: C,
    pub residual: f64,
}

/// Least-squares fit of `v(r) ≈ Σ_p r^{-p}(a_p e^{-ikr} + b_p e^{ikr})`.
/// Returns the fit and the remainder `v - a_0 e^{-ikr} - b_0 e^{ikr}`.
pub fn fit_profile(r: &[f64], v: &[C], k: f64, powers: usize) -> Result<(ProfileFit, Vec<C>)> {
    if powers == 0 || r.len() < 2 * powers + 2 {
        return Err(Error::Fit(format!("{} samples cannot carry {powers} powers per direction", r.len())));
    }
    let cols = 2 * powers;
    // scale the powers by r_min to keep the columns comparable
    let r0 = r[0];
    let a = DMatrix::from_fn(r.len(), cols, |i, c| {
        let p = (c / 2) as i32;
        let sign = if c % 2 == 0 { -1.0 } else { 1.0 };
        C::from_polar((r0 / r[i]).powi(p), sign * k * r[i])
    });
    let b = DVector::from_column_slice(v);
    let x = lstsq(&a, &b)?;
    let fitted = &a * &x;
    let bn = b.norm();
    let residual = if bn > 0.0 { (&fitted - &b).norm() / bn } else { 0.0 };
    let remainder = r
        .iter()
        .zip(v)
        .map(|(&ri, &vi)| vi - x[0] * C::from_polar(1.0, -k * ri) - x[1] * C::from_polar(1.0, k * ri))
        .collect();
    Ok((ProfileFit { incoming: x[0], outgoing: x[1], residual }, remainder))
}

/// Decay exponent of a remainder: minus the log-log slope of its RMS over six
/// sub-windows. Returns `None` when the remainder is below `floor`.
pub fn remainder_decay(r: &[f64], rem: &[Vec<C>], floor: f64) -> Option<f64> {
    let chunks = 6;
    let len = r.len() / chunks;
    let mut samples = Vec::new();
    for c in 0..chunks {
        let range = c * len..(c + 1) * len;
        let mut s = 0.0;
        for i in range.clone() {
            s += rem.iter().map(|v| v[i].norm_sqr()).sum::<f64>();
        }
        let rms = (s / len as f64).sqrt();
        samples.push((r[range.start + len / 2], rms));
    }
    if samples.iter().any(|s| s.1 <= floor) {
        return None;
    }
    Some(-loglog_slope(&samples))
}

/// Cap reported for `delta_fit` when the remainder is at round-off level.
pub const DELTA_CAP: f64 = 10.0;

/// `Ψ = Σ_m φ_b[m] Ψ_m` fitted on the window.
pub fn generalized_eigenfunction(
    sol: &StationarySolution,
    phi_b: &[C],
    cfg: &StationaryConfig,
) -> Result<EigenfunctionFit> {
    let sys = &sol.sys;
    let m = sys.modes;
    if phi_b.len() != m {
        return Err(Error::Configuration(format!("mode vector has {} entries, expected {m}", phi_b.len())));
    }
    let r_phys = sol.slice.r_phys;
    let (r1, r2) = cfg.fit_window.unwrap_or((0.5 * r_phys, r_phys));
    if r1 < 2.0 || r2 > r_phys || r2 <= r1 {
        return Err(Error::Configuration(format!("fit window [{r1}, {r2}] must satisfy 2 <= R1 < R2 <= R_phys")));
    }
    let mut psi = vec![C::new(0.0, 0.0); sys.dim()];
    for (col, &c) in phi_b.iter().enumerate() {
        if c != C::new(0.0, 0.0) {
            crate::modal::axpy(c, &sol.psi[col], &mut psi);
        }
    }
    let eigen_residual = eigen_defect(sys, &psi, sol.slice.lambda, r_phys);
    if eigen_residual > cfg.eigen_tolerance {
        return Err(Error::Solve(format!("eigenfunction residual {eigen_residual:.2e}")));
    }
    let lo = sys.grid.index_at(r1);
    let hi = sys.grid.index_at(r2).min(sys.grid.index_at(r_phys) - 1);
    let r: Vec<f64> = (lo..=hi).map(|i| sys.r(i)).collect();
    let sq = sys.grid.dr.sqrt();
    let renorm = (2.0 * PI).sqrt() / sol.density;
    let mut incoming = Vec::with_capacity(m);
    let mut outgoing = Vec::with_capacity(m);
    let mut rems = Vec::with_capacity(m);
    let mut res_num = 0.0;
    let mut res_den = 0.0;
    let mut scale = 0.0f64;
    for q in 0..m {
        let v: Vec<C> = (lo..=hi).map(|i| psi[i * m + q] / sq).collect();
        let vn: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let (f, rem) = fit_profile(&r, &v, sol.slice.k_grid, cfg.fit_powers)?;
        res_num += f.residual * f.residual * vn;
        res_den += vn;
        scale = scale.max(f.incoming.norm()).max(f.outgoing.norm());
        incoming.push(f.incoming * renorm);
        outgoing.push(f.outgoing * renorm);
        rems.push(rem);
    }
    let residual = if res_den > 0.0 { (res_num / res_den).sqrt() } else { 0.0 };
    let (delta_fit, at_noise) = match remainder_decay(&r, &rems, 1e-9 * scale) {
        Some(d) => (d, false),
        None => (DELTA_CAP, true),
    };
    if delta_fit <= 0.0 {
        return Err(Error::Fit(format!("remainder does not decay (δ = {delta_fit:.3})")));
    }
    let profile = (lo..=hi)
        .map(|i| (sys.r(i), (0..m).map(|q| psi[i * m + q] / sq).collect()))
        .collect();
    Ok(EigenfunctionFit {
        lambda: sol.slice.lambda,
        fit_window: (r1, r2),
        incoming_amp: incoming,
        outgoing_amp: outgoing,
        delta_fit,
        remainder_at_noise: at_noise,
        residual,
        eigen_residual,
        profile,
    })
}

/// `S_abs = Out · In⁻¹` from one fit per incoming unit mode.
pub fn extract_absolute_smatrix(fits: &[EigenfunctionFit]) -> Result<DMatrix<C>> {
    let m = fits.len();
    if m == 0 {
        return Err(Error::Fit("no eigenfunction fits".into()));
    }
    let lambda = fits[0].lambda;
    let window = fits[0].fit_window;
    if fits.iter().any(|f| f.lambda != lambda || f.fit_window != window || f.incoming_amp.len() != m) {
        return Err(Error::Fit("fits must share λ, the window and the mode count".into()));
    }
    let inc = DMatrix::from_fn(m, m, |q, c| fits[c].incoming_amp[q]);
    let out = DMatrix::from_fn(m, m, |q, c| fits[c].outgoing_amp[q]);
    let cond = condition(&inc);
    if !(cond <= 10.0) {
        return Err(Error::Fit(format!("incoming amplitude matrix has condition number {cond:.2}")));
    }
    let inv = inc.try_inverse().ok_or_else(|| Error::Fit("incoming amplitude matrix is singular".into()))?;
    Ok(out * inv)
}

/// Fits for every unit incoming mode and the absolute scattering matrix.
pub fn absolute_smatrix(
    sol: &StationarySolution,
    cfg: &StationaryConfig,
) -> Result<(DMatrix<C>, Vec<EigenfunctionFit>)> {
    let m = sol.sys.modes;
    let fits = (0..m)
        .map(|c| generalized_eigenfunction(sol, &unit(c, m), cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok((extract_absolute_smatrix(&fits)?, fits))
}

/// Result of the stationary wave-operator quadrature.
#[derive(Debug, Clone)]
pub struct StationaryWaveop {
    pub sys: ModalSystem,
    /// `W_± E(I) φ` on `M` (scaled modal vector), zero beyond `R_phys`.
    pub state: Vec<C>,
    /// The input packet on the free grid of `sys`.
    pub phi: Vec<C>,
    /// Relative change when the node count is halved.
    pub quadrature_change: f64,
    pub nodes: usize,
}

/// `W_± E_{P_f}(I) φ = ∫_I (J - (P-λ±i0)⁻¹T) F_{0,±}(λ)* F_{0,±}(λ) φ dλ`,
/// by Gauss–Legendre quadrature in λ over `interval`.
///
/// `packet` builds `φ` on the free grid of the system used. The result is
/// kept on `r <= R_phys` only: beyond it the resolvent is damped and the
/// λ-quadrature aliases the plane waves.
#[allow(clippy::too_many_arguments)]
pub fn waveop_stationary(
    problem: &Problem,
    modes: &[usize],
    interval: (f64, f64),
    packet: &dyn Fn(&ModalSystem) -> Result<Vec<C>>,
    sign: f64,
    cfg: &StationaryConfig,
    nodes: usize,
    tolerance: f64,
) -> Result<StationaryWaveop> {
    let (a, b) = interval;
    if !(a > 0.0 && b > a) {
        return Err(Error::Configuration(format!("energy interval [{a}, {b}] must lie in (0, ∞)")));
    }
    if nodes < 4 {
        return Err(Error::Configuration("need at least 4 quadrature nodes".into()));
    }
    let rc = &cfg.resolvent;
    let k_low = (2.0 * a).sqrt();
    let r_max = problem.grid.r_max.max(rc.absorber_at(k_low).required_r_max(rc.r_phys, k_low));
    let sys = problem.system_with_modes(modes, r_max)?;
    let phi = packet(&sys)?;
    let fine = waveop_quadrature(&sys, &phi, interval, sign, cfg, nodes)?;
    let coarse = waveop_quadrature(&sys, &phi, interval, sign, cfg, nodes / 2)?;
    let scale = norm(&phi).max(1e-300);
    let change = norm(&sub(&fine, &coarse)) / scale;
    if change > tolerance {
        return Err(Error::Quadrature(format!(
            "halving {nodes} nodes changes the result by {change:.2e} (tolerance {tolerance:.1e})"
        )));
    }
    Ok(StationaryWaveop { sys, state: fine, phi, quadrature_change: change, nodes })
}

fn waveop_quadrature(
    sys: &ModalSystem,
    phi: &[C],
    (a, b): (f64, f64),
    sign: f64,
    cfg: &StationaryConfig,
    nodes: usize,
) -> Result<Vec<C>> {
    let count = std::num::NonZeroUsize::new(nodes).ok_or_else(|| Error::Quadrature("zero nodes".into()))?;
    let rule = GaussLegendre::new(count);
    let mut acc = vec![C::new(0.0, 0.0); sys.dim()];
    for (x, w) in rule.iter() {
        let lambda = 0.5 * (b - a) * x + 0.5 * (b + a);
        let weight = 0.5 * (b - a) * w;
        let k = (2.0 * lambda).sqrt();
        let psi_b = f0_apply(sys, lambda, phi, sign, cfg.dispersion)?;
        let xi = f0_adjoint(sys, lambda, &psi_b, sign, cfg.dispersion)?;
        let mut g = sys.t_apply(&xi);
        truncate(sys, &mut g, cfg.resolvent.r_phys);
        // (P - λ ± i0)⁻¹ is the incoming resolvent for W₊
        let solver = LadderSolver::new(sys, lambda, -sign, &cfg.resolvent, k)?;
        let u = solver.solve(&g)?.value;
        let jxi = sys.j_apply(&xi);
        for (o, (p, q)) in acc.iter_mut().zip(jxi.iter().zip(&u)) {
            *o += (p - q) * weight;
        }
    }
    truncate(sys, &mut acc, cfg.resolvent.r_phys);
    Ok(acc)
}
