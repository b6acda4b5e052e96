//! Spectral diagnostics: bound states below zero, localized eigenvectors of
//! the truncated operator inside a positive window, and the compressed
//! commutator `χ_I(P) i[P,A] χ_I(P)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sprs::CsMat;

use crate::assembly::{symmetry_defect, OperatorSet};
use crate::blocktri::{BlockLu, SymBlockTri};
use crate::cutoff::{cutoff_j, ramp};
use crate::error::{Error, Result};
use crate::fit::line;
use crate::modal::{norm, ModalSystem};
use crate::problem::Problem;

type C = Complex64;

/// Rational approximation of the indicator of `[a, b]`: the `N`-point
/// trapezoid rule for the Riesz projection on the circle through `a` and
/// `b`. Its response on the real axis is `1 / (1 + t^N)`, `t = |x - c| / ρ`.
pub struct ContourFilter {
    pub center: f64,
    pub radius: f64,
    pub nodes: usize,
    // upper half-plane nodes; the lower ones are their conjugates
    lus: Vec<(C, BlockLu)>,
}

impl ContourFilter {
    pub fn new(op: &SymBlockTri, (a, b): (f64, f64), nodes: usize) -> Result<Self> {
        if !(b > a) || nodes < 4 || nodes % 2 != 0 {
            return Err(Error::Filter(format!("need a < b and an even node count >= 4 (got [{a}, {b}], {nodes})")));
        }
        let center = 0.5 * (a + b);
        let radius = 0.5 * (b - a);
        let lus = (0..nodes / 2)
            .map(|j| {
                let e = C::from_polar(1.0, 2.0 * PI * (j as f64 + 0.5) / nodes as f64);
                let z = center + e * radius;
                // (z - P)⁻¹ = -(P - z)⁻¹
                let w = -e * radius / nodes as f64;
                Ok((w, op.shifted(z, None).factor()?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { center, radius, nodes, lus })
    }

    /// Filter value at a real point.
    pub fn response(&self, x: f64) -> f64 {
        1.0 / (1.0 + ((x - self.center).abs() / self.radius).powi(self.nodes as i32))
    }

    /// Width of the 0.9 → 0.1 transition at either edge.
    pub fn transition_width(&self) -> f64 {
        let s = 9f64.powf(1.0 / self.nodes as f64);
        self.radius * (s - 1.0 / s)
    }

    pub fn apply(&self, x: &[C]) -> Result<Vec<C>> {
        let xc: Vec<C> = x.iter().map(|v| v.conj()).collect();
        let mut y = vec![C::new(0.0, 0.0); x.len()];
        for (w, lu) in &self.lus {
            let u = lu.solve(x)?;
            let v = lu.solve(&xc)?;
            for ((o, a), b) in y.iter_mut().zip(&u).zip(&v) {
                *o += w * a + (w * b).conj();
            }
        }
        Ok(y)
    }
}

/// A bound state below zero.
#[derive(Debug, Clone, Serialize)]
pub struct BoundState {
    pub energy: f64,
    /// `‖Pu - Eu‖ / ‖u‖`.
    pub residual: f64,
    /// Fitted exponential decay rate of the eigenvector.
    pub decay_rate: Option<f64>,
    /// `√(-2E)`.
    pub expected_decay: f64,
    pub decay_match: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    /// Localized and stable under box enlargement.
    SuspectedEigenvalue,
    BoxArtifact,
}

/// Eigenpair of the truncated operator inside the window.
#[derive(Debug, Clone, Serialize)]
pub struct EmbeddedCandidate {
    pub energy: f64,
    pub residual: f64,
    /// Radius enclosing 90% of the mass.
    pub participation_radius: f64,
    pub localized: bool,
    /// Energy shift under a 1.5× box enlargement (localized vectors only).
    pub enlarged_shift: Option<f64>,
    pub decay_rate: Option<f64>,
    pub classification: Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    /// Eigenvalues above `-threshold` do not count as negative.
    pub threshold: f64,
    pub residual_tol: f64,
    /// Relative tolerance of the decay-rate match.
    pub decay_tol: f64,
    /// Contour nodes of the window filter.
    pub filter_nodes: usize,
    pub max_iterations: usize,
    /// Localization radius for candidates, usually `R_phys / 2`.
    pub localization_radius: f64,
    /// Largest energy shift under box enlargement for a persistent candidate.
    pub persistence_tol: f64,
    pub seed: u64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            threshold: 1e-8,
            residual_tol: 1e-8,
            decay_tol: 0.1,
            filter_nodes: 16,
            max_iterations: 12,
            localization_radius: 15.0,
            persistence_tol: 1e-6,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub negative_eigenvalues: Vec<BoundState>,
    pub window: (f64, f64),
    /// Eigenvalues of the truncated operator in the window.
    pub window_count: usize,
    pub embedded_candidates: Vec<EmbeddedCandidate>,
    /// Candidates classified as suspected eigenvalues.
    pub suspected: usize,
    pub r_max: f64,
    pub modes: usize,
    pub config: SpectrumConfig,
}

fn lower_bound(op: &SymBlockTri) -> f64 {
    let m = op.block_size();
    let n = op.block_count();
    let mut lo = f64::INFINITY;
    for i in 0..n {
        for k in 0..m {
            let mut off = 0.0;
            for l in 0..m {
                if l != k {
                    off += op.diag[i][(k, l)].abs();
                }
                if i + 1 < n {
                    off += op.upper[i][(k, l)].abs();
                }
                if i > 0 {
                    off += op.upper[i - 1][(l, k)].abs();
                }
            }
            lo = lo.min(op.diag[i][(k, k)] - off);
        }
    }
    lo
}

fn rayleigh(op: &SymBlockTri, u: &[C]) -> (f64, f64) {
    let pu = op.apply(u);
    let nu = norm(u);
    let e = u.iter().zip(&pu).map(|(a, b)| (a.conj() * b).re).sum::<f64>() / (nu * nu);
    let res = pu.iter().zip(u).map(|(p, v)| (p - v * e).norm_sqr()).sum::<f64>().sqrt() / nu;
    (e, res)
}

/// Inverse iteration at `shift` from `start`. Once below `tol` it continues
/// while the residual still halves, so that the far tail is clean too.
fn inverse_iteration(op: &SymBlockTri, shift: f64, start: Vec<C>, tol: f64) -> Result<(f64, f64, Vec<C>)> {
    let lu = op.shifted(C::new(shift, 0.0), None).factor()?;
    let mut u = start;
    let mut best = (f64::NAN, f64::INFINITY);
    for _ in 0..8 {
        let v = lu.solve(&u)?;
        let nv = norm(&v);
        let next: Vec<C> = v.into_iter().map(|x| x / nv).collect();
        let r = rayleigh(op, &next);
        if best.1 <= tol && r.1 > 0.5 * best.1 {
            if r.1 < best.1 {
                best = r;
                u = next;
            }
            break;
        }
        best = r;
        u = next;
    }
    Ok((best.0, best.1, u))
}

fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<C> {
    (0..dim).map(|_| C::new(rng.gen_range(-1.0..1.0), 0.0)).collect()
}

/// Radial mass profile `Σ_q |c_{i,q}|²` per ring.
fn shell_mass(sys: &ModalSystem, u: &[C]) -> Vec<f64> {
    u.chunks(sys.modes).map(|c| c.iter().map(|v| v.norm_sqr()).sum()).collect()
}

fn mass_radius(sys: &ModalSystem, u: &[C], fraction: f64) -> f64 {
    let mass = shell_mass(sys, u);
    let total: f64 = mass.iter().sum();
    let mut acc = 0.0;
    for (i, m) in mass.iter().enumerate() {
        acc += m;
        if acc >= fraction * total {
            return sys.r(i);
        }
    }
    sys.grid.r_max
}

/// Exponential decay rate of the radial amplitude between `10⁻³` and `10⁻¹⁰`
/// of its peak, beyond the peak and away from the outer wall.
fn decay_rate(sys: &ModalSystem, u: &[C]) -> Option<f64> {
    let amp: Vec<f64> = shell_mass(sys, u).into_iter().map(f64::sqrt).collect();
    let (peak_i, peak) = amp.iter().enumerate().fold((0, 0.0), |b, (i, &a)| if a > b.1 { (i, a) } else { b });
    let wall = sys.grid.index_at(sys.grid.r_max - 3.0);
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for i in peak_i..wall {
        let rel = amp[i] / peak;
        if (1e-10..=1e-3).contains(&rel) {
            x.push(sys.r(i));
            y.push(rel.ln());
        }
    }
    if x.len() < 10 || x.last()? - x[0] < 1.0 {
        return None;
    }
    let (slope, _) = line(&x, &y);
    Some(-slope)
}

/// The lowest `count` eigenvalues below `-threshold`, by Sturm bisection on
/// the block inertia and inverse iteration.
pub fn discrete_spectrum(sys: &ModalSystem, count: usize, cfg: &SpectrumConfig) -> Result<Vec<BoundState>> {
    if count == 0 {
        return Err(Error::Configuration("count must be at least 1".into()));
    }
    let op = &sys.p;
    let below = op.count_below(-cfg.threshold)?;
    let mut lo = lower_bound(op).min(-cfg.threshold) - 1.0;
    while op.count_below(lo)? > 0 {
        lo *= 2.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    for k in 0..below.min(count) {
        // smallest E with count_below(E) > k
        let (mut a, mut b) = (lo, -cfg.threshold);
        while b - a > 1e-13 * (1.0 + a.abs()) {
            let mid = 0.5 * (a + b);
            if op.count_below(mid)? > k {
                b = mid;
            } else {
                a = mid;
            }
        }
        let shift = 0.5 * (a + b) + 1e-11 * (1.0 + a.abs());
        let (energy, residual, u) = inverse_iteration(op, shift, random_vector(&mut rng, sys.dim()), cfg.residual_tol)?;
        if residual > cfg.residual_tol {
            return Err(Error::Numerical(format!(
                "inverse iteration at E = {energy:.6} stalled with residual {residual:.2e}"
            )));
        }
        let expected = (-2.0 * energy).sqrt();
        let rate = decay_rate(sys, &u);
        let decay_match = rate.is_some_and(|d| (d - expected).abs() <= cfg.decay_tol * expected);
        out.push(BoundState { energy, residual, decay_rate: rate, expected_decay: expected, decay_match });
    }
    Ok(out)
}

/// Orthonormal basis of the column span (singular values above `1e-10`
/// of the largest).
fn orthonormalize(v: DMatrix<C>) -> DMatrix<C> {
    let svd = v.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| smax > 0.0 && svd.singular_values[i] > 1e-10 * smax)
        .collect();
    DMatrix::from_fn(u.nrows(), keep.len(), |r, c| u[(r, keep[c])])
}

fn apply_columns(x: &DMatrix<C>, f: impl Fn(&[C]) -> Result<Vec<C>>) -> Result<DMatrix<C>> {
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for c in 0..x.ncols() {
        let col: Vec<C> = x.column(c).iter().copied().collect();
        out.set_column(c, &DVector::from_vec(f(&col)?));
    }
    Ok(out)
}

/// Ritz pairs of the Hermitian operator `h` on the span of `basis`
/// (orthonormal columns).
fn ritz(basis: &DMatrix<C>, h: impl Fn(&[C]) -> Result<Vec<C>>) -> Result<(Vec<f64>, DMatrix<C>)> {
    let hb = apply_columns(basis, h)?;
    let small = basis.adjoint() * hb;
    let small = (&small + small.adjoint()) * C::new(0.5, 0.0);
    let eig = SymmetricEigen::new(small);
    Ok((eig.eigenvalues.iter().copied().collect(), basis * eig.eigenvectors))
}

/// All eigenpairs of the truncated `P` in `[a, b]` by contour-filtered
/// subspace iteration.
pub fn window_eigenpairs(
    sys: &ModalSystem,
    window: (f64, f64),
    cfg: &SpectrumConfig,
) -> Result<Vec<(f64, f64, Vec<C>)>> {
    let (a, b) = window;
    let op = &sys.p;
    let count = op.count_below(b)? - op.count_below(a)?;
    if count == 0 {
        return Ok(Vec::new());
    }
    let width = (count * 3 / 2 + 8).min(sys.dim());
    let filter = ContourFilter::new(op, window, cfg.filter_nodes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = DMatrix::from_fn(sys.dim(), width, |_, _| C::new(rng.gen_range(-1.0..1.0), 0.0));
    let mut found = Vec::new();
    for _ in 0..cfg.max_iterations {
        let y = apply_columns(&x, |c| filter.apply(c))?;
        let basis = orthonormalize(y);
        let (theta, vecs) = ritz(&basis, |c| Ok(op.apply(c)))?;
        found.clear();
        for (k, &e) in theta.iter().enumerate() {
            if e >= a && e <= b {
                let u: Vec<C> = vecs.column(k).iter().copied().collect();
                let (_, res) = rayleigh(op, &u);
                if res <= cfg.residual_tol {
                    found.push((e, res, u));
                }
            }
        }
        // spurious Ritz values in the window have large residuals
        if found.len() == count {
            return Ok(found);
        }
        x = vecs;
    }
    Err(Error::Numerical(format!(
        "subspace iteration on [{a}, {b}] converged {} of {count} eigenpairs",
        found.len()
    )))
}

/// Eigenpairs in `window`, classified by localization and by stability
/// under a 1.5× box enlargement.
pub fn embedded_candidates(
    problem: &Problem,
    sys: &ModalSystem,
    window: (f64, f64),
    cfg: &SpectrumConfig,
) -> Result<(usize, Vec<EmbeddedCandidate>)> {
    let pairs = window_eigenpairs(sys, window, cfg)?;
    let mut enlarged: Option<ModalSystem> = None;
    let mut out = Vec::with_capacity(pairs.len());
    for (energy, residual, u) in &pairs {
        let participation_radius = mass_radius(sys, u, 0.9);
        let localized = participation_radius < cfg.localization_radius;
        let mut enlarged_shift = None;
        if localized {
            if enlarged.is_none() {
                enlarged = Some(problem.system(sys.modes, 1.5 * sys.grid.r_max)?);
            }
            let big = enlarged.as_ref().expect("built above");
            let mut start = vec![C::new(0.0, 0.0); big.dim()];
            start[..u.len()].copy_from_slice(u);
            let (e2, _, _) = inverse_iteration(&big.p, energy + 1e-9, start, cfg.residual_tol)?;
            enlarged_shift = Some((e2 - energy).abs());
        }
        let persists = enlarged_shift.is_some_and(|d| d <= cfg.persistence_tol);
        out.push(EmbeddedCandidate {
            energy: *energy,
            residual: *residual,
            participation_radius,
            localized,
            enlarged_shift,
            decay_rate: decay_rate(sys, u),
            classification: if localized && persists {
                Classification::SuspectedEigenvalue
            } else {
                Classification::BoxArtifact
            },
        });
    }
    Ok((pairs.len(), out))
}

/// Bound states plus the classified window eigenpairs.
pub fn spectrum_report(
    problem: &Problem,
    modes: usize,
    r_max: f64,
    window: (f64, f64),
    count: usize,
    cfg: &SpectrumConfig,
) -> Result<SpectrumReport> {
    let sys = problem.system(modes, r_max)?;
    let negative_eigenvalues = discrete_spectrum(&sys, count, cfg)?;
    let (window_count, embedded) = embedded_candidates(problem, &sys, window, cfg)?;
    let suspected = embedded.iter().filter(|c| c.classification == Classification::SuspectedEigenvalue).count();
    Ok(SpectrumReport {
        negative_eigenvalues,
        window,
        window_count,
        embedded_candidates: embedded,
        suspected,
        r_max: sys.grid.r_max,
        modes: sys.modes,
        config: cfg.clone(),
    })
}

/// `i[P, A] = (P B - B P) / 2` on the nodal grid, symmetrized; returns the
/// matrix and the relative symmetry defect before symmetrization.
pub fn commutator_ipa(ops: &OperatorSet) -> (CsMat<f64>, f64) {
    let pb = &ops.p * &ops.b;
    let bp = &ops.b * &ops.p;
    let c = (&pb - &bp).map(|v| 0.5 * v);
    let defect = symmetry_defect(&c, 1.0);
    let ct = c.transpose_view().to_csr();
    let sym = (&c + &ct).map(|v| 0.5 * v);
    (sym, defect)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MourreConfig {
    /// Contour nodes of `χ_I(P)`.
    pub filter_nodes: usize,
    /// Random probe vectors per subspace.
    pub probes: usize,
    /// Mass fraction in `r >= R` required of a retained state.
    pub outer_mass: f64,
    pub seed: u64,
}

impl Default for MourreConfig {
    fn default() -> Self {
        Self { filter_nodes: 32, probes: 48, outer_mass: 0.9, seed: 11 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MourreReport {
    pub interval: (f64, f64),
    /// Lower bound of the localized compressed commutator (see [`mourre_check`]).
    pub beta_est: f64,
    /// How far cap-localized filtered states fall below `beta_est`.
    pub remainder_norm: f64,
    /// `‖(1 - χ_I(P)) ψu‖ / ‖ψu‖` for the minimizing state.
    pub spectral_leak: f64,
    pub r_mourre: f64,
    pub filter_nodes: usize,
    pub transition_width: f64,
    pub max_transition_width: f64,
    /// Generalized Ritz vectors meeting the outer-mass condition.
    pub retained: usize,
    /// `2 inf I`, the symbol-level expectation (a sanity band only).
    pub symbol_band: f64,
    /// The filtered subspace is empty.
    pub vacuous: bool,
    pub config: MourreConfig,
}

/// Band at the outer wall excluded from the localized states: the truncated
/// commutator carries a boundary term `-F |u'|²` at the wall.
const WALL_BAND: f64 = 4.0;

/// Ritz vectors of `P` on the span of `y` with Ritz values in the window;
/// drops the directions the filter only damped.
fn in_window(sys: &ModalSystem, y: DMatrix<C>, (a, b): (f64, f64)) -> Result<DMatrix<C>> {
    let (theta, vecs) = ritz(&orthonormalize(y), |c| Ok(sys.p.apply(c)))?;
    let keep: Vec<usize> = (0..theta.len()).filter(|&k| theta[k] >= a && theta[k] <= b).collect();
    Ok(DMatrix::from_fn(vecs.nrows(), keep.len(), |r, c| vecs[(r, keep[c])]))
}

fn outer_fraction(sys: &ModalSystem, u: &[C], r: f64) -> f64 {
    let mass = shell_mass(sys, u);
    let total: f64 = mass.iter().sum();
    let outer: f64 = mass.iter().enumerate().filter(|(i, _)| sys.r(*i) >= r).map(|(_, m)| m).sum();
    outer / total
}

/// Generalized Ritz pairs of `⟨ψu, C ψu⟩ / ⟨ψu, ψu⟩` for `u` in the span
/// of the orthonormal `basis`: `(value, u)`, ascending.
fn weighted_ritz(sys: &ModalSystem, basis: &DMatrix<C>, weight: &[f64]) -> Result<Vec<(f64, Vec<C>)>> {
    let w = apply_columns(basis, |c| Ok(c.iter().zip(weight).map(|(v, s)| v * s).collect()))?;
    let cw = apply_columns(&w, |c| Ok(sys.commutator_apply(c)))?;
    let a = w.adjoint() * cw;
    let a = (&a + a.adjoint()) * C::new(0.5, 0.0);
    let g = w.adjoint() * &w;
    let g = (&g + g.adjoint()) * C::new(0.5, 0.0);
    let degenerate = || Error::Filter("weighted probe subspace is degenerate".into());
    let l_inv = g.clone().cholesky().ok_or_else(degenerate)?.l().try_inverse().ok_or_else(degenerate)?;
    let reduced = &l_inv * a * l_inv.adjoint();
    let eig = SymmetricEigen::new((&reduced + reduced.adjoint()) * C::new(0.5, 0.0));
    let coeffs = l_inv.adjoint() * eig.eigenvectors;
    let mut out = Vec::with_capacity(coeffs.ncols());
    for k in 0..coeffs.ncols() {
        let u: Vec<C> = (basis * coeffs.column(k)).iter().copied().collect();
        out.push((eig.eigenvalues[k], u));
    }
    out.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(out)
}

/// Estimates `β` in `χ_I(P) i[P,A] χ_I(P) >= β χ_I(P) + χ_I(P) K χ_I(P)`.
///
/// `K` is taken as `C - ψCψ` with `ψ = j(r / 2R)` cut off near the outer
/// wall: it lives on the cap, on the ramp of `A` (where `-F'''/4` is large and
/// negative) and at the wall (boundary term `-F|u'|²`). `β` is the smallest
/// generalized Ritz value of `ψCψ` over `u` in the filtered subspace with at
/// least `outer_mass` of the mass of `u` in `r >= R`.
pub fn mourre_check(sys: &ModalSystem, interval: (f64, f64), cfg: &MourreConfig) -> Result<MourreReport> {
    let (a, b) = interval;
    let filter = ContourFilter::new(&sys.p, interval, cfg.filter_nodes)?;
    let width = filter.transition_width();
    let max_width = 0.25 * (b - a);
    if width > max_width {
        return Err(Error::Filter(format!(
            "transition width {width:.3} exceeds |I|/4 = {max_width:.3}; raise the node count"
        )));
    }
    let r_m = sys.r_mourre;
    let wall = sys.grid.r_max;
    let psi: Vec<f64> = (0..sys.dim())
        .map(|k| {
            let r = sys.r(k / sys.modes);
            cutoff_j(r / (2.0 * r_m)) * (1.0 - ramp(r, wall - WALL_BAND, WALL_BAND / 2.0))
        })
        .collect();
    let cap: Vec<f64> = (0..sys.dim()).map(|k| 1.0 - cutoff_j(sys.r(k / sys.modes) / (2.0 * r_m))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let probes = |rng: &mut ChaCha8Rng, weight: &[f64]| {
        DMatrix::from_fn(sys.dim(), cfg.probes, |row, _| C::new(rng.gen_range(-1.0..1.0) * weight[row], 0.0))
    };
    let x = probes(&mut rng, &psi);
    let y = apply_columns(&x, |c| filter.apply(c))?;
    let report = |beta, remainder, leak, retained, vacuous| MourreReport {
        interval,
        beta_est: beta,
        remainder_norm: remainder,
        spectral_leak: leak,
        r_mourre: r_m,
        filter_nodes: cfg.filter_nodes,
        transition_width: width,
        max_transition_width: max_width,
        retained,
        symbol_band: 2.0 * a,
        vacuous,
        config: cfg.clone(),
    };
    if y.norm() <= 1e-8 * x.norm() {
        return Ok(report(0.0, 0.0, 0.0, 0, true));
    }
    let basis = in_window(sys, y, interval)?;
    if basis.ncols() == 0 {
        return Ok(report(0.0, 0.0, 0.0, 0, true));
    }
    let pairs = weighted_ritz(sys, &basis, &psi)?;
    let retained: Vec<&(f64, Vec<C>)> =
        pairs.iter().filter(|p| outer_fraction(sys, &p.1, r_m) >= cfg.outer_mass).collect();
    let Some(&(beta, ref u)) = retained.first().copied() else {
        return Err(Error::Filter("no filtered state keeps the required outer mass".into()));
    };
    let pu: Vec<C> = u.iter().zip(&psi).map(|(v, w)| v * w).collect();
    let fpu = filter.apply(&pu)?;
    let leak = norm(&pu.iter().zip(&fpu).map(|(p, q)| p - q).collect::<Vec<_>>()) / norm(&pu);

    let xc = probes(&mut rng, &cap);
    let yc = apply_columns(&xc, |c| filter.apply(c))?;
    let remainder = if yc.norm() > 1e-8 * xc.norm() {
        let basis = in_window(sys, yc, interval)?;
        let low = if basis.ncols() > 0 { weighted_ritz(sys, &basis, &cap)?[0].0 } else { beta };
        (beta - low).max(0.0)
    } else {
        0.0
    };
    Ok(report(beta, remainder, leak, retained.len(), false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::apply;
    use crate::coefficients::{CoefficientField, Preset, TailParams};
    use crate::cross_section::CrossSection;
    use crate::grid::RadialGrid;

    fn problem(cf: CoefficientField, n: usize, r_max: f64, dr: f64) -> Problem {
        let grid = RadialGrid::with_spacing(r_max, dr, n).unwrap();
        Problem::new(CrossSection::circle(16).unwrap(), cf, grid, 2.0)
    }

    fn diagonal(values: &[f64]) -> SymBlockTri {
        SymBlockTri {
            diag: values.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect(),
            upper: vec![DMatrix::zeros(1, 1); values.len() - 1],
        }
    }

    #[test]
    fn contour_filter_has_its_rational_response() {
        let values = [-1.0, 0.3, 0.55, 1.0, 1.4, 1.6, 3.0];
        let f = ContourFilter::new(&diagonal(&values), (0.5, 1.5), 16).unwrap();
        let ones = vec![C::new(1.0, 0.0); values.len()];
        let y = f.apply(&ones).unwrap();
        for (v, x) in y.iter().zip(values) {
            assert!((v - f.response(x)).norm() < 1e-12, "{x}: {v} vs {}", f.response(x));
        }
        let w = f.transition_width();
        assert!((f.response(1.5 + 0.5 * w) - 0.1).abs() < 0.02);
        assert!(ContourFilter::new(&diagonal(&values), (0.5, 1.5), 5).is_err());
    }

    #[test]
    fn well_binds_with_the_right_decay() {
        let cf = CoefficientField::from_preset(&Preset::Well { depth: 5.0 }, 3);
        let sys = problem(cf, 3, 25.0, 0.02).system(1, 25.0).unwrap();
        let states = discrete_spectrum(&sys, 3, &SpectrumConfig::default()).unwrap();
        assert!(!states.is_empty());
        let ground = &states[0];
        assert!(ground.energy > -5.0 && ground.energy < 0.0);
        for s in &states {
            assert!(s.residual <= 1e-8);
        }
        assert!(ground.decay_match, "{ground:?}");
    }

    #[test]
    fn free_cone_has_no_negative_spectrum() {
        let sys = problem(CoefficientField::exact_cone(2), 2, 25.0, 0.05).system(3, 25.0).unwrap();
        assert!(discrete_spectrum(&sys, 3, &SpectrumConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn shallow_well_reports_only_valid_pairs() {
        let cf = CoefficientField::from_preset(&Preset::Well { depth: 0.01 }, 3);
        let sys = problem(cf, 3, 25.0, 0.05).system(1, 25.0).unwrap();
        for s in discrete_spectrum(&sys, 2, &SpectrumConfig::default()).unwrap() {
            assert!(s.residual <= 1e-8 && s.energy < 0.0);
        }
    }

    #[test]
    fn window_pairs_match_dense_eigenvalues() {
        let sys = problem(CoefficientField::exact_cone(2), 2, 12.0, 0.1).system(2, 12.0).unwrap();
        let dense = DMatrix::from_fn(sys.dim(), sys.dim(), |i, j| {
            let mut e = vec![C::new(0.0, 0.0); sys.dim()];
            e[j] = C::new(1.0, 0.0);
            sys.p.apply(&e)[i].re
        });
        let mut exact: Vec<f64> = SymmetricEigen::new(dense)
            .eigenvalues
            .iter()
            .copied()
            .filter(|e| (0.5..=1.5).contains(e))
            .collect();
        exact.sort_by(f64::total_cmp);
        let mut found: Vec<f64> = window_eigenpairs(&sys, (0.5, 1.5), &SpectrumConfig::default())
            .unwrap()
            .into_iter()
            .map(|p| p.0)
            .collect();
        found.sort_by(f64::total_cmp);
        assert_eq!(found.len(), exact.len());
        for (a, b) in found.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn free_cone_window_has_only_box_states() {
        let p = problem(CoefficientField::exact_cone(2), 2, 30.0, 0.05);
        let sys = p.system(3, 30.0).unwrap();
        let (count, cands) = embedded_candidates(&p, &sys, (0.5, 1.5), &SpectrumConfig::default()).unwrap();
        assert!(count > 0 && cands.len() == count);
        assert!(cands.iter().all(|c| c.classification == Classification::BoxArtifact && !c.localized));
    }

    #[test]
    fn nodal_commutator_is_symmetric_and_vanishes_on_the_cap() {
        let cs = CrossSection::circle(16).unwrap();
        let grid = RadialGrid::with_spacing(20.0, 0.05, 2).unwrap();
        let ops = OperatorSet::assemble(&cs, &CoefficientField::exact_cone(2), &grid, 4.0).unwrap();
        let (c, defect) = commutator_ipa(&ops);
        assert!(defect <= 1e-10);
        assert!(symmetry_defect(&c, 1.0) == 0.0);
        // supported in r < R/2 - 2Δr: A and hence i[P,A] vanish there
        let u: Vec<C> = (0..ops.dim())
            .map(|k| {
                let r = ops.r_nodes[k / ops.theta_count];
                if r < 1.8 { C::new((k as f64).sin(), 0.0) } else { C::new(0.0, 0.0) }
            })
            .collect();
        assert!(norm(&apply(&c, &u)) < 1e-12 * norm(&u));
    }

    #[test]
    fn far_plane_wave_commutator_is_k_squared() {
        let sys = problem(CoefficientField::exact_cone(2), 2, 40.0, 0.02).system(1, 40.0).unwrap();
        for k in [0.8f64, 1.2] {
            let u = sys.from_profile(0, |r| {
                if r > 8.0 && r < 36.0 {
                    C::from_polar((PI * (r - 8.0) / 28.0).sin().powi(2), k * r)
                } else {
                    C::new(0.0, 0.0)
                }
            });
            let cu = sys.commutator_apply(&u);
            let q: f64 = u.iter().zip(&cu).map(|(a, b)| (a.conj() * b).re).sum::<f64>() / norm(&u).powi(2);
            assert!((q - k * k).abs() <= 0.1 * k * k, "k = {k}: {q}");
        }
    }

    fn mourre_system(cf: CoefficientField) -> ModalSystem {
        problem(cf, 2, 40.0, 0.05).system(3, 40.0).unwrap()
    }

    #[test]
    fn mourre_estimate_on_the_exact_cone() {
        let sys = mourre_system(CoefficientField::exact_cone(2));
        let cfg = MourreConfig::default();
        let rep = mourre_check(&sys, (0.5, 1.5), &cfg).unwrap();
        assert!(rep.beta_est >= 0.8 && rep.beta_est.is_finite(), "{rep:?}");
        assert!(rep.transition_width <= rep.max_transition_width);
        let narrower = mourre_check(&sys, (0.7, 1.5), &cfg).unwrap();
        let narrowest = mourre_check(&sys, (0.9, 1.5), &cfg).unwrap();
        assert!(rep.beta_est <= narrower.beta_est && narrower.beta_est <= narrowest.beta_est);

        let p = TailParams { a3_amp: 0.5, a3_exponent: 1.5, a3_theta: 0.0, ..TailParams::default() };
        let tail = mourre_system(CoefficientField::from_preset(&Preset::TailPerturbation(p), 2));
        let rt = mourre_check(&tail, (0.5, 1.5), &cfg).unwrap();
        assert!((rt.beta_est - rep.beta_est).abs() <= 0.2 * rep.beta_est, "{} vs {}", rt.beta_est, rep.beta_est);
    }

    #[test]
    fn mourre_below_the_spectrum_is_vacuous() {
        let sys = mourre_system(CoefficientField::exact_cone(2));
        let rep = mourre_check(&sys, (-1.0, -0.5), &MourreConfig::default()).unwrap();
        assert!(rep.vacuous && rep.beta_est.is_finite());
    }

    #[test]
    fn soft_filter_is_rejected() {
        let sys = mourre_system(CoefficientField::exact_cone(2));
        let cfg = MourreConfig { filter_nodes: 4, ..MourreConfig::default() };
        assert!(matches!(mourre_check(&sys, (0.5, 1.5), &cfg), Err(Error::Filter(_))));
    }
}
