//! Limiting-absorption diagnostics: weighted resolvent norms along the ε
//! ladder, the free-line resolvent benchmark and the `T*R` / `Q̃R` bounds.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::blocktri::SymBlockTri;
use crate::cutoff::{bracket, cutoff_j};
use crate::error::{Error, Result};
use crate::modal::{norm, ModalSystem};
use crate::resolvent::{absorber_diagonal, LadderSolver, ResolventConfig};

type C = Complex64;

/// Largest singular value of `X` by power iteration on `X*X`.
pub fn operator_norm(
    dim: usize,
    apply: impl Fn(&[C]) -> Result<Vec<C>>,
    adjoint: impl Fn(&[C]) -> Result<Vec<C>>,
    max_iter: usize,
    tol: f64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<C> = (0..dim).map(|_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);
    let mut est = 0.0;
    for _ in 0..max_iter {
        let xv = apply(&v)?;
        let next = norm(&xv);
        let w = adjoint(&xv)?;
        let nw = norm(&w);
        if nw == 0.0 {
            return Ok(0.0);
        }
        v = w.into_iter().map(|x| x / nw).collect();
        if (next - est).abs() <= tol * next {
            return Ok(next);
        }
        est = next;
    }
    Ok(est)
}

/// Weighted-resolvent norms along the ladder.
#[derive(Debug, Clone, Serialize)]
pub struct LapProbe {
    pub lambda: f64,
    pub s_weight: f64,
    pub epsilons: Vec<f64>,
    pub norms: Vec<f64>,
    /// `norms[k+1] / norms[k]`.
    pub ratios: Vec<f64>,
    /// Last ratio within `converge_tol` of 1.
    pub converged: bool,
    /// The last two ratios exceed 1.2.
    pub diverging: bool,
    pub converge_tol: f64,
}

impl LapProbe {
    fn from_norms(lambda: f64, s_weight: f64, epsilons: Vec<f64>, norms: Vec<f64>, converge_tol: f64) -> Self {
        let ratios: Vec<f64> = norms.windows(2).map(|w| w[1] / w[0]).collect();
        let converged = ratios.last().is_some_and(|r| (r - 1.0).abs() <= converge_tol);
        let diverging = ratios.len() >= 2 && ratios[ratios.len() - 2..].iter().all(|&r| r > 1.2);
        Self { lambda, s_weight, epsilons, norms, ratios, converged, diverging, converge_tol }
    }
}

const POWER_ITER: usize = 300;
const POWER_TOL: f64 = 1e-7;

fn ladder_solver(sys: &ModalSystem, lambda: f64, cfg: &ResolventConfig) -> Result<LadderSolver> {
    if lambda > 0.0 {
        let k = (2.0 * lambda).sqrt();
        let absorber = absorber_diagonal(sys, cfg.r_phys, cfg.absorber_at(k), 1.0);
        LadderSolver::with_operator(&sys.p, Some(&absorber), cfg.ladder(), lambda, 1.0, false)
    } else {
        LadderSolver::with_operator(&sys.p, None, cfg.ladder(), lambda, 1.0, false)
    }
}

fn weights(sys: &ModalSystem, s: f64) -> Vec<f64> {
    (0..sys.dim()).map(|a| bracket(sys.r(a / sys.modes)).powf(-s)).collect()
}

fn weighted(w: &[f64], x: &[C]) -> Vec<C> {
    x.iter().zip(w).map(|(v, w)| v * w).collect()
}

/// `‖<r>^{-s}(P - λ - iε)⁻¹<r>^{-s}‖` per rung of the raw ladder
/// `ε0 ρ^k`. The weight is taken from
/// `s` (which may violate `s > 1/2` on purpose); the rest of `cfg` sets the
/// ladder and absorber.
pub fn lap_probe(sys: &ModalSystem, lambda: f64, cfg: &ResolventConfig, s: f64) -> Result<LapProbe> {
    let solver = ladder_solver(sys, lambda, cfg)?;
    let w = weights(sys, s);
    let mut norms = Vec::with_capacity(solver.eps.len());
    for rung in 0..solver.eps.len() {
        let n = operator_norm(
            sys.dim(),
            |x| Ok(weighted(&w, &solver.solve_rung(rung, &weighted(&w, x))?)),
            |x| Ok(weighted(&w, &solver.solve_rung_adjoint(rung, &weighted(&w, x))?)),
            POWER_ITER,
            POWER_TOL,
        )?;
        norms.push(n);
    }
    Ok(LapProbe::from_norms(lambda, s, solver.eps.clone(), norms, 0.05))
}

/// `‖<r>^{s} T*(P - λ - iε)⁻¹(1 + Q̃)⁻¹<r>^{-s}‖` per rung.
pub fn t_star_resolvent_probe(sys: &ModalSystem, lambda: f64, cfg: &ResolventConfig) -> Result<LapProbe> {
    let s = cfg.s_weight;
    let solver = ladder_solver(sys, lambda, cfg)?;
    let w = weights(sys, s);
    let wf: Vec<f64> = (0..sys.free_dim())
        .map(|a| bracket(sys.free.r_nodes[a / sys.modes].abs()).powf(s))
        .collect();
    let q_inv = q_inverse(sys);
    let mut norms = Vec::new();
    for rung in 0..solver.eps.len() {
        let n = operator_norm(
            sys.dim(),
            |x| {
                let y = weighted(&q_inv, &weighted(&w, x));
                Ok(weighted(&wf, &sys.t_adjoint(&solver.solve_rung(rung, &y)?)))
            },
            |x| {
                let y = sys.t_apply(&weighted(&wf, x));
                Ok(weighted(&w, &weighted(&q_inv, &solver.solve_rung_adjoint(rung, &y)?)))
            },
            POWER_ITER,
            POWER_TOL,
        )?;
        norms.push(n);
    }
    Ok(LapProbe::from_norms(lambda, s, solver.eps.clone(), norms, 0.1))
}

/// `‖<r>^{-s} Q̃(P - λ - iε)⁻¹(1 + Q̃)⁻¹<r>^{-s}‖` per rung.
pub fn q_resolvent_probe(sys: &ModalSystem, lambda: f64, cfg: &ResolventConfig) -> Result<LapProbe> {
    let s = cfg.s_weight;
    let solver = ladder_solver(sys, lambda, cfg)?;
    let w = weights(sys, s);
    let q_inv = q_inverse(sys);
    let mut norms = Vec::new();
    for rung in 0..solver.eps.len() {
        let n = operator_norm(
            sys.dim(),
            |x| {
                let y = weighted(&q_inv, &weighted(&w, x));
                Ok(weighted(&w, &sys.qtilde_apply(&solver.solve_rung(rung, &y)?)))
            },
            |x| {
                let y = sys.qtilde_apply(&weighted(&w, x));
                Ok(weighted(&w, &weighted(&q_inv, &solver.solve_rung_adjoint(rung, &y)?)))
            },
            POWER_ITER,
            POWER_TOL,
        )?;
        norms.push(n);
    }
    Ok(LapProbe::from_norms(lambda, s, solver.eps.clone(), norms, 0.1))
}

/// Diagonal of `(1 + Q̃)⁻¹` in the modal basis.
fn q_inverse(sys: &ModalSystem) -> Vec<f64> {
    (0..sys.dim())
        .map(|a| {
            let j = sys.j[a / sys.modes];
            1.0 / (1.0 + j * j * sys.q[a % sys.modes].max(0.0))
        })
        .collect()
}

/// Outcome of the free-line resolvent benchmark.
#[derive(Debug, Clone, Serialize)]
pub struct FreeResolventBenchmark {
    pub lambda: f64,
    pub dr: f64,
    pub r_phys: f64,
    pub relative_error: f64,
    pub eps_residual: f64,
}

/// `(P_f - λ - i0)⁻¹ f` for `f = e^{-r²/(2σ²)}` on the line, with absorbers
/// on both sides of `|r| <= R_phys`, against
/// `∫ (i/ζ) e^{iζ|r - r'|} f(r') dr'`, `ζ = √(2λ)`.
pub fn free_resolvent_benchmark(lambda: f64, dr: f64, cfg: &ResolventConfig, sigma: f64) -> Result<FreeResolventBenchmark> {
    if lambda <= 0.0 {
        return Err(Error::Configuration("the benchmark needs λ > 0".into()));
    }
    let zeta = (2.0 * lambda).sqrt();
    let a = cfg.absorber_at(zeta);
    let r_max = a.required_r_max(cfg.r_phys, zeta);
    let half = (r_max / dr).ceil() as usize;
    let r: Vec<f64> = (-(half as isize)..=half as isize).map(|i| i as f64 * dr).collect();
    let n = r.len();
    let h2 = 1.0 / (dr * dr);
    let op = SymBlockTri {
        diag: vec![nalgebra::DMatrix::from_element(1, 1, h2); n],
        upper: vec![nalgebra::DMatrix::from_element(1, 1, -0.5 * h2); n - 1],
    };
    let absorber: Vec<C> = r
        .iter()
        .map(|&x| C::new(0.0, -a.eta * cutoff_j((x.abs() - cfg.r_phys) / a.width)))
        .collect();
    let solver = LadderSolver::with_operator(&op, Some(&absorber), cfg.ladder_for(zeta), lambda, 1.0, cfg.extrapolate)?;
    let f = |x: f64| (-x * x / (2.0 * sigma * sigma)).exp();
    let rhs: Vec<C> = r.iter().map(|&x| C::new(f(x), 0.0)).collect();
    let sol = solver.solve(&rhs)?;
    let exact = kernel_integral(&r, zeta, sigma, &f);
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &x) in r.iter().enumerate() {
        if x.abs() <= cfg.r_phys {
            num += (sol.value[i] - exact[i]).norm_sqr();
            den += exact[i].norm_sqr();
        }
    }
    Ok(FreeResolventBenchmark {
        lambda,
        dr,
        r_phys: cfg.r_phys,
        relative_error: (num / den).sqrt(),
        eps_residual: sol.residual,
    })
}

/// `(i/ζ)(e^{iζr} ∫_{-∞}^r e^{-iζr'} f + e^{-iζr} ∫_r^∞ e^{iζr'} f)` at the
/// nodes, by 8-point Gauss–Legendre per cell (the integrands are smooth in
/// each cell) with the Gaussian cut at `12σ`.
fn kernel_integral(r: &[f64], zeta: f64, sigma: f64, f: &dyn Fn(f64) -> f64) -> Vec<C> {
    let rule = gauss_quad::GaussLegendre::new(std::num::NonZeroUsize::new(8).unwrap());
    let cell = |a: f64, b: f64, sgn: f64| -> C {
        if a.abs().min(b.abs()) > 12.0 * sigma && a * b > 0.0 {
            return C::new(0.0, 0.0);
        }
        rule.iter()
            .map(|(x, w)| {
                let t = 0.5 * (b - a) * x + 0.5 * (a + b);
                C::from_polar(0.5 * (b - a) * w * f(t), sgn * zeta * t)
            })
            .sum()
    };
    let n = r.len();
    let mut left = vec![C::new(0.0, 0.0); n];
    for i in 1..n {
        left[i] = left[i - 1] + cell(r[i - 1], r[i], -1.0);
    }
    let mut right = vec![C::new(0.0, 0.0); n];
    for i in (0..n - 1).rev() {
        right[i] = right[i + 1] + cell(r[i], r[i + 1], 1.0);
    }
    let pref = C::new(0.0, 1.0 / zeta);
    (0..n)
        .map(|i| pref * (C::from_polar(1.0, zeta * r[i]) * left[i] + C::from_polar(1.0, -zeta * r[i]) * right[i]))
        .collect()
}
