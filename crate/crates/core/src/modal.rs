//! Operators in the scaled modal representation.
//!
//! A nodal state `u(r_i, θ)` with mode coefficients `c_{i,m}` (in the
//! `H dθ`-orthonormal eigenbasis of `Q`) is represented by
//! `ũ_{i,m} = sqrt(g(r_i) Δr) c_{i,m}`, and a state on `M_f` by
//! `ũ_{f,m} = sqrt(Δr) c_{f,m}`. Both inner products become Euclidean, so
//! adjoints are transposes. Vectors are ring-major: index `i * modes + m`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::blocktri::SymBlockTri;
use crate::coefficients::CoefficientField;
use crate::cross_section::CrossSection;
use crate::cutoff::cutoff_j;
use crate::error::{Error, Result};
use crate::grid::{FreeGrid, RadialGrid};
use crate::stencil::StencilBuilder;

type C = Complex64;

/// Galerkin projection of `P`, `P_f`, `J`, `T`, `A`, `Q̃` onto the lowest
/// `modes` eigenmodes of the cross-section.
#[derive(Debug, Clone)]
pub struct ModalSystem {
    pub grid: RadialGrid,
    pub free: FreeGrid,
    pub modes: usize,
    /// Retained eigenvalues `q_m` of `Q`.
    pub q: Vec<f64>,
    /// Retained modes as columns (nodal values on the θ grid).
    pub basis: DMatrix<f64>,
    /// Scaled `P`.
    pub p: SymBlockTri,
    /// `j(r_i)` per ring.
    pub j: Vec<f64>,
    /// Free-grid index aligned with each ring.
    pub align: Vec<usize>,
    /// True when every block of `p` is diagonal.
    pub decoupled: bool,
    /// Scale `R` of the conjugate operator.
    pub r_mourre: f64,
}

impl ModalSystem {
    pub fn build(
        cs: &CrossSection,
        cf: &CoefficientField,
        grid: &RadialGrid,
        modes: usize,
        r_mourre: f64,
    ) -> Result<Self> {
        let list: Vec<usize> = (0..modes).collect();
        Self::build_with_modes(cs, cf, grid, &list, r_mourre)
    }

    /// Projection onto an explicit list of cross-section modes.
    pub fn build_with_modes(
        cs: &CrossSection,
        cf: &CoefficientField,
        grid: &RadialGrid,
        mode_list: &[usize],
        r_mourre: f64,
    ) -> Result<Self> {
        let modes = mode_list.len();
        if modes == 0 || mode_list.iter().any(|&m| m >= cs.len()) {
            return Err(Error::Configuration(format!(
                "mode indices {mode_list:?} must be nonempty and below {}",
                cs.len()
            )));
        }
        let builder = StencilBuilder::new(cs, cf, grid)?;
        let basis = DMatrix::from_fn(cs.len(), modes, |r, c| cs.modes[(r, mode_list[c])]);
        let q: Vec<f64> = mode_list.iter().map(|&m| cs.eigenvalues[m]).collect();
        let n_r = grid.len();
        let w: Vec<f64> = (0..n_r).map(|i| grid.radial_weight(i)).collect();
        let mut diag = Vec::with_capacity(n_r);
        let mut upper = Vec::with_capacity(n_r.saturating_sub(1));
        for i in 0..n_r {
            let ring = builder.ring(i);
            let mut d = ring.diag.project(&basis);
            for m in 0..modes {
                d[(m, m)] += ring.supplied_scale * q[m];
            }
            d /= w[i];
            if i + 1 < n_r {
                let o = ring.outer.project(&basis) / (w[i] * w[i + 1]).sqrt();
                upper.push(o);
            }
            diag.push(d);
        }
        let mut p = SymBlockTri { diag, upper };
        if cf.radial_only {
            for b in p.diag.iter_mut().chain(p.upper.iter_mut()) {
                let keep = DMatrix::from_diagonal(&b.diagonal());
                *b = keep;
            }
        }
        // symmetrize the diagonal blocks against projection round-off
        for d in p.diag.iter_mut() {
            let s = (&*d + d.transpose()) * 0.5;
            *d = s;
        }
        let decoupled = p.is_decoupled(0.0);
        let free = FreeGrid::matching(grid);
        let mut align = Vec::with_capacity(n_r);
        for &r in &grid.r_nodes {
            let k = (r / grid.dr).round();
            if (k * grid.dr - r).abs() > 1e-9 * grid.dr || k as usize > free.half {
                return Err(Error::Alignment(format!("ring at r = {r} has no aligned node on M_f")));
            }
            align.push(free.half + k as usize);
        }
        let j = grid.r_nodes.iter().map(|&r| cutoff_j(r)).collect();
        Ok(Self { grid: grid.clone(), free, modes, q, basis, p, j, align, decoupled, r_mourre })
    }

    pub fn dim(&self) -> usize {
        self.grid.len() * self.modes
    }

    pub fn free_dim(&self) -> usize {
        self.free.len() * self.modes
    }

    pub fn r(&self, i: usize) -> f64 {
        self.grid.r_nodes[i]
    }

    pub fn p_apply(&self, x: &[C]) -> Vec<C> {
        self.p.apply(x)
    }

    /// `-1/2` second difference on `M_f`, Dirichlet ghosts at `±(N+1)Δr`.
    pub fn pf_apply(&self, x: &[C]) -> Vec<C> {
        let m = self.modes;
        let nf = self.free.len();
        let h2 = 1.0 / (self.grid.dr * self.grid.dr);
        let mut y = vec![C::new(0.0, 0.0); x.len()];
        for i in 0..nf {
            for k in 0..m {
                let mut acc = x[i * m + k] * h2;
                if i > 0 {
                    acc -= x[(i - 1) * m + k] * (0.5 * h2);
                }
                if i + 1 < nf {
                    acc -= x[(i + 1) * m + k] * (0.5 * h2);
                }
                y[i * m + k] = acc;
            }
        }
        y
    }

    /// `P_f` as a block-tridiagonal matrix with diagonal blocks.
    pub fn pf_blocktri(&self) -> SymBlockTri {
        let m = self.modes;
        let h2 = 1.0 / (self.grid.dr * self.grid.dr);
        let nf = self.free.len();
        SymBlockTri {
            diag: vec![DMatrix::identity(m, m) * h2; nf],
            upper: vec![DMatrix::identity(m, m) * (-0.5 * h2); nf - 1],
        }
    }

    pub fn j_apply(&self, xf: &[C]) -> Vec<C> {
        let m = self.modes;
        let mut y = vec![C::new(0.0, 0.0); self.dim()];
        for (i, &f) in self.align.iter().enumerate() {
            for k in 0..m {
                y[i * m + k] = xf[f * m + k] * self.j[i];
            }
        }
        y
    }

    pub fn j_adjoint(&self, x: &[C]) -> Vec<C> {
        let m = self.modes;
        let mut y = vec![C::new(0.0, 0.0); self.free_dim()];
        for (i, &f) in self.align.iter().enumerate() {
            for k in 0..m {
                y[f * m + k] = x[i * m + k] * self.j[i];
            }
        }
        y
    }

    /// `T = P J - J P_f`.
    pub fn t_apply(&self, xf: &[C]) -> Vec<C> {
        let a = self.p_apply(&self.j_apply(xf));
        let b = self.j_apply(&self.pf_apply(xf));
        a.into_iter().zip(b).map(|(u, v)| u - v).collect()
    }

    /// `T* = J* P - P_f J*`.
    pub fn t_adjoint(&self, x: &[C]) -> Vec<C> {
        let a = self.j_adjoint(&self.p_apply(x));
        let b = self.pf_apply(&self.j_adjoint(x));
        a.into_iter().zip(b).map(|(u, v)| u - v).collect()
    }

    /// `F(r) = j(r/R) r` at ring `i`.
    fn mourre_f(&self, i: isize) -> f64 {
        if i < 0 {
            return 0.0;
        }
        let r = self.grid.r_start() + (i + 1) as f64 * self.grid.dr;
        cutoff_j(r / self.r_mourre) * r
    }

    /// Real antisymmetric `B` with `A = B / (2i)`.
    pub fn b_apply(&self, x: &[C]) -> Vec<C> {
        let m = self.modes;
        let n = self.grid.len();
        let dr = self.grid.dr;
        let mut y = vec![C::new(0.0, 0.0); x.len()];
        for i in 0..n {
            let fi = self.mourre_f(i as isize);
            let up = if i + 1 < n { (fi + self.mourre_f(i as isize + 1)) / (2.0 * dr) } else { 0.0 };
            let lo = if i > 0 { (fi + self.mourre_f(i as isize - 1)) / (2.0 * dr) } else { 0.0 };
            for k in 0..m {
                let mut acc = C::new(0.0, 0.0);
                if i + 1 < n {
                    acc += x[(i + 1) * m + k] * up;
                }
                if i > 0 {
                    acc -= x[(i - 1) * m + k] * lo;
                }
                y[i * m + k] = acc;
            }
        }
        y
    }

    /// The conjugate operator `A = (1/2i) G^{-1/2} (F ∂_r + ∂_r F) G^{1/2}`.
    pub fn a_apply(&self, x: &[C]) -> Vec<C> {
        self.b_apply(x).into_iter().map(|v| v * C::new(0.0, -0.5)).collect()
    }

    /// `i[P, A] = (P B - B P) / 2`.
    pub fn commutator_apply(&self, x: &[C]) -> Vec<C> {
        let pb = self.p_apply(&self.b_apply(x));
        let bp = self.b_apply(&self.p_apply(x));
        pb.into_iter().zip(bp).map(|(u, v)| (u - v) * 0.5).collect()
    }

    /// `Q̃ = j Q j`.
    pub fn qtilde_apply(&self, x: &[C]) -> Vec<C> {
        let m = self.modes;
        x.iter()
            .enumerate()
            .map(|(idx, &v)| {
                let i = idx / m;
                v * (self.j[i] * self.j[i] * self.q[idx % m])
            })
            .collect()
    }

    /// Scaled vector of a nodal radial profile `u(r)` in mode `m`.
    pub fn from_profile(&self, m: usize, u: impl Fn(f64) -> C) -> Vec<C> {
        let mut x = vec![C::new(0.0, 0.0); self.dim()];
        for i in 0..self.grid.len() {
            x[i * self.modes + m] = u(self.r(i)) * self.grid.radial_weight(i).sqrt();
        }
        x
    }

    /// Scaled vector on `M_f` of a profile `φ(r)` in mode `m`.
    pub fn free_from_profile(&self, m: usize, phi: impl Fn(f64) -> C) -> Vec<C> {
        let mut x = vec![C::new(0.0, 0.0); self.free_dim()];
        let s = self.grid.dr.sqrt();
        for (i, &r) in self.free.r_nodes.iter().enumerate() {
            x[i * self.modes + m] = phi(r) * s;
        }
        x
    }

    /// Nodal value `c_{i,m}` of mode `m` at ring `i` (inverse of the scaling).
    pub fn nodal(&self, x: &[C], i: usize, m: usize) -> C {
        x[i * self.modes + m] / self.grid.radial_weight(i).sqrt()
    }

    pub fn free_nodal(&self, x: &[C], i: usize, m: usize) -> C {
        x[i * self.modes + m] / self.grid.dr.sqrt()
    }
}

pub fn norm(x: &[C]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn dot(x: &[C], y: &[C]) -> C {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn sub(x: &[C], y: &[C]) -> Vec<C> {
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

pub fn axpy(a: C, x: &[C], y: &mut [C]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CapPolicy;

    fn cone(n: usize, modes: usize) -> ModalSystem {
        let cs = CrossSection::circle(16).unwrap();
        let cf = CoefficientField::exact_cone(n);
        let grid = RadialGrid::build(20.0, 2000, CapPolicy::HalfLineRegular, n, 1.0).unwrap();
        ModalSystem::build(&cs, &cf, &grid, modes, 2.0).unwrap()
    }

    #[test]
    fn n3_constant_mode_tail_vanishes() {
        let s = cone(3, 1);
        let phi = s.free_from_profile(0, |r| C::new((-(r - 10.0).powi(2)).exp(), 0.0));
        let t = s.t_apply(&phi);
        assert!(norm(&t) < 1e-8 * norm(&phi), "{}", norm(&t));
    }

    #[test]
    fn n2_constant_mode_tail_is_inverse_square() {
        let s = cone(2, 1);
        let phi = s.free_from_profile(0, |r| C::new((-(r - 10.0).powi(2)).exp(), 0.0));
        let t = s.t_apply(&phi);
        let jphi = s.j_apply(&phi);
        for i in (0..s.grid.len()).step_by(37) {
            let r = s.r(i);
            let expected = jphi[i] * (-1.0 / (8.0 * r * r));
            // geometric-mean faces give -1/(8r^2) up to O(Δr^2 / r^4)
            assert!((t[i] - expected).norm() <= 1e-4 * expected.norm() + 1e-14, "r={r}");
        }
    }

    #[test]
    fn j_is_isometric_on_the_tail() {
        let s = cone(2, 3);
        let phi = s.free_from_profile(2, |r| C::new(if r > 1.0 { (r * 0.3).sin() } else { 0.0 }, r.cos()));
        let mut phi_tail = phi.clone();
        for (i, &r) in s.free.r_nodes.iter().enumerate() {
            if r <= 1.0 {
                for k in 0..s.modes {
                    phi_tail[i * s.modes + k] = C::new(0.0, 0.0);
                }
            }
        }
        assert!((norm(&s.j_apply(&phi_tail)) - norm(&phi_tail)).abs() < 1e-12 * norm(&phi_tail));
    }

    #[test]
    fn p_matches_radial_closed_form_n3() {
        let s = cone(3, 1);
        let u = |r: f64| (-(r - 5.0f64).powi(2)).exp();
        let x = s.from_profile(0, |r| C::new(u(r), 0.0));
        let y = s.p_apply(&x);
        let mut worst = 0.0f64;
        for i in 100..s.grid.len() - 100 {
            let r = s.r(i);
            let e = (-(r - 5.0f64).powi(2)).exp();
            let d1 = -2.0 * (r - 5.0) * e;
            let d2 = (4.0 * (r - 5.0f64).powi(2) - 2.0) * e;
            let exact = -0.5 * (d2 + 2.0 / r * d1);
            worst = worst.max((s.nodal(&y, i, 0).re - exact).abs());
        }
        assert!(worst < 1e-3, "{worst}");
    }
}
