//! Full-grid sparse operators on the nodal `(r, θ)` grid.
//!
//! Matrices act on scaled vectors `ũ = μ^{1/2} u`, where `μ` is the measure
//! weight of a node (`g(r) Δr H w` on `M`, `Δr H w` on `M_f`), so operators
//! self-adjoint for their measure are symmetric matrices.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use sprs::{CsMat, TriMat};

use crate::coefficients::CoefficientField;
use crate::cross_section::CrossSection;
use crate::cutoff::cutoff_j;
use crate::error::{Error, Result};
use crate::grid::{FreeGrid, RadialGrid};
use crate::stencil::StencilBuilder;

type C = Complex64;

#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub theta_count: usize,
    pub r_nodes: Vec<f64>,
    pub free: FreeGrid,
    /// Measure weight per node of `M` (ring-major).
    pub mass: Vec<f64>,
    pub mass_f: Vec<f64>,
    pub p: CsMat<f64>,
    pub p_f: CsMat<f64>,
    pub j: CsMat<f64>,
    pub t: CsMat<f64>,
    pub q_tilde: CsMat<f64>,
    /// Real antisymmetric `B`; the conjugate operator is `A = B / (2i)`.
    pub b: CsMat<f64>,
    pub r_mourre: f64,
}

fn csr(t: TriMat<f64>) -> CsMat<f64> {
    t.to_csr()
}

/// Symmetric angular operator `(wH)^{-1/2} K (wH)^{-1/2}` of the cross-section.
fn scaled_q(cs: &CrossSection) -> DMatrix<f64> {
    let mass = cs.mass();
    DMatrix::from_fn(cs.len(), cs.len(), |a, b| cs.stiffness[(a, b)] / (mass[a] * mass[b]).sqrt())
}

impl OperatorSet {
    pub fn assemble(cs: &CrossSection, cf: &CoefficientField, grid: &RadialGrid, r_mourre: f64) -> Result<Self> {
        if r_mourre < 1.0 {
            return Err(Error::Conjugate(format!("R = {r_mourre} must be at least 1")));
        }
        if cf.v1_support > 0.0 && 0.5 * r_mourre < cf.v1_support {
            return Err(Error::Conjugate(format!(
                "j(r/R) V₁ must vanish: R/2 = {} is inside the V₁ support (r <= {})",
                0.5 * r_mourre,
                cf.v1_support
            )));
        }
        let builder = StencilBuilder::new(cs, cf, grid)?;
        let nt = cs.len();
        let nr = grid.len();
        let dim = nr * nt;
        let csm = cs.mass();
        let mass: Vec<f64> = (0..dim).map(|a| grid.radial_weight(a / nt) * csm[a % nt]).collect();
        let sq = scaled_q(cs);

        let mut p = TriMat::new((dim, dim));
        for i in 0..nr {
            let ring = builder.ring(i);
            let at = |j: usize| i * nt + j;
            for (a, b, v) in ring.diag.entries() {
                if v != 0.0 {
                    p.add_triplet(at(a), at(b), v / (mass[at(a)] * mass[at(b)]).sqrt());
                }
            }
            if ring.supplied_scale != 0.0 {
                let s = ring.supplied_scale / grid.radial_weight(i);
                for a in 0..nt {
                    for b in 0..nt {
                        if sq[(a, b)] != 0.0 {
                            p.add_triplet(at(a), at(b), s * sq[(a, b)]);
                        }
                    }
                }
            }
            if i + 1 < nr {
                let nx = |j: usize| (i + 1) * nt + j;
                for (a, b, v) in ring.outer.entries() {
                    if v != 0.0 {
                        let w = v / (mass[at(a)] * mass[nx(b)]).sqrt();
                        p.add_triplet(at(a), nx(b), w);
                        p.add_triplet(nx(b), at(a), w);
                    }
                }
            }
        }
        let p = csr(p);

        let free = FreeGrid::matching(grid);
        let nf = free.len();
        let dim_f = nf * nt;
        let mass_f: Vec<f64> = (0..dim_f).map(|a| grid.dr * csm[a % nt]).collect();
        let h2 = 1.0 / (grid.dr * grid.dr);
        let mut pf = TriMat::new((dim_f, dim_f));
        for f in 0..nf {
            for j in 0..nt {
                let a = f * nt + j;
                pf.add_triplet(a, a, h2);
                if f + 1 < nf {
                    pf.add_triplet(a, a + nt, -0.5 * h2);
                    pf.add_triplet(a + nt, a, -0.5 * h2);
                }
            }
        }
        let p_f = csr(pf);

        let mut jm = TriMat::new((dim, dim_f));
        let mut qt = TriMat::new((dim, dim));
        for (i, &r) in grid.r_nodes.iter().enumerate() {
            let k = (r / grid.dr).round();
            if (k * grid.dr - r).abs() > 1e-9 * grid.dr || k as usize > free.half {
                return Err(Error::Alignment(format!("ring at r = {r} has no aligned node on M_f")));
            }
            let f = free.half + k as usize;
            let jr = cutoff_j(r);
            if jr == 0.0 {
                continue;
            }
            for a in 0..nt {
                jm.add_triplet(i * nt + a, f * nt + a, jr);
                for b in 0..nt {
                    if sq[(a, b)] != 0.0 {
                        qt.add_triplet(i * nt + a, i * nt + b, jr * jr * sq[(a, b)]);
                    }
                }
            }
        }
        let j = csr(jm);
        let q_tilde = csr(qt);
        let pj = &p * &j;
        let jpf = &j * &p_f;
        let t = &pj - &jpf;

        let fr = |i: isize| {
            let r = grid.r_start() + (i + 1) as f64 * grid.dr;
            if i < 0 { 0.0 } else { cutoff_j(r / r_mourre) * r }
        };
        let mut bm = TriMat::new((dim, dim));
        for i in 0..nr.saturating_sub(1) {
            let c = (fr(i as isize) + fr(i as isize + 1)) / (2.0 * grid.dr);
            if c == 0.0 {
                continue;
            }
            for a in 0..nt {
                bm.add_triplet(i * nt + a, (i + 1) * nt + a, c);
                bm.add_triplet((i + 1) * nt + a, i * nt + a, -c);
            }
        }
        let b = csr(bm);
        Ok(Self {
            theta_count: nt,
            r_nodes: grid.r_nodes.clone(),
            free,
            mass,
            mass_f,
            p,
            p_f,
            j,
            t,
            q_tilde,
            b,
            r_mourre,
        })
    }

    pub fn dim(&self) -> usize {
        self.mass.len()
    }

    pub fn free_dim(&self) -> usize {
        self.mass_f.len()
    }

    /// Hermiticity defects of `P`, `P_f`, `Q̃` and `A`.
    pub fn hermiticity_defects(&self) -> [(&'static str, f64); 4] {
        [
            ("P", symmetry_defect(&self.p, 1.0)),
            ("P_f", symmetry_defect(&self.p_f, 1.0)),
            ("Q_tilde", symmetry_defect(&self.q_tilde, 1.0)),
            ("A", symmetry_defect(&self.b, -1.0)),
        ]
    }

    /// `τ(r_i)`: Frobenius norm of the rows of `T` belonging to ring `i`.
    pub fn tau_profile(&self) -> Vec<(f64, f64)> {
        let nt = self.theta_count;
        let mut acc = vec![0.0; self.r_nodes.len()];
        for (row, vec) in self.t.outer_iterator().enumerate() {
            acc[row / nt] += vec.iter().map(|(_, v)| v * v).sum::<f64>();
        }
        self.r_nodes.iter().zip(acc).map(|(&r, s)| (r, s.sqrt())).collect()
    }

    /// Scaled vector of nodal values `u(r_i, θ_j)` on `M`.
    pub fn scale(&self, u: &[C]) -> Vec<C> {
        u.iter().zip(&self.mass).map(|(v, m)| v * m.sqrt()).collect()
    }

    pub fn scale_free(&self, u: &[C]) -> Vec<C> {
        u.iter().zip(&self.mass_f).map(|(v, m)| v * m.sqrt()).collect()
    }

    pub fn unscale(&self, u: &[C]) -> Vec<C> {
        u.iter().zip(&self.mass).map(|(v, m)| v / m.sqrt()).collect()
    }

    /// Writes a named operator as sparse triplets (`A` is written as `B/(2i)`).
    pub fn write_triplets(&self, name: &str, out: &mut impl Write) -> Result<()> {
        let (m, f): (&CsMat<f64>, C) = match name {
            "P" => (&self.p, C::new(1.0, 0.0)),
            "P_f" => (&self.p_f, C::new(1.0, 0.0)),
            "J" => (&self.j, C::new(1.0, 0.0)),
            "T" => (&self.t, C::new(1.0, 0.0)),
            "Q_tilde" => (&self.q_tilde, C::new(1.0, 0.0)),
            "A" => (&self.b, C::new(0.0, -0.5)),
            _ => return Err(Error::Configuration(format!("unknown operator {name}"))),
        };
        write_triplets(m, f, out)
    }
}

/// Header `rows cols nnz`, then one `i j re im` line per stored entry.
pub fn write_triplets(m: &CsMat<f64>, factor: C, out: &mut impl Write) -> Result<()> {
    writeln!(out, "{} {} {}", m.rows(), m.cols(), m.nnz())?;
    for (v, (i, j)) in m.iter() {
        let z = factor * v;
        writeln!(out, "{i} {j} {:e} {:e}", z.re, z.im)?;
    }
    Ok(())
}

/// `max|X - s Xᵀ| / max|X|`.
pub fn symmetry_defect(m: &CsMat<f64>, s: f64) -> f64 {
    let scale = m.data().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let mt = m.transpose_view().to_csr();
    let mut worst = 0.0f64;
    for (v, (i, j)) in m.iter() {
        let w = mt.get(i, j).copied().unwrap_or(0.0);
        worst = worst.max((v - s * w).abs());
    }
    for (w, (i, j)) in mt.iter() {
        if m.get(i, j).is_none() {
            worst = worst.max(w.abs());
        }
    }
    worst / scale
}

/// `y = X x` for complex `x`.
pub fn apply(m: &CsMat<f64>, x: &[C]) -> Vec<C> {
    let mut y = vec![C::new(0.0, 0.0); m.rows()];
    for (row, vec) in m.outer_iterator().enumerate() {
        y[row] = vec.iter().map(|(c, v)| x[c] * v).sum();
    }
    y
}

/// `y = Xᵀ x`.
pub fn apply_transpose(m: &CsMat<f64>, x: &[C]) -> Vec<C> {
    let mut y = vec![C::new(0.0, 0.0); m.cols()];
    for (row, vec) in m.outer_iterator().enumerate() {
        for (c, v) in vec.iter() {
            y[c] += x[row] * v;
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{Preset, TailParams};
    use crate::modal::ModalSystem;

    fn set(cf: &CoefficientField, n: usize, r_max: f64, dr: f64, nt: usize) -> (CrossSection, OperatorSet) {
        let cs = CrossSection::circle(nt).unwrap();
        let grid = RadialGrid::with_spacing(r_max, dr, n).unwrap();
        let ops = OperatorSet::assemble(&cs, cf, &grid, 4.0).unwrap();
        (cs, ops)
    }

    fn coupled() -> CoefficientField {
        let p = TailParams { a1_amp: 0.3, a2_amp: 0.2, v_amp: 0.4, ..TailParams::default() };
        CoefficientField::from_preset(&Preset::TailPerturbation(p), 2)
    }

    fn nodal(ops: &OperatorSet, u: impl Fn(f64, f64) -> C, theta: &[f64]) -> Vec<C> {
        ops.r_nodes.iter().flat_map(|&r| theta.iter().map(move |&t| (r, t))).map(|(r, t)| u(r, t)).collect()
    }

    #[test]
    fn square_operators_are_hermitian() {
        for cf in [CoefficientField::exact_cone(2), coupled()] {
            let (_, ops) = set(&cf, 2, 12.0, 0.05, 16);
            for (name, d) in ops.hermiticity_defects() {
                assert!(d <= 1e-13, "{name}: {d}");
            }
        }
    }

    #[test]
    fn potential_only_shifts_the_diagonal() {
        let cone = CoefficientField::exact_cone(2);
        let well = CoefficientField::from_preset(&Preset::Well { depth: 5.0 }, 2);
        let (cs, a) = set(&cone, 2, 8.0, 0.05, 8);
        let (_, b) = set(&well, 2, 8.0, 0.05, 8);
        let diff = &b.p - &a.p;
        for (v, (i, j)) in diff.iter() {
            if *v != 0.0 {
                assert_eq!(i, j);
                let r = a.r_nodes[i / cs.len()];
                assert!((v + 5.0 * (-r * r).exp()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn radial_closed_form_for_n3() {
        let cf = CoefficientField::exact_cone(3);
        let (cs, ops) = set(&cf, 3, 12.0, 0.02, 8);
        let u = nodal(&ops, |r, _| C::new((-(r - 5.0f64).powi(2)).exp(), 0.0), &cs.theta_nodes);
        let pu = ops.unscale(&apply(&ops.p, &ops.scale(&u)));
        let mut worst = 0.0f64;
        for (a, &r) in ops.r_nodes.iter().enumerate() {
            let x = r - 5.0;
            let e = (-x * x).exp();
            let (d1, d2) = (-2.0 * x * e, (4.0 * x * x - 2.0) * e);
            let exact = -0.5 * (d2 + 2.0 / r * d1);
            worst = worst.max((pu[a * cs.len()].re - exact).abs());
        }
        assert!(worst < 2e-3, "{worst}");
    }

    #[test]
    fn j_is_isometric_and_local() {
        let (cs, ops) = set(&CoefficientField::exact_cone(2), 2, 10.0, 0.05, 8);
        let nt = cs.len();
        let phi: Vec<C> = (0..ops.free_dim())
            .map(|a| {
                let r = ops.free.r_nodes[a / nt];
                C::new(if r > 1.0 && r < 9.0 { (r * 0.7 + a as f64).sin() } else { 0.0 }, 0.0)
            })
            .collect();
        let n0: f64 = phi.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let n1: f64 = apply(&ops.j, &phi).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        assert!((n0 - n1).abs() < 1e-12 * n0);
        let near: Vec<C> = (0..ops.free_dim())
            .map(|a| C::new(if ops.free.r_nodes[a / nt] < 0.5 { 1.0 } else { 0.0 }, 0.0))
            .collect();
        assert!(apply(&ops.j, &near).iter().all(|v| v.norm() == 0.0));
        // J*J = j² on aligned nodes
        let jtj = &ops.j.transpose_view().to_csr() * &ops.j;
        for (v, (a, b)) in jtj.iter() {
            assert_eq!(a, b);
            let jr = cutoff_j(ops.free.r_nodes[a / nt]);
            assert!((v - jr * jr).abs() < 1e-15);
        }
    }

    #[test]
    fn t_on_the_tail_of_exact_cones() {
        for n in [2usize, 3] {
            let (cs, ops) = set(&CoefficientField::exact_cone(n), n, 20.0, 0.02, 8);
            let nt = cs.len();
            let prof = |r: f64| if r > 2.0 { (-(r - 10.0f64).powi(2) / 4.0).exp() } else { 0.0 };
            let phi: Vec<C> = (0..ops.free_dim()).map(|a| C::new(prof(ops.free.r_nodes[a / nt]), 0.0)).collect();
            let tphi = apply(&ops.t, &phi);
            let jphi = apply(&ops.j, &phi);
            let mut worst = 0.0f64;
            for (a, v) in tphi.iter().enumerate() {
                let r = ops.r_nodes[a / nt];
                let expected = if n == 2 { -jphi[a] / (8.0 * r * r) } else { C::new(0.0, 0.0) };
                worst = worst.max((v - expected).norm());
            }
            assert!(worst < 1e-6, "n={n}: {worst}");
        }
    }

    #[test]
    fn qtilde_and_conjugate_operator() {
        let (cs, ops) = set(&CoefficientField::exact_cone(2), 2, 12.0, 0.05, 16);
        let nt = cs.len();
        let flat: Vec<C> = (0..ops.dim()).map(|a| C::new(ops.r_nodes[a / nt].sin(), 0.0)).collect();
        assert!(apply(&ops.q_tilde, &ops.scale(&flat)).iter().all(|v| v.norm() < 1e-12));
        let m = 3;
        let u: Vec<C> = (0..ops.dim())
            .map(|a| {
                let r = ops.r_nodes[a / nt];
                C::new(if r >= 1.0 { cs.modes[(a % nt, m)] * r.cos() } else { 0.0 }, 0.0)
            })
            .collect();
        let qu = ops.unscale(&apply(&ops.q_tilde, &ops.scale(&u)));
        for (x, y) in qu.iter().zip(&u) {
            assert!((x - y * cs.eigenvalues[m]).norm() < 1e-10);
        }
        // A vanishes on r <= R/2
        let inner: Vec<C> = (0..ops.dim())
            .map(|a| C::new(if ops.r_nodes[a / nt] <= 1.9 { 1.0 } else { 0.0 }, 0.0))
            .collect();
        assert!(apply(&ops.b, &inner).iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn conjugate_operator_on_a_plane_wave() {
        let (cs, ops) = set(&CoefficientField::exact_cone(2), 2, 60.0, 0.01, 4);
        let nt = cs.len();
        let k = 2.0;
        let u: Vec<C> = (0..ops.dim())
            .map(|a| {
                let r = ops.r_nodes[a / nt];
                C::from_polar((-(r - 30.0f64).powi(2) / 50.0).exp(), k * r)
            })
            .collect();
        // scaled vectors carry the r^{(n-1)/2} weight, so the oracle is on ũ
        let au: Vec<C> = apply(&ops.b, &u).into_iter().map(|v| v * C::new(0.0, -0.5)).collect();
        let lhs: C = u.iter().zip(&au).map(|(x, y)| x.conj() * y).sum();
        let rhs: f64 = u.iter().enumerate().map(|(a, x)| k * ops.r_nodes[a / nt] * x.norm_sqr()).sum();
        assert!((lhs.re - rhs).abs() < 1e-2 * rhs, "{lhs} vs {rhs}");
        assert!(lhs.im.abs() < 1e-10 * rhs);
    }

    #[test]
    fn modal_projection_matches_modal_system() {
        let cf = CoefficientField::exact_cone(2);
        let (cs, ops) = set(&cf, 2, 6.0, 0.05, 16);
        let grid = RadialGrid::with_spacing(6.0, 0.05, 2).unwrap();
        let sys = ModalSystem::build(&cs, &cf, &grid, 5, 4.0).unwrap();
        let nt = cs.len();
        let mass = cs.mass();
        for m in 0..5 {
            let x: Vec<C> = (0..sys.dim()).map(|a| C::new(if a % 5 == m { (a as f64 * 0.1).sin() } else { 0.0 }, 0.0)).collect();
            let y = sys.p_apply(&x);
            // lift to the nodal grid: ũ_{i,j} = x_{i,m} (w H)^{1/2}_j e_m(θ_j)
            let lift: Vec<C> = (0..ops.dim())
                .map(|a| x[(a / nt) * 5 + m] * mass[a % nt].sqrt() * cs.modes[(a % nt, m)])
                .collect();
            let py = apply(&ops.p, &lift);
            for i in 0..grid.len() {
                let proj: C = (0..nt).map(|j| py[i * nt + j] * mass[j].sqrt() * cs.modes[(j, m)]).sum();
                assert!((proj - y[i * 5 + m]).norm() < 1e-9, "m={m} i={i}");
            }
        }
    }

    #[test]
    fn second_order_refinement() {
        let cf = coupled();
        let state = |r: f64, t: f64| C::new((-(r - 4.0f64).powi(2)).exp() * (1.0 + 0.5 * t.cos()), 0.0);
        let run = |dr: f64| {
            let (cs, ops) = set(&cf, 2, 9.0, dr, 16);
            let u = nodal(&ops, state, &cs.theta_nodes);
            let pu = ops.unscale(&apply(&ops.p, &ops.scale(&u)));
            let nt = cs.len();
            // samples at r = 2, 3, ..., 7 (shared by all grids)
            (2..=7)
                .flat_map(|k| {
                    let i = ops.r_nodes.iter().position(|&r| (r - k as f64).abs() < 1e-9).unwrap();
                    (0..nt).map(move |j| i * nt + j).collect::<Vec<_>>()
                })
                .map(|a| pu[a])
                .collect::<Vec<_>>()
        };
        let (a, b, c) = (run(0.1), run(0.05), run(0.025));
        let err = |x: &[C]| x.iter().zip(&c).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
        let order = (err(&a) / err(&b)).log2();
        assert!(order >= 1.9, "order {order}");
    }

    #[test]
    fn triplet_export() {
        let (_, ops) = set(&CoefficientField::exact_cone(2), 2, 8.0, 0.5, 4);
        let mut buf = Vec::new();
        ops.write_triplets("A", &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let head: Vec<usize> = lines.next().unwrap().split(' ').map(|v| v.parse().unwrap()).collect();
        assert_eq!(head, vec![ops.dim(), ops.dim(), ops.b.nnz()]);
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), head[2]);
        let f: Vec<f64> = rows[0].split(' ').skip(2).map(|v| v.parse().unwrap()).collect();
        assert_eq!(f[0], 0.0);
        assert!(ops.write_triplets("X", &mut Vec::new()).is_err());
    }
}
