//! Flux-form stencils of the stiffness form of `P`, generated ring by ring.
//!
//! The quadratic form discretized is
//! `1/2 sum G (a1 |u_r|^2 + 2 a2 u_r u_θ / r + a3 |u_θ|^2 / r^2) + sum G V |u|^2`
//! with radial faces weighted by `sqrt(g_i g_{i+1})`, angular edges at the
//! midpoints `θ_{j+1/2}` and the mixed term on cell corners.

use nalgebra::DMatrix;

use crate::coefficients::CoefficientField;
use crate::cross_section::{AngularStencil, CrossSection};
use crate::error::{Error, Result};
use crate::grid::RadialGrid;

/// Periodic tridiagonal `n x n` matrix: `lo[j] = X[j][j-1]`, `di[j] = X[j][j]`,
/// `up[j] = X[j][j+1]` (indices mod n).
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicTri {
    pub lo: Vec<f64>,
    pub di: Vec<f64>,
    pub up: Vec<f64>,
}

impl PeriodicTri {
    pub fn zeros(n: usize) -> Self {
        Self { lo: vec![0.0; n], di: vec![0.0; n], up: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.di.len()
    }

    pub fn is_empty(&self) -> bool {
        self.di.is_empty()
    }

    /// Adds `c` to entry `(a, b)`; `b` must be `a` or a periodic neighbour.
    pub fn add(&mut self, a: usize, b: usize, c: f64) {
        let n = self.len();
        if a == b {
            self.di[a] += c;
        } else if b == (a + 1) % n {
            self.up[a] += c;
        } else if b == (a + n - 1) % n {
            self.lo[a] += c;
        } else {
            panic!("entry ({a}, {b}) outside the periodic tridiagonal pattern");
        }
    }

    /// Iterates over `(row, col, value)`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.len();
        (0..n).flat_map(move |j| {
            [((j + n - 1) % n, self.lo[j]), (j, self.di[j]), ((j + 1) % n, self.up[j])]
                .into_iter()
                .map(move |(c, v)| (j, c, v))
        })
    }

    /// `E^T X E` for a column basis `E` (`n x m`).
    pub fn project(&self, e: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.len();
        let m = e.ncols();
        let mut xe = DMatrix::zeros(n, m);
        for j in 0..n {
            let jm = (j + n - 1) % n;
            let jp = (j + 1) % n;
            for c in 0..m {
                xe[(j, c)] = self.lo[j] * e[(jm, c)] + self.di[j] * e[(j, c)] + self.up[j] * e[(jp, c)];
            }
        }
        e.transpose() * xe
    }
}

/// Stiffness blocks of one radial ring.
#[derive(Debug, Clone)]
pub struct Ring {
    /// Within-ring block without the supplied angular part.
    pub diag: PeriodicTri,
    /// Multiplier of the cross-section stiffness added to `diag`
    /// (used only for supplied cross-sections).
    pub supplied_scale: f64,
    /// Coupling block to ring `i + 1` (row: ring `i`, column: ring `i + 1`).
    pub outer: PeriodicTri,
}

/// Produces rings on demand.
pub struct StencilBuilder<'a> {
    pub cs: &'a CrossSection,
    pub cf: &'a CoefficientField,
    pub grid: &'a RadialGrid,
    dtheta: f64,
}

impl<'a> StencilBuilder<'a> {
    pub fn new(cs: &'a CrossSection, cf: &'a CoefficientField, grid: &'a RadialGrid) -> Result<Self> {
        if cf.n != grid.n {
            return Err(Error::Assembly(format!(
                "coefficient dimension {} differs from grid dimension {}",
                cf.n, grid.n
            )));
        }
        if cs.len() < 3 {
            return Err(Error::Assembly("need at least three angular nodes".into()));
        }
        if matches!(cs.stencil, AngularStencil::Supplied) && !cf.radial_only {
            return Err(Error::Assembly(
                "supplied cross-sections require θ-independent coefficients with a2 = 0".into(),
            ));
        }
        let dtheta = cs.quad_weights[0];
        Ok(Self { cs, cf, grid, dtheta })
    }

    fn r_at(&self, k: f64) -> f64 {
        self.grid.r_start() + (k + 1.0) * self.grid.dr
    }

    /// Radial-face contribution `(i, i+1)` for faces `i = -1..=N-1`. Returns
    /// the per-θ weights `c_j` of `c_j (u_{i+1,j} - u_{i,j})^2`.
    fn radial_face(&self, i: isize) -> Vec<f64> {
        let fw = self.grid.face_weight(i);
        let rf = self.r_at(i as f64 + 0.5);
        let dr = self.grid.dr;
        (0..self.cs.len())
            .map(|j| {
                let t = self.cs.theta_nodes[j];
                0.5 * fw * self.cs.h_density[j] * self.cs.quad_weights[j] * (self.cf.a1)(rf, t) / dr
            })
            .collect()
    }

    pub fn ring(&self, i: usize) -> Ring {
        let nt = self.cs.len();
        let grid = self.grid;
        let dr = grid.dr;
        let r = grid.r_nodes[i];
        let gi = grid.g(r);
        let mut diag = PeriodicTri::zeros(nt);
        let mut outer = PeriodicTri::zeros(nt);

        // radial faces on both sides; missing neighbours are Dirichlet ghosts
        let inner = self.radial_face(i as isize - 1);
        let outer_face = self.radial_face(i as isize);
        for j in 0..nt {
            diag.add(j, j, inner[j] + outer_face[j]);
            if i + 1 < grid.len() {
                outer.add(j, j, -outer_face[j]);
            }
        }

        // angular edges
        let mut supplied_scale = 0.0;
        match &self.cs.stencil {
            AngularStencil::Periodic { edge_density, edge_tensor } => {
                for j in 0..nt {
                    let k = (j + 1) % nt;
                    let te = self.cs.theta_nodes[j] + 0.5 * self.dtheta;
                    let c = 0.5 * gi * dr / (r * r) * edge_density[j] * edge_tensor[j] * (self.cf.a3_factor)(r, te)
                        / self.dtheta;
                    diag.add(j, j, c);
                    diag.add(k, k, c);
                    diag.add(j, k, -c);
                    diag.add(k, j, -c);
                }
            }
            AngularStencil::Supplied => {
                supplied_scale = gi * dr / (r * r) * (self.cf.a3_factor)(r, 0.0);
            }
        }

        // potential
        for j in 0..nt {
            let t = self.cs.theta_nodes[j];
            diag.add(j, j, gi * dr * self.cs.h_density[j] * self.cs.quad_weights[j] * self.cf.v(r, t));
        }

        // mixed term on the corners between ring i and ring i+1, counted once per
        // corner; its within-ring parts are split between the two rings below.
        if !self.cf.radial_only {
            for (ring_off, ci) in [(0isize, i as isize - 1), (1, i as isize)] {
                if ci < 0 || ci as usize + 1 >= grid.len() {
                    continue;
                }
                self.add_corners(ci as usize, ring_off, &mut diag, &mut outer);
            }
        }
        Ring { diag, supplied_scale, outer }
    }

    /// Adds the corner terms of the cell strip between rings `ci` and `ci + 1`.
    /// `side = 1` means the current ring is `ci` (inner side), `0` means it is `ci + 1`.
    fn add_corners(&self, ci: usize, side: isize, diag: &mut PeriodicTri, outer: &mut PeriodicTri) {
        let nt = self.cs.len();
        let dr = self.grid.dr;
        let fw = self.grid.face_weight(ci as isize);
        let rc = self.grid.r_nodes[ci] + 0.5 * dr;
        for j in 0..nt {
            let k = (j + 1) % nt;
            let tc = self.cs.theta_nodes[j] + 0.5 * self.dtheta;
            let hc = match &self.cs.stencil {
                AngularStencil::Periodic { edge_density, .. } => edge_density[j],
                AngularStencil::Supplied => 1.0,
            };
            let w = fw * hc * dr * self.dtheta * (self.cf.a2)(rc, tc) / rc;
            if w == 0.0 {
                continue;
            }
            // local nodes: 0=(ci,j) 1=(ci,k) 2=(ci+1,j) 3=(ci+1,k)
            let alpha = [-1.0, -1.0, 1.0, 1.0].map(|v| v / (2.0 * dr));
            let beta = [-1.0, 1.0, -1.0, 1.0].map(|v| v / (2.0 * self.dtheta));
            let ring_of = [0, 0, 1, 1];
            let theta_of = [j, k, j, k];
            for a in 0..4 {
                for b in 0..4 {
                    let c = 0.5 * w * (alpha[a] * beta[b] + beta[a] * alpha[b]);
                    if side == 1 {
                        // current ring is the inner ring ci
                        match (ring_of[a], ring_of[b]) {
                            (0, 0) => diag.add(theta_of[a], theta_of[b], c),
                            (0, 1) => outer.add(theta_of[a], theta_of[b], c),
                            _ => {}
                        }
                    } else if (ring_of[a], ring_of[b]) == (1, 1) {
                        diag.add(theta_of[a], theta_of[b], c);
                    }
                }
            }
        }
    }
}
