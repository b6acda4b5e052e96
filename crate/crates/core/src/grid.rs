//! Radial grids for `M` (the conic end down to the cap) and for the
//! reference space `M_f = R x dM`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Treatment of the inner end of `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum CapPolicy {
    /// The cap degenerates to the cone tip `r -> 0`. The flux weight of the
    /// face touching the tip is `sqrt(g(0) g(Δr)) = 0` for `n >= 2`, which is
    /// the discrete regularity (Friedrichs) condition in every mode.
    HalfLineRegular,
    /// Homogeneous Dirichlet condition at `r0`.
    DirichletAtR0 { r0: f64 },
}

impl Default for CapPolicy {
    fn default() -> Self {
        CapPolicy::HalfLineRegular
    }
}

/// Largest admissible `k Δr`.
pub const RESOLUTION_LIMIT: f64 = 0.5;

/// Uniform radial grid on `M`: nodes `r_start + i Δr`, `i = 1..=N`, ending at
/// `r_max`, with a Dirichlet ghost at `r_max + Δr`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    pub cap: CapPolicy,
    pub n: usize,
    pub r_max: f64,
    pub dr: f64,
    pub r_nodes: Vec<f64>,
}

impl RadialGrid {
    /// `k_max` is the largest wavenumber the grid must resolve.
    pub fn build(r_max: f64, node_count: usize, cap: CapPolicy, n: usize, k_max: f64) -> Result<Self> {
        let r_start = match cap {
            CapPolicy::HalfLineRegular => 0.0,
            CapPolicy::DirichletAtR0 { r0 } => {
                if !(r0 > 0.0 && r0 < 0.5) {
                    return Err(Error::Configuration(format!(
                        "Dirichlet radius r0 = {r0} must lie in (0, 1/2)"
                    )));
                }
                r0
            }
        };
        if node_count == 0 {
            return Err(Error::Configuration("node_count must be positive".into()));
        }
        let dr = (r_max - r_start) / node_count as f64;
        if k_max * dr > RESOLUTION_LIMIT {
            return Err(Error::Resolution(format!(
                "k Δr = {:.3} exceeds {RESOLUTION_LIMIT} (k = {k_max}, Δr = {dr})",
                k_max * dr
            )));
        }
        if r_max < 8.0 || node_count < 64 {
            return Err(Error::Configuration(format!(
                "need r_max >= 8 and node_count >= 64 (got {r_max}, {node_count})"
            )));
        }
        if n < 2 {
            return Err(Error::Configuration(format!("dimension n = {n} must be at least 2")));
        }
        let r_nodes = (1..=node_count).map(|i| r_start + i as f64 * dr).collect();
        Ok(Self { cap, n, r_max, dr, r_nodes })
    }

    /// Grid with spacing `dr` on `(0, r_max]`, bypassing the desk-scale floor.
    pub fn with_spacing(r_max: f64, dr: f64, n: usize) -> Result<Self> {
        let count = (r_max / dr).round() as usize;
        if count < 2 || (count as f64 * dr - r_max).abs() > 1e-9 * r_max {
            return Err(Error::Configuration(format!("r_max = {r_max} is not a multiple of Δr = {dr}")));
        }
        if n < 2 {
            return Err(Error::Configuration(format!("dimension n = {n} must be at least 2")));
        }
        Ok(Self {
            cap: CapPolicy::HalfLineRegular,
            n,
            r_max,
            dr,
            r_nodes: (1..=count).map(|i| i as f64 * dr).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.r_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_nodes.is_empty()
    }

    /// Same spacing and cap, outer radius at least `r_max` (never shrinks).
    pub fn extended(&self, r_max: f64) -> Self {
        if r_max <= self.r_max {
            return self.clone();
        }
        let start = self.r_start();
        let count = ((r_max - start) / self.dr).ceil() as usize;
        let r_nodes: Vec<f64> = (1..=count).map(|i| start + i as f64 * self.dr).collect();
        Self { cap: self.cap, n: self.n, r_max: *r_nodes.last().unwrap(), dr: self.dr, r_nodes }
    }

    pub fn r_start(&self) -> f64 {
        self.r_nodes[0] - self.dr
    }

    /// Radial density `g(r) = r^{n-1}`; `G = g H` on the whole end.
    pub fn g(&self, r: f64) -> f64 {
        if r <= 0.0 {
            0.0
        } else {
            r.powi(self.n as i32 - 1)
        }
    }

    /// Radial measure weight `g(r_i) Δr` of node `i`.
    pub fn radial_weight(&self, i: usize) -> f64 {
        self.g(self.r_nodes[i]) * self.dr
    }

    /// Flux weight `sqrt(g(r_i) g(r_{i+1}))` of the face between node `i`
    /// and node `i + 1`; `i = -1` is the inner face, `i = N - 1` the outer one.
    pub fn face_weight(&self, i: isize) -> f64 {
        let r = |k: isize| self.r_start() + (k + 1) as f64 * self.dr;
        (self.g(r(i)) * self.g(r(i + 1))).sqrt()
    }

    /// Node index with the largest radius not exceeding `r`.
    pub fn index_at(&self, r: f64) -> usize {
        let k = ((r - self.r_start()) / self.dr).floor() as isize - 1;
        k.clamp(0, self.len() as isize - 1) as usize
    }
}

/// Grid on `M_f`: nodes `i Δr` for `i = -N..=N`, Dirichlet ghosts at `±(N+1)Δr`.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeGrid {
    pub half: usize,
    pub dr: f64,
    pub r_nodes: Vec<f64>,
}

impl FreeGrid {
    pub fn matching(grid: &RadialGrid) -> Self {
        let half = (grid.r_max / grid.dr).round() as usize;
        let r_nodes = (-(half as isize)..=half as isize).map(|i| i as f64 * grid.dr).collect();
        Self { half, dr: grid.dr, r_nodes }
    }

    pub fn len(&self) -> usize {
        self.r_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_nodes.is_empty()
    }

    pub fn r_max(&self) -> f64 {
        self.half as f64 * self.dr
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_scale_grid() {
        let g = RadialGrid::build(40.0, 2000, CapPolicy::HalfLineRegular, 2, 25.0).unwrap();
        assert!((g.dr - 0.02).abs() < 1e-15);
        assert_eq!(*g.r_nodes.last().unwrap(), 40.0);
        assert!(g.r_nodes.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn coarse_grid_fails_resolution() {
        let e = RadialGrid::build(40.0, 8, CapPolicy::HalfLineRegular, 2, 3.0).unwrap_err();
        assert!(matches!(e, Error::Resolution(_)));
    }

    #[test]
    fn tail_weight_is_r_to_n_minus_one() {
        let g = RadialGrid::build(40.0, 2000, CapPolicy::HalfLineRegular, 3, 1.0).unwrap();
        let i = g.index_at(2.0);
        assert!((g.r_nodes[i] - 2.0).abs() < 1e-12);
        assert!((g.radial_weight(i) - 4.0 * g.dr).abs() < 1e-12 * 4.0 * g.dr);
        assert_eq!(g.face_weight(-1), 0.0);
    }

    #[test]
    fn free_grid_aligns_with_tail() {
        let g = RadialGrid::build(10.0, 500, CapPolicy::HalfLineRegular, 2, 1.0).unwrap();
        let f = FreeGrid::matching(&g);
        assert_eq!(f.len(), 1001);
        assert!((f.r_nodes[f.half + 10] - g.r_nodes[9]).abs() < 1e-12);
    }
}
