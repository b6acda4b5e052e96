//! The boundary at infinity `dM` (a circle here) with density `H`, tensor `h`
//! and the operator `Q = -1/2 H^{-1} d/dθ H h d/dθ`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// How the angular stiffness was obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum AngularStencil {
    /// Periodic nearest-neighbour flux form on a uniform circle; `edge_density[j]`
    /// is `H` at `θ_{j+1/2}` and `edge_tensor[j]` is `h` there.
    Periodic {
        edge_density: Vec<f64>,
        edge_tensor: Vec<f64>,
    },
    /// A user-supplied `Q` matrix; the angular stiffness is `diag(w H) Q`.
    Supplied,
}

#[derive(Debug, Clone)]
pub struct CrossSection {
    pub theta_nodes: Vec<f64>,
    pub quad_weights: Vec<f64>,
    pub h_density: Vec<f64>,
    pub h_tensor: Vec<f64>,
    /// Matrix of `Q` acting on nodal values.
    pub q_matrix: DMatrix<f64>,
    /// `diag(w H) Q`, symmetric.
    pub stiffness: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    /// Columns are the eigenvectors, orthonormal for `sum_j w_j H_j u_j v_j`.
    pub modes: DMatrix<f64>,
    pub stencil: AngularStencil,
}

impl CrossSection {
    /// Uniform periodic grid of `theta_count` nodes with density and tensor rules.
    pub fn build(
        theta_count: usize,
        density: impl Fn(f64) -> f64,
        tensor: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        if theta_count < 4 {
            return Err(Error::Geometry(format!(
                "theta_count must be at least 4, got {theta_count}"
            )));
        }
        let n = theta_count;
        let dtheta = 2.0 * PI / n as f64;
        let theta_nodes: Vec<f64> = (0..n).map(|j| j as f64 * dtheta).collect();
        let quad_weights = vec![dtheta; n];
        let h_density: Vec<f64> = theta_nodes.iter().map(|&t| density(t)).collect();
        let h_tensor: Vec<f64> = theta_nodes.iter().map(|&t| tensor(t)).collect();
        let edge_density: Vec<f64> = theta_nodes.iter().map(|&t| density(t + 0.5 * dtheta)).collect();
        let edge_tensor: Vec<f64> = theta_nodes.iter().map(|&t| tensor(t + 0.5 * dtheta)).collect();
        for (name, vals) in [
            ("H", &h_density),
            ("h", &h_tensor),
            ("H (edge)", &edge_density),
            ("h (edge)", &edge_tensor),
        ] {
            if let Some((j, v)) = vals.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
                return Err(Error::Geometry(format!("{name} must be positive, got {v} at node {j}")));
            }
        }
        let mut stiffness = DMatrix::zeros(n, n);
        for j in 0..n {
            let k = (j + 1) % n;
            let c = 0.5 * edge_density[j] * edge_tensor[j] / dtheta;
            stiffness[(j, j)] += c;
            stiffness[(k, k)] += c;
            stiffness[(j, k)] -= c;
            stiffness[(k, j)] -= c;
        }
        Self::finish(
            theta_nodes,
            quad_weights,
            h_density,
            h_tensor,
            stiffness,
            AngularStencil::Periodic { edge_density, edge_tensor },
        )
    }

    /// Uniform circle with `H = h = 1`.
    pub fn circle(theta_count: usize) -> Result<Self> {
        Self::build(theta_count, |_| 1.0, |_| 1.0)
    }

    /// Cross-section from user data. `q_matrix` must be self-adjoint for the
    /// weighted inner product `sum w_j H_j u_j v_j`.
    pub fn from_supplied(
        theta_nodes: Vec<f64>,
        quad_weights: Vec<f64>,
        h_density: Vec<f64>,
        q_matrix: DMatrix<f64>,
    ) -> Result<Self> {
        let n = theta_nodes.len();
        if quad_weights.len() != n || h_density.len() != n || q_matrix.nrows() != n || q_matrix.ncols() != n {
            return Err(Error::Geometry("inconsistent cross-section dimensions".into()));
        }
        if quad_weights.iter().chain(h_density.iter()).any(|v| !(*v > 0.0)) {
            return Err(Error::Geometry("weights and density must be positive".into()));
        }
        let mut stiffness = q_matrix.clone();
        for j in 0..n {
            let m = quad_weights[j] * h_density[j];
            for k in 0..n {
                stiffness[(j, k)] *= m;
            }
        }
        let scale = stiffness.amax().max(1e-300);
        let skew = (&stiffness - stiffness.transpose()).amax();
        if skew > 1e-12 * scale {
            return Err(Error::Geometry(format!(
                "supplied Q is not self-adjoint in the weighted inner product (defect {skew:.2e})"
            )));
        }
        let stiffness = (&stiffness + stiffness.transpose()) * 0.5;
        let h_tensor = vec![1.0; n];
        Self::finish(theta_nodes, quad_weights, h_density, h_tensor, stiffness, AngularStencil::Supplied)
    }

    fn finish(
        theta_nodes: Vec<f64>,
        quad_weights: Vec<f64>,
        h_density: Vec<f64>,
        h_tensor: Vec<f64>,
        stiffness: DMatrix<f64>,
        stencil: AngularStencil,
    ) -> Result<Self> {
        let n = theta_nodes.len();
        let mass: Vec<f64> = quad_weights.iter().zip(&h_density).map(|(w, h)| w * h).collect();
        let inv_sqrt = DVector::from_iterator(n, mass.iter().map(|m| 1.0 / m.sqrt()));
        let mut sym = stiffness.clone();
        for j in 0..n {
            for k in 0..n {
                sym[(j, k)] *= inv_sqrt[j] * inv_sqrt[k];
            }
        }
        let eig = SymmetricEigen::try_new(sym, 1e-14, 10_000)
            .ok_or_else(|| Error::Numerical("cross-section eigensolver did not converge".into()))?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut modes = DMatrix::zeros(n, n);
        for (c, &i) in order.iter().enumerate() {
            let col = eig.eigenvectors.column(i);
            // fix the sign so the largest-magnitude entry is positive
            let (imax, _) = col.iter().enumerate().fold((0, 0.0), |acc, (j, v)| {
                if v.abs() > acc.1 + 1e-12 { (j, v.abs()) } else { acc }
            });
            let sign = if col[imax] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n {
                modes[(j, c)] = sign * col[j] * inv_sqrt[j];
            }
        }
        let mut q_matrix = stiffness.clone();
        for j in 0..n {
            for k in 0..n {
                q_matrix[(j, k)] /= mass[j];
            }
        }
        Ok(Self {
            theta_nodes,
            quad_weights,
            h_density,
            h_tensor,
            q_matrix,
            stiffness,
            eigenvalues,
            modes,
            stencil,
        })
    }

    pub fn len(&self) -> usize {
        self.theta_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta_nodes.is_empty()
    }

    /// `w_j H_j`.
    pub fn mass(&self) -> Vec<f64> {
        self.quad_weights.iter().zip(&self.h_density).map(|(w, h)| w * h).collect()
    }

    /// Weighted inner product `sum w_j H_j u_j v_j` of real nodal vectors.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.mass().iter().zip(u).zip(v).map(|((m, a), b)| m * a * b).sum()
    }

    /// Largest deviation of the mode Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let n = self.len();
        let mass = self.mass();
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in a..n {
                let g: f64 = (0..n).map(|j| mass[j] * self.modes[(j, a)] * self.modes[(j, b)]).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }

    /// Relative asymmetry of `diag(w H) Q`.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.len();
        let mass = self.mass();
        let mut k = self.q_matrix.clone();
        for j in 0..n {
            for c in 0..n {
                k[(j, c)] *= mass[j];
            }
        }
        (&k - k.transpose()).amax() / k.amax().max(1e-300)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_spectrum_matches_half_m_squared() {
        let n = 64;
        let cs = CrossSection::circle(n).unwrap();
        let dt = 2.0 * PI / n as f64;
        assert!(cs.eigenvalues[0].abs() < 1e-12);
        // q_0, then degenerate pairs q_1, q_1, q_2, q_2, ...
        for m in 1..=5usize {
            let exact = 0.5 * (m * m) as f64;
            let lattice = (1.0 - (m as f64 * dt).cos()) / (dt * dt);
            for idx in [2 * m - 1, 2 * m] {
                assert!((cs.eigenvalues[idx] - lattice).abs() < 1e-10);
                let rel = (cs.eigenvalues[idx] - exact).abs() / exact;
                assert!(rel <= (m as f64 * dt).powi(2) / 12.0 + 1e-12);
                if m == 1 {
                    assert!(rel <= 1e-3);
                }
            }
        }
        let c0 = cs.modes.column(0);
        let spread = c0.max() - c0.min();
        assert!(spread < 1e-10);
        assert!(cs.orthonormality_defect() < 1e-10);
    }

    #[test]
    fn second_order_convergence_on_the_circle() {
        let a = CrossSection::circle(32).unwrap();
        let b = CrossSection::circle(64).unwrap();
        for m in 1..=5usize {
            let exact = 0.5 * (m * m) as f64;
            let ea = (a.eigenvalues[2 * m] - exact).abs();
            let eb = (b.eigenvalues[2 * m] - exact).abs();
            // the quartic term of (1 - cos x)/x^2 makes the ratio slightly exceed 1/4
            let order = (ea / eb).log2();
            assert!(order >= 1.9 && order <= 2.0, "m={m}: {ea} -> {eb}, order {order}");
        }
    }

    #[test]
    fn variable_density_keeps_constants_in_kernel() {
        let cs = CrossSection::build(48, |t| 1.0 + 0.3 * t.cos(), |_| 1.0).unwrap();
        assert!(cs.hermiticity_defect() < 1e-12);
        assert!(cs.eigenvalues[0].abs() < 1e-10);
        assert!(cs.orthonormality_defect() < 1e-10);
        assert!(cs.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn rejects_nonpositive_density() {
        assert!(matches!(
            CrossSection::build(16, |t| t.cos(), |_| 1.0),
            Err(Error::Geometry(_))
        ));
        assert!(CrossSection::circle(3).is_err());
    }

    #[test]
    fn supplied_matrix_round_trips() {
        let base = CrossSection::build(16, |t| 1.0 + 0.2 * t.sin(), |_| 1.5).unwrap();
        let cs = CrossSection::from_supplied(
            base.theta_nodes.clone(),
            base.quad_weights.clone(),
            base.h_density.clone(),
            base.q_matrix.clone(),
        )
        .unwrap();
        for (a, b) in cs.eigenvalues.iter().zip(&base.eigenvalues) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
