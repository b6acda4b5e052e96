//! Block-tridiagonal matrices: products, block-Thomas factorization and the
//! Sylvester inertia count used for eigenvalue bisection.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

type C = Complex64;

/// Real symmetric block-tridiagonal matrix with square blocks of equal size.
/// `upper[i]` couples block row `i` to block column `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBlockTri {
    pub diag: Vec<DMatrix<f64>>,
    pub upper: Vec<DMatrix<f64>>,
}

impl SymBlockTri {
    pub fn block_size(&self) -> usize {
        self.diag.first().map_or(0, |d| d.nrows())
    }

    pub fn block_count(&self) -> usize {
        self.diag.len()
    }

    pub fn dim(&self) -> usize {
        self.block_size() * self.block_count()
    }

    /// True when every block is diagonal.
    pub fn is_decoupled(&self, tol: f64) -> bool {
        let off = |m: &DMatrix<f64>| {
            let mut worst = 0.0f64;
            for (idx, v) in m.iter().enumerate() {
                if idx % m.nrows() != idx / m.nrows() {
                    worst = worst.max(v.abs());
                }
            }
            worst
        };
        self.diag.iter().chain(self.upper.iter()).all(|b| off(b) <= tol)
    }

    pub fn apply_real(&self, x: &[f64]) -> Vec<f64> {
        let m = self.block_size();
        let nb = self.block_count();
        let mut y = vec![0.0; x.len()];
        for i in 0..nb {
            let yi = &mut y[i * m..(i + 1) * m];
            mul_add(yi, &self.diag[i], &x[i * m..(i + 1) * m], 1.0);
            if i + 1 < nb {
                mul_add(yi, &self.upper[i], &x[(i + 1) * m..(i + 2) * m], 1.0);
            }
            if i > 0 {
                tr_mul_add(yi, &self.upper[i - 1], &x[(i - 1) * m..i * m]);
            }
        }
        y
    }

    pub fn apply(&self, x: &[C]) -> Vec<C> {
        let re: Vec<f64> = x.iter().map(|z| z.re).collect();
        let im: Vec<f64> = x.iter().map(|z| z.im).collect();
        let a = self.apply_real(&re);
        let b = self.apply_real(&im);
        a.into_iter().zip(b).map(|(r, i)| C::new(r, i)).collect()
    }

    /// Complex copy `self - shift + diag(extra)`.
    pub fn shifted(&self, shift: C, extra: Option<&[C]>) -> BlockTri {
        let m = self.block_size();
        let diag = self
            .diag
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let mut z = d.map(|v| C::new(v, 0.0));
                for k in 0..m {
                    z[(k, k)] -= shift;
                    if let Some(e) = extra {
                        z[(k, k)] += e[i * m + k];
                    }
                }
                z
            })
            .collect();
        let upper: Vec<DMatrix<C>> = self.upper.iter().map(|u| u.map(|v| C::new(v, 0.0))).collect();
        let lower = upper.iter().map(|u| u.transpose()).collect();
        BlockTri { diag, upper, lower }
    }

    /// Number of eigenvalues strictly below `sigma` (Sylvester's law applied to
    /// the block LDLᵀ factorization of `self - sigma`).
    pub fn count_below(&self, sigma: f64) -> Result<usize> {
        let m = self.block_size();
        let mut count = 0;
        let mut prev: Option<DMatrix<f64>> = None;
        for i in 0..self.block_count() {
            let mut d = self.diag[i].clone();
            for k in 0..m {
                d[(k, k)] -= sigma;
            }
            if let Some(w) = prev.take() {
                // D_i -= B_{i-1}^T D_{i-1}^{-1} B_{i-1}
                d -= self.upper[i - 1].tr_mul(&w);
            }
            let eig = SymmetricEigen::new(d.clone());
            count += eig.eigenvalues.iter().filter(|&&v| v < 0.0).count();
            if eig.eigenvalues.iter().any(|v| v.abs() < 1e-300) {
                return Err(Error::Numerical(format!("singular pivot block at shift {sigma}")));
            }
            if i + 1 < self.block_count() {
                let inv = &eig.eigenvectors
                    * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v))
                    * eig.eigenvectors.transpose();
                prev = Some(inv * &self.upper[i]);
            }
        }
        Ok(count)
    }
}

/// General complex block-tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTri {
    pub diag: Vec<DMatrix<C>>,
    pub upper: Vec<DMatrix<C>>,
    pub lower: Vec<DMatrix<C>>,
}

impl BlockTri {
    pub fn block_size(&self) -> usize {
        self.diag.first().map_or(0, |d| d.nrows())
    }

    pub fn block_count(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, x: &[C]) -> Vec<C> {
        let m = self.block_size();
        let nb = self.block_count();
        let one = C::new(1.0, 0.0);
        let mut y = vec![C::new(0.0, 0.0); x.len()];
        for i in 0..nb {
            let yi = &mut y[i * m..(i + 1) * m];
            mul_add(yi, &self.diag[i], &x[i * m..(i + 1) * m], one);
            if i + 1 < nb {
                mul_add(yi, &self.upper[i], &x[(i + 1) * m..(i + 2) * m], one);
            }
            if i > 0 {
                mul_add(yi, &self.lower[i - 1], &x[(i - 1) * m..i * m], one);
            }
        }
        y
    }

    /// Block-Thomas factorization.
    pub fn factor(&self) -> Result<BlockLu> {
        let nb = self.block_count();
        let mut pivots = Vec::with_capacity(nb);
        let mut w: Vec<DMatrix<C>> = Vec::with_capacity(nb.saturating_sub(1));
        for i in 0..nb {
            let mut d = self.diag[i].clone();
            if i > 0 {
                d -= &self.lower[i - 1] * &w[i - 1];
            }
            let inv = d
                .try_inverse()
                .ok_or_else(|| Error::Numerical(format!("singular pivot block {i}")))?;
            if i + 1 < nb {
                w.push(&inv * &self.upper[i]);
            }
            pivots.push(inv);
        }
        Ok(BlockLu { pivots, w, lower: self.lower.clone() })
    }
}

/// Factorization produced by [`BlockTri::factor`].
pub struct BlockLu {
    /// Inverted pivot blocks.
    pivots: Vec<DMatrix<C>>,
    w: Vec<DMatrix<C>>,
    lower: Vec<DMatrix<C>>,
}

impl BlockLu {
    pub fn solve(&self, b: &[C]) -> Result<Vec<C>> {
        let nb = self.pivots.len();
        let m = if nb == 0 { 0 } else { b.len() / nb };
        let one = C::new(1.0, 0.0);
        let mut y = vec![C::new(0.0, 0.0); b.len()];
        let mut rhs = vec![C::new(0.0, 0.0); m];
        for i in 0..nb {
            rhs.copy_from_slice(&b[i * m..(i + 1) * m]);
            if i > 0 {
                let (done, _) = y.split_at(i * m);
                mul_add(&mut rhs, &self.lower[i - 1], &done[(i - 1) * m..], -one);
            }
            mul_add(&mut y[i * m..(i + 1) * m], &self.pivots[i], &rhs, one);
        }
        for i in (0..nb.saturating_sub(1)).rev() {
            let (head, tail) = y.split_at_mut((i + 1) * m);
            mul_add(&mut head[i * m..], &self.w[i], &tail[..m], -one);
        }
        if y.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Solve("non-finite solution".into()));
        }
        Ok(y)
    }
}

/// `y += s · A x` for a column-major block.
fn mul_add<T>(y: &mut [T], a: &DMatrix<T>, x: &[T], s: T)
where
    T: nalgebra::Scalar + Copy + std::ops::Mul<Output = T> + std::ops::AddAssign,
{
    let m = a.nrows();
    let data = a.as_slice();
    for (c, &xc) in x.iter().enumerate().take(a.ncols()) {
        let f = s * xc;
        for (yr, &arc) in y[..m].iter_mut().zip(&data[c * m..(c + 1) * m]) {
            *yr += arc * f;
        }
    }
}

/// `y += Aᵀ x`.
fn tr_mul_add(y: &mut [f64], a: &DMatrix<f64>, x: &[f64]) {
    let m = a.nrows();
    let data = a.as_slice();
    for (c, yc) in y.iter_mut().enumerate().take(a.ncols()) {
        *yc += data[c * m..(c + 1) * m].iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(nb: usize, m: usize, seed: u64) -> SymBlockTri {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let diag = (0..nb)
            .map(|_| {
                let a = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
                &a + a.transpose()
            })
            .collect();
        let upper = (0..nb - 1).map(|_| DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0))).collect();
        SymBlockTri { diag, upper }
    }

    fn dense(s: &SymBlockTri) -> DMatrix<f64> {
        let m = s.block_size();
        let n = s.dim();
        let mut a = DMatrix::zeros(n, n);
        for i in 0..s.block_count() {
            a.view_mut((i * m, i * m), (m, m)).copy_from(&s.diag[i]);
            if i + 1 < s.block_count() {
                a.view_mut((i * m, (i + 1) * m), (m, m)).copy_from(&s.upper[i]);
                a.view_mut(((i + 1) * m, i * m), (m, m)).copy_from(&s.upper[i].transpose());
            }
        }
        a
    }

    #[test]
    fn solve_matches_product() {
        let s = random_sym(12, 3, 1);
        let z = C::new(0.3, 0.2);
        let a = s.shifted(z, None);
        let x: Vec<C> = (0..36).map(|k| C::new((k as f64).sin(), (k as f64 * 0.7).cos())).collect();
        let b = a.apply(&x);
        let y = a.factor().unwrap().solve(&b).unwrap();
        let err = x.iter().zip(&y).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn inertia_matches_dense_eigenvalues() {
        let s = random_sym(10, 2, 7);
        let eig = SymmetricEigen::new(dense(&s)).eigenvalues;
        for sigma in [-2.0, -0.5, 0.1, 1.3] {
            let expected = eig.iter().filter(|&&v| v < sigma).count();
            assert_eq!(s.count_below(sigma).unwrap(), expected);
        }
    }

    #[test]
    fn real_product_matches_dense() {
        let s = random_sym(5, 2, 3);
        let x: Vec<f64> = (0..10).map(|k| k as f64 - 4.0).collect();
        let y = s.apply_real(&x);
        let yd = dense(&s) * DVector::from_vec(x);
        assert!((DVector::from_vec(y) - yd).amax() < 1e-12);
    }
}
