//! Relative-boundedness surrogates: constants `C` in inequalities of the form
//! `‖X u‖ <= C (‖u‖ + ‖Y u‖ + …)`, fitted over a corpus of smooth random
//! states at two resolutions. A bound is stable when halving `Δr` raises the
//! fitted constant by at most 20%.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::coefficients::CoefficientField;
use crate::cross_section::CrossSection;
use crate::cutoff::bracket;
use crate::error::Result;
use crate::grid::RadialGrid;
use crate::modal::{norm, ModalSystem};

type C = Complex64;

/// Smooth state `Σ_q a_q e^{-(r-c)²/(2w²)} e^{ikr}` in the lowest modes.
#[derive(Debug, Clone)]
pub struct SmoothState {
    pub center: f64,
    pub width: f64,
    pub k: f64,
    pub amplitudes: Vec<C>,
}

impl SmoothState {
    pub fn profile(&self, r: f64) -> C {
        let d = (r - self.center) / self.width;
        C::from_polar((-0.5 * d * d).exp(), self.k * r)
    }
}

/// `count` states centred in `[lo, hi]`, widths in `[0.5, 3]`, wavenumbers in
/// `[0, 3]` and random amplitudes on `modes` modes.
pub fn corpus(seed: u64, count: usize, (lo, hi): (f64, f64), modes: usize) -> Vec<SmoothState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| SmoothState {
            center: rng.gen_range(lo..hi),
            width: rng.gen_range(0.5..3.0),
            k: rng.gen_range(0.0..3.0),
            amplitudes: (0..modes).map(|_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect(),
        })
        .collect()
}

fn on_manifold(sys: &ModalSystem, s: &SmoothState) -> Vec<C> {
    let m = sys.modes;
    let mut x = vec![C::new(0.0, 0.0); sys.dim()];
    for i in 0..sys.grid.len() {
        let v = s.profile(sys.r(i)) * sys.grid.radial_weight(i).sqrt();
        for q in 0..m {
            x[i * m + q] = v * s.amplitudes[q];
        }
    }
    x
}

fn on_free(sys: &ModalSystem, s: &SmoothState) -> Vec<C> {
    let m = sys.modes;
    let sq = sys.grid.dr.sqrt();
    let mut x = vec![C::new(0.0, 0.0); sys.free_dim()];
    for (i, &r) in sys.free.r_nodes.iter().enumerate() {
        let v = s.profile(r) * sq;
        for q in 0..m {
            x[i * m + q] = v * s.amplitudes[q];
        }
    }
    x
}

/// Fitted constants at `Δr` and `Δr/2`.
#[derive(Debug, Clone, Serialize)]
pub struct FittedConstant {
    pub name: String,
    pub coarse: f64,
    pub fine: f64,
    pub ratio: f64,
    pub stable: bool,
    pub states: usize,
}

impl FittedConstant {
    fn new(name: &str, coarse: f64, fine: f64, states: usize) -> Self {
        let ratio = fine / coarse;
        Self { name: name.into(), coarse, fine, ratio, stable: ratio <= 1.2 && fine.is_finite(), states }
    }
}

/// Geometry shared by the surrogates.
pub struct BoundSetup<'a> {
    pub cs: &'a CrossSection,
    pub cf: &'a CoefficientField,
    pub r_max: f64,
    pub dr: f64,
    pub modes: usize,
    pub seed: u64,
    pub count: usize,
}

impl BoundSetup<'_> {
    fn systems(&self) -> Result<[ModalSystem; 2]> {
        let build = |dr: f64| -> Result<ModalSystem> {
            let grid = RadialGrid::with_spacing(self.r_max, dr, self.cf.n)?;
            ModalSystem::build(self.cs, self.cf, &grid, self.modes, 2.0)
        };
        Ok([build(self.dr)?, build(0.5 * self.dr)?])
    }

    fn states(&self) -> Vec<SmoothState> {
        corpus(self.seed, self.count, (2.0, self.r_max - 6.0), self.modes)
    }

    fn fit(&self, name: &str, ratio: impl Fn(&ModalSystem, &SmoothState) -> f64) -> Result<FittedConstant> {
        let states = self.states();
        let [a, b] = self.systems()?;
        let worst = |sys: &ModalSystem| states.iter().map(|s| ratio(sys, s)).fold(0.0, f64::max);
        Ok(FittedConstant::new(name, worst(&a), worst(&b), states.len()))
    }
}

/// `‖T <r>^μ φ‖ <= C (‖φ‖ + ‖P_f φ‖ + ‖Qφ‖)` on `M_f`.
pub fn t_weighted_bound(setup: &BoundSetup, mu: f64) -> Result<FittedConstant> {
    setup.fit("T<r>^mu", |sys, s| {
        let m = sys.modes;
        let phi = on_free(sys, s);
        let weighted: Vec<C> = phi
            .iter()
            .enumerate()
            .map(|(a, v)| v * bracket(sys.free.r_nodes[a / m]).powf(mu))
            .collect();
        let lhs = norm(&sys.t_apply(&weighted));
        let q_phi: Vec<C> = phi.iter().enumerate().map(|(a, v)| v * sys.q[a % m]).collect();
        lhs / (norm(&phi) + norm(&sys.pf_apply(&phi)) + norm(&q_phi))
    })
}

/// `‖j <r>⁻¹ ∂_θ u‖² <= C (‖Pu‖² + ‖u‖²)` on `M`, with `‖∂_θ u_q‖² = 2 q ‖u_q‖²`.
pub fn angular_bound(setup: &BoundSetup) -> Result<FittedConstant> {
    setup.fit("j<r>^-1 d_theta", |sys, s| {
        let m = sys.modes;
        let u = on_manifold(sys, s);
        let lhs: f64 = u
            .iter()
            .enumerate()
            .map(|(a, v)| {
                let i = a / m;
                let w = sys.j[i] / bracket(sys.r(i));
                2.0 * sys.q[a % m] * w * w * v.norm_sqr()
            })
            .sum();
        let pu = norm(&sys.p_apply(&u));
        lhs / (pu * pu + norm(&u).powi(2))
    })
}

/// `‖j ∂_r² u‖ <= C (‖Pu‖ + ‖u‖)` on `M`, second differences of the scaled
/// profiles.
pub fn radial_bound(setup: &BoundSetup) -> Result<FittedConstant> {
    setup.fit("j d_r^2", |sys, s| {
        let m = sys.modes;
        let n = sys.grid.len();
        let h2 = sys.grid.dr * sys.grid.dr;
        let u = on_manifold(sys, s);
        let mut lhs = 0.0;
        for i in 1..n - 1 {
            for q in 0..m {
                let d = (u[(i + 1) * m + q] - u[i * m + q] * 2.0 + u[(i - 1) * m + q]) / h2;
                lhs += (d * sys.j[i]).norm_sqr();
            }
        }
        lhs.sqrt() / (norm(&sys.p_apply(&u)) + norm(&u))
    })
}
