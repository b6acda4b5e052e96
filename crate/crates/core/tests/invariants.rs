use conic_core::assembly::OperatorSet;
use conic_core::coefficients::{CoefficientField, Preset, TailParams};
use conic_core::cross_section::CrossSection;
use conic_core::evolution::Propagator;
use conic_core::grid::RadialGrid;
use conic_core::modal::{norm, ModalSystem};
use conic_core::resolvent::neville_at_zero;
use num_complex::Complex64 as C;
use proptest::prelude::*;

fn tail_params() -> impl Strategy<Value = TailParams> {
    (-0.3..0.3f64, -0.2..0.2f64, -0.4..0.4f64, -0.5..0.5f64, -1.0..1.0f64).prop_map(|(a1, a2, a3, th, v)| TailParams {
        a1_amp: a1,
        a2_amp: a2,
        a3_amp: a3,
        a3_theta: th,
        v_amp: v,
        ..TailParams::default()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn warped_cross_sections_are_orthonormal(a in -0.4..0.4f64, b in -0.3..0.3f64, half in 8usize..20) {
        let cs = CrossSection::build(2 * half, |t| 1.0 + a * t.cos(), |t| 1.0 + b * (2.0 * t).sin()).unwrap();
        prop_assert!(cs.orthonormality_defect() <= 1e-10);
        prop_assert!(cs.hermiticity_defect() <= 1e-10);
    }

    #[test]
    fn tail_operators_are_symmetric(params in tail_params()) {
        let cs = CrossSection::circle(12).unwrap();
        let cf = CoefficientField::make(&Preset::TailPerturbation(params), None, 2, &cs).unwrap();
        let grid = RadialGrid::with_spacing(15.0, 0.1, 2).unwrap();
        let ops = OperatorSet::assemble(&cs, &cf, &grid, 2.0).unwrap();
        for (name, d) in ops.hermiticity_defects() {
            prop_assert!(d <= 1e-10, "{name}: {d}");
        }
    }

    #[test]
    fn radial_tails_decouple_modes(a1 in -0.3..0.3f64, a3 in -0.4..0.4f64, v in -1.0..1.0f64) {
        let cs = CrossSection::circle(12).unwrap();
        let params = TailParams { a1_amp: a1, a3_amp: a3, a3_theta: 0.0, v_amp: v, ..TailParams::default() };
        let cf = CoefficientField::make(&Preset::TailPerturbation(params), None, 2, &cs).unwrap();
        let grid = RadialGrid::with_spacing(15.0, 0.1, 2).unwrap();
        let sys = ModalSystem::build(&cs, &cf, &grid, 4, 2.0).unwrap();
        prop_assert!(sys.decoupled);
    }

    #[test]
    fn crank_nicolson_step_is_unitary(params in tail_params(), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let cs = CrossSection::circle(12).unwrap();
        let cf = CoefficientField::make(&Preset::TailPerturbation(params), None, 2, &cs).unwrap();
        let grid = RadialGrid::with_spacing(15.0, 0.1, 2).unwrap();
        let sys = ModalSystem::build(&cs, &cf, &grid, 3, 2.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let psi: Vec<C> = (0..sys.dim()).map(|_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let step = Propagator::new(&sys.p, 0.01).unwrap().step(&psi).unwrap();
        let drift = (norm(&step) - norm(&psi)).abs() / norm(&psi);
        prop_assert!(drift <= 1e-12, "{drift}");
    }

    #[test]
    fn neville_recovers_polynomial_limits(coef in prop::collection::vec(-2.0..2.0f64, 1..6)) {
        let x: Vec<f64> = (0..coef.len()).map(|k| 0.1 * 0.5f64.powi(k as i32)).collect();
        let y: Vec<Vec<C>> = x
            .iter()
            .map(|&e| vec![C::new(coef.iter().rev().fold(0.0, |acc, c| acc * e + c), 0.0)])
            .collect();
        let limit = neville_at_zero(&x, &y)[0];
        prop_assert!((limit.re - coef[0]).abs() <= 1e-10 * (1.0 + coef[0].abs()), "{} vs {}", limit.re, coef[0]);
    }
}
