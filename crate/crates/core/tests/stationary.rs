use conic_core::coefficients::{CoefficientField, Preset, TailParams};
use conic_core::cross_section::CrossSection;
use conic_core::grid::RadialGrid;
use conic_core::problem::Problem;
use conic_core::stationary::{generalized_eigenfunction, smatrix_stationary, StationaryConfig};
use num_complex::Complex64 as C;

fn problem(cf: CoefficientField) -> Problem {
    let cs = CrossSection::circle(16).unwrap();
    let grid = RadialGrid::with_spacing(40.0, 0.05, 2).unwrap();
    Problem::new(cs, cf, grid, 2.0)
}

fn tail() -> Problem {
    let cs = CrossSection::circle(16).unwrap();
    let cf = CoefficientField::make(&Preset::TailPerturbation(TailParams::default()), None, 2, &cs).unwrap();
    problem(cf)
}

fn cfg(rungs: usize) -> StationaryConfig {
    let mut c = StationaryConfig::default();
    c.resolvent.r_phys = 20.0;
    c.resolvent.rungs = rungs;
    c
}

#[test]
fn extra_rung_stays_within_the_residual() {
    let p = tail();
    for lambda in [0.5, 2.0] {
        let five = smatrix_stationary(&p, lambda, &cfg(5), 3).unwrap().slice;
        let six = smatrix_stationary(&p, lambda, &cfg(6), 3).unwrap().slice;
        let scale = five.s_truncated.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let change = (&six.s_truncated - &five.s_truncated).iter().map(|z| z.norm()).fold(0.0, f64::max) / scale;
        assert!(change <= five.eps_residual, "λ = {lambda}: change {change:.2e} vs residual {:.2e}", five.eps_residual);
    }
}

#[test]
fn cone_remainder_decays_at_the_next_order() {
    let p = problem(CoefficientField::exact_cone(2));
    let c = cfg(5);
    for lambda in [0.5, 2.0] {
        let sol = smatrix_stationary(&p, lambda, &c, 3).unwrap();
        for m in 0..3 {
            let mut phi_b = vec![C::new(0.0, 0.0); 3];
            phi_b[m] = C::new(1.0, 0.0);
            let fit = generalized_eigenfunction(&sol, &phi_b, &c).unwrap();
            if fit.remainder_at_noise {
                continue;
            }
            assert!((fit.delta_fit - 1.0).abs() <= 0.25, "λ = {lambda}, mode {m}: δ = {}", fit.delta_fit);
        }
    }
}

#[test]
fn radial_tail_gives_diagonal_s() {
    let cs = CrossSection::circle(16).unwrap();
    let params = TailParams { a3_theta: 0.0, a1_amp: 0.2, v_amp: 0.3, ..TailParams::default() };
    let cf = CoefficientField::make(&Preset::TailPerturbation(params), None, 2, &cs).unwrap();
    let sol = smatrix_stationary(&problem(cf), 2.0, &cfg(5), 3).unwrap();
    assert!(sol.sys.decoupled);
    let s = &sol.slice.s_matrix;
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                assert!(s[(i, j)].norm() <= 1e-10, "S[{i},{j}] = {}", s[(i, j)]);
            }
        }
    }
}
