//! Subcommands. Each writes its files through [`Output`] and finishes with a
//! manifest.

use std::time::Instant;

use conic_core::assembly::OperatorSet;
use conic_core::evolution::{cook_wave_operator, make_wavepacket, propagate, CookResult, Space, StateVector, WavePacketSpec};
use conic_core::grid::RadialGrid;
use conic_core::modal::{norm, sub, ModalSystem};
use conic_core::problem::Problem;
use conic_core::spectral::{mourre_check, spectrum_report, MourreConfig, SpectrumConfig};
use conic_core::stationary::{absolute_smatrix, smatrix_stationary, waveop_stationary, StationaryWaveop};
use conic_core::{Error, Result};
use num_complex::Complex64 as C;
use rayon::prelude::*;
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{num, Output};
use crate::verify::{Suite, Verdict, Verifier};

/// Half-width of the packet spectrum in units of `k_width`; the amplitude
/// beyond it is below `e^{-9}`.
pub const PACKET_SPAN: f64 = 4.25;

fn warn_empty(cfg: &RunConfig) -> bool {
    if cfg.energy.lambdas.is_empty() {
        eprintln!("warning: energy.lambdas is empty, nothing to compute");
        return true;
    }
    false
}

/// Conjugated radial amplitude `u_m(r_i) = x[i m] / √Δr` per ring and mode.
fn profile_rows(r: &[f64], x: &[C], modes: &[usize], dr: f64, prefix: &[String]) -> Vec<Vec<String>> {
    let m = modes.len();
    let s = dr.sqrt();
    let mut rows = Vec::with_capacity(r.len() * m);
    for (i, &ri) in r.iter().enumerate() {
        for (q, &label) in modes.iter().enumerate() {
            let v = x[i * m + q] / s;
            let mut row = prefix.to_vec();
            row.extend([num(ri), label.to_string(), num(v.re), num(v.im)]);
            rows.push(row);
        }
    }
    rows
}

pub fn assemble(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let t0 = Instant::now();
    let cs = cfg.cross_section()?;
    let field = cfg.field()?;
    let ops = OperatorSet::assemble(&cs, &field, &cfg.grid()?, cfg.geometry.r_mourre)?;
    out.time("assemble", t0);
    let t1 = Instant::now();
    for name in &cfg.outputs.operators {
        out.triplets(&format!("{name}.txt"), |mut w| ops.write_triplets(name, &mut w))?;
    }
    out.time("export", t1);
    let defects: serde_json::Map<String, serde_json::Value> =
        ops.hermiticity_defects().iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
    for (k, v) in &defects {
        println!("hermiticity defect {k:<8} {v}");
    }
    let decay = field.decay_reports(&cs, conic_core::coefficients::DEFAULT_LADDER_MAX);
    out.manifest(
        "assemble",
        json!({
            "dimension": ops.dim(),
            "free_dimension": ops.free_dim(),
            "hermiticity_defects": defects,
            "hermiticity_bound": cfg.numerics.tolerances.hermiticity.unwrap_or(1e-10),
            "decay": decay,
        }),
    )
}

pub fn spectrum(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let t0 = Instant::now();
    let problem = cfg.problem()?;
    let sc = SpectrumConfig { seed: cfg.numerics.seed, ..SpectrumConfig::default() };
    let report = spectrum_report(&problem, cfg.energy.mode_cut, cfg.geometry.r_max, cfg.energy.window, 8, &sc)?;
    out.time("spectrum", t0);
    out.json("spectrum.json", &report)?;
    let t1 = Instant::now();
    let sys = problem.system(cfg.energy.mode_cut, cfg.geometry.r_max)?;
    let mc = MourreConfig { filter_nodes: cfg.numerics.filter_nodes, seed: cfg.numerics.seed, ..MourreConfig::default() };
    let mourre = mourre_check(&sys, cfg.energy.window, &mc)?;
    out.time("mourre", t1);
    out.json("mourre.json", &mourre)?;
    println!(
        "{} negative eigenvalue(s); {} eigenpairs in {:?}, {} suspected embedded; beta = {:.4}",
        report.negative_eigenvalues.len(),
        report.window_count,
        report.window,
        report.suspected,
        mourre.beta_est
    );
    out.manifest(
        "spectrum",
        json!({ "negative_eigenvalues": report.negative_eigenvalues.len(), "suspected": report.suspected, "beta_est": mourre.beta_est }),
    )
}

/// Problem of the time-dependent runs: the configured coefficients on the
/// evolution grid.
pub fn evolution_problem(cfg: &RunConfig) -> Result<Problem> {
    let n = &cfg.numerics;
    let grid = RadialGrid::with_spacing(n.evolution_r_max, n.evolution_dr, cfg.geometry.n)?;
    Ok(Problem::new(cfg.cross_section()?, cfg.field()?, grid, cfg.geometry.r_mourre))
}

pub fn evolve(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let t0 = Instant::now();
    let problem = evolution_problem(cfg)?;
    let mode = cfg.numerics.packet.mode;
    let sys = problem.system_with_modes(&[mode], cfg.numerics.evolution_r_max)?;
    let phi = make_wavepacket(&cfg.packet(), &sys)?;
    let psi0 = StateVector::new(Space::Manifold, sys.j_apply(&phi.values))?;
    let stride = cfg.outputs.stride;
    let (dr, label) = (sys.grid.dr, [mode]);
    let mut rows = profile_rows(&sys.grid.r_nodes, &psi0.values, &label, dr, &[num(0.0)]);
    let mut step = 0usize;
    let end = propagate(&sys.p, &psi0, cfg.numerics.t_max, cfg.numerics.dt, |t, psi| {
        step += 1;
        if step % stride == 0 {
            rows.extend(profile_rows(&sys.grid.r_nodes, psi, &label, dr, &[num(t)]));
        }
    })?;
    out.time("propagate", t0);
    out.csv("trajectory.csv", &["t", "r", "mode", "re", "im"], rows)?;
    let drift = (end.norm() - psi0.norm()).abs();
    println!("{step} steps, norm drift {drift:.2e}");
    out.manifest("evolve", json!({ "steps": step, "norm_drift": drift, "initial_norm": psi0.norm() }))
}

/// Cook and stationary `W₊φ` for the configured packet in one mode.
pub struct WaveopPair {
    pub sys: ModalSystem,
    pub cook: CookResult,
    pub stationary: StationaryWaveop,
    /// `‖W_cook φ - W_stat φ‖` over their common support.
    pub difference: f64,
}

pub fn waveop_pair(cfg: &RunConfig, problem: &Problem, mode: usize, tamper: Option<&(dyn Fn(&mut ModalSystem) + Sync)>) -> Result<WaveopPair> {
    let n = &cfg.numerics;
    let mut sys = problem.system_with_modes(&[mode], n.evolution_r_max)?;
    if let Some(t) = tamper {
        t(&mut sys);
    }
    let base = cfg.packet();
    let spec = WavePacketSpec { sign: 1.0, r_center: -base.r_center.abs(), ..base };
    let phi = make_wavepacket(&spec, &sys)?;
    let cook = cook_wave_operator(&sys, &phi, 1.0, n.t_max, n.dt)?;
    let (k0, k1) = (spec.k_center - PACKET_SPAN * spec.k_width, spec.k_center + PACKET_SPAN * spec.k_width);
    if k0 <= 0.0 {
        return Err(Error::Configuration(format!("packet spectrum reaches k = {k0:.3} <= 0")));
    }
    let interval = (0.5 * k0 * k0, 0.5 * k1 * k1);
    let packet = move |s: &ModalSystem| make_wavepacket(&spec, s).map(|v| v.values);
    let stationary = waveop_stationary(problem, &[mode], interval, &packet, 1.0, &cfg.stationary(), n.waveop_nodes, 10.0)?;
    let len = stationary.state.len().min(cook.limit_state.values.len());
    let difference = norm(&sub(&stationary.state[..len], &cook.limit_state.values[..len]));
    Ok(WaveopPair { sys, cook, stationary, difference })
}

pub fn waveop(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let t0 = Instant::now();
    let problem = evolution_problem(cfg)?;
    let mode = cfg.numerics.packet.mode;
    let pair = waveop_pair(cfg, &problem, mode, None)?;
    out.time("waveop", t0);
    let dr = pair.sys.grid.dr;
    let cook_rows = profile_rows(&pair.sys.grid.r_nodes, &pair.cook.limit_state.values, &[mode], dr, &[]);
    out.csv("waveop_cook.csv", &["r", "mode", "re", "im"], cook_rows)?;
    let st = &pair.stationary;
    let st_rows = profile_rows(&st.sys.grid.r_nodes, &st.state, &[mode], st.sys.grid.dr, &[]);
    out.csv("waveop_stationary.csv", &["r", "mode", "re", "im"], st_rows)?;
    let summary = json!({
        "mode": mode,
        "l2_difference": pair.difference,
        "isometry_defect": pair.cook.isometry_defect,
        "tail_estimate": pair.cook.tail_estimate,
        "integrand_decay": pair.cook.integrand_decay,
        "wall_mass": pair.cook.wall_mass,
        "quadrature_change": st.quadrature_change,
        "quadrature_nodes": st.nodes,
    });
    println!("Cook vs stationary L2 difference {:.3e}", pair.difference);
    out.json("waveop.json", &summary)?;
    out.manifest("waveop", summary)
}

pub fn smatrix(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    if warn_empty(cfg) {
        return out.manifest("smatrix", json!({ "warning": "empty energy list" }));
    }
    let t0 = Instant::now();
    let problem = cfg.problem()?;
    let st = cfg.stationary();
    let slices = cfg
        .energy
        .lambdas
        .par_iter()
        .map(|&l| {
            let sol = smatrix_stationary(&problem, l, &st, cfg.energy.mode_cut)?;
            let (s_abs, fits) = absolute_smatrix(&sol, &st)?;
            Ok((sol, s_abs, fits))
        })
        .collect::<Result<Vec<_>>>()?;
    out.time("smatrix", t0);
    let mut order: Vec<usize> = (0..slices.len()).collect();
    order.sort_by(|&a, &b| slices[a].0.slice.lambda.total_cmp(&slices[b].0.slice.lambda));
    let mut rows = Vec::new();
    let mut diag = Vec::new();
    for &i in &order {
        let (sol, s_abs, fits) = &slices[i];
        let s = &sol.slice;
        for m_in in 0..s.mode_count {
            for m_out in 0..s.mode_count {
                let z = s.s_matrix[(m_out, m_in)];
                rows.push(vec![
                    num(s.lambda),
                    m_in.to_string(),
                    m_out.to_string(),
                    num(z.re),
                    num(z.im),
                    num(s.unitarity_defect),
                    num(s.eps_residual),
                ]);
            }
        }
        let equivalence = (&s.s_matrix - s_abs).iter().map(|v| v.norm()).fold(0.0, f64::max);
        diag.push(json!({
            "lambda": s.lambda,
            "unitarity_defect": s.unitarity_defect,
            "eps_residual": s.eps_residual,
            "tail_correction": s.tail_correction,
            "eigen_residual": s.eigen_residual,
            "equivalence": equivalence,
            "min_delta_fit": fits.iter().map(|f| f.delta_fit).fold(f64::INFINITY, f64::min),
        }));
        println!("lambda {:<6} unitarity {:.2e} |S - S_abs| {:.2e}", s.lambda, s.unitarity_defect, equivalence);
    }
    out.csv("smatrix.csv", &["lambda", "m_in", "m_out", "re", "im", "unitarity_defect", "eps_residual"], rows)?;
    out.json("smatrix_diagnostics.json", &json!({ "energies": diag }))?;
    out.manifest("smatrix", json!({ "energies": cfg.energy.lambdas.len() }))
}

pub fn eigenfunction(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    if warn_empty(cfg) {
        return out.manifest("eigenfunction", json!({ "warning": "empty energy list" }));
    }
    let t0 = Instant::now();
    let problem = cfg.problem()?;
    let st = cfg.stationary();
    let mut lambdas = cfg.energy.lambdas.clone();
    lambdas.sort_by(f64::total_cmp);
    let results = lambdas
        .par_iter()
        .map(|&l| {
            let sol = smatrix_stationary(&problem, l, &st, cfg.energy.mode_cut)?;
            absolute_smatrix(&sol, &st).map(|(_, fits)| fits)
        })
        .collect::<Result<Vec<_>>>()?;
    out.time("fit", t0);
    let mut amps = Vec::new();
    for (li, fits) in results.iter().enumerate() {
        for (m_in, fit) in fits.iter().enumerate() {
            for (q, (a, b)) in fit.incoming_amp.iter().zip(&fit.outgoing_amp).enumerate() {
                amps.push(vec![
                    num(fit.lambda),
                    m_in.to_string(),
                    q.to_string(),
                    num(a.re),
                    num(a.im),
                    num(b.re),
                    num(b.im),
                    num(fit.delta_fit),
                    num(fit.residual),
                ]);
            }
            let rows = fit.profile.iter().flat_map(|(r, v)| {
                v.iter().enumerate().map(move |(q, z)| vec![num(*r), q.to_string(), num(z.re), num(z.im)])
            });
            out.csv(&format!("eigenfunction_l{li}_m{m_in}.csv"), &["r", "mode", "re", "im"], rows)?;
        }
    }
    out.csv(
        "amplitudes.csv",
        &["lambda", "m_in", "mode", "in_re", "in_im", "out_re", "out_im", "delta_fit", "residual"],
        amps,
    )?;
    out.manifest("eigenfunction", json!({ "energies": lambdas }))
}

/// Runs the suite, writes one JSON verdict per criterion and returns them.
pub fn verify(cfg: &RunConfig, suite: Suite, out: &mut Output) -> Result<Vec<Verdict>> {
    let t0 = Instant::now();
    let verdicts = Verifier::new(cfg).run(suite.criteria());
    out.time("verify", t0);
    for v in &verdicts {
        println!("{}", v.line());
        out.json(&format!("verdict_{:02}.json", v.id), v)?;
    }
    let passed = verdicts.iter().filter(|v| v.passed).count();
    out.json("verdicts.json", &json!({ "suite": format!("{suite:?}").to_lowercase(), "verdicts": verdicts }))?;
    out.manifest("verify", json!({ "passed": passed, "total": verdicts.len() }))?;
    Ok(verdicts)
}
