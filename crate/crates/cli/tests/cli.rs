use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use conic_scatter::config::RunConfig;
use conic_scatter::exit;
use conic_scatter::verify::Verifier;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_conic-scatter"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// Small exact-cone configuration for fast command runs.
const SMALL: &str = "[geometry]\ntheta_nodes = 16\nradial_nodes = 400\n\
                     [energy]\nlambdas = [2.0]\nmode_cut = 3\n";

#[test]
fn help_documents_every_exit_code() {
    let out = bin().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for (code, meaning) in exit::TABLE {
        assert!(text.contains(meaning), "{code} {meaning}");
    }
    for sub in ["assemble", "spectrum", "evolve", "waveop", "smatrix", "eigenfunction", "verify"] {
        assert!(text.contains(sub), "{sub}");
    }
}

#[test]
fn failure_paths_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let code = |args: &[&str]| bin().args(args).output().unwrap().status.code().unwrap();
    let missing = dir.path().join("missing.toml");
    let unknown = write(dir.path(), "u.toml", "[geometry]\nwidth = 2\n");
    let range = write(dir.path(), "r.toml", "[energy]\nmode_cut = 0\n");
    let claim = write(
        dir.path(),
        "c.toml",
        "[coefficients]\npreset = \"tail_perturbation\"\n[coefficients.decay]\nmu1 = 10.0\nmu2 = 10.0\nmu3 = 3.0\nmu4 = 10.0\nnu = 10.0\n",
    );
    let o = out.to_str().unwrap();
    let codes = [
        code(&["frobnicate"]),
        code(&["assemble", "--config", missing.to_str().unwrap(), "--out", o]),
        code(&["assemble", "--config", unknown.to_str().unwrap(), "--out", o]),
        code(&["assemble", "--config", range.to_str().unwrap(), "--out", o]),
        code(&["assemble", "--config", claim.to_str().unwrap(), "--out", o]),
    ];
    assert_eq!(codes, [exit::USAGE as i32, exit::CONFIG_READ as i32, exit::CONFIG_PARSE as i32, 10, 11]);
}

#[test]
fn bad_decay_claim_names_the_coefficient() {
    let dir = tempfile::tempdir().unwrap();
    let claim = write(
        dir.path(),
        "c.toml",
        "[coefficients]\npreset = \"tail_perturbation\"\n[coefficients.decay]\nmu1 = 10.0\nmu2 = 10.0\nmu3 = 3.0\nmu4 = 10.0\nnu = 10.0\n",
    );
    let out = bin().args(["assemble", "--config", claim.to_str().unwrap()]).output().unwrap();
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("`a3`"), "{err}");
}

#[test]
fn assemble_exports_triplets_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SMALL);
    let out = dir.path().join("o");
    let st = bin().args(["assemble", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).status().unwrap();
    assert!(st.success());
    let hash = RunConfig::load(&cfg).unwrap().hash();
    let p = fs::read_to_string(out.join("P.txt")).unwrap();
    let mut lines = p.lines();
    assert_eq!(lines.next().unwrap(), format!("% config_hash {hash}"));
    let head: Vec<usize> = lines.next().unwrap().split(' ').map(|x| x.parse().unwrap()).collect();
    assert_eq!(head[0], 400 * 16);
    assert_eq!(lines.count(), head[2]);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config_hash"], hash.as_str());
    for (_, d) in m["summary"]["hermiticity_defects"].as_object().unwrap() {
        assert!(d.as_f64().unwrap() <= 1e-10);
    }
    assert!(m["versions"]["conic-core"].is_string());
}

#[test]
fn smatrix_is_reproducible_and_hashed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SMALL);
    let run = |o: &str| {
        let out = dir.path().join(o);
        let st = bin()
            .args(["smatrix", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "1"])
            .status()
            .unwrap();
        assert!(st.success());
        fs::read(out.join("smatrix.csv")).unwrap()
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let hash = RunConfig::load(&cfg).unwrap().hash();
    let mut rows = text.lines();
    assert_eq!(rows.next().unwrap(), "lambda,m_in,m_out,re,im,unitarity_defect,eps_residual,config_hash");
    let rows: Vec<&str> = rows.collect();
    assert_eq!(rows.len(), 9);
    for r in rows {
        let f: Vec<&str> = r.split(',').collect();
        assert_eq!(f.len(), 8);
        assert_eq!(f[7], hash);
        assert!(f[5].parse::<f64>().unwrap() <= 1e-2);
    }
}

#[test]
fn empty_energy_list_warns_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "e.toml", "[energy]\nlambdas = []\n");
    let out = bin()
        .args(["smatrix", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("warning"));
    assert!(!dir.path().join("o/smatrix.csv").exists());
}

#[test]
fn threads_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SMALL);
    let out = bin()
        .env("CONIC_SCATTER_THREADS", "0")
        .args(["assemble", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(exit::USAGE as i32));
    let out = bin()
        .env("CONIC_SCATTER_THREADS", "2")
        .args(["assemble", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
}

#[test]
fn fast_suite_passes_and_writes_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let st = bin().args(["verify", "--suite", "fast", "--out", out.to_str().unwrap()]).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let all: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("verdicts.json")).unwrap()).unwrap();
    for v in all["verdicts"].as_array().unwrap() {
        assert_eq!(v["passed"], true, "{v}");
        for key in ["measured", "bound", "provenance"] {
            assert!(!v[key].is_null(), "{key} in {v}");
        }
    }
}

#[test]
fn configured_bound_changes_provenance_and_outcome() {
    let cfg = RunConfig::parse("[numerics.tolerances]\nmetric_ratio = 0.01\n").unwrap();
    let v = Verifier::new(&cfg).criterion(10);
    assert_eq!(v.provenance, "config");
    assert_eq!(v.bound, 0.01);
    assert!(!v.passed);
}

#[test]
fn broken_identification_weight_fails_the_isometry_criterion() {
    // J with its radial weight exponent off by one
    let cfg = RunConfig::parse("").unwrap();
    let v = Verifier::new(&cfg)
        .with_tamper(Arc::new(|sys| {
            for i in 0..sys.j.len() {
                sys.j[i] /= sys.r(i);
            }
        }))
        .criterion(5);
    assert!(!v.passed, "{v:?}");
}
