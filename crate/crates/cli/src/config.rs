//! Run configuration: a TOML file with the blocks `geometry`, `coefficients`,
//! `energy`, `numerics` and `outputs`. Every key is optional; unknown keys
//! are rejected.

use std::path::{Path, PathBuf};

use conic_core::coefficients::{CoefficientField, Decay, Preset, TailParams};
use conic_core::cross_section::CrossSection;
use conic_core::evolution::WavePacketSpec;
use conic_core::grid::{CapPolicy, RadialGrid};
use conic_core::problem::Problem;
use conic_core::resolvent::ResolventConfig;
use conic_core::stationary::StationaryConfig;
use conic_core::Error;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub geometry: Geometry,
    pub coefficients: Coefficients,
    pub energy: Energy,
    pub numerics: Numerics,
    pub outputs: Outputs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossSectionKind {
    Circle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Geometry {
    pub n: usize,
    pub cross_section: CrossSectionKind,
    pub theta_nodes: usize,
    pub cap: CapPolicy,
    pub r_max: f64,
    pub r_phys: f64,
    pub radial_nodes: usize,
    /// Scale `R` of the conjugate operator.
    pub r_mourre: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            n: 2,
            cross_section: CrossSectionKind::Circle,
            theta_nodes: 64,
            cap: CapPolicy::HalfLineRegular,
            r_max: 40.0,
            r_phys: 30.0,
            radial_nodes: 2000,
            r_mourre: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    ExactCone,
    Well,
    TailPerturbation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Coefficients {
    pub preset: PresetName,
    /// Depth of the `well` preset, `V = -depth e^{-r²}`.
    pub depth: f64,
    pub tail: TailParams,
    /// Claimed decay rates; absent means the preset's own rates.
    pub decay: Option<Decay>,
}

impl Default for Coefficients {
    fn default() -> Self {
        Self { preset: PresetName::ExactCone, depth: 5.0, tail: TailParams::default(), decay: None }
    }
}

impl Coefficients {
    pub fn preset(&self) -> Preset {
        match self.preset {
            PresetName::ExactCone => Preset::ExactCone,
            PresetName::Well => Preset::Well { depth: self.depth },
            PresetName::TailPerturbation => Preset::TailPerturbation(self.tail),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Energy {
    pub lambdas: Vec<f64>,
    /// Window for the spectral and Mourre analysis.
    pub window: (f64, f64),
    pub mode_cut: usize,
}

impl Default for Energy {
    fn default() -> Self {
        Self { lambdas: vec![0.5, 2.0, 4.5], window: (0.5, 1.5), mode_cut: 9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Packet {
    pub sign: f64,
    pub k_center: f64,
    pub k_width: f64,
    pub r_center: f64,
    /// Cross-section mode index carrying the packet.
    pub mode: usize,
}

impl Default for Packet {
    fn default() -> Self {
        Self { sign: 1.0, k_center: 2.0, k_width: 0.25, r_center: -15.0, mode: 0 }
    }
}

/// Optional overrides of the acceptance bounds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub phase: Option<f64>,
    pub unitarity: Option<f64>,
    pub equivalence: Option<f64>,
    pub waveop: Option<f64>,
    pub isometry: Option<f64>,
    pub free_resolvent: Option<f64>,
    pub lap_ratio: Option<f64>,
    pub mourre_beta: Option<f64>,
    pub eigen_residual: Option<f64>,
    pub decay_match: Option<f64>,
    pub metric_fixed_point: Option<f64>,
    pub metric_ratio: Option<f64>,
    pub hermiticity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub seed: u64,
    pub epsilon0: f64,
    pub rungs: usize,
    pub ladder_ratio: f64,
    pub s_weight: f64,
    pub extrapolate: bool,
    pub fit_window: Option<(f64, f64)>,
    pub fit_powers: usize,
    pub dt: f64,
    pub t_max: f64,
    /// Outer radius of the time-dependent runs (the packet must not reach it).
    pub evolution_r_max: f64,
    /// Radial spacing of the time-dependent runs.
    pub evolution_dr: f64,
    pub packet: Packet,
    /// Gauss–Legendre nodes of the stationary wave operator.
    pub waveop_nodes: usize,
    pub filter_nodes: usize,
    pub tolerances: Tolerances,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            seed: 1,
            epsilon0: 0.1,
            rungs: 5,
            ladder_ratio: 0.5,
            s_weight: 1.0,
            extrapolate: true,
            fit_window: None,
            fit_powers: 5,
            dt: 0.01,
            t_max: 40.0,
            evolution_r_max: 150.0,
            evolution_dr: 0.02,
            packet: Packet::default(),
            waveop_nodes: 64,
            filter_nodes: 32,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Outputs {
    pub dir: PathBuf,
    /// Time-step stride of trajectory snapshots.
    pub stride: usize,
    /// Operators written by `assemble`.
    pub operators: Vec<String>,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            stride: 100,
            operators: ["P", "P_f", "J", "T", "A", "Q_tilde"].map(String::from).to_vec(),
        }
    }
}

/// Failure to obtain a configuration.
#[derive(Debug)]
pub enum ConfigError {
    Read(PathBuf, std::io::Error),
    Parse(String),
    Invalid(Error),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Read(p, e) => write!(f, "cannot read {}: {e}", p.display()),
            ConfigError::Parse(e) => write!(f, "invalid configuration: {e}"),
            ConfigError::Invalid(e) => write!(f, "{e}"),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate().map_err(ConfigError::Invalid)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read(path.to_path_buf(), e))?;
        Self::parse(&text)
    }

    /// SHA-256 of the canonical JSON form, so layout and comments of the
    /// file do not matter.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("configuration serializes");
        hex::encode(Sha256::digest(json))
    }

    pub fn validate(&self) -> conic_core::Result<()> {
        let g = &self.geometry;
        let bad = |m: String| Err(Error::Configuration(m));
        if g.n < 2 {
            return bad(format!("geometry.n = {} must be at least 2", g.n));
        }
        if g.theta_nodes < 8 || g.theta_nodes % 2 != 0 {
            return bad(format!("geometry.theta_nodes = {} must be even and at least 8", g.theta_nodes));
        }
        if !(g.r_phys > 2.0 && g.r_phys < g.r_max) {
            return bad(format!("geometry.r_phys = {} must lie in (2, r_max = {})", g.r_phys, g.r_max));
        }
        if !(g.r_mourre >= 1.0) {
            return bad(format!("geometry.r_mourre = {} must be at least 1", g.r_mourre));
        }
        let e = &self.energy;
        if e.mode_cut == 0 || e.mode_cut > g.theta_nodes {
            return bad(format!("energy.mode_cut = {} must lie in 1..={}", e.mode_cut, g.theta_nodes));
        }
        if let Some(l) = e.lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return bad(format!("energy.lambdas contains {l}; energies must be positive"));
        }
        if !(e.window.0 < e.window.1) {
            return bad(format!("energy.window {:?} is empty", e.window));
        }
        let k_max = e.lambdas.iter().fold(0.0f64, |a, l| a.max((2.0 * l).sqrt()));
        self.grid_with(k_max)?;
        let n = &self.numerics;
        self.resolvent().validate(f64::INFINITY, 1.0)?;
        if n.fit_powers == 0 {
            return bad("numerics.fit_powers must be positive".into());
        }
        if !(n.dt > 0.0 && n.t_max > 0.0 && n.evolution_dr > 0.0) {
            return bad("numerics.dt, t_max and evolution_dr must be positive".into());
        }
        if n.packet.sign.abs() != 1.0 {
            return bad(format!("numerics.packet.sign = {} must be +1 or -1", n.packet.sign));
        }
        if n.waveop_nodes < 4 || n.filter_nodes < 4 || n.filter_nodes % 2 != 0 {
            return bad("numerics.waveop_nodes must be >= 4 and filter_nodes even and >= 4".into());
        }
        if self.outputs.stride == 0 {
            return bad("outputs.stride must be positive".into());
        }
        let cs = self.cross_section()?;
        CoefficientField::make(&self.coefficients.preset(), self.coefficients.decay, g.n, &cs)?;
        Ok(())
    }

    pub fn cross_section(&self) -> conic_core::Result<CrossSection> {
        match self.geometry.cross_section {
            CrossSectionKind::Circle => CrossSection::circle(self.geometry.theta_nodes),
        }
    }

    pub fn field(&self) -> conic_core::Result<CoefficientField> {
        let cs = self.cross_section()?;
        CoefficientField::make(&self.coefficients.preset(), self.coefficients.decay, self.geometry.n, &cs)
    }

    fn grid_with(&self, k_max: f64) -> conic_core::Result<RadialGrid> {
        let g = &self.geometry;
        RadialGrid::build(g.r_max, g.radial_nodes, g.cap, g.n, k_max)
    }

    pub fn grid(&self) -> conic_core::Result<RadialGrid> {
        self.grid_with(0.0)
    }

    pub fn problem(&self) -> conic_core::Result<Problem> {
        Ok(Problem::new(self.cross_section()?, self.field()?, self.grid()?, self.geometry.r_mourre))
    }

    pub fn resolvent(&self) -> ResolventConfig {
        let n = &self.numerics;
        ResolventConfig {
            epsilon0: n.epsilon0,
            rungs: n.rungs,
            s_weight: n.s_weight,
            r_phys: self.geometry.r_phys,
            absorber: None,
            extrapolate: n.extrapolate,
            ladder_ratio: n.ladder_ratio,
        }
    }

    pub fn stationary(&self) -> StationaryConfig {
        StationaryConfig {
            resolvent: self.resolvent(),
            fit_window: self.numerics.fit_window,
            fit_powers: self.numerics.fit_powers,
            ..StationaryConfig::default()
        }
    }

    pub fn packet(&self) -> WavePacketSpec {
        let p = self.numerics.packet;
        WavePacketSpec { sign: p.sign, k_center: p.k_center, k_width: p.k_width, r_center: p.r_center, mode: 0 }
    }
}
