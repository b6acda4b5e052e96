//! A geometry plus coefficients, able to produce modal systems on grids of
//! any outer radius with the same spacing.

use crate::coefficients::CoefficientField;
use crate::cross_section::CrossSection;
use crate::error::Result;
use crate::grid::RadialGrid;
use crate::modal::ModalSystem;

#[derive(Debug, Clone)]
pub struct Problem {
    pub cs: CrossSection,
    pub cf: CoefficientField,
    pub grid: RadialGrid,
    pub r_mourre: f64,
}

impl Problem {
    pub fn new(cs: CrossSection, cf: CoefficientField, grid: RadialGrid, r_mourre: f64) -> Self {
        Self { cs, cf, grid, r_mourre }
    }

    /// Modal system on the lowest `modes` modes, grid extended to `r_max`.
    pub fn system(&self, modes: usize, r_max: f64) -> Result<ModalSystem> {
        ModalSystem::build(&self.cs, &self.cf, &self.grid.extended(r_max), modes, self.r_mourre)
    }

    pub fn system_with_modes(&self, modes: &[usize], r_max: f64) -> Result<ModalSystem> {
        ModalSystem::build_with_modes(&self.cs, &self.cf, &self.grid.extended(r_max), modes, self.r_mourre)
    }

    /// Angular momentum label of cross-section mode `m` on the circle
    /// (`0, ±1, ±1, ±2, …` in ascending `q`), otherwise the index.
    pub fn mode_label(&self, m: usize) -> usize {
        m.div_ceil(2)
    }
}
