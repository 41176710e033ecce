//! Numerical eigenvalue oracles: a Sturm–Liouville solver for radial measures
//! (one harmonic sector at a time) and one-dimensional cells, and a
//! finite-volume Neumann solver on boxes in dimension ≤ 2.

mod grid;
mod radial;

use serde::Serialize;

pub use grid::{grid_gap, grid_gap_masked, grid_nodes, rayleigh_quotient, GridSpec};
pub use radial::{line_gap, radial_sector_gap, schrodinger_ground_energy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    RadialSector,
    Line,
    GridFd,
}

/// An eigenvalue with its discretization error estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralResult {
    pub value: f64,
    pub error_estimate: f64,
    pub method: OracleMethod,
    pub mesh_size: usize,
    /// Harmonic degree of the sector attaining the minimum (radial solver).
    pub sector_l: Option<usize>,
    pub warnings: Vec<String>,
}

/// Oracle discretization parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleSettings {
    pub mesh: usize,
    pub l_max: usize,
    /// Grid step for planar cells; `None` picks 1/64 of the shortest edge.
    pub h: Option<f64>,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self { mesh: 4096, l_max: 4, h: None }
    }
}

/// Richardson extrapolation of a second-order sequence `λ_h`, `λ_{2h}`.
pub(crate) fn richardson(fine: f64, coarse: f64) -> (f64, f64) {
    let value = fine + (fine - coarse) / 3.0;
    let err = (fine - coarse).abs() / 3.0;
    (value, err)
}

/// Error floor added to every estimate so that it stays positive.
pub(crate) fn error_floor(value: f64) -> f64 {
    1e-12 * (1.0 + value.abs())
}
