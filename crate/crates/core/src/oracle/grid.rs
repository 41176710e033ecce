use super::{error_floor, richardson, OracleMethod, SpectralResult};
use crate::cell::{Cell, Shape};
use crate::error::{Error, Result};
use crate::linalg::{smallest_generalized_eigenvalue, BandedSym};
use crate::measures::MeasureSpec;

/// A uniform grid of step `h` on a box in dimension 1 or 2.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub h: f64,
    /// Steps per axis.
    pub steps: Vec<usize>,
}

impl GridSpec {
    pub fn new(cell: &Cell, h: f64) -> Result<Self> {
        let (lo, hi) = match &cell.shape {
            Shape::Box { lo, hi } => (lo.clone(), hi.clone()),
            _ => cell.bounding_box().ok_or_else(|| {
                Error::UnsupportedGeometry(format!("grid solver needs a bounded cell, got {}", cell.label()))
            })?,
        };
        if lo.is_empty() || lo.len() > 2 {
            return Err(Error::UnsupportedGeometry(format!("grid solver supports dimension 1 or 2, got {}", lo.len())));
        }
        if !(h > 0.0) {
            return Err(Error::InvalidInput(format!("grid step must be positive, got {h}")));
        }
        let mut steps = Vec::with_capacity(lo.len());
        for (l, u) in lo.iter().zip(&hi) {
            let len = u - l;
            let k = (len / h).round();
            if k < 2.0 || (k * h - len).abs() > 1e-9 * len {
                return Err(Error::InvalidInput(format!("grid step {h} does not divide the box edge {len}")));
            }
            steps.push(k as usize);
        }
        Ok(Self { lo, hi, h, steps })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn node_count(&self) -> usize {
        self.steps.iter().map(|s| s + 1).product()
    }

    /// Coordinates of node `idx` (row-major, first axis fastest).
    pub fn node(&self, idx: usize) -> Vec<f64> {
        let nx = self.steps[0] + 1;
        let mut x = vec![self.lo[0] + self.h * (idx % nx) as f64];
        if self.dim() == 2 {
            x.push(self.lo[1] + self.h * (idx / nx) as f64);
        }
        x
    }

    fn coarsened(&self) -> Option<Self> {
        if self.steps.iter().all(|s| s % 2 == 0 && *s >= 4) {
            Some(Self { lo: self.lo.clone(), hi: self.hi.clone(), h: 2.0 * self.h, steps: self.steps.iter().map(|s| s / 2).collect() })
        } else {
            None
        }
    }
}

/// Node coordinates of the grid of step `h` on a box cell.
pub fn grid_nodes(cell: &Cell, h: f64) -> Result<Vec<Vec<f64>>> {
    let g = GridSpec::new(cell, h)?;
    Ok((0..g.node_count()).map(|i| g.node(i)).collect())
}

/// Stiffness (banded), lumped masses and the kept-node map.
struct Discretization {
    stiffness: BandedSym,
    mass: Vec<f64>,
    /// Grid index of each unknown.
    kept: Vec<usize>,
    warnings: Vec<String>,
}

fn discretize(measure: &MeasureSpec, g: &GridSpec, mask: Option<&Cell>) -> Result<Discretization> {
    let dim = g.dim();
    if measure.dim() != dim {
        return Err(Error::InvalidInput("grid dimension does not match the measure".into()));
    }
    let total = g.node_count();
    let nx = g.steps[0] + 1;
    let coords: Vec<Vec<f64>> = (0..total).map(|i| g.node(i)).collect();
    let mut unknown = vec![usize::MAX; total];
    let mut kept = Vec::new();
    for (i, x) in coords.iter().enumerate() {
        if mask.is_none_or(|c| c.contains(x)) {
            unknown[i] = kept.len();
            kept.push(i);
        }
    }
    if kept.len() < 3 {
        return Err(Error::InvalidInput("grid holds fewer than three nodes inside the cell".into()));
    }
    let potentials: Vec<f64> = coords.iter().map(|x| measure.potential(x)).collect();
    let v_min = kept.iter().map(|&i| potentials[i]).fold(f64::INFINITY, f64::min);
    let on_edge = |i: usize, axis: usize| -> bool {
        let pos = if axis == 0 { i % nx } else { i / nx };
        pos == 0 || pos == g.steps[axis]
    };
    let mut warnings = Vec::new();
    let mut clamped = 0usize;
    let h = g.h;
    let mut mass = Vec::with_capacity(kept.len());
    for &i in &kept {
        let mut m = (-(potentials[i] - v_min)).exp() * h.powi(dim as i32);
        for axis in 0..dim {
            if on_edge(i, axis) {
                m *= 0.5;
            }
        }
        if !(m >= 1e-300) {
            clamped += 1;
            m = 1e-300;
        }
        mass.push(m);
    }
    if clamped > 0 {
        warnings.push(format!("{clamped} node weights underflowed and were clamped at 1e-300"));
        if 2 * clamped > kept.len() {
            return Err(Error::SingularMass);
        }
    }
    let bw = if dim == 1 { 1 } else { nx };
    let mut k = BandedSym::zeros(kept.len(), bw);
    for (u, &i) in kept.iter().enumerate() {
        for axis in 0..dim {
            let pos = if axis == 0 { i % nx } else { i / nx };
            if pos == g.steps[axis] {
                continue;
            }
            let j = if axis == 0 { i + 1 } else { i + nx };
            let v = unknown[j];
            if v == usize::MAX {
                continue;
            }
            let mid: Vec<f64> = coords[i].iter().zip(&coords[j]).map(|(a, b)| 0.5 * (a + b)).collect();
            let mut w = (-(measure.potential(&mid) - v_min)).exp() * h.powi(dim as i32 - 2);
            // Edges along the box boundary carry half the dual face.
            if dim == 2 && on_edge(i, 1 - axis) {
                w *= 0.5;
            }
            k.add(u, u, w);
            k.add(v, v, w);
            k.add(u, v, -w);
        }
    }
    Ok(Discretization { stiffness: k, mass, kept, warnings })
}

fn lowest_nonzero(d: &Discretization, diam: f64) -> Result<f64> {
    let shift = 1e-2 * (std::f64::consts::PI / diam).powi(2);
    let ones = vec![1.0; d.mass.len()];
    let res = smallest_generalized_eigenvalue(&d.stiffness, &d.mass, &[ones], shift, 1e-10)?;
    Ok(res.eigenvalue)
}

fn diameter(g: &GridSpec) -> f64 {
    g.lo.iter().zip(&g.hi).map(|(l, u)| (u - l).powi(2)).sum::<f64>().sqrt()
}

fn gap_on(measure: &MeasureSpec, g: &GridSpec, mask: Option<&Cell>) -> Result<SpectralResult> {
    let fine_d = discretize(measure, g, mask)?;
    let fine = lowest_nonzero(&fine_d, diameter(g))?;
    let mut warnings = fine_d.warnings.clone();
    let (value, err) = match g.coarsened() {
        Some(cg) => {
            let coarse_d = discretize(measure, &cg, mask)?;
            let coarse = lowest_nonzero(&coarse_d, diameter(&cg))?;
            if mask.is_some() {
                // Masked boundaries converge at first order; do not extrapolate.
                (fine, (fine - coarse).abs())
            } else {
                richardson(fine, coarse)
            }
        }
        None => {
            warnings.push("odd step count: no Richardson comparison".into());
            (fine, 1e-2 * fine.abs())
        }
    };
    Ok(SpectralResult {
        value,
        error_estimate: err + error_floor(value),
        method: OracleMethod::GridFd,
        mesh_size: fine_d.kept.len(),
        sector_l: None,
        warnings,
    })
}

/// Neumann spectral gap of `e^{-V} dx` restricted to a box (dimension ≤ 2),
/// from a finite-volume discretization with step `h`.
pub fn grid_gap(measure: &MeasureSpec, cell: &Cell, h: f64) -> Result<SpectralResult> {
    if !matches!(cell.shape, Shape::Box { .. }) {
        return Err(Error::UnsupportedGeometry(format!("grid_gap needs a box cell, got {}", cell.label())));
    }
    gap_on(measure, &GridSpec::new(cell, h)?, None)
}

/// As [`grid_gap`] for any bounded cell, keeping the grid nodes inside it
/// (first-order accurate at curved boundaries).
pub fn grid_gap_masked(measure: &MeasureSpec, cell: &Cell, h: f64) -> Result<SpectralResult> {
    if matches!(cell.shape, Shape::Box { .. }) {
        return grid_gap(measure, cell, h);
    }
    gap_on(measure, &GridSpec::new(cell, h)?, Some(cell))
}

/// Discrete Rayleigh quotient `∫|∇u|² dμ / ∫(u − ū)² dμ` of a grid function
/// (values at the nodes of [`grid_nodes`]).
pub fn rayleigh_quotient(u: &[f64], measure: &MeasureSpec, cell: &Cell, h: f64) -> Result<f64> {
    let g = GridSpec::new(cell, h)?;
    if u.len() != g.node_count() {
        return Err(Error::InvalidInput(format!("grid function has {} values, grid has {} nodes", u.len(), g.node_count())));
    }
    let d = discretize(measure, &g, None)?;
    let total: f64 = d.mass.iter().sum();
    let mean: f64 = d.mass.iter().zip(u).map(|(m, v)| m * v).sum::<f64>() / total;
    let var: f64 = d.mass.iter().zip(u).map(|(m, v)| m * (v - mean).powi(2)).sum();
    let scale: f64 = d.mass.iter().zip(u).map(|(m, v)| m * v * v).sum();
    if !(var > 1e-14 * scale) {
        return Err(Error::ZeroVariance);
    }
    let mut ku = vec![0.0; u.len()];
    d.stiffness.matvec(u, &mut ku);
    let energy: f64 = u.iter().zip(&ku).map(|(a, b)| a * b).sum();
    Ok(energy / var)
}
