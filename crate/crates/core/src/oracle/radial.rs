use rayon::prelude::*;

use super::{error_floor, richardson, OracleMethod, SpectralResult};
use crate::cell::{Cell, Shape};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::linalg::SymTridiagonal;
use crate::measures::{clip_radius_at, MeasureSpec, RadialMeasure};
use crate::quadrature::{gauss_legendre, level_crossing_left, level_crossing_right, locate_max};

/// Log-density drop defining the computational window, and the smaller drop
/// of the window used to estimate the truncation effect.
const WIDE_DROP: f64 = 200.0;
const NARROW_DROP: f64 = 150.0;
const GL_POINTS: usize = 4;
/// Drop at which unbounded cells are clipped before windowing.
const CLIP_DROP: f64 = 250.0;

/// `−(w u')'/w + q u = λ u` on an interval, Neumann at both ends unless
/// `dirichlet_at_zero` and the interval starts at 0.
struct SlProblem<'a> {
    lw: &'a (dyn Fn(f64) -> f64 + Sync),
    q: &'a (dyn Fn(f64) -> f64 + Sync),
    peak: f64,
    dirichlet_at_zero: bool,
}

/// Computational window: wide `[a_w, b_w]` and narrow `[a_n, b_n]`.
#[derive(Debug, Clone, Copy)]
struct Window {
    wide: (f64, f64),
    narrow: (f64, f64),
    peak: f64,
}

fn window(lw: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> Result<Window> {
    let (x_peak, peak) = locate_max(&lw, lo, hi, 4096);
    if !peak.is_finite() {
        return Err(Error::InvalidInput("density has no finite maximum on the cell".into()));
    }
    let cut = |drop: f64| {
        let a = if lw(lo) >= peak - drop { lo } else { level_crossing_left(&lw, x_peak, lo, peak - drop) };
        let b = if lw(hi) >= peak - drop { hi } else { level_crossing_right(&lw, x_peak, hi, peak - drop) };
        (a, b)
    };
    let mut wide = cut(WIDE_DROP);
    let mut narrow = cut(NARROW_DROP);
    if lo == 0.0 && wide.0 < 1e-12 * wide.1 {
        wide.0 = 0.0;
    }
    narrow.0 = narrow.0.max(wide.0);
    narrow.1 = narrow.1.min(wide.1);
    Ok(Window { wide, narrow, peak })
}

/// Tridiagonal matrix `M^{-1/2} K M^{-1/2}` on nodes `a + i h`, `i = 0..=m`.
fn assemble(p: &SlProblem, a: f64, h: f64, m: usize, gl: &(Vec<f64>, Vec<f64>)) -> SymTridiagonal {
    let nodes = m + 1;
    let mut mass = vec![0.0; nodes];
    let mut pot = vec![0.0; nodes];
    let mut k = vec![0.0; m];
    let half = 0.5 * h;
    let half_integrals = |x0: f64| {
        let mut w_int = 0.0;
        let mut q_int = 0.0;
        for (t, wt) in gl.0.iter().zip(&gl.1) {
            let x = x0 + 0.5 * half * (t + 1.0);
            let w = ((p.lw)(x) - p.peak).exp() * 0.5 * half * wt;
            w_int += w;
            let qv = (p.q)(x);
            if qv != 0.0 {
                q_int += w * qv;
            }
        }
        (w_int, q_int)
    };
    for i in 0..m {
        let x = a + h * i as f64;
        let (wl, ql) = half_integrals(x);
        let (wr, qr) = half_integrals(x + half);
        k[i] = (wl + wr) / (h * h);
        mass[i] += wl;
        mass[i + 1] += wr;
        pot[i] += ql;
        pot[i + 1] += qr;
    }
    let skip = usize::from(p.dirichlet_at_zero && a == 0.0);
    let mut diag = Vec::with_capacity(nodes - skip);
    let mut off = Vec::with_capacity(nodes.saturating_sub(skip + 1));
    for i in skip..nodes {
        let mi = mass[i].max(1e-300);
        let left = if i > 0 { k[i - 1] } else { 0.0 };
        let right = if i < m { k[i] } else { 0.0 };
        diag.push((left + right + pot[i]) / mi);
        if i < m {
            off.push(-k[i] / (mi * mass[i + 1].max(1e-300)).sqrt());
        }
    }
    SymTridiagonal::new(diag, off)
}

struct SlSolution {
    value: f64,
    error: f64,
    warnings: Vec<String>,
}

/// Richardson-extrapolated `index`-th eigenvalue on the window, with the
/// truncation effect estimated from the narrow window on the same nodes.
fn solve(p: &SlProblem, w: &Window, mesh: usize, index: usize) -> Result<SlSolution> {
    let gl = gauss_legendre(GL_POINTS);
    let (a, b) = w.wide;
    // Eigenvalue and the scale of the operator, which sets its rounding level.
    let eig = |start: f64, h: f64, m: usize| -> Result<(f64, f64)> {
        let t = assemble(p, start, h, m, &gl);
        if t.diag.iter().chain(&t.off).any(|v| !v.is_finite()) {
            return Err(Error::QuadratureFailure("non-finite entry in the assembled operator".into()));
        }
        if t.len() <= index {
            return Err(Error::InvalidInput("mesh too small for the requested eigenvalue".into()));
        }
        let scale = t.diag.iter().chain(&t.off).fold(0.0f64, |acc, v| acc.max(v.abs()));
        Ok((t.eigenvalue(index), scale))
    };
    let h = (b - a) / mesh as f64;
    let (fine, scale) = eig(a, h, mesh)?;
    let (mid, _) = eig(a, 2.0 * h, mesh / 2)?;
    let (coarse, _) = eig(a, 4.0 * h, mesh / 4)?;
    let mut warnings = Vec::new();
    let d1 = (fine - mid).abs();
    let d2 = (mid - coarse).abs();
    let noise = (1e-9 * (1.0 + fine.abs())).max(1e3 * f64::EPSILON * scale);
    if d1 > noise && d1 > d2 {
        return Err(Error::MeshNotConverged(format!(
            "successive mesh differences {d2:.3e} → {d1:.3e} do not decrease (mesh {mesh})"
        )));
    }
    if d1 > noise && d2 < 2.5 * d1 {
        warnings.push(format!("mesh ratio {:.2} below the second-order rate", d2 / d1));
    }
    let (value, rich_err) = richardson(fine, mid);

    let i_a = (((w.narrow.0 - a) / h).floor().max(0.0) as usize).min(mesh);
    let i_b = (((w.narrow.1 - a) / h).ceil() as usize).min(mesh);
    let trunc = if i_b > i_a + index + 2 && (i_a > 0 || i_b < mesh) {
        (eig(a + h * i_a as f64, h, i_b - i_a)?.0 - fine).abs()
    } else {
        0.0
    };
    Ok(SlSolution { value, error: rich_err + trunc + error_floor(value), warnings })
}

fn check_mesh(mesh: usize) -> Result<()> {
    if mesh < 256 {
        return Err(Error::InvalidInput(format!("oracle mesh must be at least 256, got {mesh}")));
    }
    Ok(())
}

/// Spectral gap of a radial measure on a rotation-invariant cell, scanning
/// harmonic sectors `ℓ = 0..=l_max`.
pub fn radial_sector_gap(rm: &RadialMeasure, cell: &Cell, l_max: usize, mesh: usize) -> Result<SpectralResult> {
    check_mesh(mesh)?;
    if l_max < 1 {
        return Err(Error::InvalidInput("l_max must be at least 1".into()));
    }
    if rm.dim == 1 {
        return line_gap(&MeasureSpec::Radial(rm.clone()), cell, mesh);
    }
    let (lo, hi) = cell.radial_range().ok_or_else(|| {
        Error::UnsupportedGeometry(format!("radial solver needs a rotation-invariant cell, got {}", cell.label()))
    })?;
    let lw = |r: f64| rm.log_weight(r);
    let hi = if hi.is_finite() { hi } else { clip_radius_at(&lw, lo, CLIP_DROP)? };
    let win = window(&lw, lo, hi)?;
    let n = rm.dim as f64;
    let sectors: Vec<Result<(usize, SlSolution)>> = (0..=l_max)
        .into_par_iter()
        .map(|l| {
            let c = l as f64 * (l as f64 + n - 2.0);
            let q = move |r: f64| if c == 0.0 { 0.0 } else { c / (r * r) };
            let p = SlProblem { lw: &lw, q: &q, peak: win.peak, dirichlet_at_zero: l >= 1 };
            let index = usize::from(l == 0);
            solve(&p, &win, mesh, index).map(|s| (l, s))
        })
        .collect();
    let mut best: Option<(usize, SlSolution)> = None;
    let mut warnings = Vec::new();
    for s in sectors {
        let (l, sol) = s?;
        if !sol.value.is_finite() {
            return Err(Error::NoCertifiedEstimate(format!("sector {l} produced a non-finite eigenvalue")));
        }
        for w in &sol.warnings {
            warnings.push(format!("sector {l}: {w}"));
        }
        if best.as_ref().is_none_or(|(_, b)| sol.value < b.value) {
            best = Some((l, sol));
        }
    }
    let (l, sol) = best.expect("at least two sectors are scanned");
    if l > 1 {
        warnings.push(format!("gap attained in sector {l} > 1"));
    }
    Ok(SpectralResult {
        value: sol.value,
        error_estimate: sol.error,
        method: OracleMethod::RadialSector,
        mesh_size: mesh,
        sector_l: Some(l),
        warnings,
    })
}

/// Interval `[lo, hi]` of a one-dimensional cell.
fn line_interval(measure: &MeasureSpec, cell: &Cell) -> Result<(f64, f64)> {
    let (lo, hi) = match &cell.shape {
        Shape::Ball { center, radius } => (center[0] - radius, center[0] + radius),
        Shape::Box { lo, hi } => (lo[0], hi[0]),
        _ => {
            return Err(Error::UnsupportedGeometry(format!(
                "one-dimensional solver needs an interval cell, got {}",
                cell.label()
            )))
        }
    };
    let lf = |x: f64| -measure.potential(&[x]);
    let hi = if hi.is_finite() { hi } else { clip_radius_at(&lf, lo.max(0.0), CLIP_DROP)? };
    let lo = if lo.is_finite() { lo } else { -clip_radius_at(&|x: f64| lf(-x), (-hi).max(0.0), CLIP_DROP)? };
    Ok((lo, hi))
}

fn line_problem(measure: &MeasureSpec, cell: &Cell, q: &(dyn Fn(f64) -> f64 + Sync), index: usize, mesh: usize)
    -> Result<SpectralResult>
{
    check_mesh(mesh)?;
    if measure.dim() != 1 || cell.dim != 1 {
        return Err(Error::InvalidInput("one-dimensional solver needs a one-dimensional measure and cell".into()));
    }
    let (lo, hi) = line_interval(measure, cell)?;
    let lw = |x: f64| -measure.potential(&[x]);
    let win = window(&lw, lo, hi)?;
    let p = SlProblem { lw: &lw, q, peak: win.peak, dirichlet_at_zero: false };
    let sol = solve(&p, &win, mesh, index)?;
    Ok(SpectralResult {
        value: sol.value,
        error_estimate: sol.error,
        method: OracleMethod::Line,
        mesh_size: mesh,
        sector_l: None,
        warnings: sol.warnings,
    })
}

/// Neumann spectral gap of a one-dimensional measure on an interval cell.
pub fn line_gap(measure: &MeasureSpec, cell: &Cell, mesh: usize) -> Result<SpectralResult> {
    line_problem(measure, cell, &|_| 0.0, 1, mesh)
}

/// Ground energy of the Neumann realization of `Δ_μ + U` on a cell: radial
/// measure, rotation-invariant cell and radial `U`, or any one-dimensional
/// measure on an interval.
pub fn schrodinger_ground_energy(measure: &MeasureSpec, cell: &Cell, u: &ScalarField, mesh: usize) -> Result<SpectralResult> {
    check_mesh(mesh)?;
    if measure.dim() == 1 {
        let q = |x: f64| u.eval_point(&[x]);
        return line_problem(measure, cell, &q, 0, mesh);
    }
    let (rm, (lo, hi)) = match (measure.as_radial(), cell.radial_range(), u.is_radial()) {
        (Some(rm), Some(range), true) => (rm, range),
        _ => {
            return Err(Error::UnsupportedGeometry(
                "ground energy needs a radial measure, cell and potential (or dimension 1)".into(),
            ))
        }
    };
    let lw = |r: f64| rm.log_weight(r);
    let hi = if hi.is_finite() { hi } else { clip_radius_at(&lw, lo, CLIP_DROP)? };
    let win = window(&lw, lo, hi)?;
    let q = |r: f64| u.eval_radial(r).unwrap_or(f64::NAN);
    let p = SlProblem { lw: &lw, q: &q, peak: win.peak, dirichlet_at_zero: false };
    let sol = solve(&p, &win, mesh, 0)?;
    Ok(SpectralResult {
        value: sol.value,
        error_estimate: sol.error,
        method: OracleMethod::RadialSector,
        mesh_size: mesh,
        sector_l: Some(0),
        warnings: sol.warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{PolynomialPotential, PowerLawBranch};
    use std::sync::Arc;

    #[test]
    fn gaussian_gap_is_one() {
        for n in [1, 2, 5] {
            let r = radial_sector_gap(&RadialMeasure::gaussian(n), &Cell::whole(n), 4, 1024).unwrap();
            assert!((r.value - 1.0).abs() < 1e-3, "n={n}: {r:?}");
        }
    }

    #[test]
    fn uniform_interval() {
        let m = MeasureSpec::Evaluator(Arc::new(PolynomialPotential::zero(1)));
        let cell = Cell::boxed(vec![-1.0], vec![1.0]).unwrap();
        let r = line_gap(&m, &cell, 1024).unwrap();
        let exact = std::f64::consts::PI.powi(2) / 4.0;
        assert!((r.value - exact).abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn constant_potential_shifts_ground_energy() {
        let rm = RadialMeasure::power_law(3, 4.0, 1.0, 1.0, PowerLawBranch::Pure).unwrap();
        let cell = Cell::centered_ball(3, 1.5).unwrap();
        let r = schrodinger_ground_energy(&MeasureSpec::Radial(rm), &cell, &ScalarField::Constant(0.7), 512).unwrap();
        assert!((r.value - 0.7).abs() < 1e-9, "{r:?}");
    }
}
