//! Weighted measures `e^{-V} dx` on ℝⁿ: specification, normalization, cell
//! masses, moments and cell averages of scalar fields.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::cell::{Cell, Shape};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::potential::{PotentialEvaluator, PowerLawBranch, PowerLawProfile, RadialProfile};
use crate::quadrature::{
    composite_rule, integrate_log, integrate_with_breaks, level_crossing_left, level_crossing_right, locate_max,
    QuadOptions,
};
use crate::special::ln_sphere_area;

/// Log-density drop (relative to the peak) beyond which integration domains
/// are clipped.
const CLIP_DROP: f64 = 100.0;
/// Log-density drop used to trim windows of cell integrals.
const WINDOW_DROP: f64 = 80.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilyTag {
    PowerLaw { alpha: f64, a: f64, c: f64, branch: PowerLawBranch },
    Custom,
}

/// `V(x) = W(|x|)` on ℝⁿ.
#[derive(Debug, Clone)]
pub struct RadialMeasure {
    pub dim: usize,
    pub profile: Arc<dyn RadialProfile>,
    pub family: FamilyTag,
}

impl RadialMeasure {
    /// Exponential power measure `∝ e^{−|x|^α/α}`, exact or matched on one
    /// side of `R_a = (a n)^{1/α}`.
    pub fn power_law(dim: usize, alpha: f64, a: f64, c: f64, branch: PowerLawBranch) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        if !(alpha >= 1.0) || !alpha.is_finite() {
            return Err(Error::InvalidInput(format!("alpha must be ≥ 1, got {alpha}")));
        }
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::InvalidInput(format!("a must be positive, got {a}")));
        }
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::InvalidInput(format!("c must lie in (0, 1], got {c}")));
        }
        match branch {
            PowerLawBranch::Inner if alpha < 2.0 => {
                return Err(Error::BranchMismatch(format!("inner branch needs alpha ≥ 2, got {alpha}")))
            }
            PowerLawBranch::Outer if !(alpha > 1.0 && alpha <= 2.0) => {
                return Err(Error::BranchMismatch(format!("outer branch needs 1 < alpha ≤ 2, got {alpha}")))
            }
            _ => {}
        }
        let r_a = (a * dim as f64).powf(1.0 / alpha);
        let profile = PowerLawProfile { alpha, branch, r_a, c };
        Ok(Self { dim, profile: Arc::new(profile), family: FamilyTag::PowerLaw { alpha, a, c, branch } })
    }

    /// Standard Gaussian.
    pub fn gaussian(dim: usize) -> Self {
        Self {
            dim,
            profile: Arc::new(PowerLawProfile::pure(2.0)),
            family: FamilyTag::PowerLaw { alpha: 2.0, a: 1.0, c: 1.0, branch: PowerLawBranch::Pure },
        }
    }

    pub fn custom(dim: usize, profile: Arc<dyn RadialProfile>) -> Self {
        Self { dim, profile, family: FamilyTag::Custom }
    }

    /// `ln(r^{n−1} e^{−W(r)})`, the log of the radial density.
    pub fn log_weight(&self, r: f64) -> f64 {
        let w = self.profile.value(r);
        if self.dim == 1 {
            -w
        } else if r == 0.0 {
            f64::NEG_INFINITY
        } else {
            (self.dim - 1) as f64 * r.ln() - w
        }
    }

    /// `−d/dr` of [`Self::log_weight`].
    pub fn log_weight_decay(&self, r: f64) -> f64 {
        self.profile.deriv(r) - if self.dim == 1 { 0.0 } else { (self.dim - 1) as f64 / r }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self.family {
            FamilyTag::PowerLaw { alpha, .. } => Some(alpha),
            FamilyTag::Custom => None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum MeasureSpec {
    Radial(RadialMeasure),
    Evaluator(Arc<dyn PotentialEvaluator>),
}

impl MeasureSpec {
    pub fn dim(&self) -> usize {
        match self {
            MeasureSpec::Radial(r) => r.dim,
            MeasureSpec::Evaluator(e) => e.dim(),
        }
    }

    pub fn potential(&self, x: &[f64]) -> f64 {
        match self {
            MeasureSpec::Radial(r) => r.profile.value(x.iter().map(|v| v * v).sum::<f64>().sqrt()),
            MeasureSpec::Evaluator(e) => e.value(x),
        }
    }

    pub fn as_radial(&self) -> Option<&RadialMeasure> {
        match self {
            MeasureSpec::Radial(r) => Some(r),
            MeasureSpec::Evaluator(_) => None,
        }
    }
}

/// A measure together with its normalizing constant.
#[derive(Clone)]
pub struct NormalizedMeasure {
    pub base: MeasureSpec,
    pub log_z: f64,
    /// Radius beyond which the neglected mass is below `eps_tail` (relative).
    pub tail_radius: f64,
    pub eps_tail: f64,
    /// Radius (box half-width for evaluator measures) beyond which the
    /// density is below `e^{-100}` of its peak; integrals are clipped there.
    pub support_radius: f64,
}

impl fmt::Debug for NormalizedMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NormalizedMeasure")
            .field("base", &self.base)
            .field("log_z", &self.log_z)
            .field("tail_radius", &self.tail_radius)
            .finish()
    }
}

fn quad_opts() -> QuadOptions {
    QuadOptions { rel_tol: 1e-12, abs_tol: 0.0, max_intervals: 4000 }
}

/// First radius (by doubling from `start`) where `lw` has fallen `CLIP_DROP`
/// below its running maximum and is still decreasing.
pub(crate) fn clip_radius<G: Fn(f64) -> f64>(lw: &G, start: f64) -> Result<f64> {
    clip_radius_at(lw, start, CLIP_DROP)
}

pub(crate) fn clip_radius_at<G: Fn(f64) -> f64>(lw: &G, start: f64, drop: f64) -> Result<f64> {
    let mut r = start.max(1.0);
    let lo = start;
    for _ in 0..64 {
        let (_, peak) = locate_max(lw, lo, r, 512);
        let v = lw(r);
        if v < peak - drop && v < lw(r * (1.0 - 1e-3)) {
            return Ok(r);
        }
        r *= 2.0;
    }
    Err(Error::NonIntegrable { radius: r })
}

/// Normalizes `measure`; `eps_tail ∈ (0, 1e-6]`.
pub fn normalize(measure: &MeasureSpec, eps_tail: f64) -> Result<NormalizedMeasure> {
    if !(eps_tail > 0.0 && eps_tail <= 1e-6) {
        return Err(Error::InvalidInput(format!("eps_tail must lie in (0, 1e-6], got {eps_tail}")));
    }
    match measure {
        MeasureSpec::Radial(rm) => normalize_radial(rm, eps_tail),
        MeasureSpec::Evaluator(pe) => match pe.dim() {
            1 => normalize_line(pe.as_ref(), measure, eps_tail),
            2 => normalize_plane(measure, eps_tail),
            n => Err(Error::UnsupportedGeometry(format!(
                "evaluator measures are supported in dimension ≤ 2 (got {n}); use a radial profile"
            ))),
        },
    }
}

fn normalize_radial(rm: &RadialMeasure, eps_tail: f64) -> Result<NormalizedMeasure> {
    let lw = |r: f64| rm.log_weight(r);
    let support = clip_radius(&lw, 0.0)?;
    let breaks = rm.profile.breakpoints();
    let ln_int = integrate_log(lw, 0.0, support, &breaks, quad_opts())?;
    let log_z = ln_sphere_area(rm.dim) + ln_int;
    // ∫_R^∞ e^{lw} ≤ e^{lw(R)} / (−lw'(R)) once lw is concave and decreasing.
    let target = eps_tail.ln() + ln_int;
    let (x_peak, _) = locate_max(&lw, 0.0, support, 2048);
    let majorant_ok = |r: f64| {
        let d = rm.log_weight_decay(r);
        d > 0.0 && lw(r) - d.ln() < target
    };
    let mut lo = x_peak;
    let mut hi = support;
    if !majorant_ok(hi) {
        hi = support;
    } else {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if majorant_ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-12 * hi {
                break;
            }
        }
    }
    Ok(NormalizedMeasure {
        base: MeasureSpec::Radial(rm.clone()),
        log_z,
        tail_radius: hi,
        eps_tail,
        support_radius: support,
    })
}

fn normalize_line(pe: &dyn PotentialEvaluator, spec: &MeasureSpec, eps_tail: f64) -> Result<NormalizedMeasure> {
    let lf = |x: f64| -pe.value(&[x]);
    let mut l = 1.0;
    let mut found = false;
    for _ in 0..64 {
        let (_, peak) = locate_max(&lf, -l, l, 1024);
        if lf(l) < peak - CLIP_DROP && lf(-l) < peak - CLIP_DROP {
            found = true;
            break;
        }
        l *= 2.0;
    }
    if !found {
        return Err(Error::NonIntegrable { radius: l });
    }
    let ln_int = integrate_log(lf, -l, l, &[0.0], quad_opts())?;
    let target = eps_tail.ln() + ln_int;
    let tail_ok = |t: f64| {
        let gr = pe.gradient(&[t])[0];
        let gl = -pe.gradient(&[-t])[0];
        if gr <= 0.0 || gl <= 0.0 {
            return false;
        }
        let right = lf(t) - gr.ln();
        let left = lf(-t) - gl.ln();
        right.max(left) + 2f64.ln() < target
    };
    let (mut lo, mut hi) = (0.0, l);
    if tail_ok(hi) {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if tail_ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-12 * hi {
                break;
            }
        }
    }
    Ok(NormalizedMeasure { base: spec.clone(), log_z: ln_int, tail_radius: hi, eps_tail, support_radius: l })
}

fn normalize_plane(spec: &MeasureSpec, eps_tail: f64) -> Result<NormalizedMeasure> {
    let boundary_max = |l: f64| {
        let m = 256;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=m {
            let t = -l + 2.0 * l * i as f64 / m as f64;
            for p in [[t, -l], [t, l], [-l, t], [l, t]] {
                best = best.max(-spec.potential(&p));
            }
        }
        best
    };
    let mut l = 1.0;
    let mut found = false;
    for _ in 0..64 {
        let region = Region::Box { lo: [-l, -l], hi: [l, l] };
        let peak = region_peak(spec, &region);
        if boundary_max(l) < peak - CLIP_DROP {
            found = true;
            break;
        }
        l *= 2.0;
    }
    if !found {
        return Err(Error::NonIntegrable { radius: l });
    }
    let region = Region::Box { lo: [-l, -l], hi: [l, l] };
    let sums = grid_integrals(spec, &region, &|_: &[f64]| 0.0)?;
    let ln_int = sums.shift + sums.den.ln();
    // No majorant is available without structure; the tail radius is where
    // the boundary density times the box perimeter drops below eps·Z.
    let target = eps_tail.ln() + ln_int;
    let ok = |t: f64| boundary_max(t) + (8.0 * t).ln() + 2.0 * t.ln().max(0.0) < target;
    let (mut lo, mut hi) = (0.0, l);
    if ok(hi) {
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-10 * hi {
                break;
            }
        }
    }
    Ok(NormalizedMeasure {
        base: spec.clone(),
        log_z: ln_int,
        tail_radius: hi * std::f64::consts::SQRT_2,
        eps_tail,
        support_radius: l,
    })
}

/// Log-density and integrals of a field against it, relative to `e^{shift}`.
#[derive(Debug, Clone, Copy)]
struct CellSums {
    num: f64,
    den: f64,
    shift: f64,
}

impl NormalizedMeasure {
    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn potential(&self, x: &[f64]) -> f64 {
        self.base.potential(x)
    }

    pub fn radial(&self) -> Option<&RadialMeasure> {
        self.base.as_radial()
    }

    /// `μ(cell)`.
    pub fn mass(&self, cell: &Cell) -> Result<f64> {
        let sums = self.cell_sums(&ScalarField::Constant(0.0), cell)?;
        Ok((sums.den.ln() + sums.shift - self.log_z).exp())
    }

    /// `(1/μ(cell)) ∫_cell |x|^γ dμ`.
    pub fn moment(&self, cell: &Cell, gamma: f64) -> Result<f64> {
        let n = self.dim() as f64;
        if !(gamma > -n) {
            return Err(Error::InvalidInput(format!("moment order must exceed −n = {}, got {gamma}", -n)));
        }
        self.check_cell(cell)?;
        if let (Some(rm), Some((lo, hi))) = (self.radial(), cell.radial_range()) {
            let hi = self.radial_upper(rm, lo, hi)?;
            let lw = |r: f64| rm.log_weight(r);
            let lwg = |r: f64| if r == 0.0 && gamma != 0.0 { f64::NEG_INFINITY } else { lw(r) + gamma * r.ln() };
            let breaks = rm.profile.breakpoints();
            let den = integrate_log(lw, lo, hi, &breaks, quad_opts())?;
            let num = integrate_log(lwg, lo, hi, &breaks, quad_opts())?;
            return Ok((num - den).exp());
        }
        let f = ScalarField::point(self.dim(), move |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().powf(0.5 * gamma));
        self.mean(&f, cell)
    }

    /// `(1/μ(cell)) ∫_cell f dμ`.
    pub fn mean(&self, f: &ScalarField, cell: &Cell) -> Result<f64> {
        self.check_cell(cell)?;
        if let ScalarField::Constant(c) = f {
            return Ok(*c);
        }
        let sums = self.cell_sums(f, cell)?;
        if !(sums.den > 0.0) {
            return Err(Error::QuadratureFailure(format!("cell {} carries no mass", cell.label())));
        }
        Ok(sums.num / sums.den)
    }

    /// `(f(x), weight)` pairs whose weighted sums approximate means of
    /// functions of `f` over the cell, for fields integrated on a planar
    /// rule. `None` when the cell is integrated some other way.
    pub fn tabulate(&self, f: &ScalarField, cell: &Cell) -> Result<Option<Vec<(f64, f64)>>> {
        self.check_cell(cell)?;
        let radial_path = self.radial().is_some() && cell.radial_range().is_some() && f.is_radial();
        if self.dim() != 2 || radial_path || matches!(f, ScalarField::Constant(_)) {
            return Ok(None);
        }
        let region = self.region_of(cell)?;
        grid_table(&self.base, &region, &|x: &[f64]| f.eval_point(x)).map(Some)
    }

    fn check_cell(&self, cell: &Cell) -> Result<()> {
        if cell.dim != self.dim() {
            return Err(Error::InvalidCell(format!(
                "cell dimension {} does not match measure dimension {}",
                cell.dim,
                self.dim()
            )));
        }
        Ok(())
    }

    /// Upper radial limit, clipped where the density is negligible.
    fn radial_upper(&self, rm: &RadialMeasure, lo: f64, hi: f64) -> Result<f64> {
        if hi.is_finite() && hi <= self.support_radius {
            return Ok(hi);
        }
        if lo < self.support_radius {
            return Ok(self.support_radius.min(hi));
        }
        let lw = |r: f64| rm.log_weight(r);
        clip_radius(&lw, lo).map(|r| r.min(hi))
    }

    fn cell_sums(&self, f: &ScalarField, cell: &Cell) -> Result<CellSums> {
        self.check_cell(cell)?;
        if let (Some(rm), Some((lo, hi)), true) = (self.radial(), cell.radial_range(), f.is_radial()) {
            return self.radial_sums(rm, f, lo, hi);
        }
        match self.dim() {
            1 => self.line_sums(f, cell),
            2 => {
                let region = self.region_of(cell)?;
                grid_integrals(&self.base, &region, &|x: &[f64]| f.eval_point(x))
            }
            n => Err(Error::UnsupportedGeometry(format!(
                "non-radial integrals are computed in dimension ≤ 2 only (dimension {n}, cell {})",
                cell.label()
            ))),
        }
    }

    fn radial_sums(&self, rm: &RadialMeasure, f: &ScalarField, lo: f64, hi: f64) -> Result<CellSums> {
        let hi = self.radial_upper(rm, lo, hi)?;
        let lw = |r: f64| rm.log_weight(r);
        let (x_peak, peak) = locate_max(&lw, lo, hi, 1024);
        if !peak.is_finite() {
            return Err(Error::QuadratureFailure("radial density has no finite maximum on the cell".into()));
        }
        let a = if lw(lo) >= peak - WINDOW_DROP { lo } else { level_crossing_left(&lw, x_peak, lo, peak - WINDOW_DROP) };
        let b = if lw(hi) >= peak - WINDOW_DROP { hi } else { level_crossing_right(&lw, x_peak, hi, peak - WINDOW_DROP) };
        let mut breaks = vec![a, x_peak.clamp(a, b), b];
        breaks.extend(rm.profile.breakpoints());
        breaks.extend(f.radial_breaks());
        breaks.retain(|x| *x >= a && *x <= b);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let den = integrate_with_breaks(|r| (lw(r) - peak).exp(), &breaks, quad_opts())?;
        let g = |r: f64| f.eval_radial(r).unwrap_or(f64::NAN);
        let opts = QuadOptions { abs_tol: 1e-14 * den.value, ..quad_opts() };
        let num = integrate_with_breaks(|r| g(r) * (lw(r) - peak).exp(), &breaks, opts)?;
        Ok(CellSums { num: num.value, den: den.value, shift: peak + ln_sphere_area(rm.dim) })
    }

    fn intervals_1d(&self, cell: &Cell) -> Vec<(f64, f64)> {
        let s = self.support_radius;
        let clip = |a: f64, b: f64| (a.max(-s), b.min(s));
        let raw = match &cell.shape {
            Shape::Ball { center, radius } => vec![clip(center[0] - radius, center[0] + radius)],
            Shape::Box { lo, hi } => vec![(lo[0], hi[0])],
            Shape::BallComplement { radius } => vec![(-s.max(*radius), -radius), (*radius, s.max(*radius))],
            Shape::Annulus { r_in, r_out } => vec![(-r_out, -r_in), (*r_in, *r_out)],
        };
        raw.into_iter().filter(|(a, b)| b > a).collect()
    }

    fn line_sums(&self, f: &ScalarField, cell: &Cell) -> Result<CellSums> {
        let pieces = self.intervals_1d(cell);
        if pieces.is_empty() {
            return Err(Error::QuadratureFailure(format!("cell {} carries no mass", cell.label())));
        }
        let lf = |x: f64| -self.potential(&[x]);
        let mut shift = f64::NEG_INFINITY;
        let mut peaks = Vec::new();
        for &(a, b) in &pieces {
            let (xp, v) = locate_max(&lf, a, b, 1024);
            shift = shift.max(v);
            peaks.push(xp);
        }
        let mut den = 0.0;
        let mut num = 0.0;
        let mut parts = Vec::new();
        for (&(a, b), &xp) in pieces.iter().zip(&peaks) {
            let mut breaks = vec![a, b, xp];
            if a < 0.0 && b > 0.0 {
                breaks.push(0.0);
            }
            breaks.sort_by(f64::total_cmp);
            breaks.dedup();
            let d = integrate_with_breaks(|x| (lf(x) - shift).exp(), &breaks, quad_opts())?;
            den += d.value;
            parts.push(breaks);
        }
        let opts = QuadOptions { abs_tol: 1e-14 * den, ..quad_opts() };
        for breaks in &parts {
            let r = integrate_with_breaks(|x| f.eval_point(&[x]) * (lf(x) - shift).exp(), breaks, opts)?;
            num += r.value;
        }
        Ok(CellSums { num, den, shift })
    }

    fn region_of(&self, cell: &Cell) -> Result<Region> {
        let s = self.support_radius;
        let far = match self.base {
            MeasureSpec::Radial(_) => s,
            MeasureSpec::Evaluator(_) => s * std::f64::consts::SQRT_2,
        };
        Ok(match &cell.shape {
            Shape::Box { lo, hi } => Region::Box { lo: [lo[0], lo[1]], hi: [hi[0], hi[1]] },
            Shape::Ball { radius, .. } if radius.is_infinite() => match self.base {
                MeasureSpec::Radial(_) => Region::Polar { center: [0.0, 0.0], r0: 0.0, r1: s },
                MeasureSpec::Evaluator(_) => Region::Box { lo: [-s, -s], hi: [s, s] },
            },
            Shape::Ball { center, radius } => Region::Polar { center: [center[0], center[1]], r0: 0.0, r1: *radius },
            Shape::Annulus { r_in, r_out } => Region::Polar { center: [0.0, 0.0], r0: *r_in, r1: *r_out },
            Shape::BallComplement { radius } => {
                if *radius >= far {
                    return Err(Error::QuadratureFailure(format!(
                        "complement of radius {radius} lies beyond the integration support {far}"
                    )));
                }
                Region::Polar { center: [0.0, 0.0], r0: *radius, r1: far }
            }
        })
    }
}

/// Planar integration regions.
#[derive(Debug, Clone, Copy)]
enum Region {
    Box { lo: [f64; 2], hi: [f64; 2] },
    Polar { center: [f64; 2], r0: f64, r1: f64 },
}

const GL_ORDER: usize = 8;

fn region_nodes(region: &Region, panels: usize) -> Vec<([f64; 2], f64)> {
    match *region {
        Region::Box { lo, hi } => {
            let (xs, wx) = composite_rule(lo[0], hi[0], panels, GL_ORDER);
            let (ys, wy) = composite_rule(lo[1], hi[1], panels, GL_ORDER);
            let mut out = Vec::with_capacity(xs.len() * ys.len());
            for (y, wyv) in ys.iter().zip(&wy) {
                for (x, wxv) in xs.iter().zip(&wx) {
                    out.push(([*x, *y], wxv * wyv));
                }
            }
            out
        }
        Region::Polar { center, r0, r1 } => {
            let (rs, wr) = composite_rule(r0, r1, panels, GL_ORDER);
            let (ts, wt) = composite_rule(0.0, 2.0 * std::f64::consts::PI, 2 * panels, GL_ORDER);
            let mut out = Vec::with_capacity(rs.len() * ts.len());
            for (r, wrv) in rs.iter().zip(&wr) {
                for (t, wtv) in ts.iter().zip(&wt) {
                    out.push(([center[0] + r * t.cos(), center[1] + r * t.sin()], wrv * wtv * r));
                }
            }
            out
        }
    }
}

fn region_peak(spec: &MeasureSpec, region: &Region) -> f64 {
    region_nodes(region, 16).iter().map(|(x, _)| -spec.potential(x)).fold(f64::NEG_INFINITY, f64::max)
}

/// Composite Gauss–Legendre sums with panel doubling until both the mass and
/// the field integral change by less than 1e-9 (relative). Fields with kinks
/// converge slowly, so from 64 panels on the field integral only needs 1e-6,
/// and a change below 1e-9 in the mean itself is always accepted.
fn grid_integrals(spec: &MeasureSpec, region: &Region, g: &dyn Fn(&[f64]) -> f64) -> Result<CellSums> {
    grid_converge(spec, region, g).map(|(sums, _)| sums)
}

/// Field values and normalized weights on the rule one doubling finer than
/// the one where the field integral settled.
fn grid_table(spec: &MeasureSpec, region: &Region, g: &dyn Fn(&[f64]) -> f64) -> Result<Vec<(f64, f64)>> {
    let (sums, panels) = grid_converge(spec, region, g)?;
    let mut table: Vec<(f64, f64)> = region_nodes(region, (2 * panels).min(128))
        .into_iter()
        .map(|(x, w)| (g(&x), w * (-spec.potential(&x) - sums.shift).exp()))
        .filter(|(_, w)| *w > 0.0)
        .collect();
    let total: f64 = table.iter().map(|(_, w)| w).sum();
    if !(total > 0.0) {
        return Err(Error::QuadratureFailure("planar rule carries no mass".into()));
    }
    table.iter_mut().for_each(|(_, w)| *w /= total);
    Ok(table)
}

fn grid_converge(spec: &MeasureSpec, region: &Region, g: &dyn Fn(&[f64]) -> f64) -> Result<(CellSums, usize)> {
    let shift = region_peak(spec, region);
    if !shift.is_finite() {
        return Err(Error::QuadratureFailure("density has no finite maximum on the region".into()));
    }
    let eval = |panels: usize| {
        let mut num = 0.0;
        let mut den = 0.0;
        let mut abs = 0.0;
        for (x, w) in region_nodes(region, panels) {
            let d = w * (-spec.potential(&x) - shift).exp();
            let gv = g(&x);
            den += d;
            num += gv * d;
            abs += gv.abs() * d;
        }
        (num, den, abs)
    };
    let mut panels = 8;
    let mut prev = eval(panels);
    loop {
        panels *= 2;
        let cur = eval(panels);
        let den_ok = (cur.1 - prev.1).abs() <= 1e-9 * cur.1;
        let num_tol = if panels >= 64 { 1e-6 } else { 1e-9 };
        let num_change = (cur.0 - prev.0).abs() / cur.2.max(1e-300);
        let mean_change = (cur.0 - prev.0).abs() / cur.1;
        let num_ok = num_change <= num_tol || mean_change <= 1e-9 || cur.2 == 0.0;
        if den_ok && num_ok {
            return Ok((CellSums { num: cur.0, den: cur.1, shift }, panels));
        }
        if panels >= 128 {
            return Err(Error::QuadratureFailure(format!(
                "planar quadrature did not settle at {panels} panels (mass change {:.2e}, field change {num_change:.2e})",
                (cur.1 - prev.1).abs() / cur.1
            )));
        }
        prev = cur;
    }
}

/// Free-function form of [`NormalizedMeasure::moment`].
pub fn moment(measure: &NormalizedMeasure, cell: &Cell, gamma: f64) -> Result<f64> {
    measure.moment(cell, gamma)
}

/// Free-function form of [`NormalizedMeasure::mean`].
pub fn mean_over_cell(f: &ScalarField, measure: &NormalizedMeasure, cell: &Cell) -> Result<f64> {
    measure.mean(f, cell)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::PolynomialPotential;
    use std::f64::consts::PI;

    #[test]
    fn gaussian_normalization() {
        let m = normalize(&MeasureSpec::Radial(RadialMeasure::gaussian(1)), 1e-12).unwrap();
        assert!((m.log_z - (2.0 * PI).sqrt().ln()).abs() < 1e-11);
        let e = normalize(&MeasureSpec::Evaluator(Arc::new(PolynomialPotential::gaussian(1))), 1e-12).unwrap();
        assert!((e.log_z - (2.0 * PI).sqrt().ln()).abs() < 1e-11);
        assert!(e.tail_radius > 6.0 && e.tail_radius < 9.0, "{}", e.tail_radius);
        let p = normalize(&MeasureSpec::Evaluator(Arc::new(PolynomialPotential::gaussian(2))), 1e-12).unwrap();
        assert!((p.log_z - (2.0 * PI).ln()).abs() < 1e-9, "{}", p.log_z);
    }

    #[test]
    fn exponential_normalization_and_tail() {
        let rm = RadialMeasure::power_law(3, 1.0, 1.0, 1.0, PowerLawBranch::Pure).unwrap();
        let m = normalize(&MeasureSpec::Radial(rm), 1e-12).unwrap();
        assert!((m.log_z - (8.0 * PI).ln()).abs() < 1e-11);
        let outside = m.mass(&Cell::ball_complement(3, m.tail_radius).unwrap()).unwrap();
        assert!(outside < 1e-12, "{outside}");
    }

    #[test]
    fn radial_moments() {
        let g = normalize(&MeasureSpec::Radial(RadialMeasure::gaussian(2)), 1e-12).unwrap();
        assert!((g.moment(&Cell::whole(2), 2.0).unwrap() - 2.0).abs() < 1e-10);
        let rm = RadialMeasure::power_law(3, 1.0, 1.0, 1.0, PowerLawBranch::Pure).unwrap();
        let m = normalize(&MeasureSpec::Radial(rm), 1e-12).unwrap();
        assert!((m.moment(&Cell::whole(3), 2.0).unwrap() - 12.0).abs() < 1e-9);
    }

    #[test]
    fn non_integrable_is_detected() {
        let rm = RadialMeasure::custom(1, Arc::new(crate::potential::PowerSumProfile::new(vec![(0.0, 1.0)]).unwrap()));
        assert!(matches!(normalize(&MeasureSpec::Radial(rm), 1e-12), Err(Error::NonIntegrable { .. })));
    }

    #[test]
    fn planar_box_mean() {
        let m = normalize(&MeasureSpec::Evaluator(Arc::new(PolynomialPotential::gaussian(2))), 1e-12).unwrap();
        let b = Cell::boxed(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let f = ScalarField::point(2, |x: &[f64]| x[0]);
        // E[X | 0 ≤ X ≤ 1] for a standard normal.
        let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
        let expected = (phi(0.0) - phi(1.0)) / 0.341_344_746_068_542_9;
        assert!((m.mean(&f, &b).unwrap() - expected).abs() < 1e-8);
    }
}
