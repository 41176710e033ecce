//! Coverings of ℝⁿ by cells, their overlap numbers, and the assembly of the
//! global bound `λ₁(μ) ≥ (1−α)/N · min_i s((Δ_μ + ρ)|_{K_i})`.

use rayon::prelude::*;
use serde::Serialize;

use crate::cell::{Cell, Shape};
use crate::curvature::{apply_form_bound_discount, halton, rho_split, CurvatureField, FormBoundSpec};
use crate::error::{Error, Result};
use crate::localbound::{best_local_bound, LocalBoundConfig, LocalBoundReport};
use crate::measures::{FamilyTag, NormalizedMeasure};
use crate::oracle::OracleSettings;
use crate::poincare::{lambda1_supply, PoincarePolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CoveringKind {
    TwoPiece,
    BallLattice,
    BoxPartition,
}

/// The box a truncated covering is built on, and the `μ`-mass outside it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Truncation {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Upper bound on the neglected mass, once known.
    pub neglected_mass: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Covering {
    pub cells: Vec<Cell>,
    pub overlap_n: usize,
    pub kind: CoveringKind,
    pub radius_param: f64,
    /// `None` when the cells cover all of ℝⁿ.
    pub truncation: Option<Truncation>,
}

impl Covering {
    pub fn dim(&self) -> usize {
        self.cells.first().map_or(0, |c| c.dim)
    }

    pub fn covers_whole_space(&self) -> bool {
        self.truncation.is_none()
    }

    /// Adds the complement of the largest centered ball inside the truncation
    /// box, so that the cells cover ℝⁿ; the overlap number grows by one.
    pub fn with_complement(mut self) -> Result<Self> {
        let Some(t) = self.truncation.take() else {
            return Ok(self);
        };
        let r = t.lo.iter().zip(&t.hi).map(|(l, h)| (-l).min(*h)).fold(f64::INFINITY, f64::min);
        if !(r > 0.0) {
            self.truncation = Some(t);
            return Err(Error::InvalidCell("truncation box does not contain the origin in its interior".into()));
        }
        let dim = self.dim();
        self.cells.push(Cell::ball_complement(dim, r)?);
        self.overlap_n += 1;
        Ok(self)
    }
}

/// `{B(0, R), B(0, R)ᶜ}` with `N = 1`.
pub fn two_piece_covering(radius: f64, n: usize) -> Result<Covering> {
    Ok(Covering {
        cells: vec![Cell::centered_ball(n, radius)?, Cell::ball_complement(n, radius)?],
        overlap_n: 1,
        kind: CoveringKind::TwoPiece,
        radius_param: radius,
        truncation: None,
    })
}

fn box_corners(cell: &Cell) -> Result<(Vec<f64>, Vec<f64>)> {
    match &cell.shape {
        Shape::Box { lo, hi } => Ok((lo.clone(), hi.clone())),
        _ => Err(Error::InvalidCell(format!("expected a box, got {}", cell.label()))),
    }
}

/// Largest number of points of the lattice `pitch·ℤⁿ` in a closed ball of
/// radius `r` (`n ≤ 2`). The maximum of a disk arrangement's depth is
/// attained at a pairwise boundary intersection or, failing that, at a
/// center; counting is done with a small outward tolerance so that the
/// result never undershoots.
pub fn lattice_overlap(pitch: f64, r: f64, n: usize) -> usize {
    let reach = (r / pitch).ceil() as i64 + 1;
    let tol = 1e-9 * r;
    let count = |x: &[f64]| -> usize {
        let mut c = 0;
        let span = |v: f64| ((v - r) / pitch).floor() as i64..=((v + r) / pitch).ceil() as i64;
        if n == 1 {
            for i in span(x[0]) {
                if (x[0] - pitch * i as f64).abs() <= r + tol {
                    c += 1;
                }
            }
        } else {
            for i in span(x[0]) {
                for j in span(x[1]) {
                    let d = ((x[0] - pitch * i as f64).powi(2) + (x[1] - pitch * j as f64).powi(2)).sqrt();
                    if d <= r + tol {
                        c += 1;
                    }
                }
            }
        }
        c
    };
    let mut best = 0;
    if n == 1 {
        for i in -reach..=reach {
            let z = pitch * i as f64;
            for x in [z - r, z + r, z] {
                best = best.max(count(&[x]));
            }
        }
        return best;
    }
    let centers: Vec<[f64; 2]> = (-reach..=reach)
        .flat_map(|i| (-reach..=reach).map(move |j| [pitch * i as f64, pitch * j as f64]))
        .collect();
    // By periodicity it suffices to examine circles meeting the unit cell.
    let near: Vec<&[f64; 2]> = centers
        .iter()
        .filter(|c| c[0].abs() <= r + pitch && c[1].abs() <= r + pitch)
        .collect();
    for (a_idx, a) in near.iter().enumerate() {
        best = best.max(count(&a[..]));
        for b in &near[a_idx + 1..] {
            let dx = b[0] - a[0];
            let dy = b[1] - a[1];
            let d = (dx * dx + dy * dy).sqrt();
            if d == 0.0 || d > 2.0 * r {
                continue;
            }
            let h = (r * r - 0.25 * d * d).max(0.0).sqrt();
            let (mx, my) = (a[0] + 0.5 * dx, a[1] + 0.5 * dy);
            for s in [-1.0, 1.0] {
                let p = [mx - s * h * dy / d, my + s * h * dx / d];
                best = best.max(count(&p));
            }
        }
    }
    best
}

/// Balls of radius `R` centered on a cubic lattice of pitch
/// `2R(1 − 10⁻⁹)/√n` covering the box `[lo, hi]` (`n ≤ 2`). A degenerate box
/// (`lo = hi`) gives a single ball.
pub fn ball_lattice_covering(lo: &[f64], hi: &[f64], radius: f64) -> Result<Covering> {
    let (lo, hi) = (lo.to_vec(), hi.to_vec());
    let n = lo.len();
    if hi.len() != n || lo.iter().zip(&hi).any(|(l, h)| !(l <= h) || !h.is_finite() || !l.is_finite()) {
        return Err(Error::InvalidCell(format!("lattice box needs finite lo ≤ hi, got {lo:?} / {hi:?}")));
    }
    if n == 0 || n > 2 {
        return Err(Error::UnsupportedGeometry(format!("ball lattices are built in dimension 1 or 2, got {n}")));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidInput(format!("lattice radius must be positive, got {radius}")));
    }
    let pitch = 2.0 * radius * (1.0 - 1e-9) / (n as f64).sqrt();
    if 0.5 * pitch * (n as f64).sqrt() > radius {
        return Err(Error::PitchTooCoarse { pitch, radius });
    }
    let degenerate = lo.iter().zip(&hi).all(|(l, h)| l == h);
    if degenerate {
        return Ok(Covering {
            cells: vec![Cell::ball(lo.clone(), radius)?],
            overlap_n: 1,
            kind: CoveringKind::BallLattice,
            radius_param: radius,
            truncation: Some(Truncation { lo, hi, neglected_mass: None }),
        });
    }
    let counts: Vec<usize> = lo.iter().zip(&hi).map(|(l, h)| ((h - l) / pitch).ceil() as usize + 1).collect();
    let total: usize = counts.iter().product();
    let mut cells = Vec::with_capacity(total);
    for idx in 0..total {
        let mut rem = idx;
        let center: Vec<f64> = (0..n)
            .map(|d| {
                let i = rem % counts[d];
                rem /= counts[d];
                lo[d] + pitch * i as f64
            })
            .collect();
        cells.push(Cell::ball(center, radius)?);
    }
    Ok(Covering {
        cells,
        overlap_n: lattice_overlap(pitch, radius, n),
        kind: CoveringKind::BallLattice,
        radius_param: radius,
        truncation: Some(Truncation { lo, hi, neglected_mass: None }),
    })
}

/// The box cut into `parts` equal sub-boxes per axis (`N = 1`).
pub fn box_partition(bx: &Cell, parts: usize) -> Result<Covering> {
    let (lo, hi) = box_corners(bx)?;
    if parts == 0 {
        return Err(Error::InvalidInput("box partition needs at least one part per axis".into()));
    }
    let n = lo.len();
    let total = parts.checked_pow(n as u32).filter(|t| *t <= 1 << 20).ok_or_else(|| {
        Error::InvalidInput(format!("{parts}^{n} sub-boxes is too many"))
    })?;
    let mut cells = Vec::with_capacity(total);
    for idx in 0..total {
        let mut rem = idx;
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for d in 0..n {
            let i = rem % parts;
            rem /= parts;
            let w = (hi[d] - lo[d]) / parts as f64;
            a.push(lo[d] + w * i as f64);
            b.push(if i + 1 == parts { hi[d] } else { lo[d] + w * (i + 1) as f64 });
        }
        cells.push(Cell::boxed(a, b)?);
    }
    let radius = lo.iter().zip(&hi).map(|(l, h)| (h - l) / parts as f64).fold(0.0, f64::max);
    Ok(Covering {
        cells,
        overlap_n: 1,
        kind: CoveringKind::BoxPartition,
        radius_param: radius,
        truncation: Some(Truncation { lo, hi, neglected_mass: None }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CoverageCheck {
    pub samples: usize,
    pub min_hits: usize,
    pub max_hits: usize,
}

/// Fractional part of the golden ratio.
const SHIFT: f64 = 0.618_033_988_749_894_9;

fn primes(count: usize) -> Vec<u64> {
    let mut ps = Vec::with_capacity(count);
    let mut k = 2u64;
    while ps.len() < count {
        if ps.iter().take_while(|p| *p * *p <= k).all(|p| k % p != 0) {
            ps.push(k);
        }
        k += 1;
    }
    ps
}

/// Checks on `samples` Halton points that every point lies in at least one
/// and at most `overlap_n` cells. Points are drawn from the truncation box,
/// or from `[−2R, 2R]ⁿ` for coverings of the whole space.
pub fn check_coverage(covering: &Covering, samples: usize) -> Result<CoverageCheck> {
    let n = covering.dim();
    let (lo, hi) = match &covering.truncation {
        Some(t) => (t.lo.clone(), t.hi.clone()),
        None => (vec![-2.0 * covering.radius_param; n], vec![2.0 * covering.radius_param; n]),
    };
    let bases = primes(n);
    let mut min_hits = usize::MAX;
    let mut max_hits = 0;
    for i in 0..samples {
        // A fixed irrational shift keeps the points off cell boundaries, which are null sets.
        let x: Vec<f64> = (0..n)
            .map(|d| lo[d] + (hi[d] - lo[d]) * (halton(i + 1, bases[d]) + SHIFT * (d + 1) as f64).fract())
            .collect();
        let hits = covering.cells.iter().filter(|c| c.contains(&x)).count();
        min_hits = min_hits.min(hits);
        max_hits = max_hits.max(hits);
        if hits == 0 || hits > covering.overlap_n {
            return Err(Error::InvalidCell(format!(
                "coverage check failed at {x:?}: point lies in {hits} cells (overlap number {})",
                covering.overlap_n
            )));
        }
    }
    Ok(CoverageCheck { samples, min_hits, max_hits })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalBoundReport {
    pub covering: Covering,
    pub per_cell: Vec<LocalBoundReport>,
    pub value: f64,
    pub certified: bool,
    /// The factor `1 − α` applied for the negative part of `ρ`.
    pub discount_applied: f64,
    pub notes: Vec<String>,
}

/// `(1−α)/N · min_i value_i`. Certified when every cell report is, the
/// covering reaches all of ℝⁿ (or the truncation is explicitly accepted),
/// and the potential is nonnegative wherever cells overlap.
pub fn assemble_global_bound(
    covering: &Covering,
    per_cell: Vec<LocalBoundReport>,
    form_bound: Option<&FormBoundSpec>,
    inf_over_lattice_ok: bool,
) -> Result<GlobalBoundReport> {
    if per_cell.len() < covering.cells.len() {
        return Err(Error::MissingCellReport { index: per_cell.len() });
    }
    if let Some(i) = per_cell.iter().position(|r| !r.value.is_finite()) {
        return Err(Error::InvalidInput(format!("cell {i} reports a non-finite bound")));
    }
    let discount = form_bound.map_or(1.0, |fb| apply_form_bound_discount(1.0, fb));
    let min = per_cell.iter().map(|r| r.value).fold(f64::INFINITY, f64::min);
    let value = discount * min / covering.overlap_n as f64;
    let mut notes = Vec::new();
    let mut certified = per_cell.iter().all(|r| r.certified);
    if let Some(t) = &covering.truncation {
        if !inf_over_lattice_ok {
            certified = false;
            notes.push("covering is truncated to a box; set inf_over_lattice_ok to accept it".into());
        } else if t.neglected_mass.is_none() {
            certified = false;
            notes.push("neglected mass outside the truncation box is unknown".into());
        }
    }
    if covering.overlap_n > 1 && per_cell.iter().any(|r| r.potential_inf < 0.0) {
        certified = false;
        notes.push("overlapping cells with a sign-changing potential".into());
    }
    Ok(GlobalBoundReport { covering: covering.clone(), per_cell, value, certified, discount_applied: discount, notes })
}

/// Settings for the per-cell pipeline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundConfig {
    pub local: LocalBoundConfig,
    pub policy: PoincarePolicy,
    pub oracle: OracleSettings,
    /// With a form bound the cells see `ρ⁺` and the result is discounted by
    /// `1 − α`; without one they see `ρ` itself.
    pub form_bound: Option<FormBoundSpec>,
    pub inf_over_lattice_ok: bool,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            local: LocalBoundConfig::default(),
            policy: PoincarePolicy::CertifiedOnly,
            oracle: OracleSettings::default(),
            form_bound: None,
            inf_over_lattice_ok: false,
        }
    }
}

/// Local bounds on every cell (in parallel, reported in cell order) and
/// their assembly.
pub fn evaluate_covering(measure: &NormalizedMeasure, covering: &Covering, cfg: &BoundConfig) -> Result<GlobalBoundReport> {
    let cf = CurvatureField::from_measure(&measure.base)?;
    let u = match cfg.form_bound {
        Some(_) => rho_split(&cf).0,
        None => cf.field.clone(),
    };
    let mut covering = covering.clone();
    if let Some(t) = &mut covering.truncation {
        let bx = Cell::boxed(t.lo.clone(), t.hi.clone())?;
        t.neglected_mass = measure.mass(&bx).ok().map(|m| (1.0 - m).max(0.0));
    }
    let per_cell: Vec<LocalBoundReport> = covering
        .cells
        .par_iter()
        .map(|cell| {
            let p = lambda1_supply(measure, cell, cfg.policy, &cfg.oracle).ok();
            best_local_bound(&u, cell, p.as_ref(), measure, &cfg.local)
        })
        .collect::<Result<_>>()?;
    let mut report = assemble_global_bound(&covering, per_cell, cfg.form_bound.as_ref(), cfg.inf_over_lattice_ok)?;
    if let Some(m) = covering.truncation.as_ref().and_then(|t| t.neglected_mass) {
        if m > measure.eps_tail.max(1e-6) {
            report.certified = false;
            report.notes.push(format!("truncation box leaves mass {m:.3e} uncovered"));
        }
    }
    Ok(report)
}

/// One row of a radius sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub radius: f64,
    pub value: f64,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub best: GlobalBoundReport,
    pub table: Vec<SweepRow>,
}

/// `{2^j R_ref : j = −2..=2}`, with `R_ref = (a n)^{1/α}` for the power-law
/// family and `√M₂` otherwise.
pub fn default_radii(measure: &NormalizedMeasure) -> Result<Vec<f64>> {
    let n = measure.dim() as f64;
    let r_ref = match measure.radial().map(|rm| rm.family) {
        Some(FamilyTag::PowerLaw { alpha, a, .. }) => (a * n).powf(1.0 / alpha),
        _ => measure.moment(&Cell::whole(measure.dim()), 2.0)?.sqrt(),
    };
    Ok((-2..=2).map(|j| r_ref * 2f64.powi(j)).collect())
}

/// Runs the pipeline for each radius and keeps the largest bound (the
/// first one on ties).
pub fn radius_sweep(
    measure: &NormalizedMeasure,
    radii: &[f64],
    builder: &(dyn Fn(f64) -> Result<Covering> + Sync),
    cfg: &BoundConfig,
) -> Result<SweepReport> {
    if radii.is_empty() {
        return Err(Error::InvalidInput("radius sweep needs at least one radius".into()));
    }
    let reports: Vec<GlobalBoundReport> = radii
        .par_iter()
        .map(|&r| evaluate_covering(measure, &builder(r)?, cfg))
        .collect::<Result<_>>()?;
    let table = radii
        .iter()
        .zip(&reports)
        .map(|(&radius, g)| SweepRow { radius, value: g.value, certified: g.certified })
        .collect();
    let best = reports
        .into_iter()
        .reduce(|best, g| if g.value > best.value { g } else { best })
        .expect("radii is nonempty");
    Ok(SweepReport { best, table })
}
