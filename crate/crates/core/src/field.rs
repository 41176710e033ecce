//! Scalar fields on ℝⁿ (potentials `U` fed to the local bounds) and their
//! extrema over cells.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::cell::Cell;
use crate::error::{Error, Result};

/// Monotonicity of a radial profile on one piece.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    Increasing,
    Decreasing,
    Constant,
    Unknown,
}

/// An infimum or supremum, with whether it is exact (or a rigorous bound)
/// rather than a sampled estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Extremum {
    pub value: f64,
    pub certified: bool,
}

type RadialFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// `f(x) = g(|x|)` with monotone pieces `[start_i, start_{i+1})`.
#[derive(Clone)]
pub struct RadialField {
    pub g: RadialFn,
    pub pieces: Vec<(f64, Monotonicity)>,
    /// `lim_{r→∞} g(r)` when known in closed form.
    pub limit_at_infinity: Option<f64>,
    pub lipschitz: Option<f64>,
}

#[derive(Clone)]
pub struct PointField {
    pub dim: usize,
    pub f: PointFn,
    pub lipschitz: Option<f64>,
}

#[derive(Clone)]
pub enum ScalarField {
    Constant(f64),
    Radial(RadialField),
    Point(PointField),
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Constant(c) => write!(f, "Constant({c})"),
            ScalarField::Radial(r) => write!(f, "Radial(pieces={:?})", r.pieces),
            ScalarField::Point(p) => write!(f, "Point(dim={})", p.dim),
        }
    }
}

const SAMPLE_START: usize = 64;
const SAMPLE_MAX: usize = 1 << 14;

impl ScalarField {
    pub fn radial<G: Fn(f64) -> f64 + Send + Sync + 'static>(g: G, pieces: Vec<(f64, Monotonicity)>) -> Self {
        ScalarField::Radial(RadialField { g: Arc::new(g), pieces, limit_at_infinity: None, lipschitz: None })
    }

    /// Radial field with no monotonicity information.
    pub fn radial_sampled<G: Fn(f64) -> f64 + Send + Sync + 'static>(g: G) -> Self {
        Self::radial(g, vec![(0.0, Monotonicity::Unknown)])
    }

    pub fn point<F: Fn(&[f64]) -> f64 + Send + Sync + 'static>(dim: usize, f: F) -> Self {
        ScalarField::Point(PointField { dim, f: Arc::new(f), lipschitz: None })
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        match &mut self {
            ScalarField::Radial(r) => r.lipschitz = Some(l),
            ScalarField::Point(p) => p.lipschitz = Some(l),
            ScalarField::Constant(_) => {}
        }
        self
    }

    pub fn with_limit_at_infinity(mut self, v: f64) -> Self {
        if let ScalarField::Radial(r) = &mut self {
            r.limit_at_infinity = Some(v);
        }
        self
    }

    pub fn is_radial(&self) -> bool {
        !matches!(self, ScalarField::Point(_))
    }

    pub fn eval_point(&self, x: &[f64]) -> f64 {
        match self {
            ScalarField::Constant(c) => *c,
            ScalarField::Radial(r) => (r.g)(x.iter().map(|v| v * v).sum::<f64>().sqrt()),
            ScalarField::Point(p) => (p.f)(x),
        }
    }

    /// Value at radius `r`; only meaningful for radial fields.
    pub fn eval_radial(&self, r: f64) -> Option<f64> {
        match self {
            ScalarField::Constant(c) => Some(*c),
            ScalarField::Radial(f) => Some((f.g)(r)),
            ScalarField::Point(_) => None,
        }
    }

    /// Break points of the radial pieces (empty for other fields).
    pub fn radial_breaks(&self) -> Vec<f64> {
        match self {
            ScalarField::Radial(r) => r.pieces.iter().map(|p| p.0).filter(|b| *b > 0.0).collect(),
            _ => Vec::new(),
        }
    }

    /// `x ↦ h(f(x))` for a nondecreasing `h` with Lipschitz constant `lip_h`
    /// (monotone pieces are preserved).
    pub fn map_nondecreasing<H>(&self, h: H, lip_h: f64) -> Self
    where
        H: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        match self {
            ScalarField::Constant(c) => ScalarField::Constant(h(*c)),
            ScalarField::Radial(r) => {
                let g = r.g.clone();
                let h = Arc::new(h);
                let hh = h.clone();
                ScalarField::Radial(RadialField {
                    g: Arc::new(move |s| hh(g(s))),
                    pieces: r.pieces.clone(),
                    limit_at_infinity: r.limit_at_infinity.map(|v| h(v)),
                    lipschitz: r.lipschitz.map(|l| l * lip_h),
                })
            }
            ScalarField::Point(p) => {
                let f = p.f.clone();
                ScalarField::Point(PointField {
                    dim: p.dim,
                    f: Arc::new(move |x| h(f(x))),
                    lipschitz: p.lipschitz.map(|l| l * lip_h),
                })
            }
        }
    }

    /// `x ↦ h(f(x))` for a nonincreasing `h`; monotone pieces flip direction.
    pub fn map_nonincreasing<H>(&self, h: H, lip_h: f64) -> Self
    where
        H: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let mut out = self.map_nondecreasing(h, lip_h);
        if let ScalarField::Radial(r) = &mut out {
            for piece in &mut r.pieces {
                piece.1 = match piece.1 {
                    Monotonicity::Increasing => Monotonicity::Decreasing,
                    Monotonicity::Decreasing => Monotonicity::Increasing,
                    other => other,
                };
            }
        }
        out
    }

    /// `x ↦ h(f(x))` for an arbitrary `h`; monotonicity is dropped.
    pub fn map<H>(&self, h: H, lip_h: Option<f64>) -> Self
    where
        H: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        match self {
            ScalarField::Constant(c) => ScalarField::Constant(h(*c)),
            ScalarField::Radial(r) => {
                let g = r.g.clone();
                let pieces = r.pieces.iter().map(|(b, _)| (*b, Monotonicity::Unknown)).collect();
                ScalarField::Radial(RadialField {
                    g: Arc::new(move |s| h(g(s))),
                    pieces,
                    limit_at_infinity: None,
                    lipschitz: r.lipschitz.zip(lip_h).map(|(a, b)| a * b),
                })
            }
            ScalarField::Point(p) => {
                let f = p.f.clone();
                ScalarField::Point(PointField {
                    dim: p.dim,
                    f: Arc::new(move |x| h(f(x))),
                    lipschitz: p.lipschitz.zip(lip_h).map(|(a, b)| a * b),
                })
            }
        }
    }

    pub fn infimum(&self, cell: &Cell) -> Result<Extremum> {
        self.extremum(cell, false)
    }

    pub fn supremum(&self, cell: &Cell) -> Result<Extremum> {
        self.extremum(cell, true)
    }

    fn extremum(&self, cell: &Cell, want_max: bool) -> Result<Extremum> {
        match self {
            ScalarField::Constant(c) => Ok(Extremum { value: *c, certified: true }),
            ScalarField::Radial(r) => {
                let (lo, hi) = match cell.radial_range() {
                    Some(range) => range,
                    None => cell.distance_range(),
                };
                Ok(radial_extremum(r, lo, hi, want_max))
            }
            ScalarField::Point(p) => point_extremum(p, cell, want_max),
        }
    }
}

fn better(a: f64, b: f64, want_max: bool) -> bool {
    if want_max {
        a > b
    } else {
        a < b
    }
}

fn radial_extremum(r: &RadialField, lo: f64, hi: f64, want_max: bool) -> Extremum {
    let mut best = if want_max { f64::NEG_INFINITY } else { f64::INFINITY };
    let mut certified = true;
    for (i, &(start, kind)) in r.pieces.iter().enumerate() {
        let end = r.pieces.get(i + 1).map_or(f64::INFINITY, |p| p.0);
        let a = start.max(lo);
        let b = end.min(hi);
        if a > b || (a == b && a != lo && a != hi) {
            continue;
        }
        // The right end of a piece belongs to the next one; approach it from inside.
        let b_eval = if b == end && b.is_finite() && b > a { b - 1e-12 * (1.0 + b) } else { b };
        let at_b = || -> (f64, bool) {
            if b_eval.is_finite() {
                ((r.g)(b_eval), true)
            } else {
                match r.limit_at_infinity {
                    Some(v) => (v, true),
                    None => ((r.g)(1e6 * (1.0 + a)), false),
                }
            }
        };
        let (candidate, exact) = match kind {
            Monotonicity::Constant => ((r.g)(a), true),
            Monotonicity::Increasing if !want_max => ((r.g)(a), true),
            Monotonicity::Decreasing if want_max => ((r.g)(a), true),
            Monotonicity::Increasing | Monotonicity::Decreasing => at_b(),
            Monotonicity::Unknown => {
                let hi_s = if b.is_finite() { b_eval } else { (a + 1.0) * 1e3 };
                sampled_interval(&*r.g, a, hi_s, r.lipschitz.filter(|_| b.is_finite()), want_max)
            }
        };
        certified &= exact;
        if better(candidate, best, want_max) || candidate.is_nan() {
            best = candidate;
        }
    }
    Extremum { value: best, certified }
}

/// Dense sampling with 2× refinement until the extremum is stable. With a
/// Lipschitz constant `L` the result is widened by `L·step/2` and certified.
fn sampled_interval(g: &dyn Fn(f64) -> f64, a: f64, b: f64, lip: Option<f64>, want_max: bool) -> (f64, bool) {
    let mut m = SAMPLE_START;
    let mut prev = f64::NAN;
    loop {
        let step = (b - a) / m as f64;
        let mut best = if want_max { f64::NEG_INFINITY } else { f64::INFINITY };
        for i in 0..=m {
            let v = g(a + step * i as f64);
            if better(v, best, want_max) {
                best = v;
            }
        }
        let stable = (best - prev).abs() <= 1e-12 * (1.0 + best.abs());
        if stable || m >= SAMPLE_MAX {
            return match lip {
                Some(l) => {
                    let pad = 0.5 * l * step;
                    (if want_max { best + pad } else { best - pad }, true)
                }
                None => (best, false),
            };
        }
        prev = best;
        m *= 2;
    }
}

fn point_extremum(p: &PointField, cell: &Cell, want_max: bool) -> Result<Extremum> {
    let (lo, hi) = cell.bounding_box().ok_or_else(|| {
        Error::UnsupportedGeometry("extremum of a non-radial field over an unbounded cell".into())
    })?;
    if p.dim > 2 {
        return Err(Error::UnsupportedGeometry(format!(
            "extremum of a non-radial field is sampled in dimension ≤ 2 only (got {})",
            p.dim
        )));
    }
    let mut m = 32usize;
    let mut prev = f64::NAN;
    loop {
        let steps: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| (h - l) / m as f64).collect();
        let mut best = if want_max { f64::NEG_INFINITY } else { f64::INFINITY };
        let mut any = false;
        let count = if p.dim == 1 { m + 1 } else { (m + 1) * (m + 1) };
        let mut x = vec![0.0; p.dim];
        for idx in 0..count {
            x[0] = lo[0] + steps[0] * (idx % (m + 1)) as f64;
            if p.dim == 2 {
                x[1] = lo[1] + steps[1] * (idx / (m + 1)) as f64;
            }
            if !cell.contains(&x) {
                continue;
            }
            any = true;
            let v = (p.f)(&x);
            if better(v, best, want_max) {
                best = v;
            }
        }
        if !any {
            return Err(Error::InvalidCell("cell contains no sample points".into()));
        }
        let stable = (best - prev).abs() <= 1e-12 * (1.0 + best.abs());
        if stable || m >= 1024 {
            let diag = steps.iter().map(|s| s * s).sum::<f64>().sqrt();
            return Ok(match p.lipschitz {
                // Curved cells may leave boundary points a full step from the grid.
                Some(l) => {
                    let pad = l * diag;
                    Extremum { value: if want_max { best + pad } else { best - pad }, certified: true }
                }
                None => Extremum { value: best, certified: false },
            });
        }
        prev = best;
        m *= 2;
    }
}

/// `αβ/(α+β)`, which lies between `½ min(α, β)` and `min(α, β)`.
pub fn harmonic_half(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    // lo·hi/(lo+hi) = lo / (1 + lo/hi); this form keeps the chain exact in floating point.
    let v = lo / (1.0 + lo / hi);
    v.clamp(0.5 * lo, lo)
}
