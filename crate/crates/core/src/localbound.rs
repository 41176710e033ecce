//! Lower bounds on the bottom of the spectrum of the Neumann Schrödinger
//! operator `(Δ_μ + U)|_K` on a single cell.

use serde::Serialize;

use crate::cell::Cell;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::measures::NormalizedMeasure;
use crate::poincare::PoincareEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ConstantFloor,
    ShiftedK,
    SignedKappa,
    HalfMin,
    CappedRatio,
}

impl Method {
    pub const ALL: [Method; 5] =
        [Method::ConstantFloor, Method::ShiftedK, Method::SignedKappa, Method::HalfMin, Method::CappedRatio];

    /// Tie-break rank; lower wins.
    fn rank(self) -> usize {
        Self::ALL.iter().position(|m| *m == self).unwrap_or(usize::MAX)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalBoundReport {
    pub cell: Cell,
    pub method: Method,
    /// `None` for the constant floor, which needs no Poincaré constant.
    pub lambda1_k: Option<PoincareEstimate>,
    /// Cell mean of the expression averaged by the method.
    pub delta_mean: f64,
    pub k_used: Option<f64>,
    pub kappa_used: Option<f64>,
    pub value: f64,
    pub certified: bool,
    /// `inf_K U` (sampled when not available in closed form).
    pub potential_inf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalBoundConfig {
    /// Number of quantile candidates for the shift `k`.
    pub k_grid_size: usize,
    /// Explicit shift candidates; replaces the quantile grid when set.
    pub k_grid: Option<Vec<f64>>,
    pub kappa_grid: Vec<f64>,
    pub methods_enabled: Vec<Method>,
}

impl Default for LocalBoundConfig {
    fn default() -> Self {
        Self {
            k_grid_size: 16,
            k_grid: None,
            kappa_grid: (1..=9).map(|i| i as f64 / 10.0).collect(),
            methods_enabled: Method::ALL.to_vec(),
        }
    }
}

fn nonnegative(u: &ScalarField, cell: &Cell) -> Result<f64> {
    let inf = u.infimum(cell)?;
    if inf.value < 0.0 {
        return Err(Error::InvalidInput(format!("potential is negative on {} (inf {:.3e})", cell.label(), inf.value)));
    }
    Ok(inf.value)
}

fn report(cell: &Cell, method: Method, p: Option<&PoincareEstimate>, delta_mean: f64, value: f64, certified: bool, inf: f64)
    -> LocalBoundReport
{
    LocalBoundReport {
        cell: cell.clone(),
        method,
        lambda1_k: p.copied(),
        delta_mean,
        k_used: None,
        kappa_used: None,
        value,
        certified,
        potential_inf: inf,
    }
}

/// Means over one cell of monotone functions of `U`. Planar point fields
/// are tabulated once and every mean is a weighted sum.
enum Averager<'a> {
    Table(Vec<(f64, f64)>),
    Direct { u: &'a ScalarField, cell: &'a Cell, measure: &'a NormalizedMeasure },
}

impl<'a> Averager<'a> {
    fn new(u: &'a ScalarField, cell: &'a Cell, measure: &'a NormalizedMeasure) -> Result<Self> {
        Ok(match measure.tabulate(u, cell)? {
            Some(t) => Averager::Table(t),
            None => Averager::Direct { u, cell, measure },
        })
    }

    fn mean_of<H>(&self, h: H, nondecreasing: bool) -> Result<f64>
    where
        H: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        match self {
            Averager::Table(t) => Ok(t.iter().map(|(v, w)| w * h(*v)).sum()),
            Averager::Direct { u, cell, measure } => {
                let f = if nondecreasing { u.map_nondecreasing(h, 1.0) } else { u.map_nonincreasing(h, 1.0) };
                measure.mean(&f, cell)
            }
        }
    }

    fn mean(&self) -> Result<f64> {
        match self {
            Averager::Table(_) => self.mean_of(|v| v, true),
            Averager::Direct { u, cell, measure } => measure.mean(u, cell),
        }
    }
}

/// `inf_K U`.
pub fn bound_constant_floor(u: &ScalarField, cell: &Cell) -> Result<LocalBoundReport> {
    let inf = u.infimum(cell)?;
    if !inf.certified {
        return Err(Error::UncertifiedInfimum);
    }
    Ok(report(cell, Method::ConstantFloor, None, inf.value, inf.value, true, inf.value))
}

/// `λ ⨍U / (λ + 2 sup U)`.
pub fn bound_capped_ratio(u: &ScalarField, cell: &Cell, p: &PoincareEstimate, measure: &NormalizedMeasure)
    -> Result<LocalBoundReport>
{
    capped_ratio_with(u, cell, p, &Averager::new(u, cell, measure)?)
}

fn capped_ratio_with(u: &ScalarField, cell: &Cell, p: &PoincareEstimate, avg: &Averager) -> Result<LocalBoundReport> {
    let inf = nonnegative(u, cell)?;
    let sup = u.supremum(cell)?;
    if !sup.value.is_finite() {
        return Err(Error::UnboundedPotential);
    }
    let mean = avg.mean()?;
    let value = p.lambda1 * mean / (p.lambda1 + 2.0 * sup.value);
    Ok(report(cell, Method::CappedRatio, Some(p), mean, value, p.certified && sup.certified, inf))
}

/// `k + ½ ⨍ min(λ/2, U − k)` for a fixed feasible `k`.
fn shifted_value(avg: &Averager, lambda: f64, k: f64) -> Result<(f64, f64)> {
    let cap = 0.5 * lambda;
    let mean = avg.mean_of(move |v| (v - k).min(cap), true)?;
    Ok((k + 0.5 * mean, mean))
}

/// `½ ⨍ min(λ/2, U)`.
pub fn bound_half_min(u: &ScalarField, cell: &Cell, p: &PoincareEstimate, measure: &NormalizedMeasure)
    -> Result<LocalBoundReport>
{
    half_min_with(u, cell, p, &Averager::new(u, cell, measure)?)
}

fn half_min_with(u: &ScalarField, cell: &Cell, p: &PoincareEstimate, avg: &Averager) -> Result<LocalBoundReport> {
    let inf = nonnegative(u, cell)?;
    let (value, mean) = shifted_value(avg, p.lambda1, 0.0)?;
    Ok(report(cell, Method::HalfMin, Some(p), mean, value, p.certified, inf))
}

/// Best `k + ½ ⨍ min(λ/2, U − k)` over the shifts with `U ≥ k` on the cell.
pub fn bound_shifted_k(
    u: &ScalarField,
    cell: &Cell,
    p: &PoincareEstimate,
    measure: &NormalizedMeasure,
    k_grid: &[f64],
) -> Result<LocalBoundReport> {
    shifted_k_with(u, cell, p, &Averager::new(u, cell, measure)?, k_grid)
}

fn shifted_k_with(u: &ScalarField, cell: &Cell, p: &PoincareEstimate, avg: &Averager, k_grid: &[f64])
    -> Result<LocalBoundReport>
{
    let inf = u.infimum(cell)?;
    let mut best: Option<(f64, f64, f64)> = None;
    for &k in k_grid {
        if !(k >= 0.0) || k > inf.value {
            continue;
        }
        let (value, mean) = shifted_value(avg, p.lambda1, k)?;
        if best.is_none_or(|b| value > b.0) {
            best = Some((value, mean, k));
        }
    }
    let (value, mean, k) = best.ok_or(Error::EmptyFeasibleGrid)?;
    let mut r = report(cell, Method::ShiftedK, Some(p), mean, value, p.certified && inf.certified, inf.value);
    r.k_used = Some(k);
    Ok(r)
}

/// Best `k + ½ ⨍ min(λ/2, (U−k)⁺) − ⨍ (U−k)⁻ / κ` over the pairs with
/// `sup (U−k)⁻ ≤ (1−κ) λ/2`. The value may be negative.
pub fn bound_signed_kappa(
    u: &ScalarField,
    cell: &Cell,
    p: &PoincareEstimate,
    measure: &NormalizedMeasure,
    kappa_grid: &[f64],
    k_grid: &[f64],
) -> Result<LocalBoundReport> {
    signed_kappa_with(u, cell, p, &Averager::new(u, cell, measure)?, kappa_grid, k_grid)
}

fn signed_kappa_with(
    u: &ScalarField,
    cell: &Cell,
    p: &PoincareEstimate,
    avg: &Averager,
    kappa_grid: &[f64],
    k_grid: &[f64],
) -> Result<LocalBoundReport> {
    let inf = u.infimum(cell)?;
    let cap = 0.5 * p.lambda1;
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for &k in k_grid {
        let worst_negative = (k - inf.value).max(0.0);
        let feasible: Vec<f64> =
            kappa_grid.iter().copied().filter(|&kp| kp > 0.0 && kp < 1.0 && worst_negative <= (1.0 - kp) * cap).collect();
        if feasible.is_empty() {
            continue;
        }
        let mean_plus = avg.mean_of(move |v| (v - k).max(0.0).min(cap), true)?;
        let mean_minus = if worst_negative > 0.0 {
            avg.mean_of(move |v| (k - v).max(0.0), false)?
        } else {
            0.0
        };
        for kappa in feasible {
            let value = k + 0.5 * mean_plus - mean_minus / kappa;
            if best.is_none_or(|b| value > b.0) {
                best = Some((value, mean_plus - mean_minus, k, kappa));
            }
        }
    }
    let (value, mean, k, kappa) = best.ok_or(Error::EmptyFeasibleGrid)?;
    let mut r = report(cell, Method::SignedKappa, Some(p), mean, value, p.certified && inf.certified, inf.value);
    r.k_used = Some(k);
    r.kappa_used = Some(kappa);
    Ok(r)
}

/// Sample values of `U` over the cell, for the quantile shift grid.
fn sample_values(u: &ScalarField, cell: &Cell, measure: &NormalizedMeasure) -> Vec<f64> {
    const SAMPLES: usize = 257;
    if u.is_radial() {
        let (lo, hi) = cell.radial_range().unwrap_or_else(|| cell.distance_range());
        let hi = hi.min(lo.max(measure.tail_radius));
        return (0..SAMPLES)
            .filter_map(|i| u.eval_radial(lo + (hi - lo) * i as f64 / (SAMPLES - 1) as f64))
            .collect();
    }
    let Some((lo, hi)) = cell.bounding_box() else {
        return Vec::new();
    };
    let dim = lo.len();
    (0..SAMPLES * 4)
        .filter_map(|i| {
            let x: Vec<f64> = (0..dim)
                .map(|d| lo[d] + (hi[d] - lo[d]) * crate::curvature::halton(i + 1, [2, 3, 5, 7][d % 4]))
                .collect();
            cell.contains(&x).then(|| u.eval_point(&x))
        })
        .collect()
}

/// The default shift grid: `k_grid_size` empirical quantiles of `U` on the
/// cell together with `0` and `inf U`, clamped to `[0, inf U + λ/2]`.
pub fn default_k_grid(u: &ScalarField, cell: &Cell, measure: &NormalizedMeasure, lambda: f64, size: usize) -> Vec<f64> {
    let inf = u.infimum(cell).map(|e| e.value).unwrap_or(f64::NAN);
    let mut values: Vec<f64> = sample_values(u, cell, measure).into_iter().filter(|v| v.is_finite()).collect();
    values.sort_by(f64::total_cmp);
    let mut grid = vec![0.0];
    if inf.is_finite() {
        grid.push(inf.max(0.0));
    }
    if !values.is_empty() {
        for j in 0..size {
            let idx = (j * values.len()) / size.max(1);
            grid.push(values[idx.min(values.len() - 1)]);
        }
    }
    let upper = if inf.is_finite() { inf + 0.5 * lambda } else { f64::INFINITY };
    let mut grid: Vec<f64> = grid.into_iter().map(|k| k.min(upper).max(0.0)).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// The largest applicable bound among the enabled methods. With `p = None`
/// only the constant floor is tried.
pub fn best_local_bound(
    u: &ScalarField,
    cell: &Cell,
    p: Option<&PoincareEstimate>,
    measure: &NormalizedMeasure,
    config: &LocalBoundConfig,
) -> Result<LocalBoundReport> {
    let enabled = |m: Method| config.methods_enabled.contains(&m);
    let mut candidates = Vec::new();
    if enabled(Method::ConstantFloor) {
        // A floor of zero says nothing; leave that case to the averaged bounds.
        if let Ok(r) = bound_constant_floor(u, cell) {
            if r.value > 0.0 {
                candidates.push(r);
            }
        }
    }
    if let Some(p) = p {
        let avg = Averager::new(u, cell, measure).unwrap_or(Averager::Direct { u, cell, measure });
        let k_grid = match &config.k_grid {
            Some(g) => g.clone(),
            None => default_k_grid(u, cell, measure, p.lambda1, config.k_grid_size),
        };
        if enabled(Method::ShiftedK) {
            if let Ok(r) = shifted_k_with(u, cell, p, &avg, &k_grid) {
                // k = 0 is the half-min bound itself.
                if r.k_used != Some(0.0) || !enabled(Method::HalfMin) {
                    candidates.push(r);
                }
            }
        }
        if enabled(Method::SignedKappa) {
            if let Ok(r) = signed_kappa_with(u, cell, p, &avg, &config.kappa_grid, &k_grid) {
                let reduces_to_half_min = r.k_used == Some(0.0) && r.potential_inf >= 0.0;
                if !reduces_to_half_min || !enabled(Method::HalfMin) {
                    candidates.push(r);
                }
            }
        }
        if enabled(Method::HalfMin) {
            candidates.extend(half_min_with(u, cell, p, &avg).ok());
        }
        if enabled(Method::CappedRatio) {
            candidates.extend(capped_ratio_with(u, cell, p, &avg).ok());
        }
    }
    candidates
        .into_iter()
        .filter(|r| r.value.is_finite())
        .min_by(|a, b| b.value.total_cmp(&a.value).then(a.method.rank().cmp(&b.method.rank())))
        .ok_or(Error::NoApplicableMethod)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Monotonicity;
    use crate::measures::{normalize, MeasureSpec, RadialMeasure};
    use crate::poincare::PoincareSource;

    fn est(l: f64) -> PoincareEstimate {
        PoincareEstimate { lambda1: l, certified: true, source: PoincareSource::UserConstant, sampled_certificate: false }
    }

    fn gaussian(n: usize) -> NormalizedMeasure {
        normalize(&MeasureSpec::Radial(RadialMeasure::gaussian(n)), 1e-12).unwrap()
    }

    #[test]
    fn constant_potential_arithmetic() {
        let m = gaussian(2);
        let cell = Cell::centered_ball(2, 1.0).unwrap();
        let two = ScalarField::Constant(2.0);
        assert_eq!(bound_constant_floor(&two, &cell).unwrap().value, 2.0);
        assert!((bound_capped_ratio(&two, &cell, &est(1.0), &m).unwrap().value - 0.4).abs() < 1e-15);
        assert!((bound_half_min(&two, &cell, &est(1.0), &m).unwrap().value - 0.25).abs() < 1e-15);
        let s = bound_shifted_k(&two, &cell, &est(1.0), &m, &[0.0, 2.0]).unwrap();
        assert_eq!((s.value, s.k_used), (2.0, Some(2.0)));
        let one = ScalarField::Constant(1.0);
        assert!((bound_capped_ratio(&one, &cell, &est(2.0), &m).unwrap().value - 0.5).abs() < 1e-15);
        let best = best_local_bound(&two, &cell, Some(&est(1.0)), &m, &LocalBoundConfig::default()).unwrap();
        assert_eq!((best.method, best.value), (Method::ConstantFloor, 2.0));
    }

    #[test]
    fn zero_potential_selects_half_min() {
        let m = gaussian(3);
        let cell = Cell::whole(3);
        let zero = ScalarField::Constant(0.0);
        let best = best_local_bound(&zero, &cell, Some(&est(1.0)), &m, &LocalBoundConfig::default()).unwrap();
        assert_eq!((best.method, best.value), (Method::HalfMin, 0.0));
        assert_eq!(bound_shifted_k(&zero, &cell, &est(1.0), &m, &[0.0]).unwrap().value, 0.0);
    }

    #[test]
    fn signed_kappa_negative_constant() {
        let m = gaussian(1);
        let cell = Cell::centered_ball(1, 1.0).unwrap();
        let u = ScalarField::Constant(-0.1);
        let r = bound_signed_kappa(&u, &cell, &est(1.0), &m, &[0.5], &[0.0]).unwrap();
        assert!((r.value + 0.2).abs() < 1e-15, "{r:?}");
        assert_eq!(bound_signed_kappa(&u, &cell, &est(0.2), &m, &[0.5], &[0.0]), Err(Error::EmptyFeasibleGrid));
    }

    #[test]
    fn shifted_k_beats_zero_shift_on_annulus() {
        let m = gaussian(2);
        let cell = Cell::annulus(2, 1.0, 2.0).unwrap();
        let u = ScalarField::radial(|r| r * r, vec![(0.0, Monotonicity::Increasing)]);
        let k1 = bound_shifted_k(&u, &cell, &est(1.0), &m, &[0.0, 1.0]).unwrap();
        let k0 = bound_shifted_k(&u, &cell, &est(1.0), &m, &[0.0]).unwrap();
        assert_eq!(k1.k_used, Some(1.0));
        assert!(k1.value > k0.value);
        assert_eq!(bound_constant_floor(&u, &Cell::ball_complement(2, 3.0).unwrap()).unwrap().value, 9.0);
    }

    #[test]
    fn signed_kappa_prefers_large_kappa() {
        let m = gaussian(2);
        let cell = Cell::centered_ball(2, 1.0).unwrap();
        let u = ScalarField::radial(|r| r * r - 0.05, vec![(0.0, Monotonicity::Increasing)]);
        let r = bound_signed_kappa(&u, &cell, &est(2.0), &m, &[0.25, 0.5, 0.9], &[0.0]).unwrap();
        assert_eq!(r.kappa_used, Some(0.9));
    }
}
