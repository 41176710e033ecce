//! Neumann spectral gaps `λ₁(K)` of cells, with their provenance: Bobkov's
//! bounds for radial log-concave measures, the one-dimensional `1/(12 M₂)`
//! bound, a user constant, or the numerical oracle.

use serde::Serialize;

use crate::cell::{Cell, Shape};
use crate::error::{Error, Result};
use crate::measures::{MeasureSpec, NormalizedMeasure, RadialMeasure};
use crate::oracle::{grid_gap, grid_gap_masked, line_gap, radial_sector_gap, OracleSettings, SpectralResult};

const LOG_CONCAVITY_PROBES: usize = 512;
const CONVEXITY_SLACK: f64 = -1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PoincareSource {
    BobkovRadial,
    Bobkov1d,
    UserConstant,
    NumericalOracle,
}

/// A value for `λ₁(K)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoincareEstimate {
    pub lambda1: f64,
    pub certified: bool,
    pub source: PoincareSource,
    /// Log-concavity was checked by sampling rather than in closed form.
    pub sampled_certificate: bool,
}

/// `(n−1)/M₂ ≤ λ₁ ≤ n/M₂` for a radial log-concave measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BobkovBounds {
    pub lower: f64,
    pub upper: f64,
    pub m2: f64,
    pub sampled_certificate: bool,
}

impl BobkovBounds {
    pub fn lower_estimate(&self) -> PoincareEstimate {
        PoincareEstimate {
            lambda1: self.lower,
            certified: true,
            source: PoincareSource::BobkovRadial,
            sampled_certificate: self.sampled_certificate,
        }
    }
}

/// Returns whether the certificate was sampled.
fn check_radial_log_concave(rm: &RadialMeasure, reach: f64) -> Result<bool> {
    match rm.profile.convex_nondecreasing() {
        Some(true) => Ok(false),
        Some(false) => Err(Error::NotLogConcave(rm.profile.describe())),
        None => {
            for i in 0..LOG_CONCAVITY_PROBES {
                let r = reach * i as f64 / (LOG_CONCAVITY_PROBES - 1) as f64;
                let (w1, w2) = (rm.profile.deriv(r), rm.profile.second_deriv(r));
                if !(w2 >= CONVEXITY_SLACK) || !(w1 >= CONVEXITY_SLACK) {
                    return Err(Error::NotLogConcave(format!("W'({r:.4}) = {w1:.3e}, W''({r:.4}) = {w2:.3e}")));
                }
            }
            Ok(true)
        }
    }
}

/// Bobkov's two-sided bound on a centered ball, a ball complement or the
/// whole space, for `n ≥ 2`.
pub fn bobkov_gap_bounds(measure: &NormalizedMeasure, cell: &Cell) -> Result<BobkovBounds> {
    let n = measure.dim();
    if n < 2 {
        return Err(Error::DimensionTooSmall(n));
    }
    let rm = measure.radial().ok_or_else(|| Error::NotLogConcave("measure is not radial".into()))?;
    let ok_cell = match &cell.shape {
        Shape::Ball { center, .. } => center.iter().all(|c| *c == 0.0),
        Shape::BallComplement { .. } => true,
        _ => false,
    };
    if !ok_cell {
        return Err(Error::UnsupportedGeometry(format!(
            "radial gap bounds need a centered ball, a ball complement or the whole space, got {}",
            cell.label()
        )));
    }
    let sampled = check_radial_log_concave(rm, measure.tail_radius)?;
    let m2 = measure.moment(cell, 2.0)?;
    if !(m2 > 0.0) || !m2.is_finite() {
        return Err(Error::QuadratureFailure(format!("second moment {m2} on {}", cell.label())));
    }
    Ok(BobkovBounds { lower: (n as f64 - 1.0) / m2, upper: n as f64 / m2, m2, sampled_certificate: sampled })
}

/// `1/(12 M₂)` for a centered log-concave measure on a symmetric interval.
pub fn bobkov_1d_lower(measure: &NormalizedMeasure, cell: &Cell) -> Result<PoincareEstimate> {
    if measure.dim() != 1 || cell.dim != 1 {
        return Err(Error::InvalidInput("the one-dimensional bound needs n = 1".into()));
    }
    let half_width = match &cell.shape {
        Shape::Ball { center, radius } if center[0] == 0.0 => *radius,
        Shape::Box { lo, hi } if lo[0] == -hi[0] => hi[0],
        Shape::BallComplement { .. } => {
            return Err(Error::UnsupportedGeometry("a ball complement in one dimension is disconnected".into()))
        }
        _ => return Err(Error::NotCentered),
    };
    let reach = half_width.min(measure.tail_radius);
    let sampled = match measure.radial() {
        Some(rm) => check_radial_log_concave(rm, reach)?,
        None => {
            let MeasureSpec::Evaluator(pe) = &measure.base else { unreachable!() };
            for i in 0..LOG_CONCAVITY_PROBES {
                let x = -reach + 2.0 * reach * i as f64 / (LOG_CONCAVITY_PROBES - 1) as f64;
                let v2 = pe.hessian(&[x])[(0, 0)];
                if !(v2 >= CONVEXITY_SLACK) {
                    return Err(Error::NotLogConcave(format!("V''({x:.4}) = {v2:.3e}")));
                }
            }
            true
        }
    };
    let m2 = measure.moment(cell, 2.0)?;
    if measure.radial().is_none() {
        let first = measure.mean(&crate::field::ScalarField::point(1, |x: &[f64]| x[0]), cell)?;
        if first.abs() > 1e-8 * m2.sqrt().max(1e-300) {
            return Err(Error::NotCentered);
        }
    }
    Ok(PoincareEstimate {
        lambda1: 1.0 / (12.0 * m2),
        certified: true,
        source: PoincareSource::Bobkov1d,
        sampled_certificate: sampled,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "policy", content = "value")]
pub enum PoincarePolicy {
    CertifiedOnly,
    /// The certified path when it applies, otherwise the numerical oracle.
    AllowNumerical,
    User(f64),
}

fn certified_estimate(measure: &NormalizedMeasure, cell: &Cell) -> Result<PoincareEstimate> {
    if measure.dim() == 1 {
        bobkov_1d_lower(measure, cell)
    } else {
        bobkov_gap_bounds(measure, cell).map(|b| b.lower_estimate())
    }
}

/// Numerical Neumann gap of `μ` restricted to `cell`.
pub fn oracle_gap(measure: &NormalizedMeasure, cell: &Cell, settings: &OracleSettings) -> Result<SpectralResult> {
    if measure.dim() == 1 {
        return line_gap(&measure.base, cell, settings.mesh);
    }
    if let (Some(rm), Some(_)) = (measure.radial(), cell.radial_range()) {
        return radial_sector_gap(rm, cell, settings.l_max, settings.mesh);
    }
    let (lo, hi) = cell.bounding_box().ok_or_else(|| {
        Error::UnsupportedGeometry(format!("no oracle for the unbounded cell {}", cell.label()))
    })?;
    let shortest = lo.iter().zip(&hi).map(|(l, h)| h - l).fold(f64::INFINITY, f64::min);
    let h = settings.h.unwrap_or(shortest / 64.0);
    if matches!(cell.shape, Shape::Box { .. }) {
        grid_gap(&measure.base, cell, h)
    } else {
        grid_gap_masked(&measure.base, cell, h)
    }
}

/// `λ₁(K)` according to `policy`.
pub fn lambda1_supply(
    measure: &NormalizedMeasure,
    cell: &Cell,
    policy: PoincarePolicy,
    settings: &OracleSettings,
) -> Result<PoincareEstimate> {
    match policy {
        PoincarePolicy::User(v) => {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!("user Poincaré constant must be positive, got {v}")));
            }
            Ok(PoincareEstimate { lambda1: v, certified: true, source: PoincareSource::UserConstant, sampled_certificate: false })
        }
        PoincarePolicy::CertifiedOnly => {
            certified_estimate(measure, cell).map_err(|e| Error::NoCertifiedEstimate(format!("{}: {e}", cell.label())))
        }
        PoincarePolicy::AllowNumerical => certified_estimate(measure, cell).or_else(|_| {
            let res = oracle_gap(measure, cell, settings)?;
            // Report the lower end of the oracle's error bar.
            let lower = res.value - res.error_estimate;
            let lambda1 = if lower > 0.0 { lower } else { res.value };
            if !(lambda1 > 0.0) {
                return Err(Error::NoCertifiedEstimate(format!("oracle gap {} is not positive", res.value)));
            }
            Ok(PoincareEstimate { lambda1, certified: false, source: PoincareSource::NumericalOracle, sampled_certificate: false })
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::normalize;
    use crate::potential::PolynomialPotential;
    use std::sync::Arc;

    fn gaussian(n: usize) -> NormalizedMeasure {
        normalize(&MeasureSpec::Radial(RadialMeasure::gaussian(n)), 1e-12).unwrap()
    }

    #[test]
    fn gaussian_whole_space() {
        let b = bobkov_gap_bounds(&gaussian(10), &Cell::whole(10)).unwrap();
        assert!((b.lower - 0.9).abs() < 1e-9 && (b.upper - 1.0).abs() < 1e-9, "{b:?}");
        let b = bobkov_gap_bounds(&gaussian(2), &Cell::whole(2)).unwrap();
        assert!((b.lower - 0.5).abs() < 1e-9 && (b.upper - 1.0).abs() < 1e-9, "{b:?}");
        assert_eq!(bobkov_gap_bounds(&gaussian(1), &Cell::whole(1)), Err(Error::DimensionTooSmall(1)));
    }

    #[test]
    fn one_dimensional_lower_bounds() {
        let g = bobkov_1d_lower(&gaussian(1), &Cell::whole(1)).unwrap();
        assert!((g.lambda1 - 1.0 / 12.0).abs() < 1e-9);
        let e = normalize(&MeasureSpec::Evaluator(Arc::new(PolynomialPotential::gaussian(1))), 1e-12).unwrap();
        let p = bobkov_1d_lower(&e, &Cell::boxed(vec![-1.0], vec![1.0]).unwrap()).unwrap();
        assert!(p.certified && p.sampled_certificate && p.lambda1 > 0.25);
        let off = Cell::boxed(vec![-1.0], vec![2.0]).unwrap();
        assert_eq!(bobkov_1d_lower(&gaussian(1), &off), Err(Error::NotCentered));
    }

    #[test]
    fn user_policy_echoes() {
        let p = lambda1_supply(&gaussian(3), &Cell::whole(3), PoincarePolicy::User(0.7), &OracleSettings::default()).unwrap();
        assert_eq!(p.lambda1, 0.7);
        assert!(p.certified);
        assert_eq!(p.source, PoincareSource::UserConstant);
    }
}
