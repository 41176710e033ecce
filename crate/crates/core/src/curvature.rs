//! The curvature field `ρ(x) = λ_min(Hess V(x))`, its sign split, and the
//! form-bound discount for its negative part.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::linalg::{relative_asymmetry, symmetric_eigenvalues};
use crate::measures::{FamilyTag, MeasureSpec, NormalizedMeasure, RadialMeasure};
use crate::potential::{PotentialEvaluator, PowerLawBranch};

/// Smallest eigenvalue of `Hess V(x)`.
pub fn hessian_min_eigenvalue(pe: &dyn PotentialEvaluator, x: &[f64]) -> Result<f64> {
    let h = pe.hessian(x);
    min_eigenvalue(&h)
}

fn min_eigenvalue(h: &DMatrix<f64>) -> Result<f64> {
    let asym = relative_asymmetry(h);
    if asym > 1e-12 {
        return Err(Error::NonSymmetricHessian { asymmetry: asym });
    }
    let sym = (h + h.transpose()) * 0.5;
    Ok(symmetric_eigenvalues(&sym).into_iter().fold(f64::INFINITY, f64::min))
}

/// `ρ` for a measure, as a scalar field usable by the local bounds.
#[derive(Debug, Clone)]
pub struct CurvatureField {
    pub field: ScalarField,
    pub radial: Option<RadialMeasure>,
}

/// `min(W''(r), W'(r)/r)` (just `W''` in one dimension).
pub fn radial_rho(rm: &RadialMeasure, r: f64) -> f64 {
    let w2 = rm.profile.second_deriv(r);
    if rm.dim == 1 {
        return w2;
    }
    if r == 0.0 {
        return w2;
    }
    w2.min(rm.profile.deriv(r) / r)
}

impl CurvatureField {
    pub fn from_measure(measure: &MeasureSpec) -> Result<Self> {
        match measure {
            MeasureSpec::Radial(rm) => Ok(Self::radial(rm)),
            MeasureSpec::Evaluator(pe) => {
                let pe: Arc<dyn PotentialEvaluator> = pe.clone();
                let dim = pe.dim();
                let origin = vec![0.0; dim];
                min_eigenvalue(&pe.hessian(&origin))?;
                let field = ScalarField::point(dim, move |x: &[f64]| {
                    hessian_min_eigenvalue(pe.as_ref(), x).unwrap_or(f64::NAN)
                });
                Ok(Self { field, radial: None })
            }
        }
    }

    fn radial(rm: &RadialMeasure) -> Self {
        let rm2 = rm.clone();
        let pieces = rm.profile.curvature_pieces(rm.dim);
        let mut field = ScalarField::radial(move |r| radial_rho(&rm2, r), pieces);
        if let FamilyTag::PowerLaw { alpha, branch, .. } = rm.family {
            let pure_limit = if alpha < 2.0 {
                0.0
            } else if alpha == 2.0 {
                1.0
            } else {
                f64::INFINITY
            };
            let limit = match branch {
                PowerLawBranch::Inner => radial_rho(rm, 2.0 * rm.profile.breakpoints()[0] + 1.0),
                _ => pure_limit,
            };
            field = field.with_limit_at_infinity(limit);
        }
        Self { field, radial: Some(rm.clone()) }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.field.eval_point(x)
    }

    /// `ρ(r)` when the source is radial.
    pub fn radial_profile(&self, r: f64) -> Option<f64> {
        self.radial.as_ref().map(|rm| radial_rho(rm, r))
    }
}

/// `(ρ⁺, ρ⁻) = (max(ρ, 0), max(−ρ, 0))`.
pub fn rho_split(cf: &CurvatureField) -> (ScalarField, ScalarField) {
    let plus = cf.field.map_nondecreasing(|v| v.max(0.0), 1.0);
    let minus = cf.field.map_nonincreasing(|v| (-v).max(0.0), 1.0);
    (plus, minus)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FormBoundProvenance {
    UserSupplied,
    AssumedZero,
}

/// The constant `α ∈ [0, 1)` with `∫ρ⁻u² dμ ≤ α(∫|∇u|² dμ + ∫ρ⁺u² dμ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FormBoundSpec {
    pub alpha_fb: f64,
    pub provenance: FormBoundProvenance,
}

impl FormBoundSpec {
    pub fn user(alpha_fb: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha_fb) {
            return Err(Error::InvalidInput(format!("form bound alpha must lie in [0, 1), got {alpha_fb}")));
        }
        Ok(Self { alpha_fb, provenance: FormBoundProvenance::UserSupplied })
    }

    pub fn assumed_zero() -> Self {
        Self { alpha_fb: 0.0, provenance: FormBoundProvenance::AssumedZero }
    }

    /// `α = 0` when `ρ ≥ 0` at every probe point; otherwise the caller must
    /// supply the constant.
    pub fn infer(cf: &CurvatureField, measure: &NormalizedMeasure, probes: usize) -> Result<Self> {
        match rho_probe_min(cf, measure, probes) {
            m if m >= 0.0 => Ok(Self::assumed_zero()),
            m => Err(Error::InvalidInput(format!(
                "curvature takes negative values (min {m:.3e} on probes); supply form_bound_alpha"
            ))),
        }
    }
}

/// Smallest `ρ` over `probes` deterministic probe points inside the tail radius.
pub fn rho_probe_min(cf: &CurvatureField, measure: &NormalizedMeasure, probes: usize) -> f64 {
    let probes = probes.max(2);
    let reach = measure.tail_radius;
    if cf.radial.is_some() {
        return (0..probes)
            .map(|i| cf.radial_profile(reach * (i as f64 + 0.5) / probes as f64).unwrap_or(f64::NAN))
            .fold(f64::INFINITY, f64::min);
    }
    let dim = measure.dim();
    (0..probes)
        .map(|i| {
            let x: Vec<f64> = (0..dim).map(|d| reach * (2.0 * halton(i + 1, PRIMES[d % PRIMES.len()]) - 1.0)).collect();
            cf.eval(&x)
        })
        .fold(f64::INFINITY, f64::min)
}

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Radical-inverse (Halton) coordinate of `i` in base `b`.
pub fn halton(mut i: usize, b: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= b as f64;
        r += f * (i as u64 % b) as f64;
        i = (i as u64 / b) as usize;
    }
    r
}

/// `(1 − α)·bound`.
pub fn apply_form_bound_discount(bound: f64, fb: &FormBoundSpec) -> f64 {
    (1.0 - fb.alpha_fb) * bound
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{PolynomialPotential, PowerLawProfile, RadialEvaluator};

    #[test]
    fn quartic_hessian_minimum() {
        let pe = RadialEvaluator { dim: 2, profile: Arc::new(PowerLawProfile::pure(4.0)) };
        assert!((hessian_min_eigenvalue(&pe, &[1.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
        let g = PolynomialPotential::gaussian(3);
        assert!((hessian_min_eigenvalue(&g, &[0.3, -2.0, 5.0]).unwrap() - 1.0).abs() < 1e-12);
        let pe = RadialEvaluator { dim: 3, profile: Arc::new(PowerLawProfile::pure(1.5)) };
        assert!((hessian_min_eigenvalue(&pe, &[0.0, 4.0, 0.0]).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn split_and_discount() {
        let cf = CurvatureField { field: ScalarField::Constant(-0.2), radial: None };
        let (p, m) = rho_split(&cf);
        assert_eq!(p.eval_point(&[0.0]), 0.0);
        assert!((m.eval_point(&[0.0]) - 0.2).abs() < 1e-15);
        let fb = FormBoundSpec::user(0.5).unwrap();
        assert_eq!(apply_form_bound_discount(0.4, &fb), 0.2);
        assert_eq!(apply_form_bound_discount(1.0, &FormBoundSpec::user(0.25).unwrap()), 0.75);
        assert!(FormBoundSpec::user(1.0).is_err());
    }

    #[test]
    fn power_law_curvature_matches_closed_form() {
        let rm = RadialMeasure::power_law(5, 3.0, 1.0, 1.0, PowerLawBranch::Pure).unwrap();
        let cf = CurvatureField::from_measure(&MeasureSpec::Radial(rm)).unwrap();
        for r in [0.1, 1.0, 2.5] {
            assert!((cf.radial_profile(r).unwrap() - r).abs() < 1e-14);
        }
        assert_eq!(halton(1, 2), 0.5);
        assert_eq!(halton(3, 2), 0.75);
    }
}
