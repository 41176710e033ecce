//! Potentials `V` of weighted measures `e^{-V} dx`: general evaluators with
//! gradient and Hessian, and radial profiles `V(x) = W(|x|)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::Monotonicity;
use crate::linalg::relative_asymmetry;

/// A smooth potential on ℝⁿ with first and second derivatives.
pub trait PotentialEvaluator: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    fn hessian(&self, x: &[f64]) -> DMatrix<f64>;
}

/// Checks Hessian symmetry (1e-12 relative) and gradient/value consistency
/// under central differences (1e-4 relative, step `1e-5·(1+|x|)`) at random
/// probe points drawn from `[-scale, scale]^n`.
pub fn check_evaluator(pe: &dyn PotentialEvaluator, probes: usize, scale: f64, seed: u64) -> Result<()> {
    let n = pe.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..probes {
        let x: Vec<f64> = (0..n).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect();
        let h = pe.hessian(&x);
        let asym = relative_asymmetry(&h);
        if asym > 1e-12 {
            return Err(Error::NonSymmetricHessian { asymmetry: asym });
        }
        let g = pe.gradient(&x);
        let norm_x = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let step = 1e-5 * (1.0 + norm_x);
        for i in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += step;
            xm[i] -= step;
            let fd = (pe.value(&xp) - pe.value(&xm)) / (2.0 * step);
            let scale_g = g[i].abs().max(1.0);
            if (fd - g[i]).abs() > 1e-4 * scale_g {
                return Err(Error::InvalidInput(format!(
                    "gradient component {i} inconsistent with value at {x:?}: analytic {} vs finite difference {fd}",
                    g[i]
                )));
            }
        }
    }
    Ok(())
}

/// `V(x) = ½ xᵀ A x + b·x + Σ_i q_i x_i⁴ / 4 + v0`.
#[derive(Debug, Clone, Serialize)]
pub struct PolynomialPotential {
    pub quadratic: Vec<Vec<f64>>,
    pub linear: Vec<f64>,
    pub quartic: Vec<f64>,
    pub constant: f64,
}

impl PolynomialPotential {
    pub fn new(quadratic: Vec<Vec<f64>>, linear: Vec<f64>, quartic: Vec<f64>) -> Result<Self> {
        let n = quadratic.len();
        if n == 0 || quadratic.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidInput("quadratic part must be a non-empty square matrix".into()));
        }
        let linear = if linear.is_empty() { vec![0.0; n] } else { linear };
        let quartic = if quartic.is_empty() { vec![0.0; n] } else { quartic };
        if linear.len() != n || quartic.len() != n {
            return Err(Error::InvalidInput("linear and quartic parts must match the dimension".into()));
        }
        for i in 0..n {
            for j in 0..n {
                if (quadratic[i][j] - quadratic[j][i]).abs() > 1e-12 * (1.0 + quadratic[i][j].abs()) {
                    return Err(Error::NonSymmetricHessian {
                        asymmetry: (quadratic[i][j] - quadratic[j][i]).abs(),
                    });
                }
            }
        }
        Ok(Self { quadratic, linear, quartic, constant: 0.0 })
    }

    /// Standard Gaussian potential `|x|²/2`.
    pub fn gaussian(n: usize) -> Self {
        let quadratic = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        Self { quadratic, linear: vec![0.0; n], quartic: vec![0.0; n], constant: 0.0 }
    }

    /// `V ≡ 0` (Lebesgue measure), meaningful on bounded cells only.
    pub fn zero(n: usize) -> Self {
        Self { quadratic: vec![vec![0.0; n]; n], linear: vec![0.0; n], quartic: vec![0.0; n], constant: 0.0 }
    }
}

impl PotentialEvaluator for PolynomialPotential {
    fn dim(&self) -> usize {
        self.linear.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        let mut v = self.constant;
        for i in 0..n {
            let ax: f64 = (0..n).map(|j| self.quadratic[i][j] * x[j]).sum();
            v += 0.5 * x[i] * ax + self.linear[i] * x[i] + 0.25 * self.quartic[i] * x[i].powi(4);
        }
        v
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let ax: f64 = (0..n).map(|j| self.quadratic[i][j] * x[j]).sum();
                ax + self.linear[i] + self.quartic[i] * x[i].powi(3)
            })
            .collect()
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| {
            self.quadratic[i][j] + if i == j { 3.0 * self.quartic[i] * x[i] * x[i] } else { 0.0 }
        })
    }
}

/// Closure-backed evaluator, mostly for tests and ad-hoc potentials.
#[derive(Clone)]
pub struct FnPotential {
    pub dim: usize,
    pub value: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub gradient: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
    pub hessian: Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>,
}

impl fmt::Debug for FnPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnPotential(dim={})", self.dim)
    }
}

impl PotentialEvaluator for FnPotential {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (self.gradient)(x)
    }
    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        (self.hessian)(x)
    }
}

/// Radial profile `W` with `V(x) = W(|x|)`.
pub trait RadialProfile: Send + Sync + fmt::Debug {
    fn value(&self, r: f64) -> f64;
    fn deriv(&self, r: f64) -> f64;
    fn second_deriv(&self, r: f64) -> f64;

    /// Radii where `W` is only piecewise C².
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Closed-form certificate that `W` is convex and nondecreasing on
    /// `[0, ∞)`; `None` when only sampling can tell.
    fn convex_nondecreasing(&self) -> Option<bool> {
        None
    }

    /// Pieces `[b_i, b_{i+1})` on which `ρ(r)` is monotone, as `(b_i, kind)`.
    fn curvature_pieces(&self, _n: usize) -> Vec<(f64, Monotonicity)> {
        vec![(0.0, Monotonicity::Unknown)]
    }

    fn describe(&self) -> String;
}

/// Which region of the exponential power family is matched exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerLawBranch {
    /// Exactly `r^α/α` everywhere.
    Pure,
    /// `r^α/α` inside `B(0, R_a)`, convex quadratic continuation outside with
    /// curvature `c·R_a^{α−2}` (α ≥ 2).
    Inner,
    /// Quadratic core with curvature `R_a^{α−2}` inside `B(0, R_a)`, `r^α/α`
    /// outside (1 < α ≤ 2).
    Outer,
}

/// `W(r) = r^α/α`, optionally modified on one side of `R_a = (a n)^{1/α}`.
#[derive(Debug, Clone, Serialize)]
pub struct PowerLawProfile {
    pub alpha: f64,
    pub branch: PowerLawBranch,
    pub r_a: f64,
    pub c: f64,
}

impl PowerLawProfile {
    pub fn pure(alpha: f64) -> Self {
        Self { alpha, branch: PowerLawBranch::Pure, r_a: f64::INFINITY, c: 1.0 }
    }

    fn pure_value(&self, r: f64) -> f64 {
        r.powf(self.alpha) / self.alpha
    }
    fn pure_deriv(&self, r: f64) -> f64 {
        r.powf(self.alpha - 1.0)
    }
    fn pure_second(&self, r: f64) -> f64 {
        if self.alpha == 2.0 {
            1.0
        } else {
            (self.alpha - 1.0) * r.powf(self.alpha - 2.0)
        }
    }

    /// Curvature of the quadratic piece.
    fn stiffness(&self) -> f64 {
        match self.branch {
            PowerLawBranch::Pure => f64::NAN,
            PowerLawBranch::Inner => self.c * self.r_a.powf(self.alpha - 2.0),
            PowerLawBranch::Outer => self.r_a.powf(self.alpha - 2.0),
        }
    }
}

impl RadialProfile for PowerLawProfile {
    fn value(&self, r: f64) -> f64 {
        let big_r = self.r_a;
        match self.branch {
            PowerLawBranch::Inner if r > big_r => {
                let d = r - big_r;
                self.pure_value(big_r) + self.pure_deriv(big_r) * d + 0.5 * self.stiffness() * d * d
            }
            PowerLawBranch::Outer if r < big_r => {
                self.pure_value(big_r) + 0.5 * self.stiffness() * (r * r - big_r * big_r)
            }
            _ => self.pure_value(r),
        }
    }

    fn deriv(&self, r: f64) -> f64 {
        let big_r = self.r_a;
        match self.branch {
            PowerLawBranch::Inner if r > big_r => self.pure_deriv(big_r) + self.stiffness() * (r - big_r),
            PowerLawBranch::Outer if r < big_r => self.stiffness() * r,
            _ => self.pure_deriv(r),
        }
    }

    fn second_deriv(&self, r: f64) -> f64 {
        let big_r = self.r_a;
        match self.branch {
            PowerLawBranch::Inner if r > big_r => self.stiffness(),
            PowerLawBranch::Outer if r < big_r => self.stiffness(),
            _ => self.pure_second(r),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self.branch {
            PowerLawBranch::Pure => Vec::new(),
            _ => vec![self.r_a],
        }
    }

    fn convex_nondecreasing(&self) -> Option<bool> {
        Some(self.alpha >= 1.0)
    }

    fn curvature_pieces(&self, _n: usize) -> Vec<(f64, Monotonicity)> {
        let pure = if self.alpha > 2.0 {
            Monotonicity::Increasing
        } else if self.alpha < 2.0 {
            Monotonicity::Decreasing
        } else {
            Monotonicity::Constant
        };
        match self.branch {
            PowerLawBranch::Pure => vec![(0.0, pure)],
            PowerLawBranch::Inner => vec![(0.0, pure), (self.r_a, Monotonicity::Constant)],
            PowerLawBranch::Outer => vec![(0.0, Monotonicity::Constant), (self.r_a, pure)],
        }
    }

    fn describe(&self) -> String {
        format!("power_law(alpha={}, branch={:?}, R_a={}, c={})", self.alpha, self.branch, self.r_a, self.c)
    }
}

/// `W(r) = Σ_k coef_k · r^{pow_k}` with `pow_k ≥ 1`.
#[derive(Debug, Clone, Serialize)]
pub struct PowerSumProfile {
    pub terms: Vec<(f64, f64)>,
}

impl PowerSumProfile {
    pub fn new(terms: Vec<(f64, f64)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidInput("radial profile needs at least one term".into()));
        }
        if terms.iter().any(|(c, p)| !c.is_finite() || !(*p >= 1.0)) {
            return Err(Error::InvalidInput("radial profile terms need finite coefficients and powers ≥ 1".into()));
        }
        Ok(Self { terms })
    }
}

impl RadialProfile for PowerSumProfile {
    fn value(&self, r: f64) -> f64 {
        self.terms.iter().map(|(c, p)| c * r.powf(*p)).sum()
    }
    fn deriv(&self, r: f64) -> f64 {
        self.terms.iter().map(|(c, p)| c * p * r.powf(p - 1.0)).sum()
    }
    fn second_deriv(&self, r: f64) -> f64 {
        self.terms
            .iter()
            .filter(|(_, p)| *p != 1.0)
            .map(|(c, p)| c * p * (p - 1.0) * if *p == 2.0 { 1.0 } else { r.powf(p - 2.0) })
            .sum()
    }
    fn convex_nondecreasing(&self) -> Option<bool> {
        if self.terms.iter().all(|(c, _)| *c >= 0.0) {
            Some(true)
        } else {
            None
        }
    }
    fn describe(&self) -> String {
        format!("power_sum({:?})", self.terms)
    }
}

/// Push-forward of a radial measure under `x ↦ s·x`: `W_s(r) = W(r/s)`.
#[derive(Debug, Clone)]
pub struct ScaledProfile {
    pub inner: Arc<dyn RadialProfile>,
    pub scale: f64,
}

impl RadialProfile for ScaledProfile {
    fn value(&self, r: f64) -> f64 {
        self.inner.value(r / self.scale)
    }
    fn deriv(&self, r: f64) -> f64 {
        self.inner.deriv(r / self.scale) / self.scale
    }
    fn second_deriv(&self, r: f64) -> f64 {
        self.inner.second_deriv(r / self.scale) / (self.scale * self.scale)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.inner.breakpoints().into_iter().map(|b| b * self.scale).collect()
    }
    fn convex_nondecreasing(&self) -> Option<bool> {
        self.inner.convex_nondecreasing()
    }
    fn curvature_pieces(&self, n: usize) -> Vec<(f64, Monotonicity)> {
        self.inner.curvature_pieces(n).into_iter().map(|(b, m)| (b * self.scale, m)).collect()
    }
    fn describe(&self) -> String {
        format!("scaled({}, s={})", self.inner.describe(), self.scale)
    }
}

/// A radial profile viewed as a general evaluator on ℝⁿ.
#[derive(Debug, Clone)]
pub struct RadialEvaluator {
    pub dim: usize,
    pub profile: Arc<dyn RadialProfile>,
}

impl PotentialEvaluator for RadialEvaluator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.profile.value(x.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r == 0.0 {
            return vec![0.0; self.dim];
        }
        let d = self.profile.deriv(r);
        x.iter().map(|v| d * v / r).collect()
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim;
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r == 0.0 {
            return DMatrix::identity(n, n) * self.profile.second_deriv(0.0);
        }
        let w2 = self.profile.second_deriv(r);
        let w1r = self.profile.deriv(r) / r;
        DMatrix::from_fn(n, n, |i, j| {
            let p = x[i] * x[j] / (r * r);
            w2 * p + w1r * (if i == j { 1.0 } else { 0.0 } - p)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_potential_is_consistent() {
        let pe = PolynomialPotential::new(
            vec![vec![2.0, 0.3], vec![0.3, 1.0]],
            vec![0.1, -0.2],
            vec![0.5, 0.0],
        )
        .unwrap();
        check_evaluator(&pe, 50, 3.0, 1).unwrap();
    }

    #[test]
    fn radial_evaluator_is_consistent() {
        for alpha in [1.5, 2.0, 3.0, 4.0] {
            let pe = RadialEvaluator { dim: 3, profile: Arc::new(PowerLawProfile::pure(alpha)) };
            check_evaluator(&pe, 50, 3.0, 2).unwrap();
        }
    }

    #[test]
    fn broken_gradient_is_detected() {
        let pe = FnPotential {
            dim: 1,
            value: Arc::new(|x: &[f64]| x[0] * x[0]),
            gradient: Arc::new(|x: &[f64]| vec![x[0]]),
            hessian: Arc::new(|_: &[f64]| DMatrix::from_element(1, 1, 2.0)),
        };
        assert!(check_evaluator(&pe, 10, 2.0, 3).is_err());
    }

    #[test]
    fn asymmetric_hessian_is_detected() {
        let pe = FnPotential {
            dim: 2,
            value: Arc::new(|_: &[f64]| 0.0),
            gradient: Arc::new(|_: &[f64]| vec![0.0, 0.0]),
            hessian: Arc::new(|_: &[f64]| DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0])),
        };
        assert!(matches!(check_evaluator(&pe, 1, 1.0, 4), Err(Error::NonSymmetricHessian { .. })));
    }

    #[test]
    fn matched_branches_are_c1() {
        for (alpha, branch) in [(4.0, PowerLawBranch::Inner), (1.5, PowerLawBranch::Outer)] {
            let p = PowerLawProfile { alpha, branch, r_a: 2.0, c: 0.5 };
            let e = 1e-9;
            assert!((p.value(2.0 - e) - p.value(2.0 + e)).abs() < 1e-7);
            assert!((p.deriv(2.0 - e) - p.deriv(2.0 + e)).abs() < 1e-7);
        }
    }
}
