//! The exponential power family `μ_α ∝ e^{−|x|^α/α}` and its perturbations:
//! the truncated moment integrals `I` and `Ĩ`, their Laplace asymptotics,
//! the dimension-free brackets, and the certified two-piece bound.

use serde::Serialize;

use crate::covering::{evaluate_covering, two_piece_covering, BoundConfig, GlobalBoundReport};
use crate::error::{Error, Result};
use crate::measures::{normalize, MeasureSpec, RadialMeasure};
use crate::potential::PowerLawBranch;
use crate::quadrature::{integrate_log, QuadOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawSpec {
    pub alpha: f64,
    pub a: f64,
    pub c: f64,
    pub n: usize,
    pub branch: PowerLawBranch,
}

impl PowerLawSpec {
    pub fn new(alpha: f64, a: f64, c: f64, n: usize, branch: PowerLawBranch) -> Result<Self> {
        let spec = Self { alpha, a, c, n, branch };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 1.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidInput(format!("alpha must be ≥ 1, got {}", self.alpha)));
        }
        if !(self.a > 0.0) || !self.a.is_finite() {
            return Err(Error::InvalidInput(format!("a must be positive, got {}", self.a)));
        }
        if !(self.c > 0.0 && self.c <= 1.0) {
            return Err(Error::InvalidInput(format!("c must lie in (0, 1], got {}", self.c)));
        }
        if self.n == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        match self.branch {
            PowerLawBranch::Inner if self.alpha < 2.0 => {
                Err(Error::BranchMismatch(format!("inner branch needs alpha ≥ 2, got {}", self.alpha)))
            }
            PowerLawBranch::Outer if !(self.alpha > 1.0 && self.alpha <= 2.0) => {
                Err(Error::BranchMismatch(format!("outer branch needs 1 < alpha ≤ 2, got {}", self.alpha)))
            }
            _ => Ok(()),
        }
    }

    /// `R_a = (a n)^{1/α}`.
    pub fn r_a(&self) -> f64 {
        (self.a * self.n as f64).powf(1.0 / self.alpha)
    }

    pub fn measure(&self) -> Result<RadialMeasure> {
        RadialMeasure::power_law(self.n, self.alpha, self.a, self.c, self.branch)
    }

    /// `(α − 2)/α`, written so that `α = 1.5` gives exactly `−1/3`.
    fn exponent(&self) -> f64 {
        (self.alpha - 2.0) / self.alpha
    }
}

fn quad_opts() -> QuadOptions {
    QuadOptions { rel_tol: 1e-12, abs_tol: 0.0, max_intervals: 4000 }
}

/// `ln ∫_{y0}^{y1} y^{s−1} e^{−y} dy` in the log domain.
fn log_gamma_segment(s: f64, y0: f64, y1: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::InvalidInput(format!("moment order gives s = {s} ≤ 0")));
    }
    // Beyond this point the integrand has dropped by far more than e^{-60}.
    let far = s.max(y0) + 12.0 * s.max(1.0).sqrt() + 100.0;
    let y1 = y1.min(far);
    if y1 <= y0 {
        return Ok(f64::NEG_INFINITY);
    }
    if s < 1.0 {
        // t = y^s removes the singularity at 0: ∫ y^{s−1}e^{−y}dy = (1/s)∫ e^{−t^{1/s}} dt.
        let (t0, t1) = (y0.powf(s), y1.powf(s));
        let v = integrate_log(|t: f64| -t.powf(1.0 / s), t0, t1, &[], quad_opts())?;
        return Ok(v - s.ln());
    }
    let lf = move |y: f64| if y == 0.0 { if s == 1.0 { 0.0 } else { f64::NEG_INFINITY } } else { (s - 1.0) * y.ln() - y };
    integrate_log(lf, y0, y1, &[], quad_opts())
}

fn check_moment(alpha: f64, n: usize, gamma: f64) -> Result<f64> {
    if !(alpha > 0.0) || n == 0 {
        return Err(Error::InvalidInput(format!("need alpha > 0 and n ≥ 1, got alpha={alpha}, n={n}")));
    }
    if !(gamma > -(n as f64)) {
        return Err(Error::InvalidInput(format!("gamma must exceed −n, got {gamma}")));
    }
    Ok((gamma + n as f64) / alpha)
}

/// `ln I_{α,n,R,γ} = ln ∫₀^R r^{γ+n−1} e^{−r^α/α} dr`, via `y = r^α/α`.
pub fn i_integral_log(alpha: f64, n: usize, radius: f64, gamma: f64) -> Result<f64> {
    let s = check_moment(alpha, n, gamma)?;
    if !(radius > 0.0) {
        return Err(Error::InvalidInput(format!("radius must be positive, got {radius}")));
    }
    let y = radius.powf(alpha) / alpha;
    Ok((s - 1.0) * alpha.ln() + log_gamma_segment(s, 0.0, y)?)
}

/// `ln Ĩ_{α,n,R,γ} = ln ∫_R^∞ r^{γ+n−1} e^{−r^α/α} dr`.
pub fn itilde_integral_log(alpha: f64, n: usize, radius: f64, gamma: f64) -> Result<f64> {
    let s = check_moment(alpha, n, gamma)?;
    if !(radius >= 0.0) || radius.is_infinite() {
        return Err(Error::InvalidInput(format!("radius must be finite and nonnegative, got {radius}")));
    }
    let y = radius.powf(alpha) / alpha;
    Ok((s - 1.0) * alpha.ln() + log_gamma_segment(s, y, f64::INFINITY)?)
}

pub fn i_integral(alpha: f64, n: usize, radius: f64, gamma: f64) -> Result<f64> {
    i_integral_log(alpha, n, radius, gamma).map(f64::exp)
}

pub fn itilde_integral(alpha: f64, n: usize, radius: f64, gamma: f64) -> Result<f64> {
    itilde_integral_log(alpha, n, radius, gamma).map(f64::exp)
}

/// The Laplace-method ingredients `ψ(u) = u − ln u` and `f_γ(u) = u^{γ/α}`.
pub struct LaplaceTerms;

impl LaplaceTerms {
    pub fn psi(u: f64) -> f64 {
        u - u.ln()
    }

    pub fn f_gamma(u: f64, gamma: f64, alpha: f64) -> f64 {
        u.powf(gamma / alpha)
    }
}

/// Which truncated integral a ratio refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegralSide {
    /// `I` over the ball `B(0, R_a)`.
    Ball,
    /// `Ĩ` over the complement.
    Complement,
}

/// Limit of `n^{−γ/α} I_{α,n,R_a,γ}/I_{α,n,R_a,0}` (or the `Ĩ` analogue) as
/// `n → ∞`: `min(a,1)^{γ/α}` on the ball, `max(a,1)^{γ/α}` outside.
pub fn laplace_ratio_asymptotic(alpha: f64, a: f64, gamma: f64, side: IntegralSide) -> f64 {
    let u = match side {
        IntegralSide::Ball => a.min(1.0),
        IntegralSide::Complement => a.max(1.0),
    };
    LaplaceTerms::f_gamma(u, gamma, alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanRho {
    /// `I_{α,n,R_a,α−2} / I_{α,n,R_a,0}` by quadrature.
    pub ratio: f64,
    /// `(a n)^{1−2/α}` for `a < 1`, `n^{1−2/α}` for `a ≥ 1`.
    pub asymptotic: f64,
}

/// Mean of `ρ = r^{α−2}` over `B(0, R_a)` under `μ_α`, with its asymptotic.
pub fn mean_rho_ball(alpha: f64, n: usize, a: f64) -> Result<MeanRho> {
    if !(alpha >= 2.0) {
        return Err(Error::InvalidInput(format!("mean curvature on the ball needs alpha ≥ 2, got {alpha}")));
    }
    let r_a = (a * n as f64).powf(1.0 / alpha);
    let gamma = alpha - 2.0;
    let ratio = if gamma == 0.0 {
        1.0
    } else {
        (i_integral_log(alpha, n, r_a, gamma)? - i_integral_log(alpha, n, r_a, 0.0)?).exp()
    };
    let asymptotic = (n as f64).powf(gamma / alpha) * laplace_ratio_asymptotic(alpha, a, gamma, IntegralSide::Ball);
    Ok(MeanRho { ratio, asymptotic })
}

/// Dimension-free bracket for the branch matched exactly on the ball
/// (`α ≥ 2`): the gap is at least a universal constant times this.
pub fn inner_bracket(spec: &PowerLawSpec) -> Result<f64> {
    if !matches!(spec.branch, PowerLawBranch::Inner | PowerLawBranch::Pure) || spec.alpha < 2.0 {
        return Err(Error::BranchMismatch(format!("inner bracket needs alpha ≥ 2 (got {}, {:?})", spec.alpha, spec.branch)));
    }
    spec.validate()?;
    let (a, c, n) = (spec.a, spec.c, spec.n as f64);
    let e = 1.0 - 2.0 / spec.alpha;
    Ok(if a <= 1.0 {
        (0.25 / a).min(0.5).min(c) * (a * n).powf(e)
    } else {
        0.25f64.min(c * a.powf(e)) * n.powf(e)
    })
}

/// Dimension-free bracket for the branch matched exactly outside the ball
/// (`1 < α ≤ 2`).
pub fn outer_bracket(spec: &PowerLawSpec) -> Result<f64> {
    if !matches!(spec.branch, PowerLawBranch::Outer | PowerLawBranch::Pure) || !(spec.alpha > 1.0 && spec.alpha <= 2.0) {
        return Err(Error::BranchMismatch(format!(
            "outer bracket needs 1 < alpha ≤ 2 (got {}, {:?})",
            spec.alpha, spec.branch
        )));
    }
    spec.validate()?;
    let (alpha, a, c, n) = (spec.alpha, spec.a, spec.c, spec.n as f64);
    let e = spec.exponent();
    Ok(if a >= 1.0 {
        (0.25 / a).min(0.5 * (alpha - 1.0)).min(c * (alpha - 1.0)) * (a * n).powf(e)
    } else {
        0.25f64.min(0.5 * (alpha - 1.0)).min(c * a.powf(e) * (alpha - 1.0)) * n.powf(e)
    })
}

/// Certified global bound from `{B(0, R_a), B(0, R_a)ᶜ}` with Bobkov
/// Poincaré constants on both pieces.
pub fn assemble_two_piece_bound(spec: &PowerLawSpec, cfg: &BoundConfig) -> Result<GlobalBoundReport> {
    spec.validate()?;
    let measure = normalize(&MeasureSpec::Radial(spec.measure()?), 1e-12)?;
    let covering = two_piece_covering(spec.r_a(), spec.n)?;
    evaluate_covering(&measure, &covering, cfg)
}
