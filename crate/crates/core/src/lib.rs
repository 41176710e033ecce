//! Certified lower bounds for spectral gaps of weighted measures `e^{-V} dx`
//! on ℝⁿ, together with the numerical eigenvalue oracles used to check them.

pub mod cell;
pub mod covering;
pub mod curvature;
pub mod error;
pub mod field;
pub mod linalg;
pub mod localbound;
pub mod measures;
pub mod oracle;
pub mod poincare;
pub mod potential;
pub mod powerlaw;
pub mod quadrature;
pub mod special;

pub use cell::{Cell, Shape};
pub use covering::{BoundConfig, Covering, CoveringKind, GlobalBoundReport};
pub use curvature::{CurvatureField, FormBoundSpec};
pub use error::{Error, Result};
pub use field::{Extremum, Monotonicity, ScalarField};
pub use localbound::{LocalBoundConfig, LocalBoundReport, Method};
pub use measures::{mean_over_cell, moment, normalize, FamilyTag, MeasureSpec, NormalizedMeasure, RadialMeasure};
pub use oracle::{OracleSettings, SpectralResult};
pub use poincare::{PoincareEstimate, PoincarePolicy, PoincareSource};
pub use potential::{PotentialEvaluator, PowerLawBranch, PowerLawProfile, RadialProfile};
pub use powerlaw::PowerLawSpec;
