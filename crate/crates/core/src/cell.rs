//! Domain pieces used by coverings: balls, ball complements, annuli and boxes.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Closed ball; `radius = ∞` denotes the whole space.
    Ball { center: Vec<f64>, radius: f64 },
    /// `{|x| ≥ radius}`.
    BallComplement { radius: f64 },
    /// `{r_in ≤ |x| ≤ r_out}`.
    Annulus { r_in: f64, r_out: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub shape: Shape,
    pub dim: usize,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl Cell {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::InvalidCell("ball center must have at least one coordinate".into()));
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidCell(format!("ball radius must be positive, got {radius}")));
        }
        let dim = center.len();
        Ok(Self { shape: Shape::Ball { center, radius }, dim })
    }

    /// Ball centered at the origin.
    pub fn centered_ball(dim: usize, radius: f64) -> Result<Self> {
        Self::ball(vec![0.0; dim.max(1)], radius).map(|c| Self { dim, ..c })
    }

    /// All of ℝⁿ, represented as a ball of infinite radius.
    pub fn whole(dim: usize) -> Self {
        Self { shape: Shape::Ball { center: vec![0.0; dim], radius: f64::INFINITY }, dim }
    }

    pub fn ball_complement(dim: usize, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidCell(format!("complement radius must be positive and finite, got {radius}")));
        }
        Ok(Self { shape: Shape::BallComplement { radius }, dim })
    }

    pub fn annulus(dim: usize, r_in: f64, r_out: f64) -> Result<Self> {
        if !(r_in >= 0.0) || !(r_in < r_out) {
            return Err(Error::InvalidCell(format!("annulus needs 0 ≤ r_in < r_out, got [{r_in}, {r_out}]")));
        }
        Ok(Self { shape: Shape::Annulus { r_in, r_out }, dim })
    }

    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidCell("box corners must have the same positive dimension".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite()) {
            return Err(Error::InvalidCell(format!("box needs finite lo < hi componentwise, got {lo:?} / {hi:?}")));
        }
        let dim = lo.len();
        Ok(Self { shape: Shape::Box { lo, hi }, dim })
    }

    pub fn is_whole_space(&self) -> bool {
        matches!(&self.shape, Shape::Ball { radius, .. } if radius.is_infinite())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match &self.shape {
            Shape::Ball { center, radius } => {
                let d: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                d <= *radius
            }
            Shape::BallComplement { radius } => norm(x) >= *radius,
            Shape::Annulus { r_in, r_out } => {
                let r = norm(x);
                r >= *r_in && r <= *r_out
            }
            Shape::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| v >= l && v <= h),
        }
    }

    /// Range of `|x|` for a cell that is rotation invariant about the origin,
    /// i.e. a union of spheres. One-dimensional boxes `[−L, L]` qualify.
    pub fn radial_range(&self) -> Option<(f64, f64)> {
        match &self.shape {
            Shape::Ball { center, radius } if center.iter().all(|c| *c == 0.0) => Some((0.0, *radius)),
            Shape::Ball { .. } => None,
            Shape::BallComplement { radius } => Some((*radius, f64::INFINITY)),
            Shape::Annulus { r_in, r_out } => Some((*r_in, *r_out)),
            Shape::Box { lo, hi } if self.dim == 1 && lo[0] == -hi[0] => Some((0.0, hi[0])),
            Shape::Box { .. } => None,
        }
    }

    /// Range of `|x|` over the cell (for any shape).
    pub fn distance_range(&self) -> (f64, f64) {
        match &self.shape {
            Shape::Ball { center, radius } => {
                let c = norm(center);
                ((c - radius).max(0.0), c + radius)
            }
            Shape::BallComplement { radius } => (*radius, f64::INFINITY),
            Shape::Annulus { r_in, r_out } => (*r_in, *r_out),
            Shape::Box { lo, hi } => {
                let near: f64 = lo
                    .iter()
                    .zip(hi)
                    .map(|(l, h)| if *l > 0.0 { l * l } else if *h < 0.0 { h * h } else { 0.0 })
                    .sum::<f64>()
                    .sqrt();
                let far: f64 = lo.iter().zip(hi).map(|(l, h)| l.abs().max(h.abs()).powi(2)).sum::<f64>().sqrt();
                (near, far)
            }
        }
    }

    /// Axis-aligned bounding box, when the cell is bounded.
    pub fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match &self.shape {
            Shape::Ball { center, radius } if radius.is_finite() => Some((
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            )),
            Shape::Annulus { r_out, .. } => Some((vec![-r_out; self.dim], vec![*r_out; self.dim])),
            Shape::Box { lo, hi } => Some((lo.clone(), hi.clone())),
            _ => None,
        }
    }

    /// Short human-readable label, used in reports and CSV output.
    pub fn label(&self) -> String {
        match &self.shape {
            Shape::Ball { radius, .. } if radius.is_infinite() => "whole".to_string(),
            Shape::Ball { center, radius } if center.iter().all(|c| *c == 0.0) => format!("ball(r={radius})"),
            Shape::Ball { center, radius } => format!("ball(c={center:?}, r={radius})"),
            Shape::BallComplement { radius } => format!("complement(r={radius})"),
            Shape::Annulus { r_in, r_out } => format!("annulus({r_in}, {r_out})"),
            Shape::Box { lo, hi } => format!("box({lo:?}, {hi:?})"),
        }
    }
}
