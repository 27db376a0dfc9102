use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Grid;

/// Open set primitive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Annulus { center: Vec<f64>, inner: f64, outer: f64 },
}

/// A ball touching the closure of the domain only at one boundary point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExteriorBall {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Open domain plus the width of the exterior band on which data lives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub shape: Shape,
    pub band: f64,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl Domain {
    pub fn new(shape: Shape, band: f64) -> Result<Self> {
        let d = Self { shape, band };
        d.validate()?;
        Ok(d)
    }

    pub fn interval(a: f64, b: f64, band: f64) -> Result<Self> {
        Self::new(
            Shape::Box {
                lower: vec![a],
                upper: vec![b],
            },
            band,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.band >= 0.0 && self.band.is_finite()) {
            return Err(Error::Domain(format!("band width {} invalid", self.band)));
        }
        match &self.shape {
            Shape::Box { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return Err(Error::Domain("box corners disagree in dimension".into()));
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
                    return Err(Error::Domain("box must have lower < upper on every axis".into()));
                }
            }
            Shape::Ball { center, radius } => {
                if center.is_empty() || !(*radius > 0.0) {
                    return Err(Error::Domain("ball needs a center and positive radius".into()));
                }
            }
            Shape::Annulus {
                center,
                inner,
                outer,
            } => {
                if center.is_empty() || !(*inner > 0.0 && inner < outer) {
                    return Err(Error::Domain("annulus needs 0 < inner < outer".into()));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match &self.shape {
            Shape::Box { lower, .. } => lower.len(),
            Shape::Ball { center, .. } | Shape::Annulus { center, .. } => center.len(),
        }
    }

    /// Membership in the open set, shrunk by `tol`.
    pub fn contains_with(&self, x: &[f64], tol: f64) -> bool {
        match &self.shape {
            Shape::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(&t, (&l, &u))| t > l + tol && t < u - tol),
            Shape::Ball { center, radius } => dist(x, center) < radius - tol,
            Shape::Annulus {
                center,
                inner,
                outer,
            } => {
                let r = dist(x, center);
                r > inner + tol && r < outer - tol
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.contains_with(x, 0.0)
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.shape {
            Shape::Box { lower, upper } => (lower.clone(), upper.clone()),
            Shape::Ball { center, radius: r }
            | Shape::Annulus {
                center, outer: r, ..
            } => (
                center.iter().map(|c| c - r).collect(),
                center.iter().map(|c| c + r).collect(),
            ),
        }
    }

    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        dist(&lo, &hi)
    }

    /// Uniform grid over the bounding box plus band with spacing at most
    /// `h_max`. The box center is a node, and the spacing divides the
    /// smallest half-width so box faces land on nodes.
    pub fn covering_grid(&self, h_max: f64) -> Result<Grid> {
        if !(h_max > 0.0) {
            return Err(Error::Domain(format!("grid spacing {h_max} must be positive")));
        }
        let (lo, hi) = self.bounding_box();
        let half: Vec<f64> = lo.iter().zip(&hi).map(|(l, u)| 0.5 * (u - l)).collect();
        let base = half.iter().cloned().fold(f64::INFINITY, f64::min);
        let h = base / (base / h_max).ceil();
        let mut lower = Vec::with_capacity(lo.len());
        let mut counts = Vec::with_capacity(lo.len());
        for k in 0..lo.len() {
            let mid = 0.5 * (lo[k] + hi[k]);
            let n = ((half[k] + self.band) / h - 1e-9).ceil() as usize;
            lower.push(mid - h * n as f64);
            counts.push(2 * n + 1);
        }
        Grid::new(lower, h, counts)
    }

    /// Exterior touching ball at a boundary point `x0`.
    pub fn exterior_ball(&self, x0: &[f64]) -> Result<ExteriorBall> {
        let tol = 1e-9 * (1.0 + self.diameter());
        match &self.shape {
            Shape::Box { lower, upper } => {
                let mut normal = vec![0.0; x0.len()];
                let mut on_face = false;
                for k in 0..x0.len() {
                    if x0[k] < lower[k] - tol || x0[k] > upper[k] + tol {
                        return Err(Error::Domain(format!("{x0:?} is outside the box")));
                    }
                    if (x0[k] - lower[k]).abs() <= tol {
                        normal[k] = -1.0;
                        on_face = true;
                    } else if (x0[k] - upper[k]).abs() <= tol {
                        normal[k] = 1.0;
                        on_face = true;
                    }
                }
                if !on_face {
                    return Err(Error::Domain(format!("{x0:?} is not on the box boundary")));
                }
                let n = dist(&normal, &vec![0.0; normal.len()]);
                let radius = 0.5
                    * lower
                        .iter()
                        .zip(upper)
                        .map(|(l, u)| u - l)
                        .fold(f64::INFINITY, f64::min);
                Ok(ExteriorBall {
                    center: x0
                        .iter()
                        .zip(&normal)
                        .map(|(x, v)| x + radius * v / n)
                        .collect(),
                    radius,
                })
            }
            Shape::Ball { center, radius } => {
                let r = dist(x0, center);
                if (r - radius).abs() > tol {
                    return Err(Error::Domain(format!("{x0:?} is not on the sphere")));
                }
                Ok(ExteriorBall {
                    center: x0
                        .iter()
                        .zip(center)
                        .map(|(x, c)| x + radius * (x - c) / r)
                        .collect(),
                    radius: *radius,
                })
            }
            Shape::Annulus {
                center,
                inner,
                outer,
            } => {
                let r = dist(x0, center);
                if (r - outer).abs() <= tol {
                    Ok(ExteriorBall {
                        center: x0
                            .iter()
                            .zip(center)
                            .map(|(x, c)| x + outer * (x - c) / r)
                            .collect(),
                        radius: *outer,
                    })
                } else if (r - inner).abs() <= tol {
                    let rad = 0.5 * inner;
                    Ok(ExteriorBall {
                        center: x0
                            .iter()
                            .zip(center)
                            .map(|(x, c)| x - rad * (x - c) / r)
                            .collect(),
                        radius: rad,
                    })
                } else {
                    Err(Error::Domain(format!("{x0:?} is not on the annulus boundary")))
                }
            }
        }
    }
}
