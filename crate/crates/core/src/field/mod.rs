//! Scalar fields, grids, domains and the ball-statistics primitive.

mod analytic;
mod domain;
mod grid;
mod sampling;
mod scalar;

pub use analytic::{battery, AnalyticField};
pub use domain::{Domain, ExteriorBall, Shape};
pub use grid::{Grid, GridField};
pub use sampling::{BallSampler, Quality};
pub use scalar::{CustomFn, Monomial, ScalarFn};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sup, inf and mean of a field over a ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallStats {
    pub sup: f64,
    pub inf: f64,
    pub mean: f64,
    pub sample_count: usize,
}

/// Scalar function on a subset of `R^d`.
///
/// The ball methods default to the sampled surrogate; implementors with
/// cheaper exact formulas override them.
pub trait Field: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> Result<f64>;

    fn ball_stats(&self, center: &[f64], radius: f64, sampler: &BallSampler) -> Result<BallStats> {
        sampled_ball_stats(self, center, radius, sampler)
    }

    /// `(sup, inf)` over the ball.
    fn ball_extremes(&self, center: &[f64], radius: f64, sampler: &BallSampler) -> Result<(f64, f64)> {
        sampled_ball_extremes(self, center, radius, sampler)
    }

    /// Point realizing the sup (or inf) over the ball, with its value.
    fn ball_argext(
        &self,
        center: &[f64],
        radius: f64,
        sampler: &BallSampler,
        maximize: bool,
    ) -> Result<(Vec<f64>, f64)> {
        sampled_ball_argext(self, center, radius, sampler, maximize)
    }
}

impl<F: Field + ?Sized> Field for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        (**self).value(x)
    }
    fn ball_stats(&self, center: &[f64], radius: f64, sampler: &BallSampler) -> Result<BallStats> {
        (**self).ball_stats(center, radius, sampler)
    }
    fn ball_extremes(&self, center: &[f64], radius: f64, sampler: &BallSampler) -> Result<(f64, f64)> {
        (**self).ball_extremes(center, radius, sampler)
    }
    fn ball_argext(
        &self,
        center: &[f64],
        radius: f64,
        sampler: &BallSampler,
        maximize: bool,
    ) -> Result<(Vec<f64>, f64)> {
        (**self).ball_argext(center, radius, sampler, maximize)
    }
}

fn check_ball<F: Field + ?Sized>(f: &F, center: &[f64], radius: f64, sampler: &BallSampler) -> Result<()> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Domain(format!("ball radius {radius} must be positive")));
    }
    if center.len() != f.dim() || sampler.dim() != f.dim() {
        return Err(Error::Domain(format!(
            "dimension mismatch: field {}, center {}, sampler {}",
            f.dim(),
            center.len(),
            sampler.dim()
        )));
    }
    Ok(())
}

#[inline]
fn place(buf: &mut [f64], center: &[f64], radius: f64, s: &[f64]) {
    for k in 0..center.len() {
        buf[k] = center[k] + radius * s[k];
    }
}

pub fn sampled_ball_stats<F: Field + ?Sized>(
    f: &F,
    center: &[f64],
    radius: f64,
    sampler: &BallSampler,
) -> Result<BallStats> {
    check_ball(f, center, radius, sampler)?;
    let d = center.len();
    let mut buf = [0.0f64; 3];
    let y = &mut buf[..d];
    let (mut hi, mut lo, mut sum) = (f64::NEG_INFINITY, f64::INFINITY, 0.0);
    for s in sampler.volume_points() {
        place(y, center, radius, s);
        let v = f.value(y)?;
        hi = hi.max(v);
        lo = lo.min(v);
        sum += v;
    }
    for s in sampler.shell_points() {
        place(y, center, radius, s);
        let v = f.value(y)?;
        hi = hi.max(v);
        lo = lo.min(v);
    }
    Ok(BallStats {
        sup: hi,
        inf: lo,
        mean: sum / sampler.n_volume() as f64,
        sample_count: sampler.n_volume() + sampler.n_shell(),
    })
}

pub fn sampled_ball_extremes<F: Field + ?Sized>(
    f: &F,
    center: &[f64],
    radius: f64,
    sampler: &BallSampler,
) -> Result<(f64, f64)> {
    check_ball(f, center, radius, sampler)?;
    let d = center.len();
    let mut buf = [0.0f64; 3];
    let y = &mut buf[..d];
    let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
    for s in sampler.all_points() {
        place(y, center, radius, s);
        let v = f.value(y)?;
        hi = hi.max(v);
        lo = lo.min(v);
    }
    Ok((hi, lo))
}

pub fn sampled_ball_argext<F: Field + ?Sized>(
    f: &F,
    center: &[f64],
    radius: f64,
    sampler: &BallSampler,
    maximize: bool,
) -> Result<(Vec<f64>, f64)> {
    check_ball(f, center, radius, sampler)?;
    let d = center.len();
    let mut y = vec![0.0; d];
    let mut best = center.to_vec();
    let mut best_v = f.value(center)?;
    for s in sampler.all_points() {
        place(&mut y, center, radius, s);
        let v = f.value(&y)?;
        if (maximize && v > best_v) || (!maximize && v < best_v) {
            best_v = v;
            best.copy_from_slice(&y);
        }
    }
    Ok((best, best_v))
}

/// Sup, inf and mean of `field` over `B_radius(center)` at the given quality.
pub fn ball_stats<F: Field + ?Sized>(
    field: &F,
    center: &[f64],
    radius: f64,
    quality: Quality,
) -> Result<BallStats> {
    let sampler = BallSampler::new(field.dim(), quality)?;
    field.ball_stats(center, radius, &sampler)
}

#[cfg(test)]
mod tests {
    use super::battery::*;
    use super::*;
    use proptest::prelude::*;

    fn sampler(d: usize) -> BallSampler {
        BallSampler::new(d, Quality::Default).unwrap()
    }

    #[test]
    fn constant_and_linear_examples() {
        let c = constant(2, 5.0);
        let s = ball_stats(&c, &[0.3, -0.2], 0.7, Quality::Default).unwrap();
        assert_eq!((s.sup, s.inf, s.mean), (5.0, 5.0, 5.0));

        let lin = affine(vec![1.0, 0.0], 0.0);
        let r = 0.4;
        let s = ball_stats(&lin, &[0.0, 0.0], r, Quality::Default).unwrap();
        assert_eq!(s.mean, 0.0);
        assert!((s.sup - r).abs() < 1e-12 && (s.inf + r).abs() < 1e-12);
    }

    #[test]
    fn square_in_one_dimension() {
        let sq = squared_distance(vec![0.0]);
        let r = 0.8;
        let s = ball_stats(&sq, &[0.0], r, Quality::Default).unwrap();
        assert!((s.sup - r * r).abs() < 1e-12);
        assert_eq!(s.inf, 0.0);
        assert!((s.mean - r * r / 3.0).abs() < 0.01 * r * r / 3.0);
    }

    #[test]
    fn odd_functions_average_to_center_value() {
        for d in 1..=3 {
            let f = AnalyticField::new("odd", d, |y| y.iter().map(|t| t * t * t + t).sum());
            let s = sampler(d);
            let st = f.ball_stats(&vec![0.0; d], 0.9, &s).unwrap();
            assert_eq!(st.mean, 0.0, "d={d}");
        }
    }

    #[test]
    fn undefined_points_propagate() {
        let g = std::sync::Arc::new(Grid::new(vec![0.0], 0.1, vec![11]).unwrap());
        let f = GridField::from_fn(g, |x| x[0]).unwrap().with_exact_intervals(false);
        let s = sampler(1);
        assert!(matches!(
            f.ball_stats(&[0.95], 0.1, &s),
            Err(Error::Undefined { .. })
        ));
        assert!(f.ball_stats(&[0.5], 0.0, &s).is_err());
    }

    #[test]
    fn nested_refinement_widens_extremes() {
        let f = AnalyticField::new("wavy", 1, |y| (7.3 * y[0]).sin() + 0.3 * y[0]);
        let mut prev = (f64::NEG_INFINITY, f64::INFINITY);
        for level in 0..3 {
            let s = BallSampler::with_level(1, level).unwrap();
            let (hi, lo) = f.ball_extremes(&[0.1], 0.6, &s).unwrap();
            assert!(hi >= prev.0 && lo <= prev.1);
            prev = (hi, lo);
        }
    }

    proptest! {
        #[test]
        fn monotone_shift_and_negation(
            a in -2.0f64..2.0, b in -2.0f64..2.0, k in 0.0f64..1.5,
            shift in -10.0f64..10.0, r in 0.05f64..1.0, d in 1usize..=2,
        ) {
            let s = BallSampler::new(d, Quality::Low).unwrap();
            let phi = AnalyticField::new("phi", d, move |y| a * y[0] + b * (3.0 * y[y.len() - 1]).cos());
            let psi = AnalyticField::new("psi", d, move |y| a * y[0] + b * (3.0 * y[y.len() - 1]).cos() + k * y[0] * y[0]);
            let x = vec![0.1; d];
            let s1 = phi.ball_stats(&x, r, &s).unwrap();
            let s2 = psi.ball_stats(&x, r, &s).unwrap();
            prop_assert!(s1.sup <= s2.sup && s1.inf <= s2.inf && s1.mean <= s2.mean);
            prop_assert!(s1.inf <= s1.mean && s1.mean <= s1.sup);

            let shifted = AnalyticField::new("shift", d, move |y| a * y[0] + b * (3.0 * y[y.len() - 1]).cos() + shift);
            let s3 = shifted.ball_stats(&x, r, &s).unwrap();
            let tol = 1e-12 * (1.0 + shift.abs());
            prop_assert!((s3.sup - s1.sup - shift).abs() < tol);
            prop_assert!((s3.inf - s1.inf - shift).abs() < tol);
            prop_assert!((s3.mean - s1.mean - shift).abs() < tol);

            let neg = AnalyticField::new("neg", d, move |y| -(a * y[0] + b * (3.0 * y[y.len() - 1]).cos()));
            let s4 = neg.ball_stats(&x, r, &s).unwrap();
            prop_assert_eq!(s4.sup, -s1.inf);
            prop_assert_eq!(s4.inf, -s1.sup);
            prop_assert_eq!(s4.mean, -s1.mean);
        }
    }
}
