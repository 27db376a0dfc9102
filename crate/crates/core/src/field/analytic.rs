use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::Field;

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type VecFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// Closed-form field with optional exact first and second derivatives.
///
/// The Hessian callback fills a row-major `d x d` buffer.
#[derive(Clone)]
pub struct AnalyticField {
    name: String,
    dim: usize,
    value: Arc<ValueFn>,
    gradient: Option<Arc<VecFn>>,
    hessian: Option<Arc<VecFn>>,
}

impl fmt::Debug for AnalyticField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnalyticField")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("gradient", &self.gradient.is_some())
            .field("hessian", &self.hessian.is_some())
            .finish()
    }
}

impl AnalyticField {
    pub fn new<F>(name: impl Into<String>, dim: usize, value: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim,
            value: Arc::new(value),
            gradient: None,
            hessian: None,
        }
    }

    pub fn with_gradient<F>(mut self, g: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(g));
        self
    }

    pub fn with_hessian<F>(mut self, h: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.hessian = Some(Arc::new(h));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn has_derivatives(&self) -> bool {
        self.gradient.is_some() && self.hessian.is_some()
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let g = self.gradient.as_ref().ok_or_else(|| Error::MissingDerivative {
            field: self.name.clone(),
            what: "gradient",
        })?;
        let mut out = vec![0.0; self.dim];
        g(x, &mut out);
        Ok(out)
    }

    pub fn hessian(&self, x: &[f64]) -> Result<Vec<f64>> {
        let h = self.hessian.as_ref().ok_or_else(|| Error::MissingDerivative {
            field: self.name.clone(),
            what: "hessian",
        })?;
        let mut out = vec![0.0; self.dim * self.dim];
        h(x, &mut out);
        Ok(out)
    }

    /// `s * phi + k`, derivatives scaled accordingly.
    pub fn affine_map(&self, s: f64, k: f64) -> Self {
        let v = Arc::clone(&self.value);
        let mut out = AnalyticField::new(
            format!("{s}*({})+{k}", self.name),
            self.dim,
            move |x| s * v(x) + k,
        );
        if let Some(g) = &self.gradient {
            let g = Arc::clone(g);
            out = out.with_gradient(move |x, o| {
                g(x, o);
                o.iter_mut().for_each(|t| *t *= s);
            });
        }
        if let Some(h) = &self.hessian {
            let h = Arc::clone(h);
            out = out.with_hessian(move |x, o| {
                h(x, o);
                o.iter_mut().for_each(|t| *t *= s);
            });
        }
        out
    }

    pub fn negated(&self) -> Self {
        self.affine_map(-1.0, 0.0)
    }
}

impl Field for AnalyticField {
    fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok((self.value)(x))
    }
}

/// Built-in smooth test fields with exact derivatives.
pub mod battery {
    use super::AnalyticField;

    pub fn constant(dim: usize, k: f64) -> AnalyticField {
        AnalyticField::new(format!("const({k})"), dim, move |_| k)
            .with_gradient(|_, o| o.fill(0.0))
            .with_hessian(|_, o| o.fill(0.0))
    }

    /// `a . y + b0`.
    pub fn affine(a: Vec<f64>, b0: f64) -> AnalyticField {
        let dim = a.len();
        let a2 = a.clone();
        AnalyticField::new(format!("affine({a:?},{b0})"), dim, move |y| {
            a.iter().zip(y).map(|(ai, yi)| ai * yi).sum::<f64>() + b0
        })
        .with_gradient(move |_, o| o.copy_from_slice(&a2))
        .with_hessian(|_, o| o.fill(0.0))
    }

    /// `y^T Q y + b . y + c0` with `q` symmetric row-major.
    pub fn quadratic(q: Vec<f64>, b: Vec<f64>, c0: f64) -> AnalyticField {
        let dim = b.len();
        assert_eq!(q.len(), dim * dim, "quadratic form must be d x d");
        let (qv, bv) = (q.clone(), b.clone());
        let (qg, bg) = (q.clone(), b.clone());
        AnalyticField::new(format!("quad(Q={q:?},b={b:?},c={c0})"), dim, move |y| {
            let mut s = c0;
            for i in 0..dim {
                s += bv[i] * y[i];
                for j in 0..dim {
                    s += y[i] * qv[i * dim + j] * y[j];
                }
            }
            s
        })
        .with_gradient(move |y, o| {
            for i in 0..dim {
                o[i] = bg[i];
                for j in 0..dim {
                    o[i] += (qg[i * dim + j] + qg[j * dim + i]) * y[j];
                }
            }
        })
        .with_hessian(move |_, o| {
            for i in 0..dim {
                for j in 0..dim {
                    o[i * dim + j] = q[i * dim + j] + q[j * dim + i];
                }
            }
        })
    }

    /// `|y - z|^2`.
    pub fn squared_distance(z: Vec<f64>) -> AnalyticField {
        let dim = z.len();
        let (zv, zg) = (z.clone(), z.clone());
        AnalyticField::new(format!("|y-{z:?}|^2"), dim, move |y| {
            y.iter().zip(&zv).map(|(a, b)| (a - b) * (a - b)).sum()
        })
        .with_gradient(move |y, o| {
            for i in 0..dim {
                o[i] = 2.0 * (y[i] - zg[i]);
            }
        })
        .with_hessian(move |_, o| {
            o.fill(0.0);
            for i in 0..dim {
                o[i * dim + i] = 2.0;
            }
        })
    }

    /// `coef * exp(rate * y_axis)`.
    pub fn exponential(dim: usize, axis: usize, rate: f64, coef: f64) -> AnalyticField {
        AnalyticField::new(
            format!("{coef}*exp({rate}*y{axis})"),
            dim,
            move |y| coef * (rate * y[axis]).exp(),
        )
        .with_gradient(move |y, o| {
            o.fill(0.0);
            o[axis] = coef * rate * (rate * y[axis]).exp();
        })
        .with_hessian(move |y, o| {
            o.fill(0.0);
            o[axis * dim + axis] = coef * rate * rate * (rate * y[axis]).exp();
        })
    }

    /// `coef * |y - z|^q`, smooth away from `z`.
    pub fn radial_power(z: Vec<f64>, coef: f64, q: f64) -> AnalyticField {
        let dim = z.len();
        let (zv, zg, zh) = (z.clone(), z.clone(), z.clone());
        let dist = |y: &[f64], z: &[f64]| -> f64 {
            y.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
        };
        AnalyticField::new(format!("{coef}*|y-{z:?}|^{q}"), dim, move |y| {
            coef * dist(y, &zv).powf(q)
        })
        .with_gradient(move |y, o| {
            let r = dist(y, &zg);
            let s = if r > 0.0 { coef * q * r.powf(q - 2.0) } else { 0.0 };
            for i in 0..dim {
                o[i] = s * (y[i] - zg[i]);
            }
        })
        .with_hessian(move |y, o| {
            let r = dist(y, &zh);
            let s = coef * q * r.powf(q - 2.0);
            for i in 0..dim {
                for j in 0..dim {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    let ri = (y[i] - zh[i]) / r;
                    let rj = (y[j] - zh[j]) / r;
                    o[i * dim + j] = s * (delta + (q - 2.0) * ri * rj);
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::battery::*;
    use super::*;

    fn fd_gradient(f: &AnalyticField, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut a = x.to_vec();
                let mut b = x.to_vec();
                a[i] += h;
                b[i] -= h;
                (f.eval(&a) - f.eval(&b)) / (2.0 * h)
            })
            .collect()
    }

    fn fd_hessian(f: &AnalyticField, x: &[f64], h: f64) -> Vec<f64> {
        let d = x.len();
        let mut out = vec![0.0; d * d];
        for j in 0..d {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[j] += h;
            b[j] -= h;
            let ga = f.gradient(&a).unwrap();
            let gb = f.gradient(&b).unwrap();
            for i in 0..d {
                out[i * d + j] = (ga[i] - gb[i]) / (2.0 * h);
            }
        }
        out
    }

    fn rel_close(a: &[f64], b: &[f64], tol: f64) -> bool {
        let scale = a.iter().chain(b).fold(1.0f64, |m, v| m.max(v.abs()));
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let fields = vec![
            quadratic(vec![1.0, 0.5, 0.5, -0.3], vec![0.2, 2.0], 0.1),
            exponential(2, 0, 1.3, 0.7),
            radial_power(vec![0.1, -0.2], 0.8, 1.5),
            squared_distance(vec![0.3, 0.4, -0.1]),
            affine(vec![1.0, -2.0], 3.0),
        ];
        for f in &fields {
            let x: Vec<f64> = (0..f.dim()).map(|i| 0.37 + 0.21 * i as f64).collect();
            let g = f.gradient(&x).unwrap();
            assert!(rel_close(&g, &fd_gradient(f, &x, 1e-4), 1e-4), "{}", f.name());
            let h = f.hessian(&x).unwrap();
            let d = f.dim();
            for i in 0..d {
                for j in 0..d {
                    assert_eq!(h[i * d + j], h[j * d + i]);
                }
            }
            assert!(rel_close(&h, &fd_hessian(f, &x, 1e-4), 1e-4), "{}", f.name());
        }
    }

    #[test]
    fn missing_derivatives_are_reported() {
        let f = AnalyticField::new("bare", 1, |y| y[0]);
        assert!(matches!(f.gradient(&[0.0]), Err(Error::MissingDerivative { .. })));
        assert!(!f.has_derivatives());
    }

    #[test]
    fn affine_map_scales_everything() {
        let f = exponential(1, 0, 1.0, 1.0).affine_map(-2.0, 3.0);
        assert_eq!(f.eval(&[0.0]), 1.0);
        assert_eq!(f.gradient(&[0.0]).unwrap(), vec![-2.0]);
        assert_eq!(f.hessian(&[0.0]).unwrap(), vec![-2.0]);
    }
}
