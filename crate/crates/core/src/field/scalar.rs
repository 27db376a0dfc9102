use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// One monomial `coef * prod_k y_k^{powers[k]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub powers: Vec<u32>,
}

/// Opaque closure data, not serializable.
#[derive(Clone)]
pub struct CustomFn(pub Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>);

impl fmt::Debug for CustomFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomFn")
    }
}

impl PartialEq for CustomFn {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

/// Right-hand side or boundary datum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarFn {
    Constant {
        value: f64,
    },
    Polynomial {
        terms: Vec<Monomial>,
    },
    /// `coef * exp(rates . y)`.
    Exponential {
        coef: f64,
        rates: Vec<f64>,
    },
    /// `coef * |y - center|^power + offset`.
    RadialPower {
        center: Vec<f64>,
        coef: f64,
        power: f64,
        #[serde(default)]
        offset: f64,
    },
    Sum {
        parts: Vec<ScalarFn>,
    },
    #[serde(skip)]
    Custom(CustomFn),
}

impl ScalarFn {
    pub fn constant(value: f64) -> Self {
        ScalarFn::Constant { value }
    }

    pub fn custom<F>(f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        ScalarFn::Custom(CustomFn(Arc::new(f)))
    }

    #[inline]
    pub fn eval(&self, y: &[f64]) -> f64 {
        match self {
            ScalarFn::Constant { value } => *value,
            ScalarFn::Polynomial { terms } => terms
                .iter()
                .map(|t| {
                    t.powers
                        .iter()
                        .zip(y)
                        .fold(t.coef, |acc, (&k, &v)| acc * v.powi(k as i32))
                })
                .sum(),
            ScalarFn::Exponential { coef, rates } => {
                coef * rates.iter().zip(y).map(|(a, b)| a * b).sum::<f64>().exp()
            }
            ScalarFn::RadialPower {
                center,
                coef,
                power,
                offset,
            } => {
                let r = center
                    .iter()
                    .zip(y)
                    .map(|(c, v)| (v - c) * (v - c))
                    .sum::<f64>()
                    .sqrt();
                coef * r.powf(*power) + offset
            }
            ScalarFn::Sum { parts } => parts.iter().map(|p| p.eval(y)).sum(),
            ScalarFn::Custom(f) => (f.0)(y),
        }
    }

    pub fn negated(&self) -> ScalarFn {
        match self {
            ScalarFn::Constant { value } => ScalarFn::Constant { value: -value },
            ScalarFn::Polynomial { terms } => ScalarFn::Polynomial {
                terms: terms
                    .iter()
                    .map(|t| Monomial {
                        coef: -t.coef,
                        powers: t.powers.clone(),
                    })
                    .collect(),
            },
            ScalarFn::Exponential { coef, rates } => ScalarFn::Exponential {
                coef: -coef,
                rates: rates.clone(),
            },
            ScalarFn::RadialPower {
                center,
                coef,
                power,
                offset,
            } => ScalarFn::RadialPower {
                center: center.clone(),
                coef: -coef,
                power: *power,
                offset: -offset,
            },
            ScalarFn::Sum { parts } => ScalarFn::Sum {
                parts: parts.iter().map(|p| p.negated()).collect(),
            },
            ScalarFn::Custom(f) => {
                let f = Arc::clone(&f.0);
                ScalarFn::custom(move |y| -f(y))
            }
        }
    }

    pub fn is_serializable(&self) -> bool {
        match self {
            ScalarFn::Custom(_) => false,
            ScalarFn::Sum { parts } => parts.iter().all(|p| p.is_serializable()),
            _ => true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluation_and_negation() {
        let p = ScalarFn::Polynomial {
            terms: vec![
                Monomial {
                    coef: 2.0,
                    powers: vec![2, 0],
                },
                Monomial {
                    coef: -1.0,
                    powers: vec![0, 1],
                },
            ],
        };
        assert_eq!(p.eval(&[3.0, 4.0]), 14.0);
        assert_eq!(p.negated().eval(&[3.0, 4.0]), -14.0);
        let r = ScalarFn::RadialPower {
            center: vec![0.0],
            coef: 2.0,
            power: 1.5,
            offset: -1.0,
        };
        assert_eq!(r.eval(&[4.0]), 15.0);
        assert_eq!(r.negated().eval(&[4.0]), -15.0);
        let s = ScalarFn::Sum {
            parts: vec![ScalarFn::constant(1.0), ScalarFn::custom(|y| y[0])],
        };
        assert_eq!(s.eval(&[2.0]), 3.0);
        assert!(!s.is_serializable());
    }

    #[test]
    fn serde_roundtrip() {
        let f = ScalarFn::Exponential {
            coef: 1.5,
            rates: vec![1.0, 0.0],
        };
        let text = serde_json::to_string(&f).unwrap();
        assert!(text.contains("\"kind\":\"exponential\""));
        let back: ScalarFn = serde_json::from_str(&text).unwrap();
        assert_eq!(back, f);
    }
}
