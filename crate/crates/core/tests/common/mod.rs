#![allow(dead_code)]

use plap_core::constants::Params;
use plap_core::dpp::DppProblem;
use plap_core::field::{Monomial, ScalarFn, Shape};

pub fn mono(coef: f64, powers: &[u32]) -> Monomial {
    Monomial {
        coef,
        powers: powers.to_vec(),
    }
}

pub fn poly(terms: &[(f64, &[u32])]) -> ScalarFn {
    ScalarFn::Polynomial {
        terms: terms.iter().map(|(c, p)| mono(*c, p)).collect(),
    }
}

/// `(-1, 1)`, `f = 1`, `g = 0`.
pub fn unit_problem(p: f64, eps: f64) -> DppProblem {
    DppProblem::new(
        Shape::Box {
            lower: vec![-1.0],
            upper: vec![1.0],
        },
        ScalarFn::constant(1.0),
        ScalarFn::constant(0.0),
        Params::new(p, 1).unwrap(),
        eps,
    )
    .unwrap()
}

/// Exact solution of the p = 3 unit problem.
pub fn unit_exact(x: &[f64]) -> f64 {
    2.0 / 3.0 * (x[0].abs().powf(1.5) - 1.0)
}

pub fn interval_problem(p: f64, eps: f64, f: ScalarFn, g: ScalarFn) -> DppProblem {
    DppProblem::new(
        Shape::Box {
            lower: vec![-1.0],
            upper: vec![1.0],
        },
        f,
        g,
        Params::new(p, 1).unwrap(),
        eps,
    )
    .unwrap()
}

/// Classical three-point scheme for `u'' = rhs` on `(-1, 1)` with end values
/// `left`, `right`, solved by the Thomas algorithm on `n` interior nodes.
pub fn poisson_fd(rhs: impl Fn(f64) -> f64, left: f64, right: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = 2.0 / (n + 1) as f64;
    let xs: Vec<f64> = (1..=n).map(|i| -1.0 + i as f64 * h).collect();
    let mut d: Vec<f64> = xs.iter().map(|&x| rhs(x) * h * h).collect();
    d[0] -= left;
    d[n - 1] -= right;
    // tridiagonal (1, -2, 1)
    let mut b = vec![-2.0; n];
    for i in 1..n {
        let w = 1.0 / b[i - 1];
        b[i] -= w;
        d[i] -= w * d[i - 1];
    }
    let mut u = vec![0.0; n];
    u[n - 1] = d[n - 1] / b[n - 1];
    for i in (0..n - 1).rev() {
        u[i] = (d[i] - u[i + 1]) / b[i];
    }
    (xs, u)
}
