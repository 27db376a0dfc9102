mod common;

use std::sync::Arc;

use common::*;
use plap_core::constants::Params;
use plap_core::dpp::*;
use plap_core::error::Error;
use plap_core::field::{battery, GridField, Quality, ScalarFn, Shape};
use plap_core::operators::{p_laplacian_exact, CSearchConfig};
use proptest::prelude::*;

fn constant_problem(k: f64) -> DppProblem {
    interval_problem(3.0, 0.2, ScalarFn::constant(0.0), ScalarFn::constant(k))
}

#[test]
fn constant_data_is_a_fixed_point() {
    let s = DppSolver::new(constant_problem(1.5)).unwrap();
    let u = s.field_from_fn(|_| 1.5).unwrap();
    let tu = s.apply(&u).unwrap();
    assert!(tu.values().iter().all(|&v| v == 1.5));

    let init = s.field_from_fn(|_| -2.5).unwrap();
    let sol = s.solve(Init::Subsolution(init), &SolveOptions::default()).unwrap();
    assert!(sol.final_residual <= sol.tol);
    assert!(sol.iterations < 500, "{} iterations", sol.iterations);
    assert!(sol.sup_error(|_| 1.5) <= 10.0 * sol.tol);

    let br = s.solve_bracketed(&SolveOptions::default()).unwrap();
    assert!(br.bracket_gap.unwrap() <= 2.0 * br.tol, "{:?}", br.bracket_gap);
}

#[test]
fn zero_data_barrier_is_found_at_the_first_rate() {
    let s = DppSolver::new(interval_problem(3.0, 0.2, ScalarFn::constant(0.0), ScalarFn::constant(0.0))).unwrap();
    let b = s.barrier_sub().unwrap();
    assert_eq!(b.rate, 1.0);
    assert!(s.sub_certificate(&b.field).unwrap().is_none());
}

#[test]
fn barriers_are_certified_on_the_unit_problem() {
    let s = DppSolver::new(unit_problem(3.0, 0.2)).unwrap();
    let sub = s.barrier_sub().unwrap().field;
    let tsub = s.apply(&sub).unwrap();
    let sup = s.barrier_super().unwrap();
    let tsup = s.apply(&sup).unwrap();
    for (i, inside) in s.interior().iter().enumerate() {
        if *inside {
            assert!(tsub.values()[i] >= sub.values()[i]);
            assert!(tsup.values()[i] <= sup.values()[i]);
            assert!(sub.values()[i] <= sup.values()[i]);
        } else {
            assert!(sub.values()[i] <= 0.0 && sup.values()[i] >= 0.0);
        }
    }
}

#[test]
fn bracketed_unit_problem() {
    let s = DppSolver::new(unit_problem(3.0, 0.2)).unwrap();
    let sol = s.solve_bracketed(&SolveOptions::default()).unwrap();
    assert!(sol.final_residual <= sol.tol);
    assert!(sol.bracket_gap.unwrap() <= 10.0 * sol.tol);
    assert!(sol.contraction_ratio.unwrap() < 1.0);
    assert!(s.residual(&sol.u).unwrap() <= sol.tol);
    assert_eq!(sol.residual_history.len(), sol.iterations + 1);
    let err = sol.sup_error(unit_exact);
    assert!(err < 0.35, "sup error {err}");
    // a fixed point is reproduced by one more sweep
    let again = s.apply(&sol.u).unwrap();
    for k in sol.interior_nodes() {
        assert!((again.values()[k] - sol.u.values()[k]).abs() <= sol.tol);
    }
}

#[test]
fn negated_problem_mirrors_bit_for_bit() {
    let pb = unit_problem(3.0, 0.2);
    let s = DppSolver::new(pb.clone()).unwrap();
    let n = DppSolver::new(pb.negated()).unwrap();
    let down = s.solve(Init::SuperBarrier, &SolveOptions::default()).unwrap();
    let up = n.solve(Init::Barrier, &SolveOptions::default()).unwrap();
    assert_eq!(down.iterations, up.iterations);
    for (a, b) in down.u.values().iter().zip(up.u.values()) {
        assert_eq!(*a, -*b);
    }
}

#[test]
fn non_subsolution_start_is_diagnosed() {
    let s = DppSolver::new(unit_problem(3.0, 0.2)).unwrap();
    let zero = s.field_from_fn(|_| 0.0).unwrap();
    match s.solve(Init::Subsolution(zero), &SolveOptions::default()) {
        Err(Error::MonotonicityViolation { sweep, .. }) => assert_eq!(sweep, 0),
        other => panic!("expected a monotonicity violation, got {other:?}"),
    }
}

#[test]
fn iteration_cap_reports_history() {
    let s = DppSolver::new(unit_problem(3.0, 0.2)).unwrap();
    let opts = SolveOptions {
        max_iter: 3,
        ..Default::default()
    };
    match s.solve(Init::Barrier, &opts) {
        Err(Error::NonConvergence {
            iterations,
            residual_history,
            last_residual,
        }) => {
            assert_eq!(iterations, 3);
            assert_eq!(residual_history.len(), 3);
            assert_eq!(*residual_history.last().unwrap(), last_residual);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn narrow_band_rejected() {
    let mut pb = unit_problem(3.0, 0.2);
    pb.domain.band *= 0.5;
    assert!(matches!(DppSolver::new(pb), Err(Error::Config(_))));
}

#[test]
fn comparison_with_ordered_data() {
    let opts = SolveOptions::default();
    let lo_f = ScalarFn::constant(1.0);
    let hi_f = poly(&[(1.5, &[0]), (0.3, &[1])]);
    let s1 = DppSolver::new(interval_problem(3.0, 0.2, lo_f, ScalarFn::constant(0.2))).unwrap();
    let s2 = DppSolver::new(interval_problem(3.0, 0.2, hi_f, poly(&[(-0.1, &[2])]))).unwrap();
    let u1 = s1.solve(Init::Barrier, &opts).unwrap();
    let u2 = s2.solve(Init::Barrier, &opts).unwrap();
    let tol = u1.tol.max(u2.tol);
    for k in u1.interior_nodes() {
        assert!(u1.u.values()[k] >= u2.u.values()[k] - 10.0 * tol);
    }
}

/// `u'' = e^x` on `(-1, 1)` has the solution `e^x - sinh(1) x - cosh(1)`,
/// which vanishes at both ends; `g` is that formula outside.
fn poisson_problem(eps: f64) -> DppProblem {
    let (s1, c1) = (1f64.sinh(), 1f64.cosh());
    let g = ScalarFn::Sum {
        parts: vec![
            ScalarFn::Exponential {
                coef: 1.0,
                rates: vec![1.0],
            },
            poly(&[(-s1, &[1]), (-c1, &[0])]),
        ],
    };
    let f = ScalarFn::Exponential {
        coef: 1.0,
        rates: vec![1.0],
    };
    interval_problem(2.0, eps, f, g)
}

#[test]
fn p2_matches_finite_differences() {
    let s = DppSolver::new(poisson_problem(0.1)).unwrap();
    let sol = s.solve_bracketed(&SolveOptions::default()).unwrap();
    let (xs, fd) = poisson_fd(f64::exp, 0.0, 0.0, 1999);
    let mut worst = 0.0f64;
    for (x, v) in xs.iter().zip(&fd) {
        worst = worst.max((sol.value_at(&[*x]).unwrap() - v).abs());
    }
    assert!(worst < 0.05, "sup difference {worst}");
}

#[test]
fn exterior_ball_barrier_touches_the_data() {
    let params = Params::new(3.0, 2).unwrap();
    let g = poly(&[(1.0, &[1, 0]), (0.5, &[0, 2])]);
    let mut pb = DppProblem::new(
        Shape::Ball {
            center: vec![0.0, 0.0],
            radius: 1.0,
        },
        ScalarFn::constant(2.0),
        g.clone(),
        params,
        0.3,
    )
    .unwrap();
    pb.h = Some(0.1);
    pb.quality = Quality::Low;
    let s = DppSolver::new(pb).unwrap();
    let x0 = [0.6, 0.8];
    let mut prev = f64::NEG_INFINITY;
    for eta in [0.5, 0.1, 0.01, 0.0] {
        let b = s.exterior_ball_barrier(&x0, eta).unwrap();
        let v = b.field.eval(&x0);
        assert!((v - (g.eval(&x0) - eta)).abs() < 1e-12);
        assert!(v > prev);
        prev = v;
        assert!((b.radius - 1.0).abs() < 1e-12);
        let lap = p_laplacian_exact(&b.field, &[0.1, -0.2], 3.0).unwrap();
        assert!(lap >= 3.0, "{lap}");
    }
    assert!((prev - g.eval(&x0)).abs() < 1e-12);
}

#[test]
fn radial_p_laplacian_is_positive() {
    // p = 3, d = 2: exponent (p + d - 2)/(p - 1) = 1.5
    let w = battery::radial_power(vec![0.0, 0.0], 1.0, -1.5);
    let lap = p_laplacian_exact(&w, &[1.0, 0.0], 3.0).unwrap();
    let oracle = 2.0 * 2.0 * 1.5f64.powi(2);
    assert!(lap > 0.0);
    assert!((lap - oracle).abs() < 1e-10, "{lap} vs {oracle}");
}

#[test]
fn solutions_stay_below_the_uniform_bound() {
    let mut bound = None;
    for eps in [0.2, 0.1, 0.05] {
        let s = DppSolver::new(unit_problem(3.0, eps)).unwrap();
        let b = s.uniform_bound(&[1.0]).unwrap();
        let b0 = *bound.get_or_insert(b);
        assert!(b <= b0 * 1.5, "bound drifts with eps: {b} vs {b0}");
        let sol = s.solve(Init::Barrier, &SolveOptions::default()).unwrap();
        let sup = sol.interior_nodes().map(|k| sol.u.values()[k].abs()).fold(0.0, f64::max);
        assert!(sup <= b0, "eps {eps}: |u| = {sup} above {b0}");
    }
}

#[test]
fn gauss_seidel_agrees() {
    let s = DppSolver::new(unit_problem(3.0, 0.2)).unwrap();
    let j = s.solve(Init::Barrier, &SolveOptions::default()).unwrap();
    let gs = s
        .solve(
            Init::Barrier,
            &SolveOptions {
                gauss_seidel: true,
                ..Default::default()
            },
        )
        .unwrap();
    assert!(gs.iterations < j.iterations);
    for k in j.interior_nodes() {
        assert!((j.u.values()[k] - gs.u.values()[k]).abs() < 20.0 * j.tol);
    }
}

#[test]
fn solution_csv_round_trip() {
    let s = DppSolver::new(unit_problem(3.0, 0.2)).unwrap();
    let sol = s.solve(Init::Barrier, &SolveOptions::default()).unwrap();
    let mut buf = Vec::new();
    sol.u.write_csv(&mut buf).unwrap();
    let back = GridField::read_csv(&buf[..]).unwrap();
    assert_eq!(back.values(), sol.u.values());
    assert_eq!(back.grid().as_ref(), sol.u.grid().as_ref());
}

fn sweep_solver() -> &'static DppSolver {
    use std::sync::OnceLock;
    static S: OnceLock<DppSolver> = OnceLock::new();
    S.get_or_init(|| {
        let mut pb = interval_problem(3.0, 0.25, poly(&[(0.5, &[0]), (1.0, &[1])]), poly(&[(0.3, &[1])]));
        pb.csearch = CSearchConfig {
            n_coarse: 16,
            ..Default::default()
        };
        DppSolver::new(pb).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sweep_is_monotone_and_non_expansive(
        seed in proptest::collection::vec(-2.0f64..2.0, 8),
        bump in proptest::collection::vec(0.0f64..1.0, 8),
    ) {
        let s = sweep_solver();
        let wave = |c: &[f64], x: f64| c.iter().enumerate().map(|(k, a)| a * (k as f64 * 1.7 * x).cos()).sum::<f64>();
        let u = s.field_from_fn(|x| wave(&seed, x[0])).unwrap();
        let v = s.field_from_fn(|x| wave(&seed, x[0]) + wave(&bump, x[0]).abs()).unwrap();
        let (tu, tv) = (s.apply(&u).unwrap(), s.apply(&v).unwrap());
        let (ub, vb) = (s.with_boundary(&u).unwrap(), s.with_boundary(&v).unwrap());
        let gap = ub.values().iter().zip(vb.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        for i in 0..tu.values().len() {
            prop_assert!(tu.values()[i] <= tv.values()[i]);
            prop_assert!((tu.values()[i] - tv.values()[i]).abs() <= gap * (1.0 + 1e-12));
        }
    }
}

#[test]
fn solver_reports_its_grid() {
    let s = DppSolver::new(unit_problem(3.0, 0.2)).unwrap();
    let h = s.problem().default_h().unwrap();
    assert!(s.grid().h() <= h);
    assert!(s.n_interior() > 0);
    assert!(Arc::ptr_eq(s.grid(), s.field_from_fn(|_| 0.0).unwrap().grid()));
}
