//! Fixed-point solver for `u = A[u; f] - eps^2 J_p(f)` in the domain, `u = g` outside.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{jp, Params};
use crate::error::{Error, Result};
use crate::field::{battery, AnalyticField, BallSampler, Domain, Grid, GridField, Quality, ScalarFn, Shape};
use crate::operators::{p_laplacian_exact, AveragingOperator, CSearchConfig, OperatorVariant};

/// A Dirichlet problem for the dynamic programming equation at one `eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DppProblem {
    pub domain: Domain,
    pub f: ScalarFn,
    pub g: ScalarFn,
    pub params: Params,
    pub epsilon: f64,
    #[serde(default)]
    pub variant: OperatorVariant,
    #[serde(default)]
    pub csearch: CSearchConfig,
    #[serde(default)]
    pub quality: Quality,
    /// Grid spacing override; default is an eighth of the smallest noise radius.
    #[serde(default)]
    pub h: Option<f64>,
}

impl DppProblem {
    /// Problem with default settings and an exterior band exactly as wide as
    /// the operator reach.
    pub fn new(shape: Shape, f: ScalarFn, g: ScalarFn, params: Params, epsilon: f64) -> Result<Self> {
        let bounds = crate::constants::truncation_bounds(epsilon, params.alpha)?;
        let domain = Domain::new(shape, params.reach(&bounds))?;
        let p = Self {
            domain,
            f,
            g,
            params,
            epsilon,
            variant: OperatorVariant::default(),
            csearch: CSearchConfig::default(),
            quality: Quality::default(),
            h: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        if self.domain.dim() != self.params.d {
            return Err(Error::Config(format!(
                "domain has dimension {}, params say d = {}",
                self.domain.dim(),
                self.params.d
            )));
        }
        let bounds = crate::constants::truncation_bounds(self.epsilon, self.params.alpha)
            .map_err(|e| Error::Config(e.to_string()))?;
        let reach = self.params.reach(&bounds);
        if self.domain.band < reach * (1.0 - 1e-12) {
            return Err(Error::Config(format!(
                "exterior band {} is narrower than the operator reach {reach}",
                self.domain.band
            )));
        }
        if let Some(h) = self.h {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Config(format!("grid spacing {h} invalid")));
            }
        }
        self.csearch.validate()
    }

    pub fn default_h(&self) -> Result<f64> {
        let b = crate::constants::truncation_bounds(self.epsilon, self.params.alpha)?;
        Ok(self.epsilon * b.m.powf(-self.params.alpha / 2.0) / 8.0)
    }

    /// `f -> -f`, `g -> -g` with the mirrored selector; minus its solution
    /// solves the original problem.
    pub fn negated(&self) -> Self {
        Self {
            f: self.f.negated(),
            g: self.g.negated(),
            variant: self.variant.mirrored(),
            ..self.clone()
        }
    }
}

/// Which monotone direction the iteration is expected to follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotone {
    Up,
    Down,
    Unchecked,
}

#[derive(Debug, Clone)]
pub enum Init {
    /// Exponential subsolution, calibrated and certified.
    Barrier,
    /// Negated barrier of the negated problem.
    SuperBarrier,
    Subsolution(GridField),
    Supersolution(GridField),
    Guess(GridField),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    /// Residual tolerance; `None` means `1e-8 (1 + |g|)`.
    pub tol: Option<f64>,
    pub max_iter: usize,
    pub gauss_seidel: bool,
    /// Also require `residual / (1 - ratio) <= tol`, with `ratio` the observed
    /// contraction of the last increments, so the iterate is within about
    /// `tol` of the fixed point and not only of its next sweep.
    pub tail_bound: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: None,
            max_iter: 200_000,
            gauss_seidel: false,
            tail_bound: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DppSolution {
    pub u: GridField,
    pub iterations: usize,
    pub final_residual: f64,
    pub tol: f64,
    pub bracket_gap: Option<f64>,
    pub residual_history: Vec<f64>,
    /// Geometric mean of the last few increment ratios.
    pub contraction_ratio: Option<f64>,
    pub interior: Arc<Vec<bool>>,
}

impl DppSolution {
    pub fn value_at(&self, x: &[f64]) -> Result<f64> {
        self.u.interpolate(x)
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.interior.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    /// Largest `|u - exact|` over interior nodes.
    pub fn sup_error(&self, exact: impl Fn(&[f64]) -> f64) -> f64 {
        let g = self.u.grid();
        self.interior_nodes()
            .map(|i| (self.u.values()[i] - exact(&g.node(i))).abs())
            .fold(0.0, f64::max)
    }
}

/// Certified exponential subsolution `exp(L (x_1 - a)) - T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Barrier {
    pub field: GridField,
    pub rate: f64,
    pub anchor: f64,
    pub shift: f64,
}

/// Precomputed discretization of one problem.
#[derive(Debug, Clone)]
pub struct DppSolver {
    problem: DppProblem,
    op: AveragingOperator,
    grid: Arc<Grid>,
    interior: Arc<Vec<bool>>,
    nodes: Vec<usize>,
    coords: Vec<f64>,
    f_vals: Vec<f64>,
    source: Vec<f64>,
    boundary: Vec<f64>,
}

impl DppSolver {
    pub fn new(problem: DppProblem) -> Result<Self> {
        let sampler = Arc::new(BallSampler::new(problem.params.d, problem.quality)?);
        Self::with_sampler(problem, sampler)
    }

    pub fn with_sampler(problem: DppProblem, sampler: Arc<BallSampler>) -> Result<Self> {
        problem.validate()?;
        let op = AveragingOperator::new(problem.params, problem.epsilon, problem.csearch, sampler)?;
        let h = match problem.h {
            Some(h) => h,
            None => problem.default_h()?,
        };
        let grid = Arc::new(problem.domain.covering_grid(h)?);
        let tol = 1e-9 * grid.h();
        let d = grid.dim();
        let mut interior = vec![false; grid.len()];
        let mut nodes = Vec::new();
        let mut coords = Vec::new();
        let mut f_vals = Vec::new();
        let mut boundary = vec![0.0; grid.len()];
        let mut x = vec![0.0; d];
        let eps2 = problem.epsilon * problem.epsilon;
        for idx in 0..grid.len() {
            grid.node_into(idx, &mut x);
            if problem.domain.contains_with(&x, tol) {
                interior[idx] = true;
                nodes.push(idx);
                coords.extend_from_slice(&x);
                f_vals.push(problem.f.eval(&x));
            } else {
                boundary[idx] = problem.g.eval(&x);
                if !boundary[idx].is_finite() {
                    return Err(Error::Domain(format!("boundary datum not finite at {x:?}")));
                }
            }
        }
        if nodes.is_empty() {
            return Err(Error::Config("grid has no interior nodes; refine h".into()));
        }
        let source = f_vals.iter().map(|&f| eps2 * jp(f, problem.params.p)).collect();
        Ok(Self {
            problem,
            op,
            grid,
            interior: Arc::new(interior),
            nodes,
            coords,
            f_vals,
            source,
            boundary,
        })
    }

    pub fn problem(&self) -> &DppProblem {
        &self.problem
    }

    pub fn operator(&self) -> &AveragingOperator {
        &self.op
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn interior(&self) -> &Arc<Vec<bool>> {
        &self.interior
    }

    pub fn n_interior(&self) -> usize {
        self.nodes.len()
    }

    pub fn g_sup(&self) -> f64 {
        self.boundary.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn f_sup(&self) -> f64 {
        self.f_vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn default_tol(&self) -> f64 {
        1e-8 * (1.0 + self.g_sup())
    }

    /// Copy of `u` with the exterior nodes reset to `g`.
    pub fn with_boundary(&self, u: &GridField) -> Result<GridField> {
        if u.grid() != &self.grid {
            return Err(Error::Domain("field lives on a different grid".into()));
        }
        let mut v = u.values().to_vec();
        for (i, inside) in self.interior.iter().enumerate() {
            if !inside {
                v[i] = self.boundary[i];
            }
        }
        GridField::new(Arc::clone(&self.grid), v)
    }

    pub fn field_from_fn(&self, f: impl Fn(&[f64]) -> f64) -> Result<GridField> {
        GridField::from_fn(Arc::clone(&self.grid), f)
    }

    fn node_update(&self, u: &GridField, k: usize) -> Result<f64> {
        let d = self.grid.dim();
        let x = &self.coords[k * d..(k + 1) * d];
        let v = self.op.a_select(u, x, self.f_vals[k], self.problem.variant)?;
        Ok(v - self.source[k])
    }

    /// Operator value and optimal `c` at interior node number `k`.
    pub fn node_choice(&self, u: &GridField, k: usize) -> Result<(f64, f64)> {
        let d = self.grid.dim();
        let x = &self.coords[k * d..(k + 1) * d];
        self.op.a_select_with_c(u, x, self.f_vals[k], self.problem.variant)
    }

    /// One Jacobi sweep: `A[u; f] - eps^2 J_p(f)` at interior nodes, `g` outside.
    pub fn apply(&self, u: &GridField) -> Result<GridField> {
        let u = self.with_boundary(u)?;
        let updates = self.sweep_values(&u)?;
        let mut out = u.into_values();
        for (&i, v) in self.nodes.iter().zip(updates) {
            out[i] = v;
        }
        GridField::new(Arc::clone(&self.grid), out)
    }

    fn sweep_values(&self, u: &GridField) -> Result<Vec<f64>> {
        (0..self.nodes.len())
            .into_par_iter()
            .map(|k| self.node_update(u, k))
            .collect()
    }

    /// Sup over interior nodes of `|T u - u|`.
    pub fn residual(&self, u: &GridField) -> Result<f64> {
        let u = self.with_boundary(u)?;
        let next = self.sweep_values(&u)?;
        Ok(self
            .nodes
            .iter()
            .zip(&next)
            .map(|(&i, v)| (v - u.values()[i]).abs())
            .fold(0.0, f64::max))
    }

    fn exp_barrier(&self, rate: f64) -> Result<Barrier> {
        let anchor = self.grid.lower()[0];
        let mut shift = f64::NEG_INFINITY;
        let mut x = vec![0.0; self.grid.dim()];
        for (i, inside) in self.interior.iter().enumerate() {
            if !inside {
                self.grid.node_into(i, &mut x);
                shift = shift.max((rate * (x[0] - anchor)).exp() - self.boundary[i]);
            }
        }
        let field = self.field_from_fn(|x| (rate * (x[0] - anchor)).exp() - shift)?;
        let field = self.with_boundary(&field)?;
        Ok(Barrier {
            field,
            rate,
            anchor,
            shift,
        })
    }

    /// First interior node where `T u < u`, if any.
    pub fn sub_certificate(&self, u: &GridField) -> Result<Option<(usize, f64)>> {
        let u = self.with_boundary(u)?;
        let next = self.sweep_values(&u)?;
        Ok(self
            .nodes
            .iter()
            .zip(&next)
            .find(|(&i, &v)| v < u.values()[i])
            .map(|(&i, &v)| (i, u.values()[i] - v)))
    }

    /// Exponential subsolution with the smallest certified power-of-two rate.
    pub fn barrier_sub(&self) -> Result<Barrier> {
        let width = self.grid.upper()[0] - self.grid.lower()[0];
        let mut rate = 1.0;
        let mut last = None;
        while rate <= (1u64 << 20) as f64 {
            if rate * width > 600.0 {
                break;
            }
            let b = self.exp_barrier(rate)?;
            match self.sub_certificate(&b.field)? {
                None => return Ok(b),
                Some(v) => last = Some(v),
            }
            rate *= 2.0;
        }
        let detail = match last {
            Some((i, gap)) => format!(
                "no rate up to {rate} certifies; node {:?} falls short by {gap:e}",
                self.grid.node(i)
            ),
            None => "rate search exhausted".into(),
        };
        Err(Error::Calibration(detail))
    }

    /// `-(sub-barrier of the negated problem)`, a certified supersolution.
    pub fn barrier_super(&self) -> Result<GridField> {
        let neg = DppSolver::with_sampler(self.problem.negated(), Arc::clone(self.op.sampler()))?;
        let b = neg.barrier_sub()?;
        let v: Vec<f64> = b.field.values().iter().map(|t| -t).collect();
        GridField::new(Arc::clone(&self.grid), v)
    }

    fn resolve_init(&self, init: Init) -> Result<(GridField, Monotone)> {
        Ok(match init {
            Init::Barrier => (self.barrier_sub()?.field, Monotone::Up),
            Init::SuperBarrier => (self.barrier_super()?, Monotone::Down),
            Init::Subsolution(u) => (u, Monotone::Up),
            Init::Supersolution(u) => (u, Monotone::Down),
            Init::Guess(u) => (u, Monotone::Unchecked),
        })
    }

    pub fn solve(&self, init: Init, opts: &SolveOptions) -> Result<DppSolution> {
        let (u0, dir) = self.resolve_init(init)?;
        let mut run = Run::new(self, u0, dir, opts)?;
        while !run.done {
            run.step(self)?;
        }
        run.finish(self, None)
    }

    /// Sub- and super-iterations in lockstep, checking the order every sweep.
    pub fn solve_bracketed(&self, opts: &SolveOptions) -> Result<DppSolution> {
        let mut lo = Run::new(self, self.barrier_sub()?.field, Monotone::Up, opts)?;
        let mut hi = Run::new(self, self.barrier_super()?, Monotone::Down, opts)?;
        let slack = |a: &Run| 4.0 * f64::EPSILON * a.scale;
        let mut sweep = 0;
        loop {
            check_order(&self.nodes, &lo.u, &hi.u, sweep, slack(&lo).max(slack(&hi)))?;
            if lo.done && hi.done {
                break;
            }
            if !lo.done {
                lo.step(self)?;
            }
            if !hi.done {
                hi.step(self)?;
            }
            sweep += 1;
        }
        let gap = self
            .nodes
            .iter()
            .map(|&i| hi.u.values()[i] - lo.u.values()[i])
            .fold(0.0, f64::max);
        lo.finish(self, Some(gap))
    }

    /// Radial barrier below `g(x0)` at boundary point `x0`.
    pub fn exterior_ball_barrier(&self, x0: &[f64], eta: f64) -> Result<ExteriorBarrier> {
        let ball = self.problem.domain.exterior_ball(x0)?;
        let p = self.problem.params.p;
        let d = self.problem.params.d as f64;
        let tilde = (p + d - 2.0) / (p - 1.0);
        let dist = |y: &[f64]| {
            y.iter()
                .zip(&ball.center)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        };
        let dim = self.grid.dim();
        let r_max = (0..self.nodes.len())
            .map(|k| dist(&self.coords[k * dim..(k + 1) * dim]))
            .fold(0.0, f64::max);
        let need = self.f_sup() + 1.0;
        // p-Laplacian of |y|^{-t}: 2(p-1) t^{p-1} |y|^{2-d-2p}
        let lap_min = 2.0 * (p - 1.0) * tilde.powf(p - 1.0) * r_max.powf(2.0 - d - 2.0 * p);
        let k = (need / lap_min).powf(1.0 / (p - 1.0)) * (1.0 + 1e-9);
        let g0 = self.problem.g.eval(x0);
        let level = -k * ball.radius.powf(-tilde) + g0 - eta;
        let radial = battery::radial_power(ball.center.clone(), k, -tilde);
        let field = radial.affine_map(1.0, level);
        for kk in 0..self.nodes.len() {
            let y = &self.coords[kk * dim..(kk + 1) * dim];
            let v = p_laplacian_exact(&field, y, p)?;
            if v < need {
                return Err(Error::Calibration(format!(
                    "radial barrier p-Laplacian {v} below {need} at {y:?}"
                )));
            }
        }
        Ok(ExteriorBarrier {
            field,
            scale: k,
            center: ball.center,
            radius: ball.radius,
            exponent: tilde,
            lowest: k * (r_max.powf(-tilde) - ball.radius.powf(-tilde)) + g0 - eta,
        })
    }

    /// Sup-norm bound on solutions implied by the radial barriers of this
    /// problem and of its negation, uniform in `eps` for a fixed data set.
    pub fn uniform_bound(&self, x0: &[f64]) -> Result<f64> {
        let lo = self.exterior_ball_barrier(x0, 0.0)?;
        let neg = DppSolver::with_sampler(self.problem.negated(), Arc::clone(self.op.sampler()))?;
        let hi = neg.exterior_ball_barrier(x0, 0.0)?;
        let g = self.g_sup();
        Ok(g + (lo.lowest.abs() + g).max(hi.lowest.abs() + g))
    }
}

/// Radial barrier together with its calibration data.
#[derive(Debug, Clone)]
pub struct ExteriorBarrier {
    pub field: AnalyticField,
    pub scale: f64,
    pub center: Vec<f64>,
    pub radius: f64,
    pub exponent: f64,
    /// Barrier value at the interior node farthest from the ball center.
    pub lowest: f64,
}

fn check_order(nodes: &[usize], lo: &GridField, hi: &GridField, sweep: usize, slack: f64) -> Result<()> {
    for &i in nodes {
        let excess = lo.values()[i] - hi.values()[i];
        if excess > slack {
            return Err(Error::BracketViolation {
                sweep,
                node: i,
                excess,
            });
        }
    }
    Ok(())
}

struct Run {
    u: GridField,
    dir: Monotone,
    tol: f64,
    max_iter: usize,
    gauss_seidel: bool,
    tail_bound: bool,
    iterations: usize,
    history: Vec<f64>,
    last_residual: f64,
    scale: f64,
    done: bool,
}

impl Run {
    fn new(s: &DppSolver, u0: GridField, dir: Monotone, opts: &SolveOptions) -> Result<Self> {
        let tol = opts.tol.unwrap_or_else(|| s.default_tol());
        if !(tol > 0.0) {
            return Err(Error::Config(format!("tolerance {tol} must be positive")));
        }
        let u = s.with_boundary(&u0)?;
        let scale = u.sup_norm().max(s.g_sup()).max(f64::MIN_POSITIVE);
        Ok(Self {
            u,
            dir,
            tol,
            max_iter: opts.max_iter,
            gauss_seidel: opts.gauss_seidel,
            tail_bound: opts.tail_bound,
            iterations: 0,
            history: Vec::new(),
            last_residual: f64::INFINITY,
            scale,
            done: false,
        })
    }

    fn step(&mut self, s: &DppSolver) -> Result<()> {
        if self.iterations >= self.max_iter {
            return Err(Error::NonConvergence {
                iterations: self.iterations,
                last_residual: self.last_residual,
                residual_history: self.history.clone(),
            });
        }
        let next: Vec<f64> = if self.gauss_seidel {
            let mut work = self.u.clone();
            for (k, &i) in s.nodes.iter().enumerate() {
                let v = s.node_update(&work, k)?;
                work.values_mut()[i] = v;
            }
            s.nodes.iter().map(|&i| work.values()[i]).collect()
        } else {
            s.sweep_values(&self.u)?
        };
        let slack = 4.0 * f64::EPSILON * self.scale;
        let mut res = 0.0f64;
        for (&i, &v) in s.nodes.iter().zip(&next) {
            let old = self.u.values()[i];
            let diff = v - old;
            res = res.max(diff.abs());
            let violated = match self.dir {
                Monotone::Up => diff < -slack,
                Monotone::Down => diff > slack,
                Monotone::Unchecked => false,
            };
            if violated && !self.gauss_seidel {
                return Err(Error::MonotonicityViolation {
                    sweep: self.iterations,
                    node: i,
                    drop: diff.abs(),
                });
            }
        }
        self.history.push(res);
        self.last_residual = res;
        let settled = !self.tail_bound
            || res == 0.0
            || match tail_ratio(&self.history) {
                Some(r) if r < 1.0 => res / (1.0 - r) <= self.tol,
                Some(_) => true,
                None => false,
            };
        if res <= self.tol && settled {
            // u is certified; keep it
            self.done = true;
            return Ok(());
        }
        let vals = self.u.values_mut();
        for (&i, v) in s.nodes.iter().zip(next) {
            vals[i] = v;
        }
        self.iterations += 1;
        Ok(())
    }

    fn finish(self, s: &DppSolver, bracket_gap: Option<f64>) -> Result<DppSolution> {
        let contraction_ratio = tail_ratio(&self.history);
        Ok(DppSolution {
            u: self.u,
            iterations: self.iterations,
            final_residual: self.last_residual,
            tol: self.tol,
            bracket_gap,
            residual_history: self.history,
            contraction_ratio,
            interior: Arc::clone(&s.interior),
        })
    }
}

/// Geometric mean of the last (up to ten) successive increment ratios.
fn tail_ratio(history: &[f64]) -> Option<f64> {
    let n = history.len();
    if n < 3 {
        return None;
    }
    let ratios: Vec<f64> = history[n.saturating_sub(11)..]
        .windows(2)
        .filter(|w| w[0] > 0.0 && w[1] > 0.0)
        .map(|w| (w[1] / w[0]).ln())
        .collect();
    if ratios.is_empty() {
        None
    } else {
        Some((ratios.iter().sum::<f64>() / ratios.len() as f64).exp())
    }
}
