use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use plap_core::constants::{am_objective, gm_truncation_error_bound, truncated_weighted_gm, truncation_bounds, Params};
use plap_core::dpp::{DppProblem, DppSolution, DppSolver, Init, SolveOptions};
use plap_core::error::Error as CoreError;
use plap_core::expansion::{dyadic_ladder, run_ladder, Expansion, LadderSettings};
use plap_core::field::{BallSampler, GridField, ScalarFn, Shape};
use plap_core::game::{
    estimate_value, run_rollouts, summarize, write_jsonl, GameConfig, GameRules, QuasiOptimal, RandomStrategy, Strategy,
};
use plap_core::operators::{AveragingOperator, CSearchConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Config, ConvergenceConfig, Oracle, Player, ProblemConfig};
use crate::error::CliError;

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    id: &'a str,
    command: &'a str,
    seed: u64,
    version: &'a str,
    timings: &'a [(String, f64)],
    artifacts: &'a [String],
    config: &'a Config,
}

/// State shared by every command: effective config, output directory and
/// what goes into the manifest.
pub struct Run {
    pub command: &'static str,
    pub cfg: Config,
    out: PathBuf,
    start: Instant,
    timings: Vec<(String, f64)>,
    artifacts: Vec<String>,
}

impl Run {
    pub fn new(command: &'static str, cfg: Config, out: PathBuf) -> Self {
        Self {
            command,
            cfg,
            out,
            start: Instant::now(),
            timings: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    fn create(&mut self, suffix: &str) -> Result<BufWriter<File>, CliError> {
        let name = format!("{}_{suffix}", self.cfg.id);
        let f = File::create(self.out.join(&name))?;
        self.artifacts.push(name);
        Ok(BufWriter::new(f))
    }

    fn time(&mut self, what: impl Into<String>, since: Instant) {
        self.timings.push((what.into(), since.elapsed().as_secs_f64()));
    }

    /// Writes the effective config (replayable with `--config`) and the manifest.
    pub fn finish(mut self) -> Result<(), CliError> {
        let toml = toml::to_string(&self.cfg).map_err(|e| CliError::Config(e.to_string()))?;
        let name = format!("{}_effective.toml", self.cfg.id);
        std::fs::write(self.out.join(&name), toml)?;
        self.artifacts.push(name);
        let total = self.start;
        self.time("total", total);
        let m = RunManifest {
            id: &self.cfg.id,
            command: self.command,
            seed: self.cfg.seed,
            version: env!("CARGO_PKG_VERSION"),
            timings: &self.timings,
            artifacts: &self.artifacts,
            config: &self.cfg,
        };
        let path = self.out.join(format!("{}_manifest.json", self.cfg.id));
        std::fs::write(path, serde_json::to_vec_pretty(&m)?)?;
        Ok(())
    }
}

fn check_range(name: &str, r: [f64; 2]) -> Result<(), CliError> {
    if !(r[0] > 0.0 && r[0] <= r[1] && r[1] < 1.0) {
        return Err(CliError::Config(format!(
            "identities.{name} = {r:?} must lie in the open interval (0, 1) with lo <= hi"
        )));
    }
    Ok(())
}

pub fn identities(run: &mut Run) -> Result<(), CliError> {
    let c = run.cfg.identities.clone();
    check_range("alpha", c.alpha)?;
    check_range("epsilon", c.epsilon)?;
    if c.cases == 0 || c.brute_points < 2 || !(c.scale > 0.0) {
        return Err(CliError::Config("identities needs cases >= 1, brute_points >= 2, scale > 0".into()));
    }
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(run.cfg.seed);
    let mut w = csv::Writer::from_writer(run.create("identities.csv")?);
    w.write_record(["a", "b", "alpha", "epsilon", "m", "big_m", "closed_form", "brute_force", "gm", "bound", "ok"])?;
    let mut bad = 0usize;
    for _ in 0..c.cases {
        let a = rng.gen_range(0.0..c.scale);
        let b = rng.gen_range(0.0..c.scale);
        let alpha = rng.gen_range(c.alpha[0]..=c.alpha[1]);
        let eps = rng.gen_range(c.epsilon[0]..=c.epsilon[1]);
        let t = truncation_bounds(eps, alpha)?;
        let closed = truncated_weighted_gm(a, b, alpha, t.m, t.big_m)?;
        let (lm, lbig) = (t.m.ln(), t.big_m.ln());
        let n = c.brute_points;
        let brute = (0..n)
            .map(|k| {
                let cc = match k {
                    0 => t.m,
                    k if k == n - 1 => t.big_m,
                    k => (lm + (lbig - lm) * k as f64 / (n - 1) as f64).exp(),
                };
                am_objective(cc, a, b, alpha)
            })
            .fold(f64::INFINITY, f64::min);
        let gm = a.powf(alpha) * b.powf(1.0 - alpha);
        let bound = gm_truncation_error_bound(a, b, alpha, t.m, t.big_m)?;
        let ok = (brute - closed).abs() <= c.rel_tol * closed.abs().max(1e-12)
            && (gm - closed).abs() <= bound * (1.0 + 1e-12) + 1e-14;
        if !ok {
            bad += 1;
        }
        w.write_record(
            [a, b, alpha, eps, t.m, t.big_m, closed, brute, gm, bound]
                .iter()
                .map(|v| format!("{v:.16e}"))
                .chain([ok.to_string()]),
        )?;
    }
    w.flush()?;
    run.time("sweep", t0);
    println!("identities: {} cases, {bad} violations", c.cases);
    if bad > 0 {
        return Err(CliError::Criterion(format!("{bad} of {} identity cases violated", c.cases)));
    }
    Ok(())
}

fn parse_expansion(label: &str) -> Result<Expansion, CliError> {
    Ok(match label {
        "a_eps" => Expansion::Averaging,
        "m_r" => Expansion::MeanValue,
        "l_r" => Expansion::Nonlocal,
        "sup_grad" => Expansion::SupGradient,
        other => {
            return Err(CliError::Config(format!(
                "expand.operators: unknown `{other}` (expected a_eps, m_r, l_r, sup_grad)"
            )))
        }
    })
}

pub fn expand(run: &mut Run) -> Result<(), CliError> {
    let e = run
        .cfg
        .expand
        .clone()
        .ok_or_else(|| CliError::Config("missing [expand] section".into()))?;
    let field = e.field.build()?;
    let dim = e.point.len();
    let params = Params::new(e.p, dim)?;
    let epsilons = e.epsilons.clone().unwrap_or_else(|| dyadic_ladder(e.dyadic[0], e.dyadic[1]));
    if epsilons.is_empty() {
        return Err(CliError::Config("expand: empty ladder".into()));
    }
    let kinds = e.operators.iter().map(|s| parse_expansion(s)).collect::<Result<Vec<_>, _>>()?;
    let settings = LadderSettings {
        params,
        csearch: CSearchConfig {
            n_coarse: e.c_candidates,
            refine: true,
            refine_tol: 1e-8,
        },
        sampler: Arc::new(BallSampler::new(dim, run.cfg.quality)?),
    };
    for kind in kinds {
        let t0 = Instant::now();
        let report = run_ladder(kind, &field, &e.point, &epsilons, &settings).map_err(|err| match err {
            CoreError::SingularGradient { point } => CliError::Config(format!(
                "the averaging expansion needs a nonzero gradient at the evaluation point; gradient vanishes at {point:?}"
            )),
            other => other.into(),
        })?;
        report.write_csv(run.create(&format!("{}.csv", kind.label()))?)?;
        run.time(kind.label(), t0);
        let rate = report.fitted_rate.map_or("none".to_string(), |r| format!("{r:.3}"));
        println!(
            "{}: target {:.6}, final error {:.3e}, fitted rate {rate}",
            kind.label(),
            report.target,
            report.errors.last().copied().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

fn build_problem(pc: &ProblemConfig, run: &Run) -> Result<DppProblem, CliError> {
    let params = Params::new(pc.p, pc.dim())?;
    let mut pb = DppProblem::new(pc.domain.clone(), pc.f.clone(), pc.g.clone(), params, pc.epsilon)?;
    pb.variant = pc.variant;
    pb.csearch = CSearchConfig {
        n_coarse: pc.c_candidates,
        ..Default::default()
    };
    pb.quality = run.cfg.quality;
    pb.h = pc.h;
    pb.validate()?;
    Ok(pb)
}

fn solve_options(pc: &ProblemConfig) -> SolveOptions {
    SolveOptions {
        tol: pc.tol,
        max_iter: pc.max_iter,
        ..Default::default()
    }
}

fn inline_solve(run: &mut Run, pc: &ProblemConfig) -> Result<(DppProblem, DppSolver, DppSolution), CliError> {
    let problem = build_problem(pc, run)?;
    let t0 = Instant::now();
    let solver = DppSolver::new(problem.clone())?;
    let sol = solver.solve_bracketed(&solve_options(pc))?;
    run.time("solve", t0);
    Ok((problem, solver, sol))
}

pub fn solve(run: &mut Run) -> Result<(), CliError> {
    let pc = run
        .cfg
        .problem
        .clone()
        .ok_or_else(|| CliError::Config("missing [problem] section".into()))?;
    let (_, solver, sol) = inline_solve(run, &pc)?;
    sol.u.write_csv(run.create("solution.csv")?)?;
    let mut w = csv::Writer::from_writer(run.create("residuals.csv")?);
    w.write_record(["sweep", "residual"])?;
    for (k, r) in sol.residual_history.iter().enumerate() {
        w.write_record([k.to_string(), format!("{r:.16e}")])?;
    }
    w.flush()?;
    // record the resolved defaults
    if let Some(p) = run.cfg.problem.as_mut() {
        p.tol = Some(sol.tol);
        p.h = Some(solver.grid().h());
    }
    println!(
        "solve: {} sweeps, residual {:.3e} (tol {:.3e}), bracket gap {:.3e}",
        sol.iterations,
        sol.final_residual,
        sol.tol,
        sol.bracket_gap.unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn game(run: &mut Run) -> Result<(), CliError> {
    let gs = run
        .cfg
        .game
        .clone()
        .ok_or_else(|| CliError::Config("missing [game] section".into()))?;
    let pc = run.cfg.problem.clone().ok_or_else(|| {
        CliError::Config("game needs a [problem] section (rules and, without `solution`, an inline solve)".into())
    })?;
    if gs.x0.len() != pc.dim() {
        return Err(CliError::Config(format!("game.x0 must have {} coordinates", pc.dim())));
    }
    let (problem, quasi) = match &gs.solution {
        Some(path) => {
            let problem = build_problem(&pc, run)?;
            let file = File::open(path)
                .map_err(|e| CliError::Config(format!("missing solution `{path}`: {e}")))?;
            let u = GridField::read_csv(file)?;
            let op = AveragingOperator::with_quality(problem.params, problem.epsilon, problem.csearch, problem.quality)?;
            let q = QuasiOptimal::new(Arc::new(u), Arc::new(op), problem.f.clone(), problem.variant);
            (problem, q)
        }
        None => {
            let (problem, solver, sol) = inline_solve(run, &pc)?;
            let q = QuasiOptimal::from_solution(&sol, &problem, Arc::clone(solver.operator().sampler()))?;
            (problem, q)
        }
    };
    let rules = GameRules::from_problem(&problem)?;
    let cfg = GameConfig {
        max_steps: gs.max_steps,
        seed: run.cfg.seed,
        record_positions: gs.transcripts,
        ..Default::default()
    };
    let random = RandomStrategy;
    let pick = |p: Player| -> &dyn Strategy {
        match p {
            Player::Quasi => &quasi,
            Player::Random => &random,
        }
    };
    let (one, two) = (pick(gs.players[0]), pick(gs.players[1]));
    let t0 = Instant::now();
    let est = if gs.transcripts {
        let ts = run_rollouts(&gs.x0, one, two, &rules, &cfg, gs.rollouts)?;
        let est = summarize(&ts, cfg.seed)?;
        write_jsonl(run.create("transcripts.jsonl")?, &ts, &est, &cfg)?;
        est
    } else {
        estimate_value(&gs.x0, one, two, gs.rollouts, &rules, &cfg)?
    };
    run.time("rollouts", t0);
    serde_json::to_writer_pretty(run.create("game.json")?, &est)?;
    println!(
        "game: value {:.6} +- {:.6} over {} rollouts, cap fraction {}",
        est.mean, est.stderr, est.n, est.cap_fraction
    );
    Ok(())
}

type Exact = Box<dyn Fn(&[f64]) -> f64>;

/// `(p-1)/p d^{-1/(p-1)} |x|^{p/(p-1)}` solves the equation with unit
/// right-hand side; it is shifted to vanish on the sphere of radius `radius`.
fn radial_case(cc: &ConvergenceConfig) -> Result<(f64, Shape, ScalarFn, ScalarFn), CliError> {
    let p = cc
        .p
        .ok_or_else(|| CliError::Config("convergence.p is required for the radial oracle".into()))?;
    let d = cc.d;
    if !(cc.radius > 0.0) || d == 0 {
        return Err(CliError::Config("convergence: need radius > 0 and d >= 1".into()));
    }
    let q = p / (p - 1.0);
    let k = (p - 1.0) / p * (d as f64).powf(-1.0 / (p - 1.0));
    let shape = if d == 1 {
        Shape::Box {
            lower: vec![-cc.radius],
            upper: vec![cc.radius],
        }
    } else {
        Shape::Ball {
            center: vec![0.0; d],
            radius: cc.radius,
        }
    };
    let g = ScalarFn::RadialPower {
        center: vec![0.0; d],
        coef: k,
        power: q,
        offset: -k * cc.radius.powf(q),
    };
    Ok((p, shape, ScalarFn::constant(1.0), g))
}

/// Three-point scheme for `u'' = f` on `(a, b)` with `n` interior nodes.
fn three_point(f: &ScalarFn, a: f64, b: f64, ua: f64, ub: f64, n: usize) -> Vec<(f64, f64)> {
    let h = (b - a) / (n + 1) as f64;
    let xs: Vec<f64> = (1..=n).map(|i| a + i as f64 * h).collect();
    let mut d: Vec<f64> = xs.iter().map(|&x| f.eval(&[x]) * h * h).collect();
    d[0] -= ua;
    d[n - 1] -= ub;
    let mut diag = vec![-2.0; n];
    for i in 1..n {
        let w = 1.0 / diag[i - 1];
        diag[i] -= w;
        d[i] -= w * d[i - 1];
    }
    let mut u = vec![0.0; n];
    u[n - 1] = d[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        u[i] = (d[i] - u[i + 1]) / diag[i];
    }
    let mut pts = vec![(a, ua)];
    pts.extend(xs.into_iter().zip(u));
    pts.push((b, ub));
    pts
}

fn piecewise_linear(pts: &[(f64, f64)], x: f64) -> f64 {
    let k = pts.partition_point(|p| p.0 <= x).clamp(1, pts.len() - 1);
    let ((x0, y0), (x1, y1)) = (pts[k - 1], pts[k]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

pub fn convergence(run: &mut Run) -> Result<(), CliError> {
    let cc = run
        .cfg
        .convergence
        .clone()
        .ok_or_else(|| CliError::Config("missing [convergence] section".into()))?;
    if cc.epsilons.len() < 2 {
        return Err(CliError::Config("convergence: the epsilon ladder needs at least two values".into()));
    }
    if cc.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(CliError::Config("convergence: epsilons must be strictly decreasing".into()));
    }
    let base = run.cfg.problem.clone();
    let (pc_template, exact): (ProblemConfig, Exact) = match cc.oracle {
        Oracle::Radial => {
            let (p, shape, f, g) = radial_case(&cc)?;
            let gg = g.clone();
            let template = ProblemConfig {
                p,
                epsilon: cc.epsilons[0],
                domain: shape,
                f,
                g,
                variant: Default::default(),
                tol: base.as_ref().and_then(|b| b.tol),
                max_iter: base.as_ref().map_or(200_000, |b| b.max_iter),
                h: None,
                c_candidates: base.as_ref().map_or(64, |b| b.c_candidates),
            };
            (template, Box::new(move |x: &[f64]| gg.eval(x)))
        }
        Oracle::Poisson => {
            let pc = base.ok_or_else(|| CliError::Config("the poisson oracle reads its data from [problem]".into()))?;
            let Shape::Box { lower, upper } = &pc.domain else {
                return Err(CliError::Config("the poisson oracle needs a 1-d box domain".into()));
            };
            if pc.p != 2.0 || lower.len() != 1 {
                return Err(CliError::Config("the poisson oracle needs p = 2 and d = 1".into()));
            }
            let (a, b) = (lower[0], upper[0]);
            let pts = three_point(&pc.f, a, b, pc.g.eval(&[a]), pc.g.eval(&[b]), 3999);
            (pc, Box::new(move |x: &[f64]| piecewise_linear(&pts, x[0])))
        }
    };
    let mut w = csv::Writer::from_writer(run.create("convergence.csv")?);
    w.write_record(["epsilon", "sup_error", "iterations", "final_residual"])?;
    let mut errs = Vec::new();
    for &eps in &cc.epsilons {
        let pc = ProblemConfig {
            epsilon: eps,
            ..pc_template.clone()
        };
        let problem = build_problem(&pc, run)?;
        let t0 = Instant::now();
        let sol = DppSolver::new(problem)?.solve(Init::Barrier, &solve_options(&pc))?;
        run.time(format!("eps={eps}"), t0);
        let err = sol.sup_error(&exact);
        w.write_record([
            format!("{eps:.16e}"),
            format!("{err:.16e}"),
            sol.iterations.to_string(),
            format!("{:.16e}", sol.final_residual),
        ])?;
        println!("convergence: eps {eps}: sup error {err:.4e} after {} sweeps", sol.iterations);
        errs.push(err);
    }
    w.flush()?;
    if let Some(k) = errs.windows(2).position(|e| e[1] > (1.0 + cc.slack) * e[0]) {
        return Err(CliError::Criterion(format!(
            "error grew from {:.4e} to {:.4e} between eps {} and {}",
            errs[k],
            errs[k + 1],
            cc.epsilons[k],
            cc.epsilons[k + 1]
        )));
    }
    Ok(())
}
