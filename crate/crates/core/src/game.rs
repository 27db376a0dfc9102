//! The two-player gambling-house game and Monte Carlo value estimation.

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{jp, Params, TruncationBounds};
use crate::dpp::{DppProblem, DppSolution};
use crate::error::{Error, Result};
use crate::field::{BallSampler, Domain, Field, GridField, ScalarFn};
use crate::operators::{AveragingOperator, OperatorVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Player I.
    Maximizer,
    /// Player II.
    Minimizer,
}

/// Outcome of the coins in one turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coin {
    Heads { mover: Role },
    Tug { mover: Role },
    Noise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    pub position: Vec<f64>,
    pub step: usize,
    pub accrued: f64,
}

impl GameState {
    pub fn start(x0: &[f64]) -> Self {
        Self {
            position: x0.to_vec(),
            step: 0,
            accrued: 0.0,
        }
    }
}

/// Rules shared by every turn, derived from a problem.
#[derive(Debug, Clone)]
pub struct GameRules {
    pub params: Params,
    pub bounds: TruncationBounds,
    pub domain: Domain,
    pub f: ScalarFn,
    pub g: ScalarFn,
    pub variant: OperatorVariant,
}

impl GameRules {
    pub fn from_problem(problem: &DppProblem) -> Result<Self> {
        problem.validate()?;
        Ok(Self {
            params: problem.params,
            bounds: crate::constants::truncation_bounds(problem.epsilon, problem.params.alpha)?,
            domain: problem.domain.clone(),
            f: problem.f.clone(),
            g: problem.g.clone(),
            variant: problem.variant,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.bounds.epsilon
    }

    /// Radius of the free-move ball for gambling constant `c`.
    pub fn small_radius(&self, c: f64) -> f64 {
        let e = self.epsilon();
        e * e * c.powf(1.0 - self.params.alpha)
    }

    pub fn noise_radius(&self, c: f64) -> f64 {
        self.params.gamma * self.epsilon() * c.powf(-self.params.alpha / 2.0)
    }

    /// Player choosing `c` at a point with right-hand side `fx`; the other
    /// player owns the free move.
    pub fn c_chooser(&self, fx: f64) -> Role {
        if self.variant.uses_plus(fx) {
            Role::Minimizer
        } else {
            Role::Maximizer
        }
    }

    pub fn running_cost(&self, fx: f64) -> f64 {
        let e = self.epsilon();
        e * e * jp(fx, self.params.p)
    }
}

/// A Markov strategy: the engine shows only the current state.
pub trait Strategy: Send + Sync {
    fn choose_c(&self, state: &GameState, rules: &GameRules) -> Result<f64>;

    fn choose_point(
        &self,
        state: &GameState,
        center: &[f64],
        radius: f64,
        role: Role,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>>;
}

/// Uniform point in the closed ball by rejection from the bounding cube.
pub fn uniform_in_ball(center: &[f64], radius: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = center.len();
    let mut z = vec![0.0; d];
    loop {
        let mut r2 = 0.0;
        for t in z.iter_mut() {
            *t = rng.gen_range(-1.0..1.0);
            r2 += *t * *t;
        }
        if r2 <= 1.0 {
            return center.iter().zip(&z).map(|(c, t)| c + radius * t).collect();
        }
    }
}

/// Log-uniform `c` and a uniform point in the ball.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomStrategy;

impl Strategy for RandomStrategy {
    fn choose_c(&self, state: &GameState, rules: &GameRules) -> Result<f64> {
        // hashed from the state; the turn rng is left untouched
        let mut h = ChaCha8Rng::seed_from_u64(state.step as u64 ^ state.position[0].to_bits());
        let t: f64 = h.gen();
        let (lo, hi) = (rules.bounds.m.ln(), rules.bounds.big_m.ln());
        Ok((lo + t * (hi - lo)).exp().clamp(rules.bounds.m, rules.bounds.big_m))
    }

    fn choose_point(
        &self,
        _state: &GameState,
        center: &[f64],
        radius: f64,
        _role: Role,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>> {
        Ok(uniform_in_ball(center, radius, rng))
    }
}

/// Strategy read off a solved value function: the `c` realizing the
/// operator and the sampled argmax/argmin over each ball.
#[derive(Debug, Clone)]
pub struct QuasiOptimal {
    u: Arc<GridField>,
    op: Arc<AveragingOperator>,
    f: ScalarFn,
    variant: OperatorVariant,
}

impl QuasiOptimal {
    pub fn new(u: Arc<GridField>, op: Arc<AveragingOperator>, f: ScalarFn, variant: OperatorVariant) -> Self {
        Self { u, op, f, variant }
    }

    pub fn from_solution(solution: &DppSolution, problem: &DppProblem, sampler: Arc<BallSampler>) -> Result<Self> {
        let op = AveragingOperator::new(problem.params, problem.epsilon, problem.csearch, sampler)?;
        Ok(Self::new(
            Arc::new(solution.u.clone()),
            Arc::new(op),
            problem.f.clone(),
            problem.variant,
        ))
    }

    pub fn value_field(&self) -> &Arc<GridField> {
        &self.u
    }
}

impl Strategy for QuasiOptimal {
    fn choose_c(&self, state: &GameState, _rules: &GameRules) -> Result<f64> {
        let x = &state.position;
        let fx = self.f.eval(x);
        Ok(self.op.a_select_with_c(self.u.as_ref(), x, fx, self.variant)?.1)
    }

    fn choose_point(
        &self,
        _state: &GameState,
        center: &[f64],
        radius: f64,
        role: Role,
        _rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>> {
        let maximize = role == Role::Maximizer;
        Ok(self
            .u
            .ball_argext(center, radius, self.op.sampler(), maximize)?
            .0)
    }
}

/// One recorded turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub c: f64,
    pub c_chooser: Role,
    pub coin: Coin,
}

fn check_point(center: &[f64], radius: f64, y: &[f64], who: Role) -> Result<()> {
    let r = center
        .iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if y.len() != center.len() || !(r <= radius * (1.0 + 1e-12)) {
        return Err(Error::Strategy(format!(
            "{who:?} moved to {y:?}, distance {r} exceeds radius {radius}"
        )));
    }
    Ok(())
}

/// One turn: `c` choice, the biased coin, then free move, tug or noise.
pub fn play_round(
    state: &GameState,
    player_one: &dyn Strategy,
    player_two: &dyn Strategy,
    rules: &GameRules,
    rng: &mut ChaCha8Rng,
) -> Result<(GameState, Turn)> {
    let x = &state.position;
    let fx = rules.f.eval(x);
    let chooser = rules.c_chooser(fx);
    let pick = |r: Role| -> &dyn Strategy {
        match r {
            Role::Maximizer => player_one,
            Role::Minimizer => player_two,
        }
    };
    let c = pick(chooser).choose_c(state, rules)?;
    if !(c >= rules.bounds.m && c <= rules.bounds.big_m) {
        return Err(Error::Strategy(format!(
            "{chooser:?} chose c = {c} outside [{}, {}]",
            rules.bounds.m, rules.bounds.big_m
        )));
    }
    let heads = rng.gen::<f64>() < rules.params.alpha;
    let (coin, next) = if heads {
        let mover = match chooser {
            Role::Minimizer => Role::Maximizer,
            Role::Maximizer => Role::Minimizer,
        };
        let radius = rules.small_radius(c);
        let y = pick(mover).choose_point(state, x, radius, mover, rng)?;
        check_point(x, radius, &y, mover)?;
        (Coin::Heads { mover }, y)
    } else {
        let radius = rules.noise_radius(c);
        if rng.gen::<f64>() < rules.params.beta {
            let mover = if rng.gen::<bool>() {
                Role::Maximizer
            } else {
                Role::Minimizer
            };
            let y = pick(mover).choose_point(state, x, radius, mover, rng)?;
            check_point(x, radius, &y, mover)?;
            (Coin::Tug { mover }, y)
        } else {
            (Coin::Noise, uniform_in_ball(x, radius, rng))
        }
    };
    Ok((
        GameState {
            position: next,
            step: state.step + 1,
            accrued: state.accrued - rules.running_cost(fx),
        },
        Turn {
            c,
            c_chooser: chooser,
            coin,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GameConfig {
    pub max_steps: usize,
    pub seed: u64,
    /// Keep the visited positions in transcripts.
    pub record_positions: bool,
    /// Drop recorded positions of rollouts longer than this when exporting.
    pub elide_above: usize,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            max_steps: 1_000_000,
            seed: 0,
            record_positions: true,
            elide_above: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameTranscript {
    pub rollout: u64,
    pub positions: Vec<Vec<f64>>,
    pub turns: Vec<Turn>,
    pub accrued: f64,
    pub final_payoff: f64,
    pub terminated: bool,
    pub steps: usize,
}

impl GameTranscript {
    /// Payoff recomputed from the recorded positions.
    pub fn recomputed_payoff(&self, rules: &GameRules) -> Option<f64> {
        if self.positions.len() != self.steps + 1 {
            return None;
        }
        let mut acc = 0.0;
        for x in &self.positions[..self.steps] {
            acc -= rules.running_cost(rules.f.eval(x));
        }
        Some(if self.terminated {
            acc + rules.g.eval(&self.positions[self.steps])
        } else {
            acc
        })
    }
}

/// Rng for rollout `index` under master seed `seed`.
pub fn rollout_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn play_game(
    x0: &[f64],
    player_one: &dyn Strategy,
    player_two: &dyn Strategy,
    rules: &GameRules,
    config: &GameConfig,
    rollout: u64,
) -> Result<GameTranscript> {
    if !rules.domain.contains(x0) {
        return Err(Error::Domain(format!("start {x0:?} is not in the domain")));
    }
    let mut rng = rollout_rng(config.seed, rollout);
    let mut state = GameState::start(x0);
    let mut positions = Vec::new();
    if config.record_positions {
        positions.push(state.position.clone());
    }
    let mut turns = Vec::new();
    while state.step < config.max_steps {
        let (next, turn) = play_round(&state, player_one, player_two, rules, &mut rng)?;
        state = next;
        turns.push(turn);
        if config.record_positions {
            positions.push(state.position.clone());
        }
        if !rules.domain.contains(&state.position) {
            let payoff = state.accrued + rules.g.eval(&state.position);
            return Ok(GameTranscript {
                rollout,
                positions,
                turns,
                accrued: state.accrued,
                final_payoff: payoff,
                terminated: true,
                steps: state.step,
            });
        }
    }
    Ok(GameTranscript {
        rollout,
        positions,
        turns,
        accrued: state.accrued,
        final_payoff: state.accrued,
        terminated: false,
        steps: state.step,
    })
}

fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub cap_fraction: f64,
    pub n: usize,
    pub n_terminated: usize,
    pub seed: u64,
}

/// Summary statistics over terminated rollouts; order-independent of scheduling.
pub fn summarize(transcripts: &[GameTranscript], seed: u64) -> Result<ValueEstimate> {
    let pay: Vec<f64> = transcripts
        .iter()
        .filter(|t| t.terminated)
        .map(|t| t.final_payoff)
        .collect();
    if pay.is_empty() {
        return Err(Error::AllCapped);
    }
    let n = pay.len() as f64;
    let mean = pairwise_sum(&pay) / n;
    let sq: Vec<f64> = pay.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = if pay.len() > 1 {
        pairwise_sum(&sq) / (n - 1.0)
    } else {
        0.0
    };
    Ok(ValueEstimate {
        mean,
        stderr: (var / n).sqrt(),
        cap_fraction: 1.0 - n / transcripts.len() as f64,
        n: transcripts.len(),
        n_terminated: pay.len(),
        seed,
    })
}

/// Runs `n_rollouts` independent games in parallel.
pub fn run_rollouts(
    x0: &[f64],
    player_one: &dyn Strategy,
    player_two: &dyn Strategy,
    rules: &GameRules,
    config: &GameConfig,
    n_rollouts: usize,
) -> Result<Vec<GameTranscript>> {
    (0..n_rollouts as u64)
        .into_par_iter()
        .map(|i| play_game(x0, player_one, player_two, rules, config, i))
        .collect()
}

pub fn estimate_value(
    x0: &[f64],
    player_one: &dyn Strategy,
    player_two: &dyn Strategy,
    n_rollouts: usize,
    rules: &GameRules,
    config: &GameConfig,
) -> Result<ValueEstimate> {
    if n_rollouts < 2 {
        return Err(Error::Config("need at least two rollouts".into()));
    }
    let light = GameConfig {
        record_positions: false,
        ..*config
    };
    let ts = run_rollouts(x0, player_one, player_two, rules, &light, n_rollouts)?;
    summarize(&ts, config.seed)
}

/// Mean one-step increment of `u(x_k) + accrued_k` over every recorded
/// transition, with its standard error.
pub fn martingale_drift(transcripts: &[GameTranscript], u: &dyn Field, rules: &GameRules) -> Result<(f64, f64)> {
    let mut inc = Vec::new();
    for t in transcripts {
        if t.positions.len() != t.steps + 1 {
            continue;
        }
        for k in 0..t.steps {
            let x = &t.positions[k];
            let y = &t.positions[k + 1];
            let cost = rules.running_cost(rules.f.eval(x));
            let uy = if rules.domain.contains(y) {
                u.value(y)?
            } else {
                rules.g.eval(y)
            };
            inc.push(uy - cost - u.value(x)?);
        }
    }
    if inc.len() < 2 {
        return Err(Error::Config("no recorded transitions".into()));
    }
    let n = inc.len() as f64;
    let mean = pairwise_sum(&inc) / n;
    let sq: Vec<f64> = inc.iter().map(|v| (v - mean) * (v - mean)).collect();
    Ok((mean, (pairwise_sum(&sq) / (n - 1.0) / n).sqrt()))
}

/// JSON-lines export: one record per rollout then a summary record.
pub fn write_jsonl<W: Write>(mut w: W, transcripts: &[GameTranscript], summary: &ValueEstimate, config: &GameConfig) -> Result<()> {
    for t in transcripts {
        if t.steps > config.elide_above && !t.positions.is_empty() {
            let mut short = t.clone();
            short.positions.clear();
            serde_json::to_writer(&mut w, &short)?;
        } else {
            serde_json::to_writer(&mut w, t)?;
        }
        w.write_all(b"\n")?;
    }
    serde_json::to_writer(&mut w, &serde_json::json!({ "summary": summary }))?;
    w.write_all(b"\n")?;
    Ok(())
}
