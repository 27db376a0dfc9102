use std::path::Path;

use plap_core::field::{battery, AnalyticField, Quality, ScalarFn, Shape};
use plap_core::operators::OperatorVariant;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// One experiment file. Every section is optional; a command complains only
/// about the sections it needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub id: String,
    pub seed: u64,
    pub quality: Quality,
    /// Worker threads; 0 means one per available core.
    pub workers: usize,
    pub identities: IdentitiesConfig,
    pub expand: Option<ExpandConfig>,
    pub problem: Option<ProblemConfig>,
    pub game: Option<GameSection>,
    pub convergence: Option<ConvergenceConfig>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            id: "run".into(),
            seed: 0,
            quality: Quality::Default,
            workers: 0,
            identities: IdentitiesConfig::default(),
            expand: None,
            problem: None,
            game: None,
            convergence: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentitiesConfig {
    pub cases: usize,
    /// Sampling range for the weight; must sit inside the open unit interval.
    pub alpha: [f64; 2],
    pub epsilon: [f64; 2],
    /// `a` and `b` are drawn uniformly from `[0, scale)`.
    pub scale: f64,
    /// Log-spaced points in the brute-force infimum.
    pub brute_points: usize,
    pub rel_tol: f64,
}

impl Default for IdentitiesConfig {
    fn default() -> Self {
        Self {
            cases: 10_000,
            alpha: [0.01, 0.99],
            epsilon: [0.001, 0.9],
            scale: 10.0,
            brute_points: 10_000,
            rel_tol: 1e-6,
        }
    }
}

/// Built-in test fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant { dim: usize, value: f64 },
    Affine { slope: Vec<f64>, offset: f64 },
    /// `y^T Q y + b . y + c`, `q` row-major.
    Quadratic { q: Vec<f64>, b: Vec<f64>, c: f64 },
    SquaredDistance { center: Vec<f64> },
    Exponential { dim: usize, axis: usize, rate: f64, coef: f64 },
    RadialPower { center: Vec<f64>, coef: f64, power: f64 },
}

impl FieldSpec {
    pub fn build(&self) -> Result<AnalyticField, CliError> {
        let bad = |m: &str| Err(CliError::Config(format!("field: {m}")));
        Ok(match self.clone() {
            FieldSpec::Constant { dim, value } => battery::constant(dim, value),
            FieldSpec::Affine { slope, offset } => battery::affine(slope, offset),
            FieldSpec::Quadratic { q, b, c } => {
                if q.len() != b.len() * b.len() {
                    return bad("`q` must have d*d entries");
                }
                battery::quadratic(q, b, c)
            }
            FieldSpec::SquaredDistance { center } => battery::squared_distance(center),
            FieldSpec::Exponential { dim, axis, rate, coef } => {
                if axis >= dim {
                    return bad("`axis` out of range");
                }
                battery::exponential(dim, axis, rate, coef)
            }
            FieldSpec::RadialPower { center, coef, power } => battery::radial_power(center, coef, power),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpandConfig {
    pub p: f64,
    pub point: Vec<f64>,
    pub field: FieldSpec,
    /// Explicit decreasing ladder; overrides `dyadic`.
    #[serde(default)]
    pub epsilons: Option<Vec<f64>>,
    /// Exponents `[lo, hi]` of the ladder `2^-lo, ..., 2^-hi`.
    #[serde(default = "default_dyadic")]
    pub dyadic: [i32; 2],
    #[serde(default = "default_operators")]
    pub operators: Vec<String>,
    #[serde(default = "default_candidates")]
    pub c_candidates: usize,
}

fn default_dyadic() -> [i32; 2] {
    [3, 9]
}

fn default_operators() -> Vec<String> {
    vec!["a_eps".into(), "m_r".into(), "l_r".into()]
}

fn default_candidates() -> usize {
    64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub p: f64,
    pub epsilon: f64,
    pub domain: Shape,
    pub f: ScalarFn,
    pub g: ScalarFn,
    #[serde(default)]
    pub variant: OperatorVariant,
    /// Residual tolerance; default `1e-8 (1 + |g|)`.
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Grid spacing override.
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default = "default_candidates")]
    pub c_candidates: usize,
}

fn default_max_iter() -> usize {
    200_000
}

impl ProblemConfig {
    pub fn dim(&self) -> usize {
        match &self.domain {
            Shape::Box { lower, .. } => lower.len(),
            Shape::Ball { center, .. } | Shape::Annulus { center, .. } => center.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Player {
    Quasi,
    Random,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameSection {
    pub x0: Vec<f64>,
    pub rollouts: usize,
    /// Maximizer first.
    pub players: [Player; 2],
    /// Solution CSV from an earlier `solve`; without it the `[problem]` is
    /// solved inline.
    pub solution: Option<String>,
    pub transcripts: bool,
    pub max_steps: usize,
}

impl Default for GameSection {
    fn default() -> Self {
        Self {
            x0: Vec::new(),
            rollouts: 10_000,
            players: [Player::Quasi, Player::Quasi],
            solution: None,
            transcripts: false,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Oracle {
    /// Radial solution of the problem with unit right-hand side on the ball of
    /// radius `radius` about the origin.
    Radial,
    /// Three-point difference scheme for `p = 2` on an interval, using the
    /// `[problem]` data.
    Poisson,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub epsilons: Vec<f64>,
    pub oracle: Oracle,
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// Radial oracle exponent and dimension.
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default = "default_dim")]
    pub d: usize,
    #[serde(default = "default_slack")]
    pub slack: f64,
}

fn default_radius() -> f64 {
    1.0
}

fn default_dim() -> usize {
    1
}

fn default_slack() -> f64 {
    0.1
}

pub fn load(path: Option<&Path>) -> Result<Config, CliError> {
    let Some(path) = path else {
        return Ok(Config::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
