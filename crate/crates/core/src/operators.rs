//! Asymptotic mean value operators and exact differential operators.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::constants::{truncation_bounds, Params, TruncationBounds};
use crate::error::{Error, Result};
use crate::field::{AnalyticField, BallSampler, Field, Quality};

/// Which one-sided operator to use where the right-hand side vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OperatorVariant {
    /// `A+` when `f >= 0`.
    #[default]
    Overline,
    /// `A+` only when `f > 0`.
    Underline,
}

impl OperatorVariant {
    #[inline]
    pub fn uses_plus(self, f_at_x: f64) -> bool {
        match self {
            OperatorVariant::Overline => f_at_x >= 0.0,
            OperatorVariant::Underline => f_at_x > 0.0,
        }
    }

    /// The variant whose selection mirrors this one under `f -> -f`.
    pub fn mirrored(self) -> Self {
        match self {
            OperatorVariant::Overline => OperatorVariant::Underline,
            OperatorVariant::Underline => OperatorVariant::Overline,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CSearchConfig {
    pub n_coarse: usize,
    pub refine: bool,
    pub refine_tol: f64,
}

impl Default for CSearchConfig {
    fn default() -> Self {
        Self {
            n_coarse: 64,
            refine: false,
            refine_tol: 1e-6,
        }
    }
}

impl CSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_coarse < 8 {
            return Err(Error::Config(format!(
                "n_coarse = {} too small (need at least 8)",
                self.n_coarse
            )));
        }
        if self.refine && !(self.refine_tol > 0.0 && self.refine_tol < 1.0) {
            return Err(Error::Config(format!("refine_tol = {} invalid", self.refine_tol)));
        }
        Ok(())
    }
}

/// `beta (sup + inf)/2 + (1 - beta) mean` over the ball of radius `gamma r`.
pub fn m_r<F: Field + ?Sized>(field: &F, x: &[f64], r: f64, params: &Params, sampler: &BallSampler) -> Result<f64> {
    let st = field.ball_stats(x, params.gamma * r, sampler)?;
    Ok(params.beta * (0.5 * (st.sup + st.inf)) + (1.0 - params.beta) * st.mean)
}

/// `avg_{|y|=1} |y_1|^p`.
pub fn sphere_moment(d: usize, p: f64) -> Result<f64> {
    match d {
        1 => Ok(1.0),
        2 => {
            let n = 1 << 14;
            Ok((0..n)
                .map(|j| (2.0 * PI * j as f64 / n as f64).cos().abs().powf(p))
                .sum::<f64>()
                / n as f64)
        }
        3 => {
            // the height coordinate on the unit sphere is uniform on [-1, 1]
            let n = 1 << 14;
            Ok((0..n)
                .map(|j| (-1.0 + (2 * j + 1) as f64 / n as f64).abs().powf(p))
                .sum::<f64>()
                / n as f64)
        }
        _ => Err(Error::Domain(format!("sphere moment not available for d = {d}"))),
    }
}

pub fn kappa(d: usize, p: f64) -> Result<f64> {
    Ok(2.0 * (p + d as f64) / (d as f64 * sphere_moment(d, p)?))
}

/// Nonlocal average `kappa / r^p * avg_{B_r} |delta|^{p-2} delta`.
pub fn l_r<F: Field + ?Sized>(field: &F, x: &[f64], r: f64, params: &Params, sampler: &BallSampler) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("radius {r} must be positive")));
    }
    let k = kappa(params.d, params.p)?;
    let center = field.value(x)?;
    let d = x.len();
    let mut y = vec![0.0; d];
    let mut sum = 0.0;
    for s in sampler.volume_points() {
        for i in 0..d {
            y[i] = x[i] + r * s[i];
        }
        let delta = field.value(&y)? - center;
        sum += delta.abs().powf(params.p - 2.0) * delta;
    }
    Ok(k / r.powf(params.p) * sum / sampler.n_volume() as f64)
}

/// `|grad|^{p-2} lap + (p-2) |grad|^{p-4} <D2 grad, grad>`.
pub fn p_laplacian_exact(field: &AnalyticField, x: &[f64], p: f64) -> Result<f64> {
    let g = field.gradient(x)?;
    let h = field.hessian(x)?;
    let d = g.len();
    let lap: f64 = (0..d).map(|i| h[i * d + i]).sum();
    let n2: f64 = g.iter().map(|t| t * t).sum();
    if n2 == 0.0 {
        return Ok(if p == 2.0 { lap } else { 0.0 });
    }
    let quad = quad_form(&h, &g);
    let norm = n2.sqrt();
    Ok(norm.powf(p - 2.0) * lap + (p - 2.0) * norm.powf(p - 4.0) * quad)
}

/// `lap + (p-2) <D2 nu, nu>` with `nu` the unit gradient.
pub fn p_laplacian_normalized_exact(field: &AnalyticField, x: &[f64], p: f64) -> Result<f64> {
    let g = field.gradient(x)?;
    let h = field.hessian(x)?;
    let d = g.len();
    let n2: f64 = g.iter().map(|t| t * t).sum();
    if n2 == 0.0 {
        return Err(Error::SingularGradient { point: x.to_vec() });
    }
    let lap: f64 = (0..d).map(|i| h[i * d + i]).sum();
    Ok(lap + (p - 2.0) * quad_form(&h, &g) / n2)
}

fn quad_form(h: &[f64], v: &[f64]) -> f64 {
    let d = v.len();
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            s += v[i] * h[i * d + j] * v[j];
        }
    }
    s
}

/// One admissible gambling constant with its two radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub c: f64,
    /// Radius of the free-move ball, `eps^2 c^{1-alpha}`.
    pub small: f64,
    /// Argument of the mean value operator, `eps c^{-alpha/2}`.
    pub r: f64,
}

/// The `A+` / `A-` operators at a fixed `eps`, with precomputed candidates.
#[derive(Debug, Clone)]
pub struct AveragingOperator {
    params: Params,
    bounds: TruncationBounds,
    csearch: CSearchConfig,
    sampler: Arc<BallSampler>,
    cands: Vec<Candidate>,
}

impl AveragingOperator {
    pub fn new(params: Params, epsilon: f64, csearch: CSearchConfig, sampler: Arc<BallSampler>) -> Result<Self> {
        let bounds = truncation_bounds(epsilon, params.alpha).map_err(|e| Error::Config(e.to_string()))?;
        csearch.validate()?;
        if sampler.dim() != params.d {
            return Err(Error::Config(format!(
                "sampler dimension {} differs from d = {}",
                sampler.dim(),
                params.d
            )));
        }
        let mut op = Self {
            params,
            bounds,
            csearch,
            sampler,
            cands: Vec::new(),
        };
        op.cands = if params.alpha == 0.0 {
            vec![op.candidate(1.0)]
        } else {
            let n = csearch.n_coarse;
            let (lm, lbig) = (bounds.m.ln(), bounds.big_m.ln());
            (0..n)
                .map(|k| {
                    let c = if k == 0 {
                        bounds.m
                    } else if k == n - 1 {
                        bounds.big_m
                    } else {
                        (lm + (lbig - lm) * k as f64 / (n - 1) as f64).exp()
                    };
                    op.candidate(c)
                })
                .collect()
        };
        Ok(op)
    }

    pub fn with_quality(params: Params, epsilon: f64, csearch: CSearchConfig, quality: Quality) -> Result<Self> {
        let sampler = Arc::new(BallSampler::new(params.d, quality)?);
        Self::new(params, epsilon, csearch, sampler)
    }

    pub fn candidate(&self, c: f64) -> Candidate {
        let eps = self.bounds.epsilon;
        Candidate {
            c,
            small: eps * eps * c.powf(1.0 - self.params.alpha),
            r: eps * c.powf(-self.params.alpha / 2.0),
        }
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn bounds(&self) -> &TruncationBounds {
        &self.bounds
    }

    pub fn epsilon(&self) -> f64 {
        self.bounds.epsilon
    }

    pub fn sampler(&self) -> &Arc<BallSampler> {
        &self.sampler
    }

    pub fn csearch(&self) -> &CSearchConfig {
        &self.csearch
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.cands
    }

    /// Largest distance from `x` at which any operator ball samples.
    pub fn reach(&self) -> f64 {
        self.params.reach(&self.bounds)
    }

    pub fn m_r<F: Field + ?Sized>(&self, field: &F, x: &[f64], r: f64) -> Result<f64> {
        m_r(field, x, r, &self.params, &self.sampler)
    }

    /// `alpha sup_small + (1 - alpha) M_r` (or inf for the lower objective).
    pub fn objective<F: Field + ?Sized>(&self, field: &F, x: &[f64], cand: &Candidate, upper: bool) -> Result<f64> {
        let a = self.params.alpha;
        let mr = self.m_r(field, x, cand.r)?;
        if a == 0.0 {
            return Ok(mr);
        }
        let (hi, lo) = field.ball_extremes(x, cand.small, &self.sampler)?;
        Ok(a * if upper { hi } else { lo } + (1.0 - a) * mr)
    }

    /// Minimizes `obj` over the candidate set, then optionally refines.
    fn search(&self, obj: impl Fn(&Candidate) -> Result<f64>) -> Result<(f64, f64)> {
        let mut best = (f64::INFINITY, self.cands[0].c);
        let mut best_k = 0;
        for (k, cand) in self.cands.iter().enumerate() {
            let v = obj(cand)?;
            if v < best.0 {
                best = (v, cand.c);
                best_k = k;
            }
        }
        if !self.csearch.refine || self.cands.len() < 3 {
            return Ok(best);
        }
        let lo = self.cands[best_k.saturating_sub(1)].c.ln();
        let hi = self.cands[(best_k + 1).min(self.cands.len() - 1)].c.ln();
        let eval = |t: f64| obj(&self.candidate(t.exp()));
        let g = 0.618_033_988_749_894_9;
        let (mut a, mut b) = (lo, hi);
        let mut x1 = b - g * (b - a);
        let mut x2 = a + g * (b - a);
        let mut f1 = eval(x1)?;
        let mut f2 = eval(x2)?;
        let tol = self.csearch.refine_tol * (hi - lo).abs().max(1e-300);
        let mut guard = 0;
        while (b - a).abs() > tol && guard < 200 {
            guard += 1;
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - g * (b - a);
                f1 = eval(x1)?;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + g * (b - a);
                f2 = eval(x2)?;
            }
        }
        for (v, t) in [(f1, x1), (f2, x2)] {
            if v < best.0 {
                best = (v, t.exp());
            }
        }
        Ok(best)
    }

    /// `inf_c { alpha sup_{B_small} + (1 - alpha) M_r }` and its minimizer.
    pub fn a_plus<F: Field + ?Sized>(&self, field: &F, x: &[f64]) -> Result<(f64, f64)> {
        self.search(|cand| self.objective(field, x, cand, true))
    }

    /// `sup_c { alpha inf_{B_small} + (1 - alpha) M_r }` and its maximizer.
    pub fn a_minus<F: Field + ?Sized>(&self, field: &F, x: &[f64]) -> Result<(f64, f64)> {
        let (v, c) = self.search(|cand| self.objective(field, x, cand, false).map(|t| -t))?;
        Ok((-v, c))
    }

    /// Sign-selected operator value with the optimal `c`.
    pub fn a_select_with_c<F: Field + ?Sized>(
        &self,
        field: &F,
        x: &[f64],
        f_at_x: f64,
        variant: OperatorVariant,
    ) -> Result<(f64, f64)> {
        if variant.uses_plus(f_at_x) {
            self.a_plus(field, x)
        } else {
            self.a_minus(field, x)
        }
    }

    pub fn a_select<F: Field + ?Sized>(&self, field: &F, x: &[f64], f_at_x: f64, variant: OperatorVariant) -> Result<f64> {
        self.a_select_with_c(field, x, f_at_x, variant).map(|t| t.0)
    }
}

/// One-shot `A+` at default sampler for the given quality.
pub fn a_plus<F: Field + ?Sized>(
    field: &F,
    x: &[f64],
    epsilon: f64,
    params: &Params,
    csearch: CSearchConfig,
    quality: Quality,
) -> Result<(f64, f64)> {
    AveragingOperator::with_quality(*params, epsilon, csearch, quality)?.a_plus(field, x)
}

pub fn a_minus<F: Field + ?Sized>(
    field: &F,
    x: &[f64],
    epsilon: f64,
    params: &Params,
    csearch: CSearchConfig,
    quality: Quality,
) -> Result<(f64, f64)> {
    AveragingOperator::with_quality(*params, epsilon, csearch, quality)?.a_minus(field, x)
}
