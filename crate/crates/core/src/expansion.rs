//! Measured expansion errors of the averaging operators along an `eps` ladder.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{jp, Params};
use crate::error::{Error, Result};
use crate::field::{AnalyticField, BallSampler, Field};
use crate::operators::{
    l_r, m_r, p_laplacian_exact, p_laplacian_normalized_exact, AveragingOperator, CSearchConfig,
};

/// `(A[phi](x) - phi(x))/eps^2 - J_p(Lap_p phi(x))`, dispatching on the sign
/// of the exact p-Laplacian.
pub fn a_expansion_error(
    field: &AnalyticField,
    x: &[f64],
    epsilon: f64,
    params: &Params,
    csearch: CSearchConfig,
    sampler: Arc<BallSampler>,
) -> Result<f64> {
    require_gradient(field, x)?;
    let lap = p_laplacian_exact(field, x, params.p)?;
    let op = AveragingOperator::new(*params, epsilon, csearch, sampler)?;
    let (v, _) = if lap >= 0.0 {
        op.a_plus(field, x)?
    } else {
        op.a_minus(field, x)?
    };
    Ok((v - field.eval(x)) / (epsilon * epsilon) - jp(lap, params.p))
}

/// `(M_r[phi](x) - phi(x))/r^2 - Lap_p^N phi(x)`.
pub fn mr_expansion_error(field: &AnalyticField, x: &[f64], r: f64, params: &Params, sampler: &BallSampler) -> Result<f64> {
    let target = p_laplacian_normalized_exact(field, x, params.p)?;
    Ok((m_r(field, x, r, params, sampler)? - field.eval(x)) / (r * r) - target)
}

/// `L_r[phi](x) - Lap_p phi(x)`; no gradient hypothesis needed.
pub fn lr_expansion_error(field: &AnalyticField, x: &[f64], r: f64, params: &Params, sampler: &BallSampler) -> Result<f64> {
    Ok(l_r(field, x, r, params, sampler)? - p_laplacian_exact(field, x, params.p)?)
}

/// `(sup_{B_r(x)} phi - phi(x))/r - |grad phi(x)|`.
pub fn sup_gradient_error(field: &AnalyticField, x: &[f64], r: f64, sampler: &BallSampler) -> Result<f64> {
    let g = field.gradient(x)?;
    let norm = g.iter().map(|t| t * t).sum::<f64>().sqrt();
    let (hi, _) = field.ball_extremes(x, r, sampler)?;
    Ok((hi - field.eval(x)) / r - norm)
}

fn require_gradient(field: &AnalyticField, x: &[f64]) -> Result<()> {
    if field.gradient(x)?.iter().all(|&t| t == 0.0) {
        return Err(Error::SingularGradient { point: x.to_vec() });
    }
    Ok(())
}

/// Least-squares slope and intercept of `log|error|` against `log eps`.
pub fn fit_rate(epsilons: &[f64], errors: &[f64]) -> Result<(f64, f64)> {
    if epsilons.len() != errors.len() || epsilons.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "need at least three (eps, error) pairs, got {}",
            epsilons.len().min(errors.len())
        )));
    }
    if let Some(i) = errors.iter().position(|&e| e == 0.0 || !e.is_finite()) {
        return Err(Error::DegenerateFit(format!(
            "error at eps = {} is {}; below floor",
            epsilons[i], errors[i]
        )));
    }
    let xs: Vec<f64> = epsilons.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.abs().ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all eps values coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let rate = sxy / sxx;
    Ok((rate, my - rate * mx))
}

/// Which expansion a ladder measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expansion {
    Averaging,
    MeanValue,
    Nonlocal,
    SupGradient,
}

impl Expansion {
    pub fn label(self) -> &'static str {
        match self {
            Expansion::Averaging => "a_eps",
            Expansion::MeanValue => "m_r",
            Expansion::Nonlocal => "l_r",
            Expansion::SupGradient => "sup_grad",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub kind: Expansion,
    pub field: String,
    pub point: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub errors: Vec<f64>,
    /// Largest change of the error under the next sampling level or a rigid
    /// rotation of the point set, per rung.
    pub noise: Vec<f64>,
    /// Rungs whose error is below ten times the sampling noise.
    pub floored: Vec<bool>,
    pub target: f64,
    pub fitted_rate: Option<f64>,
    pub fitted_constant: Option<f64>,
}

impl ExpansionReport {
    pub fn kept(&self) -> (Vec<f64>, Vec<f64>) {
        self.epsilons
            .iter()
            .zip(&self.errors)
            .zip(&self.floored)
            .filter(|(_, &f)| !f)
            .map(|((&e, &v), _)| (e, v))
            .unzip()
    }

    /// Nonincreasing `|error|` over the rungs that are not floored.
    pub fn decreasing(&self) -> bool {
        let (_, errs) = self.kept();
        errs.windows(2).all(|w| w[1].abs() <= w[0].abs())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["epsilon", "error", "target", "rate_fit"])?;
        let rate = self
            .fitted_rate
            .map(|r| format!("{r:.16e}"))
            .unwrap_or_else(|| "nan".into());
        for (e, v) in self.epsilons.iter().zip(&self.errors) {
            wr.write_record([
                format!("{e:.16e}"),
                format!("{v:.16e}"),
                format!("{:.16e}", self.target),
                rate.clone(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Ladder `2^-lo, ..., 2^-hi`.
pub fn dyadic_ladder(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|k| 2f64.powi(-k)).collect()
}

#[derive(Debug, Clone)]
pub struct LadderSettings {
    pub params: Params,
    pub csearch: CSearchConfig,
    pub sampler: Arc<BallSampler>,
}

fn measure(kind: Expansion, field: &AnalyticField, x: &[f64], eps: f64, set: &LadderSettings, sampler: &Arc<BallSampler>) -> Result<f64> {
    match kind {
        Expansion::Averaging => a_expansion_error(field, x, eps, &set.params, set.csearch, Arc::clone(sampler)),
        Expansion::MeanValue => mr_expansion_error(field, x, eps, &set.params, sampler),
        Expansion::Nonlocal => lr_expansion_error(field, x, eps, &set.params, sampler),
        Expansion::SupGradient => sup_gradient_error(field, x, eps, sampler),
    }
}

fn target(kind: Expansion, field: &AnalyticField, x: &[f64], p: f64) -> Result<f64> {
    match kind {
        Expansion::Averaging => Ok(jp(p_laplacian_exact(field, x, p)?, p)),
        Expansion::MeanValue => p_laplacian_normalized_exact(field, x, p),
        Expansion::Nonlocal => p_laplacian_exact(field, x, p),
        Expansion::SupGradient => Ok(field.gradient(x)?.iter().map(|t| t * t).sum::<f64>().sqrt()),
    }
}

/// Evaluates one expansion along `epsilons` (rungs in parallel), estimates
/// sampling noise against the next sampling level and two rotated copies of
/// the point set, and fits a rate on the rungs above the floor.
pub fn run_ladder(
    kind: Expansion,
    field: &AnalyticField,
    x: &[f64],
    epsilons: &[f64],
    settings: &LadderSettings,
) -> Result<ExpansionReport> {
    if epsilons.len() < 3 || epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Config("ladder needs at least three strictly decreasing values".into()));
    }
    let mut probes = vec![Arc::new(settings.sampler.refined()?)];
    if settings.sampler.dim() > 1 {
        probes.extend((1..=2).map(|t| Arc::new(settings.sampler.rotated(t))));
    }
    let rungs: Vec<(f64, f64)> = epsilons
        .par_iter()
        .map(|&e| {
            let a = measure(kind, field, x, e, settings, &settings.sampler)?;
            let mut spread = 0.0f64;
            for s in &probes {
                spread = spread.max((a - measure(kind, field, x, e, settings, s)?).abs());
            }
            Ok((a, spread))
        })
        .collect::<Result<_>>()?;
    let errors: Vec<f64> = rungs.iter().map(|p| p.0).collect();
    let noise: Vec<f64> = rungs.iter().map(|p| p.1).collect();
    let floored: Vec<bool> = errors
        .iter()
        .zip(&noise)
        .map(|(e, n)| e.abs() < 10.0 * n || *e == 0.0)
        .collect();
    let mut report = ExpansionReport {
        kind,
        field: field.name().to_string(),
        point: x.to_vec(),
        epsilons: epsilons.to_vec(),
        errors,
        noise,
        floored,
        target: target(kind, field, x, settings.params.p)?,
        fitted_rate: None,
        fitted_constant: None,
    };
    let (e, v) = report.kept();
    if let Ok((rate, c)) = fit_rate(&e, &v) {
        report.fitted_rate = Some(rate);
        report.fitted_constant = Some(c);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::battery::*;
    use crate::field::Quality;

    #[test]
    fn fit_rate_examples() {
        let (r, _) = fit_rate(&[0.4, 0.2, 0.1], &[0.1, 0.05, 0.025]).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        let eps = [0.5, 0.25, 0.125, 0.0625];
        let errs: Vec<f64> = eps.iter().map(|e| 3.0 * e * e).collect();
        let (r, c) = fit_rate(&eps, &errs).unwrap();
        assert!((r - 2.0).abs() < 1e-12 && (c - 3f64.ln()).abs() < 1e-12);
        assert!(matches!(fit_rate(&eps, &[1.0, 0.0, 1.0, 1.0]), Err(Error::DegenerateFit(_))));
        assert!(fit_rate(&[0.1, 0.2], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn singular_gradient_rejected() {
        let p = Params::new(3.0, 2).unwrap();
        let s = Arc::new(BallSampler::new(2, Quality::Low).unwrap());
        let c = constant(2, 1.0);
        assert!(matches!(
            a_expansion_error(&c, &[0.0, 0.0], 0.1, &p, CSearchConfig::default(), s.clone()),
            Err(Error::SingularGradient { .. })
        ));
        assert!(matches!(
            mr_expansion_error(&c, &[0.0, 0.0], 0.1, &p, &s),
            Err(Error::SingularGradient { .. })
        ));
    }

    #[test]
    fn affine_examples() {
        let p = Params::new(3.0, 2).unwrap();
        let s = BallSampler::new(2, Quality::Default).unwrap();
        let a = affine(vec![0.6, -0.8], 0.3);
        assert!(mr_expansion_error(&a, &[0.1, 0.2], 0.1, &p, &s).unwrap().abs() < 1e-12);
        assert!(sup_gradient_error(&a, &[0.1, 0.2], 0.1, &s).unwrap().abs() < 1e-3);
        let c = constant(2, 2.0);
        assert_eq!(sup_gradient_error(&c, &[0.0, 0.0], 0.1, &s).unwrap(), 0.0);
    }

    /// Affine fields have zero p-Laplacian; the lower operator picks c = M and
    /// the error is `-alpha |grad| M^{1-alpha}` up to sampling.
    #[test]
    fn affine_averaging_error_vanishes() {
        let p = Params::new(3.0, 2).unwrap();
        let s = Arc::new(BallSampler::new(2, Quality::Default).unwrap());
        let a = affine(vec![1.0, 0.0], 0.0);
        let mut prev = f64::INFINITY;
        for &eps in &[0.1, 0.03, 0.01] {
            let e = a_expansion_error(&a, &[0.0, 0.0], eps, &p, CSearchConfig::default(), s.clone()).unwrap();
            let big_m = crate::constants::truncation_bounds(eps, p.alpha).unwrap().big_m;
            let oracle = p.alpha * big_m.powf(1.0 - p.alpha);
            assert!(e.abs() <= oracle * 1.01 + 1e-9, "{e} vs {oracle}");
            assert!(e.abs() < prev);
            prev = e.abs();
        }
    }

    #[test]
    fn sup_gradient_on_square() {
        let s = BallSampler::new(2, Quality::High).unwrap();
        let f = squared_distance(vec![0.0, 0.0]);
        for &r in &[0.2, 0.1, 0.05] {
            // sup of |y|^2 over B_r((1,0)) is (1+r)^2
            let e = sup_gradient_error(&f, &[1.0, 0.0], r, &s).unwrap();
            let exact = ((1.0 + r) * (1.0 + r) - 1.0) / r - 2.0;
            assert!((e - exact).abs() < 1e-9);
            assert!(e.abs() <= 1.0 * r + 1e-12);
        }
    }

    #[test]
    fn csv_columns() {
        let rep = ExpansionReport {
            kind: Expansion::MeanValue,
            field: "f".into(),
            point: vec![0.0],
            epsilons: vec![0.1, 0.05],
            errors: vec![0.01, 0.005],
            noise: vec![0.0, 0.0],
            floored: vec![false, false],
            target: 2.0,
            fitted_rate: Some(1.0),
            fitted_constant: Some(0.0),
        };
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("epsilon,error,target,rate_fit\n"));
        assert_eq!(s.lines().count(), 3);
    }
}
