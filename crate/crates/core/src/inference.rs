//! Model selection, quantile prediction and prediction error.

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bspline::{eval_coeffs, BasisConfig};
use crate::coeff::{outer_weights, CoefficientTensor, Method, ModelSpec};
use crate::datakit::{RawData, Transforms};
use crate::error::{check_unit, Error, Result};
use crate::likelihood::{Likelihood, LogLikelihood, Observations};
use crate::sampler::{run_chain, ChainOutput, McmcConfig};
use crate::warmstart::{optimize_traced, OptimizerTuning};

/// Points in the equidistant grid used to invert a fitted distribution function.
pub const CDF_GRID: usize = 1000;

/// Which draws a prediction averages over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PointEstimate {
    #[default]
    PosteriorMean,
    Mle,
}

impl fmt::Display for PointEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PointEstimate::PosteriorMean => "posterior-mean",
            PointEstimate::Mle => "mle",
        })
    }
}

impl FromStr for PointEstimate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "posterior-mean" => Ok(PointEstimate::PosteriorMean),
            "mle" => Ok(PointEstimate::Mle),
            other => Err(Error::Config(format!(
                "unknown point estimate `{other}` (expected mle or posterior-mean)"
            ))),
        }
    }
}

/// A fitted model: warm-start optimum, its criterion value and the posterior draws.
#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub mle: CoefficientTensor,
    pub loglik: f64,
    pub aic: f64,
    pub chain: ChainOutput,
}

/// `2k - 2 loglik` with `k = (p1 + m1 - 2)(p2 + m2)^d`.
pub fn aic(loglik_at_mle: f64, spec: &ModelSpec) -> f64 {
    2.0 * spec.free_parameters() as f64 - 2.0 * loglik_at_mle
}

/// Everything besides the data that a fit needs.
#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub mcmc: McmcConfig,
    pub tuning: OptimizerTuning,
    pub warm_start: bool,
    pub m1: usize,
    pub m2: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            mcmc: McmcConfig::default(),
            tuning: OptimizerTuning::default(),
            warm_start: true,
            m1: 2,
            m2: 2,
        }
    }
}

/// Candidate knot counts searched when none are given.
pub fn default_p_range(method: Method) -> RangeInclusive<usize> {
    match method {
        Method::Npsqr => 3..=10,
        Method::Npdfsqr => 5..=10,
    }
}

/// Score of one candidate in [`select_model`].
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub p: usize,
    pub outcome: std::result::Result<(f64, f64), String>,
}

impl Candidate {
    pub fn aic(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|(_, a)| *a)
    }
}

/// Chosen fit plus the scores of every candidate.
#[derive(Clone, Debug)]
pub struct Selection {
    pub fit: FitResult,
    pub candidates: Vec<Candidate>,
}

fn warm_start(lik: &Likelihood, config: &FitConfig, salt: u64) -> Result<(CoefficientTensor, f64)> {
    let spec = *lik.spec();
    if config.warm_start {
        let mut rng = ChaCha8Rng::seed_from_u64(config.mcmc.seed.wrapping_add(salt));
        let opt = optimize_traced(lik, spec, &config.tuning, &mut rng)?;
        Ok((opt.tensor, opt.objective))
    } else {
        let start = CoefficientTensor::uniform(spec);
        let ll = lik.total(&start);
        if ll == f64::NEG_INFINITY {
            return Err(Error::Optimization("log-likelihood is -inf at the uniform start".into()));
        }
        Ok((start, ll))
    }
}

/// Warm start, then the full chain, for one fixed spec.
pub fn fit_spec(data: &Observations, spec: ModelSpec, config: &FitConfig) -> Result<FitResult> {
    let lik = Likelihood::new(spec, data.clone())?;
    let (mle, loglik) = warm_start(&lik, config, spec.p1 as u64)?;
    let chain = run_chain(&lik, mle.clone(), &config.mcmc)?;
    Ok(FitResult {
        spec,
        aic: aic(loglik, &spec),
        mle,
        loglik,
        chain,
    })
}

/// Scores `p1 = p2 = p` over `p_range` by AIC at the warm-start optimum and samples the winner.
/// Ties go to the smaller `p`.
pub fn select_model(
    data: &Observations,
    method: Method,
    p_range: RangeInclusive<usize>,
    config: &FitConfig,
) -> Result<Selection> {
    config.mcmc.validate()?;
    let mut candidates = Vec::new();
    let mut best: Option<(f64, Likelihood, CoefficientTensor, f64)> = None;
    for p in p_range {
        let scored = ModelSpec::new(method, data.d(), config.m1, config.m2, p, p)
            .and_then(|spec| Likelihood::new(spec, data.clone()))
            .and_then(|lik| {
                let (mle, ll) = warm_start(&lik, config, p as u64)?;
                Ok((lik, mle, ll))
            });
        match scored {
            Ok((lik, mle, ll)) => {
                let score = aic(ll, lik.spec());
                candidates.push(Candidate {
                    p,
                    outcome: Ok((ll, score)),
                });
                if best.as_ref().is_none_or(|(b, ..)| score < *b) {
                    best = Some((score, lik, mle, ll));
                }
            }
            Err(e) => candidates.push(Candidate {
                p,
                outcome: Err(e.to_string()),
            }),
        }
    }
    let Some((score, lik, mle, loglik)) = best else {
        let report: Vec<String> = candidates
            .iter()
            .map(|c| format!("p={}: {}", c.p, c.outcome.as_ref().err().map_or("", |s| s)))
            .collect();
        return Err(Error::Optimization(format!(
            "no candidate could be fitted ({})",
            if report.is_empty() { "empty range".into() } else { report.join("; ") }
        )));
    };
    let chain = run_chain(&lik, mle.clone(), &config.mcmc)?;
    Ok(Selection {
        fit: FitResult {
            spec: *lik.spec(),
            mle,
            loglik,
            aic: score,
            chain,
        },
        candidates,
    })
}

/// Inverse of a fitted distribution function by linear interpolation on the `CDF_GRID` grid.
/// Only the grid points visited by bisection are evaluated.
pub fn grid_inverse(inner: &BasisConfig, coeffs: &[f64], tau: f64) -> f64 {
    let last = CDF_GRID - 1;
    let node = |g: usize| g as f64 / last as f64;
    let cdf = |g: usize| eval_coeffs(inner, coeffs, node(g));
    if cdf(last) < tau {
        return 1.0;
    }
    // smallest g with F(g) ≥ tau
    let (mut lo, mut hi) = (0usize, last);
    if cdf(0) >= tau {
        return 0.0;
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if cdf(mid) >= tau {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (f_lo, f_hi) = (cdf(lo), cdf(hi));
    node(lo) + (tau - f_lo) / (f_hi - f_lo) * (node(hi) - node(lo))
}

fn quantile_from_coeffs(method: Method, inner: &BasisConfig, coeffs: &[f64], tau: f64) -> f64 {
    match method {
        Method::Npsqr => eval_coeffs(inner, coeffs, tau),
        Method::Npdfsqr => grid_inverse(inner, coeffs, tau),
    }
}

fn check_taus(taus: &[f64]) -> Result<()> {
    taus.iter().try_for_each(|t| check_unit("tau", *t))
}

/// Quantiles at `taus` for a single coefficient tensor, on the unit scale.
pub fn sample_quantiles(tensor: &CoefficientTensor, x: &[f64], taus: &[f64]) -> Result<Vec<f64>> {
    check_taus(taus)?;
    let coeffs = tensor.coeff_at(x)?;
    let inner = tensor.spec().inner_basis();
    Ok(taus
        .iter()
        .map(|t| quantile_from_coeffs(tensor.method(), &inner, &coeffs, *t))
        .collect())
}

impl FitResult {
    /// The tensors a point estimate averages over.
    pub fn draws(&self, estimate: PointEstimate) -> Result<&[CoefficientTensor]> {
        match estimate {
            PointEstimate::Mle => Ok(std::slice::from_ref(&self.mle)),
            PointEstimate::PosteriorMean if self.chain.samples.is_empty() => {
                Err(Error::Contract("fit holds no posterior samples".into()))
            }
            PointEstimate::PosteriorMean => Ok(&self.chain.samples),
        }
    }

    /// Averaged quantiles at `taus` for unit-scale covariates `x`.
    pub fn predict_quantiles(&self, x: &[f64], taus: &[f64], estimate: PointEstimate) -> Result<Vec<f64>> {
        check_taus(taus)?;
        let weights = outer_weights(&self.spec, x)?;
        let draws = self.draws(estimate)?;
        let inner = self.spec.inner_basis();
        let mut coeffs = vec![0.0; inner.len()];
        let mut sums = vec![0.0; taus.len()];
        for draw in draws {
            draw.mix_into(&weights, &mut coeffs);
            for (s, t) in sums.iter_mut().zip(taus) {
                *s += quantile_from_coeffs(self.spec.method, &inner, &coeffs, *t);
            }
        }
        let n = draws.len() as f64;
        Ok(sums.into_iter().map(|s| s / n).collect())
    }

    /// Averaged quantile at one level, on the unit scale.
    pub fn predict_quantile(&self, tau: f64, x: &[f64], estimate: PointEstimate) -> Result<f64> {
        Ok(self.predict_quantiles(x, &[tau], estimate)?[0])
    }
}

/// Mean squared error of the predicted median against original-scale test responses.
pub fn pmse(fit: &FitResult, test: &RawData, transforms: &Transforms, estimate: PointEstimate) -> Result<f64> {
    if transforms.d() != test.d() {
        return Err(Error::Shape {
            what: "covariate transforms",
            expected: test.d(),
            found: transforms.d(),
        });
    }
    let mut total = 0.0;
    for i in 0..test.len() {
        let x = transforms.x_forward(test.x(i))?;
        let median = fit.predict_quantile(0.5, &x, estimate)?;
        let y_hat = transforms.y.inverse(median)?;
        total += (test.y(i) - y_hat).powi(2);
    }
    Ok(total / test.len() as f64)
}

/// One point of an exported quantile curve, on the original scale.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub x: Vec<f64>,
    pub tau: f64,
    pub q: f64,
}

/// Equally spaced levels `lo, lo + step, …` up to `hi` inclusive.
pub fn quantile_levels(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || lo > hi {
        return Err(Error::Config(format!("invalid level range {lo}:{hi}:{step}")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    let levels: Vec<f64> = (0..count).map(|i| lo + i as f64 * step).collect();
    check_taus(&levels)?;
    Ok(levels)
}

/// The default export levels 0.05, 0.10, …, 0.95.
pub fn default_levels() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 20.0).collect()
}

/// Product grid with `points` equally spaced unit-scale values per covariate, mapped back to the original scale.
pub fn covariate_grid(transforms: &Transforms, points: usize) -> Result<Vec<Vec<f64>>> {
    if points < 2 {
        return Err(Error::Config("covariate grid needs at least two points".into()));
    }
    let d = transforms.d();
    let total = points.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            let mut row = vec![0.0; d];
            for j in (0..d).rev() {
                let u = (idx % points) as f64 / (points - 1) as f64;
                row[j] = transforms.x[j].inverse(u)?;
                idx /= points;
            }
            Ok(row)
        })
        .collect()
}

/// Quantile curves at every covariate row and level, back on the original scale.
pub fn export_curves(
    fit: &FitResult,
    transforms: &Transforms,
    xs: &[Vec<f64>],
    taus: &[f64],
    estimate: PointEstimate,
) -> Result<Vec<CurveRow>> {
    let mut rows = Vec::with_capacity(xs.len() * taus.len());
    for x in xs {
        let unit = transforms.x_forward(x)?;
        let qs = fit.predict_quantiles(&unit, taus, estimate)?;
        for (tau, q) in taus.iter().zip(qs) {
            rows.push(CurveRow {
                x: x.clone(),
                tau: *tau,
                q: transforms.y.inverse(q)?,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datakit::Transform;

    fn identity_fit(method: Method, p: usize) -> FitResult {
        let spec = ModelSpec::quadratic(method, 1, p).unwrap();
        let t = CoefficientTensor::identity(spec);
        FitResult {
            spec,
            mle: t.clone(),
            loglik: 0.0,
            aic: aic(0.0, &spec),
            chain: ChainOutput {
                samples: vec![t],
                ..ChainOutput::default()
            },
        }
    }

    #[test]
    fn aic_examples() {
        let spec = ModelSpec::new(Method::Npsqr, 1, 2, 2, 3, 3).unwrap();
        assert_eq!(aic(0.0, &spec), 30.0);
        let bigger = ModelSpec::new(Method::Npsqr, 1, 2, 2, 4, 4).unwrap();
        assert!(aic(-5.0, &bigger) > aic(-5.0, &spec));
        let dk = (bigger.free_parameters() - spec.free_parameters()) as f64;
        assert_eq!(aic(-5.0, &bigger) - aic(-5.0, &spec), 2.0 * dk);
    }

    #[test]
    fn identity_predicts_tau() {
        for p in [3, 6] {
            let fit = identity_fit(Method::Npsqr, p);
            for i in 0..=20 {
                let tau = i as f64 / 20.0;
                let q = fit.predict_quantile(tau, &[0.37], PointEstimate::PosteriorMean).unwrap();
                assert!((q - tau).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cdf_grid_inversion_error_bound() {
        let fit = identity_fit(Method::Npdfsqr, 5);
        for i in 0..=100 {
            let tau = i as f64 / 100.0;
            let q = fit.predict_quantile(tau, &[0.8], PointEstimate::Mle).unwrap();
            assert!((q - tau).abs() <= 2e-3);
        }
    }

    #[test]
    fn out_of_range_levels_are_rejected() {
        let fit = identity_fit(Method::Npsqr, 3);
        assert!(fit.predict_quantile(1.2, &[0.5], PointEstimate::Mle).is_err());
        assert!(fit.predict_quantile(0.5, &[-0.1], PointEstimate::Mle).is_err());
    }

    #[test]
    fn perfect_predictions_have_zero_pmse() {
        let fit = identity_fit(Method::Npsqr, 3);
        let tr = Transforms {
            x: vec![Transform::Linear { a: 0.0, b: 1.0 }],
            y: Transform::Linear { a: 0.0, b: 1.0 },
        };
        let test = RawData::new(1, vec![0.1, 0.5, 0.9], vec![0.5; 3]).unwrap();
        assert!(pmse(&fit, &test, &tr, PointEstimate::Mle).unwrap() < 1e-24);
        let shifted = Transforms {
            y: Transform::Linear { a: 0.25, b: 1.25 },
            ..tr.clone()
        };
        let e = pmse(&fit, &test, &shifted, PointEstimate::Mle).unwrap();
        assert!((e - 0.0625).abs() < 1e-12);
    }

    #[test]
    fn levels() {
        let l = quantile_levels(0.05, 0.95, 0.05).unwrap();
        assert_eq!(l.len(), 19);
        assert!((l[18] - 0.95).abs() < 1e-12);
        assert_eq!(default_levels().len(), 19);
    }

    #[test]
    fn point_estimate_parsing() {
        assert_eq!("mle".parse::<PointEstimate>().unwrap(), PointEstimate::Mle);
        assert!("median".parse::<PointEstimate>().is_err());
    }
}
