//! Log-likelihoods for complete data, quantile-grid data and
//! population-weighted grid data, under both model types.
//!
//! Zero-mass configurations evaluate to `f64::NEG_INFINITY` instead of an
//! error so the sampler treats them as zero-probability proposals. Totals are
//! always summed in observation order, which keeps chains bit-reproducible.

use smallvec::SmallVec;

use crate::bspline::{derivative_at, eval_coeffs, invert_unchecked, BasisConfig};
use crate::coeff::{outer_weights, CoefficientTensor, Method, ModelSpec, OuterWeights};
use crate::error::{check_unit, Error, Result};

/// Densities at or below this are treated as zero.
pub const DENSITY_FLOOR: f64 = 1e-300;

type Scratch = SmallVec<[f64; 16]>;

/// Complete observations on the unit scale.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    d: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Dataset {
    /// `x` is row-major `n × d`.
    pub fn new(d: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        check_rows(d, &x, y.len())?;
        for v in x.iter().chain(&y) {
            check_unit("observation", *v)?;
        }
        Ok(Self { d, x, y })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn y(&self, i: usize) -> f64 {
        self.y[i]
    }

    /// Rows `i` for which `keep(i)` holds.
    pub fn subset(&self, keep: impl Fn(usize) -> bool) -> Result<Self> {
        let idx: Vec<usize> = (0..self.len()).filter(|i| keep(*i)).collect();
        let x = idx.iter().flat_map(|i| self.x(*i).iter().copied()).collect();
        let y = idx.iter().map(|i| self.y[*i]).collect();
        Self::new(self.d, x, y)
    }
}

fn check_rows(d: usize, x: &[f64], n: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::Config("predictor dimension must be ≥ 1".into()));
    }
    if n == 0 {
        return Err(Error::Config("dataset has no observations".into()));
    }
    if x.len() != n * d {
        return Err(Error::Shape {
            what: "covariate matrix",
            expected: n * d,
            found: x.len(),
        });
    }
    Ok(())
}

fn check_rho(rho: &[f64]) -> Result<()> {
    if rho.len() < 2 || rho[0] != 0.0 || rho[rho.len() - 1] != 1.0 {
        return Err(Error::Config(
            "quantile levels must start at 0 and end at 1".into(),
        ));
    }
    if rho.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("quantile levels must be strictly increasing".into()));
    }
    Ok(())
}

fn check_cuts(cuts: &[f64], expected: usize) -> Result<()> {
    if cuts.len() != expected {
        return Err(Error::Shape {
            what: "quantile cut values",
            expected,
            found: cuts.len(),
        });
    }
    for c in cuts {
        check_unit("cut", *c)?;
    }
    if cuts.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("cut values must be strictly increasing".into()));
    }
    Ok(())
}

/// Bin memberships against shared quantile cuts, on the unit scale.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDataset {
    d: usize,
    x: Vec<f64>,
    bins: Vec<usize>,
    rho: Vec<f64>,
    cuts: Vec<f64>,
}

impl GridDataset {
    /// `bins` are one-based, `1 ≤ bin ≤ c` where `c = rho.len() - 1`; `cuts` holds the `c - 1` interior cut values.
    pub fn new(d: usize, x: Vec<f64>, bins: Vec<usize>, rho: Vec<f64>, cuts: Vec<f64>) -> Result<Self> {
        check_rows(d, &x, bins.len())?;
        for v in &x {
            check_unit("x", *v)?;
        }
        check_rho(&rho)?;
        let c = rho.len() - 1;
        check_cuts(&cuts, c - 1)?;
        if let Some(b) = bins.iter().find(|b| **b == 0 || **b > c) {
            return Err(Error::Config(format!("bin {b} outside 1..={c}")));
        }
        Ok(Self {
            d,
            x,
            bins,
            rho,
            cuts,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn num_bins(&self) -> usize {
        self.rho.len() - 1
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn bin(&self, i: usize) -> usize {
        self.bins[i]
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    /// Cut values bounding bin `l`; `None` stands for the lower (F = 0) or upper (F = 1) end.
    fn edges(&self, l: usize) -> (Option<f64>, Option<f64>) {
        let lo = (l > 1).then(|| self.cuts[l - 2]);
        let hi = (l < self.num_bins()).then(|| self.cuts[l - 1]);
        (lo, hi)
    }
}

/// One covariate value with its population and row-specific cut values.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedGridRow {
    pub x: Vec<f64>,
    pub weight: f64,
    pub cuts: Vec<f64>,
}

/// Binned population counts per covariate value with shared quantile levels.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedGridDataset {
    d: usize,
    rho: Vec<f64>,
    rows: Vec<WeightedGridRow>,
}

impl WeightedGridDataset {
    pub fn new(d: usize, rho: Vec<f64>, rows: Vec<WeightedGridRow>) -> Result<Self> {
        check_rho(&rho)?;
        if rows.is_empty() {
            return Err(Error::Config("weighted grid has no rows".into()));
        }
        for row in &rows {
            if row.x.len() != d {
                return Err(Error::Shape {
                    what: "covariate vector",
                    expected: d,
                    found: row.x.len(),
                });
            }
            for v in &row.x {
                check_unit("x", *v)?;
            }
            if !(row.weight > 0.0) || !row.weight.is_finite() {
                return Err(Error::Config(format!("row weight {} must be positive", row.weight)));
            }
            check_cuts(&row.cuts, rho.len() - 2)?;
        }
        Ok(Self { d, rho, rows })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn rows(&self) -> &[WeightedGridRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Same rows with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let rows = self
            .rows
            .iter()
            .map(|r| WeightedGridRow {
                weight: r.weight * factor,
                ..r.clone()
            })
            .collect();
        Self::new(self.d, self.rho.clone(), rows)
    }
}

/// Any of the supported observation layouts.
#[derive(Clone, Debug, PartialEq)]
pub enum Observations {
    Complete(Dataset),
    Grid(GridDataset),
    WeightedGrid(WeightedGridDataset),
}

impl Observations {
    pub fn d(&self) -> usize {
        match self {
            Observations::Complete(d) => d.d(),
            Observations::Grid(g) => g.d(),
            Observations::WeightedGrid(w) => w.d(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Observations::Complete(d) => d.len(),
            Observations::Grid(g) => g.len(),
            Observations::WeightedGrid(w) => w.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn x(&self, i: usize) -> &[f64] {
        match self {
            Observations::Complete(d) => d.x(i),
            Observations::Grid(g) => g.x(i),
            Observations::WeightedGrid(w) => &w.rows[i].x,
        }
    }
}

// ---------------------------------------------------------------------------
// per-observation kernels on a fixed coefficient vector

/// Conditional CDF at `q` given the coefficient vector of one covariate point.
#[inline]
pub fn cdf_from_coeffs(method: Method, inner: &BasisConfig, coeffs: &[f64], q: f64) -> f64 {
    match method {
        Method::Npsqr => invert_unchecked(inner, coeffs, q),
        Method::Npdfsqr => eval_coeffs(inner, coeffs, q),
    }
}

#[inline]
fn complete_term(method: Method, inner: &BasisConfig, coeffs: &[f64], y: f64) -> f64 {
    match method {
        Method::Npsqr => {
            let tau = invert_unchecked(inner, coeffs, y);
            let slope = derivative_at(inner, coeffs, tau);
            if slope > DENSITY_FLOOR {
                -slope.ln()
            } else {
                f64::NEG_INFINITY
            }
        }
        Method::Npdfsqr => {
            let density = derivative_at(inner, coeffs, y);
            if density > DENSITY_FLOOR {
                density.ln()
            } else {
                f64::NEG_INFINITY
            }
        }
    }
}

#[inline]
fn bin_mass(method: Method, inner: &BasisConfig, coeffs: &[f64], lo: Option<f64>, hi: Option<f64>) -> f64 {
    let f_lo = lo.map_or(0.0, |q| cdf_from_coeffs(method, inner, coeffs, q));
    let f_hi = hi.map_or(1.0, |q| cdf_from_coeffs(method, inner, coeffs, q));
    f_hi - f_lo
}

#[inline]
fn log_mass(mass: f64) -> f64 {
    if mass > 0.0 {
        mass.ln()
    } else {
        f64::NEG_INFINITY
    }
}

fn weighted_term(method: Method, inner: &BasisConfig, coeffs: &[f64], rho: &[f64], row: &WeightedGridRow) -> f64 {
    let mut prev = 0.0;
    let mut total = 0.0;
    for l in 1..rho.len() {
        let f = if l < rho.len() - 1 {
            cdf_from_coeffs(method, inner, coeffs, row.cuts[l - 1])
        } else {
            1.0
        };
        let lm = log_mass(f - prev);
        if lm == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        total += (rho[l] - rho[l - 1]) * row.weight * lm;
        prev = f;
    }
    total
}

/// Bin probabilities `F(cut_l | x) - F(cut_{l-1} | x)`, `l = 1..=c`, for one covariate point.
pub fn bin_probabilities(tensor: &CoefficientTensor, x: &[f64], cuts: &[f64]) -> Result<Vec<f64>> {
    for c in cuts {
        check_unit("cut", *c)?;
    }
    let coeffs = tensor.coeff_at(x)?;
    let inner = tensor.spec().inner_basis();
    let mut f: Vec<f64> = vec![0.0];
    f.extend(
        cuts.iter()
            .map(|q| cdf_from_coeffs(tensor.method(), &inner, &coeffs, *q)),
    );
    f.push(1.0);
    Ok(f.windows(2).map(|w| w[1] - w[0]).collect())
}

// ---------------------------------------------------------------------------
// the likelihood abstraction used by the sampler and the optimizer

/// A log-likelihood written as an ordered sum of terms, each depending on a known subset of blocks.
pub trait LogLikelihood {
    fn num_terms(&self) -> usize;

    fn term(&self, tensor: &CoefficientTensor, index: usize) -> f64;

    /// Indices of terms whose value can change when `block` changes.
    fn terms_for_block(&self, block: usize) -> &[usize];

    /// Sum of all terms in index order.
    fn total(&self, tensor: &CoefficientTensor) -> f64 {
        (0..self.num_terms()).map(|i| self.term(tensor, i)).sum()
    }
}

/// Likelihood of a data set under one model spec, with precomputed outer-basis weights.
#[derive(Clone, Debug)]
pub struct Likelihood {
    spec: ModelSpec,
    data: Observations,
    weights: Vec<OuterWeights>,
    support: Vec<Vec<usize>>,
}

impl Likelihood {
    pub fn new(spec: ModelSpec, data: Observations) -> Result<Self> {
        if data.d() != spec.d {
            return Err(Error::Shape {
                what: "predictor dimension",
                expected: spec.d,
                found: data.d(),
            });
        }
        let weights = (0..data.len())
            .map(|i| outer_weights(&spec, data.x(i)))
            .collect::<Result<Vec<_>>>()?;
        let mut support = vec![Vec::new(); spec.num_blocks()];
        for (i, w) in weights.iter().enumerate() {
            for (k, _) in w {
                support[*k].push(i);
            }
        }
        Ok(Self {
            spec,
            data,
            weights,
            support,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn data(&self) -> &Observations {
        &self.data
    }
}

impl LogLikelihood for Likelihood {
    fn num_terms(&self) -> usize {
        self.data.len()
    }

    #[inline]
    fn term(&self, tensor: &CoefficientTensor, i: usize) -> f64 {
        debug_assert_eq!(tensor.spec(), &self.spec);
        let inner = self.spec.inner_basis();
        let mut coeffs: Scratch = SmallVec::from_elem(0.0, inner.len());
        tensor.mix_into(&self.weights[i], &mut coeffs);
        let method = self.spec.method;
        match &self.data {
            Observations::Complete(d) => complete_term(method, &inner, &coeffs, d.y(i)),
            Observations::Grid(g) => {
                let (lo, hi) = g.edges(g.bin(i));
                log_mass(bin_mass(method, &inner, &coeffs, lo, hi))
            }
            Observations::WeightedGrid(w) => weighted_term(method, &inner, &coeffs, &w.rho, &w.rows[i]),
        }
    }

    fn terms_for_block(&self, block: usize) -> &[usize] {
        &self.support[block]
    }
}

/// The flat likelihood; the posterior equals the uniform prior on every block.
#[derive(Clone, Copy, Debug, Default)]
pub struct ConstantLikelihood;

impl LogLikelihood for ConstantLikelihood {
    fn num_terms(&self) -> usize {
        0
    }

    fn term(&self, _: &CoefficientTensor, _: usize) -> f64 {
        0.0
    }

    fn terms_for_block(&self, _: usize) -> &[usize] {
        &[]
    }
}

/// Wraps an arbitrary black-box function of the whole tensor as a single term.
pub struct FnLikelihood<F> {
    f: F,
    all: [usize; 1],
}

impl<F> FnLikelihood<F>
where
    F: Fn(&CoefficientTensor) -> f64,
{
    pub fn new(f: F) -> Self {
        Self { f, all: [0] }
    }
}

impl<F> LogLikelihood for FnLikelihood<F>
where
    F: Fn(&CoefficientTensor) -> f64,
{
    fn num_terms(&self) -> usize {
        1
    }

    fn term(&self, tensor: &CoefficientTensor, _: usize) -> f64 {
        let v = (self.f)(tensor);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    fn terms_for_block(&self, _: usize) -> &[usize] {
        &self.all
    }
}

/// Term cache for single-block updates: only terms touching the changed block are recomputed.
pub struct CachedLogLik<'a, L: LogLikelihood + ?Sized> {
    model: &'a L,
    terms: Vec<f64>,
    trial_terms: Vec<f64>,
    total: f64,
    trial_total: f64,
}

impl<'a, L: LogLikelihood + ?Sized> CachedLogLik<'a, L> {
    pub fn new(model: &'a L, tensor: &CoefficientTensor) -> Self {
        let terms: Vec<f64> = (0..model.num_terms()).map(|i| model.term(tensor, i)).collect();
        let total = terms.iter().sum();
        Self {
            model,
            trial_terms: terms.clone(),
            terms,
            total,
            trial_total: total,
        }
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Log-likelihood of `tensor`, which differs from the cached state only in `block`.
    pub fn trial(&mut self, tensor: &CoefficientTensor, block: usize) -> f64 {
        self.trial_terms.copy_from_slice(&self.terms);
        for &i in self.model.terms_for_block(block) {
            let t = self.model.term(tensor, i);
            if t == f64::NEG_INFINITY {
                self.trial_total = f64::NEG_INFINITY;
                return self.trial_total;
            }
            self.trial_terms[i] = t;
        }
        self.trial_total = self.trial_terms.iter().sum();
        self.trial_total
    }

    /// Adopts the last trial as the cached state.
    pub fn commit(&mut self) {
        std::mem::swap(&mut self.terms, &mut self.trial_terms);
        self.total = self.trial_total;
    }

    /// Recomputes every term from scratch.
    pub fn refresh(&mut self, tensor: &CoefficientTensor) {
        for (i, t) in self.terms.iter_mut().enumerate() {
            *t = self.model.term(tensor, i);
        }
        self.total = self.terms.iter().sum();
    }
}

// ---------------------------------------------------------------------------
// direct entry points

fn require_method(tensor: &CoefficientTensor, method: Method) -> Result<()> {
    if tensor.method() != method {
        return Err(Error::Contract(format!(
            "tensor is a {} model, expected {method}",
            tensor.method()
        )));
    }
    Ok(())
}

fn evaluate(tensor: &CoefficientTensor, data: Observations) -> Result<f64> {
    Ok(Likelihood::new(*tensor.spec(), data)?.total(tensor))
}

/// `-Σ log Q'(τ_i | X_i)` where `Q(τ_i | X_i) = Y_i`.
pub fn loglik_npsqr_complete(tensor: &CoefficientTensor, data: &Dataset) -> Result<f64> {
    require_method(tensor, Method::Npsqr)?;
    evaluate(tensor, Observations::Complete(data.clone()))
}

/// `Σ log F'(Y_i | X_i)`.
pub fn loglik_npdfsqr_complete(tensor: &CoefficientTensor, data: &Dataset) -> Result<f64> {
    require_method(tensor, Method::Npdfsqr)?;
    evaluate(tensor, Observations::Complete(data.clone()))
}

/// Grid likelihood with `F(cut | x)` obtained by inverting the quantile curve.
pub fn loglik_npsqr_grid(tensor: &CoefficientTensor, data: &GridDataset) -> Result<f64> {
    require_method(tensor, Method::Npsqr)?;
    evaluate(tensor, Observations::Grid(data.clone()))
}

/// Grid likelihood with `F(cut | x)` evaluated directly.
pub fn loglik_npdfsqr_grid(tensor: &CoefficientTensor, data: &GridDataset) -> Result<f64> {
    require_method(tensor, Method::Npdfsqr)?;
    evaluate(tensor, Observations::Grid(data.clone()))
}

/// `Σ_i Σ_l (ρ_l - ρ_{l-1}) V_i log(F_{i,l} - F_{i,l-1})` for either method.
pub fn loglik_weighted_grid(tensor: &CoefficientTensor, data: &WeightedGridDataset) -> Result<f64> {
    evaluate(tensor, Observations::WeightedGrid(data.clone()))
}
