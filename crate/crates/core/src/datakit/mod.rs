//! Data on the original measurement scale: transforms, synthetic designs,
//! quantile-grid coarsening and file formats.

pub mod coarsen;
pub mod io;
pub mod simulate;
pub mod transform;

pub use coarsen::coarsen_to_grid;
pub use simulate::{simulate_study1, simulate_study2, SkewNoise};
pub use transform::{Transform, Transforms};

use crate::error::{Error, Result};
use crate::likelihood::{Dataset, GridDataset, Observations, WeightedGridDataset, WeightedGridRow};

/// Fraction of the observed range added on each side when fitting linear transforms.
pub const RANGE_PADDING: f64 = 0.01;

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(v) => Err(Error::Config(format!("non-finite value {v} in data"))),
        None => Ok(()),
    }
}

fn check_shape(d: usize, x: &[f64], n: usize) -> Result<()> {
    if d == 0 || n == 0 {
        return Err(Error::Config("data needs at least one covariate and one row".into()));
    }
    if x.len() != n * d {
        return Err(Error::Shape {
            what: "covariate matrix",
            expected: n * d,
            found: x.len(),
        });
    }
    check_finite(x)
}

fn column_transforms(d: usize, n: usize, x: impl Fn(usize) -> Vec<f64>) -> Result<Vec<Transform>> {
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for i in 0..n {
        for (j, v) in x(i).into_iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    (0..d)
        .map(|j| Transform::padded_linear(lo[j], hi[j], RANGE_PADDING))
        .collect()
}

fn forward_row(tr: &Transforms, row: &[f64]) -> Result<Vec<f64>> {
    row.iter().zip(&tr.x).map(|(v, t)| t.forward(*v)).collect()
}

fn check_dims(tr: &Transforms, d: usize) -> Result<()> {
    tr.validate()?;
    if tr.d() != d {
        return Err(Error::Shape {
            what: "covariate transforms",
            expected: d,
            found: tr.d(),
        });
    }
    Ok(())
}

/// Complete observations on the original scale.
#[derive(Clone, Debug, PartialEq)]
pub struct RawData {
    d: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl RawData {
    pub fn new(d: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        check_shape(d, &x, y.len())?;
        check_finite(&y)?;
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

    pub fn xs(&self) -> &[f64] {
        &self.x
    }

    pub fn ys(&self) -> &[f64] {
        &self.y
    }

    /// Linear transforms over the observed ranges, padded by [`RANGE_PADDING`].
    pub fn fit_transforms(&self) -> Result<Transforms> {
        let (lo, hi) = self
            .y
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        Ok(Transforms {
            x: column_transforms(self.d, self.len(), |i| self.x(i).to_vec())?,
            y: Transform::padded_linear(lo, hi, RANGE_PADDING)?,
        })
    }

    pub fn to_unit(&self, tr: &Transforms) -> Result<Dataset> {
        check_dims(tr, self.d)?;
        let mut x = Vec::with_capacity(self.x.len());
        for i in 0..self.len() {
            x.extend(forward_row(tr, self.x(i))?);
        }
        let y = self.y.iter().map(|v| tr.y.forward(*v)).collect::<Result<_>>()?;
        Dataset::new(self.d, x, y)
    }
}

/// Bin memberships with shared cut values on the original scale.
#[derive(Clone, Debug, PartialEq)]
pub struct RawGrid {
    d: usize,
    x: Vec<f64>,
    bins: Vec<usize>,
    rho: Vec<f64>,
    cuts: Vec<f64>,
    y_min: f64,
    y_max: f64,
}

impl RawGrid {
    /// `cuts` are the `c - 1` interior cut values; `y_min`/`y_max` bound the response.
    pub fn new(
        d: usize,
        x: Vec<f64>,
        bins: Vec<usize>,
        rho: Vec<f64>,
        cuts: Vec<f64>,
        y_min: f64,
        y_max: f64,
    ) -> Result<Self> {
        check_shape(d, &x, bins.len())?;
        check_finite(&cuts)?;
        if !(y_min < y_max) {
            return Err(Error::Config(format!("response bounds {y_min} and {y_max} are not increasing")));
        }
        if cuts.iter().any(|c| *c < y_min || *c > y_max) {
            return Err(Error::Config("cut values must lie within the response bounds".into()));
        }
        // shape checks on rho, cuts and bins are shared with the unit-scale type
        let unit: Vec<f64> = cuts.iter().map(|c| (c - y_min) / (y_max - y_min)).collect();
        GridDataset::new(1, vec![0.0; bins.len()], bins.clone(), rho.clone(), unit)?;
        Ok(Self {
            d,
            x,
            bins,
            rho,
            cuts,
            y_min,
            y_max,
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

    pub fn bins(&self) -> &[usize] {
        &self.bins
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn y_bounds(&self) -> (f64, f64) {
        (self.y_min, self.y_max)
    }

    pub fn fit_transforms(&self) -> Result<Transforms> {
        Ok(Transforms {
            x: column_transforms(self.d, self.len(), |i| self.x(i).to_vec())?,
            y: Transform::padded_linear(self.y_min, self.y_max, RANGE_PADDING)?,
        })
    }

    pub fn to_unit(&self, tr: &Transforms) -> Result<GridDataset> {
        check_dims(tr, self.d)?;
        let mut x = Vec::with_capacity(self.x.len());
        for i in 0..self.len() {
            x.extend(forward_row(tr, self.x(i))?);
        }
        let cuts = self.cuts.iter().map(|c| tr.y.forward(*c)).collect::<Result<_>>()?;
        GridDataset::new(self.d, x, self.bins.clone(), self.rho.clone(), cuts)
    }
}

/// Population-weighted binned rows on the original scale.
#[derive(Clone, Debug, PartialEq)]
pub struct RawWeightedGrid {
    d: usize,
    rho: Vec<f64>,
    rows: Vec<WeightedGridRow>,
}

impl RawWeightedGrid {
    pub fn new(d: usize, rho: Vec<f64>, rows: Vec<WeightedGridRow>) -> Result<Self> {
        for r in &rows {
            check_finite(&r.x)?;
            check_finite(&r.cuts)?;
        }
        let probe = rows
            .iter()
            .map(|r| WeightedGridRow {
                x: vec![0.0; r.x.len()],
                weight: r.weight,
                cuts: (1..r.cuts.len() + 1).map(|l| l as f64 / (r.cuts.len() + 1) as f64).collect(),
            })
            .collect();
        WeightedGridDataset::new(d, rho.clone(), probe)?;
        for r in &rows {
            if r.cuts.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Config("cut values must be strictly increasing within a row".into()));
            }
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

    /// Covariates get padded linear maps; the response range spans all cut values.
    pub fn fit_transforms(&self) -> Result<Transforms> {
        let (lo, hi) = self
            .rows
            .iter()
            .flat_map(|r| r.cuts.iter())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        Ok(Transforms {
            x: column_transforms(self.d, self.len(), |i| self.rows[i].x.clone())?,
            y: Transform::padded_linear(lo, hi, RANGE_PADDING)?,
        })
    }

    pub fn to_unit(&self, tr: &Transforms) -> Result<WeightedGridDataset> {
        check_dims(tr, self.d)?;
        let rows = self
            .rows
            .iter()
            .map(|r| {
                Ok(WeightedGridRow {
                    x: forward_row(tr, &r.x)?,
                    weight: r.weight,
                    cuts: r.cuts.iter().map(|c| tr.y.forward(*c)).collect::<Result<_>>()?,
                })
            })
            .collect::<Result<_>>()?;
        WeightedGridDataset::new(self.d, self.rho.clone(), rows)
    }
}

/// Any original-scale data layout.
#[derive(Clone, Debug, PartialEq)]
pub enum RawObservations {
    Complete(RawData),
    Grid(RawGrid),
    WeightedGrid(RawWeightedGrid),
}

impl RawObservations {
    pub fn d(&self) -> usize {
        match self {
            RawObservations::Complete(r) => r.d(),
            RawObservations::Grid(g) => g.d(),
            RawObservations::WeightedGrid(w) => w.d(),
        }
    }

    pub fn fit_transforms(&self) -> Result<Transforms> {
        match self {
            RawObservations::Complete(r) => r.fit_transforms(),
            RawObservations::Grid(g) => g.fit_transforms(),
            RawObservations::WeightedGrid(w) => w.fit_transforms(),
        }
    }

    pub fn to_unit(&self, tr: &Transforms) -> Result<Observations> {
        Ok(match self {
            RawObservations::Complete(r) => Observations::Complete(r.to_unit(tr)?),
            RawObservations::Grid(g) => Observations::Grid(g.to_unit(tr)?),
            RawObservations::WeightedGrid(w) => Observations::WeightedGrid(w.to_unit(tr)?),
        })
    }
}
