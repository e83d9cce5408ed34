//! Monotone maps between original measurement scales and the unit interval.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Increasing bijection between a measurement domain and `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    /// `(v - a) / (b - a)` on `[a, b]`.
    Linear { a: f64, b: f64 },
    /// `(ln v - lower) / (upper - lower)` on `[e^lower, e^upper]`.
    LogLinear { lower: f64, upper: f64 },
    /// Power-Pareto CDF `1 - (1 + (v/σ)^k)^(-a)` on `v ≥ 0`.
    PowerPareto { a: f64, sigma: f64, k: f64 },
}

const EDGE_TOL: f64 = 1e-12;

impl Transform {
    /// Linear map over `[lo, hi]` widened by `pad` of its width on each side.
    pub fn padded_linear(lo: f64, hi: f64, pad: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::Config("range bounds must be finite".into()));
        }
        let width = if hi > lo { hi - lo } else { lo.abs().max(1.0) };
        let t = Transform::Linear {
            a: lo - pad * width,
            b: hi + pad * width,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Transform::Linear { a, b } => a.is_finite() && b.is_finite() && a < b,
            Transform::LogLinear { lower, upper } => lower.is_finite() && upper.is_finite() && lower < upper,
            Transform::PowerPareto { a, sigma, k } => a > 0.0 && sigma > 0.0 && k > 0.0 && (a * sigma * k).is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid transform parameters {self:?}")))
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Transform::Linear { .. } => "linear transform input",
            Transform::LogLinear { .. } => "log-linear transform input",
            Transform::PowerPareto { .. } => "power-Pareto transform input",
        }
    }

    /// Maps `v` into `[0, 1]`; values outside the domain are errors.
    pub fn forward(&self, v: f64) -> Result<f64> {
        let u = self.forward_raw(v)?;
        if (-EDGE_TOL..=1.0 + EDGE_TOL).contains(&u) {
            Ok(u.clamp(0.0, 1.0))
        } else {
            Err(domain(self.name(), v, self.domain_str()))
        }
    }

    /// Like [`forward`](Self::forward) but clamps in-type values outside the range to the nearest end.
    pub fn forward_clamped(&self, v: f64) -> Result<f64> {
        Ok(self.forward_raw(v)?.clamp(0.0, 1.0))
    }

    fn forward_raw(&self, v: f64) -> Result<f64> {
        if !v.is_finite() {
            return Err(domain(self.name(), v, self.domain_str()));
        }
        match *self {
            Transform::Linear { a, b } => Ok((v - a) / (b - a)),
            Transform::LogLinear { lower, upper } => {
                if v > 0.0 {
                    Ok((v.ln() - lower) / (upper - lower))
                } else {
                    Err(domain(self.name(), v, self.domain_str()))
                }
            }
            Transform::PowerPareto { a, sigma, k } => {
                if v >= 0.0 {
                    // 1 - (1 + z)^(-a) evaluated without cancellation
                    Ok(-(-a * (v / sigma).powf(k).ln_1p()).exp_m1())
                } else {
                    Err(domain(self.name(), v, self.domain_str()))
                }
            }
        }
    }

    /// Maps `u ∈ [0, 1]` back to the original scale.
    pub fn inverse(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(domain("transform inverse input", u, "[0, 1]"));
        }
        match *self {
            Transform::Linear { a, b } => Ok(a + u * (b - a)),
            Transform::LogLinear { lower, upper } => Ok((lower + u * (upper - lower)).exp()),
            Transform::PowerPareto { a, sigma, k } => {
                if u == 1.0 {
                    return Err(domain("power-Pareto inverse input", u, "[0, 1)"));
                }
                // (1 - u)^(-1/a) - 1 evaluated without cancellation
                let z = (-(-u).ln_1p() / a).exp_m1();
                Ok(sigma * z.powf(1.0 / k))
            }
        }
    }

    fn domain_str(&self) -> &'static str {
        match self {
            Transform::Linear { .. } => "[a, b]",
            Transform::LogLinear { .. } => "[exp(lower), exp(upper)]",
            Transform::PowerPareto { .. } => "[0, inf)",
        }
    }
}

/// Per-coordinate transforms for the covariates and the response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transforms {
    pub x: Vec<Transform>,
    pub y: Transform,
}

impl Transforms {
    pub fn validate(&self) -> Result<()> {
        if self.x.is_empty() {
            return Err(Error::Config("at least one covariate transform is required".into()));
        }
        self.x.iter().chain(std::iter::once(&self.y)).try_for_each(Transform::validate)
    }

    pub fn d(&self) -> usize {
        self.x.len()
    }

    /// Covariate row on the unit scale, clamping values beyond the fitted range.
    pub fn x_forward(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.x.len() {
            return Err(Error::Shape {
                what: "covariate row",
                expected: self.x.len(),
                found: row.len(),
            });
        }
        row.iter().zip(&self.x).map(|(v, t)| t.forward_clamped(*v)).collect()
    }
}
