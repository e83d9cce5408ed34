//! Clamped equidistant B-spline bases on the unit interval.
//!
//! A basis of degree `m` with `p` interior segments has the knot vector
//!
//! ```text
//! 0 = t_0 = … = t_m < t_{m+1} < … < t_{m+p} = … = t_{p+2m} = 1,   t_{m+i} = i/p
//! ```
//!
//! and `p + m` basis functions. Because the boundary knots are repeated `m + 1`
//! times, a spline on this basis interpolates its first and last coefficient at
//! `u = 0` and `u = 1`, so a non-decreasing coefficient vector running from 0
//! to 1 yields a monotone map of `[0, 1]` onto itself.

use smallvec::SmallVec;

use crate::error::{check_unit, Error, Result};

/// Inline storage for the `m + 1` non-zero basis values at a point.
pub type LocalValues = SmallVec<[f64; 8]>;

/// Degeneracy threshold for the leading coefficient of the per-span quadratic.
const LINEAR_FALLBACK: f64 = 1e-14;

/// Absolute width at which bisection stops.
const BISECTION_TOL: f64 = 1e-12;

/// Slack allowed on the endpoint coefficients of a curve that is inverted.
const ENDPOINT_TOL: f64 = 1e-9;

/// Clamped equidistant B-spline basis on `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BasisConfig {
    degree: usize,
    segments: usize,
}

/// Non-zero basis values at a point: `values[r]` belongs to basis function `start + r`.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalBasis {
    pub start: usize,
    pub values: LocalValues,
}

impl BasisConfig {
    pub fn new(degree: usize, segments: usize) -> Result<Self> {
        if segments == 0 {
            return Err(Error::Config(
                "a basis needs at least one interior segment".into(),
            ));
        }
        Ok(Self { degree, segments })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    /// Number of basis functions, `p + m`.
    pub fn len(&self) -> usize {
        self.segments + self.degree
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Knot `t_i` of the clamped vector, `0 ≤ i ≤ p + 2m`.
    #[inline]
    pub fn knot(&self, i: usize) -> f64 {
        let m = self.degree;
        if i <= m {
            0.0
        } else if i >= m + self.segments {
            1.0
        } else {
            (i - m) as f64 / self.segments as f64
        }
    }

    pub fn knots(&self) -> Vec<f64> {
        (0..self.segments + 2 * self.degree + 1)
            .map(|i| self.knot(i))
            .collect()
    }

    /// Greville abscissae: with these as coefficients the spline is the identity.
    pub fn greville(&self) -> Vec<f64> {
        let m = self.degree;
        if m == 0 {
            // Piecewise constants cannot reproduce the identity; use span midpoints.
            return (0..self.len())
                .map(|j| 0.5 * (self.knot(j) + self.knot(j + 1)))
                .collect();
        }
        (0..self.len())
            .map(|j| (1..=m).map(|i| self.knot(j + i)).sum::<f64>() / m as f64)
            .collect()
    }

    /// Basis of degree `m - 1` on the same interior knots.
    pub fn derivative_basis(&self) -> Result<Self> {
        if self.degree == 0 {
            return Err(Error::Unsupported(
                "derivative of a degree-0 spline".into(),
            ));
        }
        Ok(Self {
            degree: self.degree - 1,
            segments: self.segments,
        })
    }

    /// Knot span `k` with `t_k ≤ u < t_{k+1}`, `m ≤ k ≤ m + p - 1`; `u = 1` maps to the last span.
    #[inline]
    pub fn span(&self, u: f64) -> usize {
        let m = self.degree;
        let p = self.segments;
        let guess = (u * p as f64).floor();
        let mut k = m + if guess <= 0.0 {
            0
        } else {
            (guess as usize).min(p - 1)
        };
        while k > m && u < self.knot(k) {
            k -= 1;
        }
        while k < m + p - 1 && u >= self.knot(k + 1) {
            k += 1;
        }
        k
    }

    /// Non-zero basis values at `u` by the triangular Cox–de Boor recursion.
    /// `u` must already lie in `[0, 1]`.
    #[inline]
    pub fn local(&self, u: f64) -> LocalBasis {
        let m = self.degree;
        let k = self.span(u);
        let mut n: LocalValues = SmallVec::from_elem(0.0, m + 1);
        let mut left: LocalValues = SmallVec::from_elem(0.0, m + 1);
        let mut right: LocalValues = SmallVec::from_elem(0.0, m + 1);
        n[0] = 1.0;
        for j in 1..=m {
            left[j] = u - self.knot(k + 1 - j);
            right[j] = self.knot(k + j) - u;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        LocalBasis {
            start: k - m,
            values: n,
        }
    }

    /// All `p + m` basis values at `u`.
    pub fn eval(&self, u: f64) -> Result<Vec<f64>> {
        check_unit("u", u)?;
        let local = self.local(u);
        let mut out = vec![0.0; self.len()];
        for (r, v) in local.values.iter().enumerate() {
            out[local.start + r] = *v;
        }
        Ok(out)
    }
}

/// `Σ c_j B_j(u)` without argument checks.
#[inline]
pub fn eval_coeffs(basis: &BasisConfig, coeffs: &[f64], u: f64) -> f64 {
    let local = basis.local(u);
    local
        .values
        .iter()
        .zip(&coeffs[local.start..])
        .map(|(b, c)| b * c)
        .sum()
}

/// Derivative coefficient `m (c_{j+1} - c_j) / (t_{j+m+1} - t_{j+1})`.
#[inline]
fn derivative_coeff(basis: &BasisConfig, coeffs: &[f64], j: usize) -> f64 {
    let m = basis.degree;
    let width = basis.knot(j + m + 1) - basis.knot(j + 1);
    m as f64 * (coeffs[j + 1] - coeffs[j]) / width
}

/// Value of the first derivative of the spline at `u`, without argument checks.
/// The basis must have degree ≥ 1.
#[inline]
pub fn derivative_at(basis: &BasisConfig, coeffs: &[f64], u: f64) -> f64 {
    let lower = BasisConfig {
        degree: basis.degree - 1,
        segments: basis.segments,
    };
    let local = lower.local(u);
    local
        .values
        .iter()
        .enumerate()
        .map(|(r, b)| b * derivative_coeff(basis, coeffs, local.start + r))
        .sum()
}

/// Checks that `coeffs` are non-decreasing and run from 0 to 1.
pub fn check_monotone_unit(coeffs: &[f64]) -> Result<()> {
    if let Some(j) = coeffs.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::Contract(format!(
            "coefficients decrease between positions {j} and {}",
            j + 1
        )));
    }
    let first = coeffs.first().copied().unwrap_or(f64::NAN);
    let last = coeffs.last().copied().unwrap_or(f64::NAN);
    if (first).abs() > ENDPOINT_TOL || (last - 1.0).abs() > ENDPOINT_TOL {
        return Err(Error::Contract(format!(
            "monotone curve must run from 0 to 1, found {first} to {last}"
        )));
    }
    Ok(())
}

/// Leftmost `u` with `Σ c_j B_j(u) = y` for non-decreasing coefficients from 0 to 1.
///
/// Degree 2 is solved per span in closed form; other degrees bisect.
pub fn invert_unchecked(basis: &BasisConfig, coeffs: &[f64], y: f64) -> f64 {
    let last = coeffs[coeffs.len() - 1];
    if y <= coeffs[0] {
        return 0.0;
    }
    if y >= last {
        return 1.0;
    }
    if basis.degree == 2 {
        invert_quadratic(basis, coeffs, y)
    } else {
        invert_bisect(basis, coeffs, y)
    }
}

fn invert_quadratic(basis: &BasisConfig, c: &[f64], y: f64) -> f64 {
    let m = 2;
    let last_span = m + basis.segments - 1;
    let mut k = m;
    let mut left_value = c[0];
    loop {
        // Bezier form of span k: P0 = value at t_k, P1 = c_{k-1}, P2 = value at t_{k+1}.
        let right_value = if k == last_span {
            c[k]
        } else {
            let (t0, t1, t2) = (basis.knot(k), basis.knot(k + 1), basis.knot(k + 2));
            ((t2 - t1) * c[k - 1] + (t1 - t0) * c[k]) / (t2 - t0)
        };
        if y <= right_value || k == last_span {
            let (lo, hi) = (basis.knot(k), basis.knot(k + 1));
            if y == right_value {
                return hi;
            }
            if y == left_value {
                return lo;
            }
            let p0 = left_value;
            let p1 = c[k - 1];
            let p2 = right_value;
            let a = p0 - 2.0 * p1 + p2;
            let b = 2.0 * (p1 - p0);
            let rhs = y - p0;
            let s = if a.abs() < LINEAR_FALLBACK {
                if b > 0.0 {
                    rhs / b
                } else {
                    0.0
                }
            } else {
                let disc = (b * b + 4.0 * a * rhs).max(0.0);
                let denom = b + disc.sqrt();
                if denom > 0.0 {
                    2.0 * rhs / denom
                } else {
                    0.0
                }
            };
            return lo + s.clamp(0.0, 1.0) * (hi - lo);
        }
        left_value = right_value;
        k += 1;
    }
}

fn invert_bisect(basis: &BasisConfig, coeffs: &[f64], y: f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if eval_coeffs(basis, coeffs, mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// A spline curve `u ↦ Σ c_j B_j(u)` on a clamped basis.
#[derive(Clone, Debug, PartialEq)]
pub struct SplineCurve {
    basis: BasisConfig,
    coefficients: Vec<f64>,
}

impl SplineCurve {
    pub fn new(basis: BasisConfig, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != basis.len() {
            return Err(Error::Shape {
                what: "spline coefficients",
                expected: basis.len(),
                found: coefficients.len(),
            });
        }
        Ok(Self {
            basis,
            coefficients,
        })
    }

    /// The curve with Greville coefficients, i.e. the identity map.
    pub fn identity(basis: BasisConfig) -> Self {
        Self {
            coefficients: basis.greville(),
            basis,
        }
    }

    pub fn basis(&self) -> &BasisConfig {
        &self.basis
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn eval(&self, u: f64) -> Result<f64> {
        check_unit("u", u)?;
        Ok(eval_coeffs(&self.basis, &self.coefficients, u))
    }

    /// The degree `m - 1` spline equal to the derivative of this one.
    pub fn derivative(&self) -> Result<SplineCurve> {
        let basis = self.basis.derivative_basis()?;
        let coefficients = (0..self.coefficients.len() - 1)
            .map(|j| derivative_coeff(&self.basis, &self.coefficients, j))
            .collect();
        Ok(SplineCurve {
            basis,
            coefficients,
        })
    }

    /// Solves `curve(u) = y` for a monotone curve from 0 to 1.
    pub fn invert(&self, y: f64) -> Result<f64> {
        check_unit("y", y)?;
        check_monotone_unit(&self.coefficients)?;
        Ok(invert_unchecked(&self.basis, &self.coefficients, y))
    }
}
