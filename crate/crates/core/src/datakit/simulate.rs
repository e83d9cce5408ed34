//! Generators for the two synthetic regression designs.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, SkewNormal};

use super::RawData;
use crate::error::{Error, Result};

/// Shape of the skew-normal noise in the first design.
pub const SKEW_SHAPE: f64 = 4.0;
/// Multiplier on the skew-normal noise in the first design.
pub const NOISE_SCALE: f64 = 3.0;

/// Parameterization of the skew-normal noise in the first design.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SkewNoise {
    /// Shape 4, location 0, scale 1.
    #[default]
    Standard,
    /// Shape 4 with location and scale chosen so the noise has mean 0 and sd 1.
    Centered,
}

impl SkewNoise {
    /// `(location, scale)` of the underlying skew-normal law.
    pub fn location_scale(self) -> (f64, f64) {
        match self {
            SkewNoise::Standard => (0.0, 1.0),
            SkewNoise::Centered => {
                let delta = SKEW_SHAPE / (1.0 + SKEW_SHAPE * SKEW_SHAPE).sqrt();
                let mean_unit = delta * (2.0 / PI).sqrt();
                let scale = 1.0 / (1.0 - mean_unit * mean_unit).sqrt();
                (-mean_unit * scale, scale)
            }
        }
    }

    pub fn distribution(self) -> SkewNormal<f64> {
        let (loc, scale) = self.location_scale();
        SkewNormal::new(loc, scale, SKEW_SHAPE).expect("valid skew-normal parameters")
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::Config("sample size must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// `y = x + sin(2x) + 3ε` with `x ~ U(0, 5)` and skew-normal `ε`.
pub fn simulate_study1(n: usize, seed: u64, noise: SkewNoise) -> Result<RawData> {
    check_n(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = noise.distribution();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = 5.0 * rng.random::<f64>();
        let e = eps.sample(&mut rng);
        x.push(xi);
        y.push(xi + (2.0 * xi).sin() + NOISE_SCALE * e);
    }
    RawData::new(1, x, y)
}

/// `y = -x³/10⁵ + (sin(πx/100) + 4) U ε` with `x ~ U(-100, 100)`, `U` a fair sign and `ε ~ Gamma(5, 1)`.
pub fn simulate_study2(n: usize, seed: u64) -> Result<RawData> {
    check_n(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = Gamma::new(5.0, 1.0).expect("valid gamma parameters");
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = -100.0 + 200.0 * rng.random::<f64>();
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let e = gamma.sample(&mut rng);
        x.push(xi);
        y.push(study2_median(xi) + ((PI * xi / 100.0).sin() + 4.0) * sign * e);
    }
    RawData::new(1, x, y)
}

/// Trend of the second design, which is also its conditional median.
pub fn study2_median(x: f64) -> f64 {
    -x.powi(3) / 100_000.0
}
