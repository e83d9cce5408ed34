//! The parameter state: one simplex of increments per outer multi-index.
//!
//! For a fixed multi-index `k = (k_1, …, k_d)` the monotone coefficient vector
//! `0 = α_1 ≤ α_2 ≤ … ≤ α_{p1+m1} = 1` is stored through its increments
//! `γ_j = α_{j+1} - α_j`, which live on the unit simplex. The coefficient
//! functions at a covariate `x` are the tensor-product mixture
//!
//! ```text
//! θ_j(x) = Σ_k α_{j,k} B_{k_1}(x_1) ⋯ B_{k_d}(x_d)
//! ```
//!
//! which is again monotone from 0 to 1, so curves built from it never cross.
//!
//! Blocks are stored in lexicographic order of `k` with `k_1` most
//! significant. The sampler sweeps and draws random numbers in this order.

use std::fmt;
use std::str::FromStr;

use crate::bspline::{BasisConfig, LocalBasis};
use crate::error::{check_unit, Error, Result};

/// Tolerance on the sum of a simplex block.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Which conditional function the tensor-product spline represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    /// Conditional quantile function `Q(τ | x)`.
    Npsqr,
    /// Conditional distribution function `F(y | x)`.
    Npdfsqr,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Npsqr => "npsqr",
            Method::Npdfsqr => "npdfsqr",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "npsqr" => Ok(Method::Npsqr),
            "npdfsqr" => Ok(Method::Npdfsqr),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// Method, predictor dimension and the two basis configurations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ModelSpec {
    pub method: Method,
    pub d: usize,
    pub m1: usize,
    pub m2: usize,
    pub p1: usize,
    pub p2: usize,
}

impl ModelSpec {
    pub fn new(method: Method, d: usize, m1: usize, m2: usize, p1: usize, p2: usize) -> Result<Self> {
        if d == 0 || m1 == 0 || m2 == 0 || p1 == 0 || p2 == 0 {
            return Err(Error::Config(format!(
                "model needs d, m1, m2, p1, p2 ≥ 1 (got d={d} m1={m1} m2={m2} p1={p1} p2={p2})"
            )));
        }
        Ok(Self {
            method,
            d,
            m1,
            m2,
            p1,
            p2,
        })
    }

    /// Quadratic bases in both directions with `p1 = p2 = p`.
    pub fn quadratic(method: Method, d: usize, p: usize) -> Result<Self> {
        Self::new(method, d, 2, 2, p, p)
    }

    /// Basis in the quantile level (NPSQR) or the response (NPDFSQR).
    pub fn inner_basis(&self) -> BasisConfig {
        BasisConfig::new(self.m1, self.p1).expect("validated spec")
    }

    /// Basis shared by every covariate coordinate.
    pub fn outer_basis(&self) -> BasisConfig {
        BasisConfig::new(self.m2, self.p2).expect("validated spec")
    }

    pub fn num_blocks(&self) -> usize {
        (self.p2 + self.m2).pow(self.d as u32)
    }

    /// Increments per block, `p1 + m1 - 1`.
    pub fn block_len(&self) -> usize {
        self.p1 + self.m1 - 1
    }

    /// Free parameters: each block loses one degree of freedom to its sum constraint.
    pub fn free_parameters(&self) -> usize {
        (self.block_len() - 1) * self.num_blocks()
    }
}

/// Non-negative increments summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexBlock(Vec<f64>);

impl SimplexBlock {
    pub fn new(increments: Vec<f64>) -> Result<Self> {
        check_simplex(&increments)?;
        Ok(Self(increments))
    }

    /// Scales non-negative weights onto the simplex.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Contract("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Contract("weights have zero total mass".into()));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self(weights))
    }

    pub fn uniform(len: usize) -> Self {
        Self(vec![1.0 / len as f64; len])
    }

    pub(crate) fn from_raw(increments: Vec<f64>) -> Self {
        Self(increments)
    }

    pub fn increments(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Cumulative sums prefixed with zero: the monotone coefficient vector.
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.0.len() + 1);
        let mut acc = 0.0;
        out.push(acc);
        for g in &self.0 {
            acc += g;
            out.push(acc);
        }
        out
    }
}

fn check_simplex(increments: &[f64]) -> Result<()> {
    if increments.is_empty() {
        return Err(Error::Contract("empty simplex block".into()));
    }
    if let Some(g) = increments.iter().find(|g| !(**g >= 0.0) || !g.is_finite()) {
        return Err(Error::Contract(format!("negative or non-finite increment {g}")));
    }
    let total: f64 = increments.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::Contract(format!("increments sum to {total}, not 1")));
    }
    Ok(())
}

/// Cumulative reconstruction of raw increments, validating them first.
pub fn reconstruct_block(increments: &[f64]) -> Result<Vec<f64>> {
    check_simplex(increments)?;
    Ok(SimplexBlock(increments.to_vec()).reconstruct())
}

/// Outer tensor-product weights at one covariate point: `(block index, Π B_{k_i}(x_i))`.
pub type OuterWeights = Vec<(usize, f64)>;

/// Local-support weights of the `(m2 + 1)^d` blocks that contribute at `x`.
pub fn outer_weights(spec: &ModelSpec, x: &[f64]) -> Result<OuterWeights> {
    if x.len() != spec.d {
        return Err(Error::Shape {
            what: "covariate vector",
            expected: spec.d,
            found: x.len(),
        });
    }
    for v in x {
        check_unit("x", *v)?;
    }
    let basis = spec.outer_basis();
    let per_coord: Vec<LocalBasis> = x.iter().map(|v| basis.local(*v)).collect();
    let nb = basis.len();
    let width = spec.m2 + 1;
    let mut out = Vec::with_capacity(width.pow(spec.d as u32));
    let mut offsets = vec![0usize; spec.d];
    loop {
        let mut index = 0;
        let mut weight = 1.0;
        for (c, local) in per_coord.iter().enumerate() {
            index = index * nb + local.start + offsets[c];
            weight *= local.values[offsets[c]];
        }
        if weight != 0.0 {
            out.push((index, weight));
        }
        // odometer, last coordinate fastest
        let mut c = spec.d;
        loop {
            if c == 0 {
                return Ok(out);
            }
            c -= 1;
            offsets[c] += 1;
            if offsets[c] < width {
                break;
            }
            offsets[c] = 0;
        }
    }
}

/// Full parameter tensor for either method.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientTensor {
    spec: ModelSpec,
    blocks: Vec<SimplexBlock>,
}

impl CoefficientTensor {
    pub fn from_blocks(spec: ModelSpec, blocks: Vec<SimplexBlock>) -> Result<Self> {
        if blocks.len() != spec.num_blocks() {
            return Err(Error::Shape {
                what: "number of simplex blocks",
                expected: spec.num_blocks(),
                found: blocks.len(),
            });
        }
        if let Some(b) = blocks.iter().find(|b| b.len() != spec.block_len()) {
            return Err(Error::Shape {
                what: "simplex block length",
                expected: spec.block_len(),
                found: b.len(),
            });
        }
        Ok(Self { spec, blocks })
    }

    /// Every block at the simplex centroid.
    pub fn uniform(spec: ModelSpec) -> Self {
        Self {
            blocks: vec![SimplexBlock::uniform(spec.block_len()); spec.num_blocks()],
            spec,
        }
    }

    /// Every block holds the Greville increments, so each conditional curve is the identity.
    pub fn identity(spec: ModelSpec) -> Self {
        let g = spec.inner_basis().greville();
        let inc: Vec<f64> = g.windows(2).map(|w| w[1] - w[0]).collect();
        let block = SimplexBlock::normalized(inc).expect("greville increments are positive");
        Self {
            blocks: vec![block; spec.num_blocks()],
            spec,
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn method(&self) -> Method {
        self.spec.method
    }

    pub fn blocks(&self) -> &[SimplexBlock] {
        &self.blocks
    }

    pub fn block(&self, index: usize) -> &SimplexBlock {
        &self.blocks[index]
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Replaces one block and returns the old one.
    pub fn replace_block(&mut self, index: usize, block: SimplexBlock) -> SimplexBlock {
        debug_assert_eq!(block.len(), self.spec.block_len());
        std::mem::replace(&mut self.blocks[index], block)
    }

    /// Lexicographic position of a zero-based multi-index.
    pub fn block_index(&self, multi: &[usize]) -> usize {
        let nb = self.spec.p2 + self.spec.m2;
        multi.iter().fold(0, |acc, k| acc * nb + k)
    }

    /// Zero-based multi-index of a block position.
    pub fn multi_index(&self, mut index: usize) -> Vec<usize> {
        let nb = self.spec.p2 + self.spec.m2;
        let mut out = vec![0; self.spec.d];
        for slot in out.iter_mut().rev() {
            *slot = index % nb;
            index /= nb;
        }
        out
    }

    /// Mixture `Σ w_k reconstruct(block_k)` written into `out` (length `p1 + m1`).
    #[inline]
    pub fn mix_into(&self, weights: &[(usize, f64)], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for &(k, w) in weights {
            let mut acc = 0.0;
            for (slot, g) in out[1..].iter_mut().zip(self.blocks[k].increments()) {
                acc += g;
                *slot += w * acc;
            }
        }
    }

    /// Coefficient functions `θ(x)` (or `φ(x)`) at a covariate point.
    pub fn coeff_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        let weights = outer_weights(&self.spec, x)?;
        let mut out = vec![0.0; self.spec.p1 + self.spec.m1];
        self.mix_into(&weights, &mut out);
        Ok(out)
    }

    /// All increments in block order.
    pub fn flatten(&self) -> Vec<f64> {
        self.blocks
            .iter()
            .flat_map(|b| b.increments().iter().copied())
            .collect()
    }

    pub fn unflatten(spec: ModelSpec, values: &[f64]) -> Result<Self> {
        let expected = spec.num_blocks() * spec.block_len();
        if values.len() != expected {
            return Err(Error::Shape {
                what: "flattened tensor",
                expected,
                found: values.len(),
            });
        }
        let blocks = values
            .chunks(spec.block_len())
            .map(|c| SimplexBlock::new(c.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Self::from_blocks(spec, blocks)
    }

    /// Plain-text form: a header `method,d,m1,m2,p1,p2` then one line of increments per block.
    pub fn to_text(&self) -> String {
        let s = &self.spec;
        let mut out = format!("{},{},{},{},{},{}\n", s.method, s.d, s.m1, s.m2, s.p1, s.p2);
        for b in &self.blocks {
            let line: Vec<String> = b.increments().iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let tensor = Self::read_lines(&mut lines)?;
        if let Some((n, _)) = lines.next() {
            return Err(Error::Parse {
                line: n + 1,
                message: "trailing content after tensor".into(),
            });
        }
        Ok(tensor)
    }

    /// Reads one tensor from numbered lines, consuming exactly header + block lines.
    pub(crate) fn read_lines<'a, I>(lines: &mut I) -> Result<Self>
    where
        I: Iterator<Item = (usize, &'a str)>,
    {
        let (n, header) = lines.next().ok_or(Error::Parse {
            line: 0,
            message: "missing tensor header".into(),
        })?;
        let spec = parse_spec_header(header).map_err(|message| Error::Parse {
            line: n + 1,
            message,
        })?;
        let mut blocks = Vec::with_capacity(spec.num_blocks());
        for _ in 0..spec.num_blocks() {
            let (n, line) = lines.next().ok_or(Error::Parse {
                line: n + 1,
                message: "tensor ended before all blocks were read".into(),
            })?;
            let values = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    line: n + 1,
                    message: e.to_string(),
                })?;
            let block = SimplexBlock::new(values).map_err(|e| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
            blocks.push(block);
        }
        Self::from_blocks(spec, blocks)
    }
}

fn parse_spec_header(line: &str) -> std::result::Result<ModelSpec, String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 6 {
        return Err(format!("expected `method,d,m1,m2,p1,p2`, found `{line}`"));
    }
    let method: Method = fields[0].parse().map_err(|e: Error| e.to_string())?;
    let nums = fields[1..]
        .iter()
        .map(|f| f.parse::<usize>().map_err(|e| format!("`{f}`: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    ModelSpec::new(method, nums[0], nums[1], nums[2], nums[3], nums[4]).map_err(|e| e.to_string())
}
