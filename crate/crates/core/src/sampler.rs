//! Block Metropolis–Hastings over simplex blocks.
//!
//! Each block is proposed by multiplying its increments with independent
//! `U(1/r, r)` draws and renormalizing. Random numbers are consumed in a fixed
//! order: iteration, then block in lexicographic order, then one uniform per
//! increment followed by a single acceptance uniform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coeff::{CoefficientTensor, SimplexBlock};
use crate::error::{Error, Result};
use crate::likelihood::{CachedLogLik, LogLikelihood};

/// `r` never drops below `1 + R_MIN_EXCESS`, where the proposal would degenerate.
pub const R_MIN_EXCESS: f64 = 1e-9;
/// Upper cap on `r`; doubling beyond this only produces rejected proposals.
pub const R_MAX: f64 = 1e6;

/// Width parameter of the multiplicative proposal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProposalParams {
    r: f64,
}

impl ProposalParams {
    pub fn new(r: f64) -> Result<Self> {
        if r > 1.0 && r.is_finite() {
            Ok(Self { r })
        } else {
            Err(Error::Config(format!("proposal width r = {r} must exceed 1")))
        }
    }

    pub fn r(&self) -> f64 {
        self.r
    }
}

/// Draws `γ*_j ∝ γ_j U_j` with `U_j ~ U(1/r, r)`. Zero increments stay zero.
pub fn propose_block<R: Rng + ?Sized>(block: &SimplexBlock, r: f64, rng: &mut R) -> SimplexBlock {
    let lo = 1.0 / r;
    let width = r - lo;
    let mut v: Vec<f64> = block
        .increments()
        .iter()
        .map(|g| g * (lo + width * rng.random::<f64>()))
        .collect();
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    SimplexBlock::from_raw(v)
}

/// Log transition density of [`propose_block`] from `from` to `to`, with respect
/// to Lebesgue measure on all but one of the positive coordinates.
///
/// With `n` positive increments in `from`, the density is
/// `(r/(r²-1))^n (Π γ_j)^{-1} (D1 - D2) / n` where `D1 = (min_j r γ_j/γ*_j)^n`
/// and `D2 = (max_j γ_j/(r γ*_j))^n`. Returns `-∞` for unreachable targets.
pub fn log_proposal_density(to: &SimplexBlock, from: &SimplexBlock, r: f64) -> f64 {
    debug_assert_eq!(to.len(), from.len());
    let mut n = 0usize;
    let mut sum_log_from = 0.0;
    let mut s_hi = f64::INFINITY;
    let mut s_lo = 0.0f64;
    for (&g_to, &g_from) in to.increments().iter().zip(from.increments()) {
        if g_from == 0.0 {
            if g_to != 0.0 {
                return f64::NEG_INFINITY;
            }
            continue;
        }
        if g_to == 0.0 {
            return f64::NEG_INFINITY;
        }
        n += 1;
        sum_log_from += g_from.ln();
        let ratio = g_from / g_to;
        s_hi = s_hi.min(r * ratio);
        s_lo = s_lo.max(ratio / r);
    }
    if n == 0 || !(s_lo < s_hi) {
        return f64::NEG_INFINITY;
    }
    let nf = n as f64;
    let (ln_hi, ln_lo) = (s_hi.ln(), s_lo.ln());
    // ln(D1 - D2) = n ln S_hi + ln(1 - (S_lo/S_hi)^n)
    let ln_diff = nf * ln_hi + (-(nf * (ln_lo - ln_hi)).exp_m1()).ln();
    nf * (r / (r * r - 1.0)).ln() - sum_log_from + ln_diff - nf.ln()
}

/// Transition density of [`propose_block`]; zero for unreachable targets.
pub fn proposal_density(to: &SimplexBlock, from: &SimplexBlock, r: f64) -> f64 {
    log_proposal_density(to, from, r).exp()
}

/// `log L(γ*) - log L(γ) + log f(γ | γ*) - log f(γ* | γ)` under a uniform prior.
pub fn log_acceptance_ratio(
    loglik_current: f64,
    loglik_proposed: f64,
    current: &SimplexBlock,
    proposed: &SimplexBlock,
    r: f64,
) -> f64 {
    if loglik_proposed == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let forward = log_proposal_density(proposed, current, r);
    if forward == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let backward = log_proposal_density(current, proposed, r);
    loglik_proposed - loglik_current + backward - forward
}

/// One MH update of `block`; `cache` must hold the log-likelihood of `state`.
/// Returns whether the proposal was accepted.
pub fn mh_block_update<L, R>(
    state: &mut CoefficientTensor,
    block: usize,
    r: f64,
    cache: &mut CachedLogLik<'_, L>,
    rng: &mut R,
) -> bool
where
    L: LogLikelihood + ?Sized,
    R: Rng + ?Sized,
{
    let proposed = propose_block(state.block(block), r, rng);
    let u: f64 = rng.random();
    let current = state.replace_block(block, proposed);
    let ll_new = cache.trial(state, block);
    let log_ratio = log_acceptance_ratio(cache.total(), ll_new, &current, state.block(block), r);
    if u.ln() < log_ratio {
        cache.commit();
        true
    } else {
        state.replace_block(block, current);
        false
    }
}

/// Halves `r - 1` below the band, doubles it above, otherwise leaves `r` alone.
pub fn adapt_r(r: f64, cumulative_acceptance: f64, acc_low: f64, acc_high: f64) -> f64 {
    let next = if cumulative_acceptance < acc_low {
        1.0 + (r - 1.0) / 2.0
    } else if cumulative_acceptance > acc_high {
        1.0 + 2.0 * (r - 1.0)
    } else {
        r
    };
    next.clamp(1.0 + R_MIN_EXCESS, R_MAX)
}

/// Chain length, adaptation band and seed.
#[derive(Clone, Debug, PartialEq)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub r_initial: f64,
    pub acc_low: f64,
    pub acc_high: f64,
    pub seed: u64,
    pub thin: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            burn_in: 1_000,
            r_initial: 1.05,
            acc_low: 0.15,
            acc_high: 0.45,
            seed: 0,
            thin: 1,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.thin == 0 {
            return Err(Error::Config("iterations and thin must be positive".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn-in {} must be below iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if !(0.0 < self.acc_low && self.acc_low < self.acc_high && self.acc_high < 1.0) {
            return Err(Error::Config(format!(
                "acceptance band ({}, {}) must satisfy 0 < low < high < 1",
                self.acc_low, self.acc_high
            )));
        }
        ProposalParams::new(self.r_initial)?;
        Ok(())
    }

    /// Number of retained draws.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    fn keeps(&self, iteration: usize) -> bool {
        iteration >= self.burn_in && (iteration + 1 - self.burn_in).is_multiple_of(self.thin)
    }
}

/// Retained draws and per-iteration traces.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChainOutput {
    pub samples: Vec<CoefficientTensor>,
    /// Cumulative acceptance ratio over all decisions up to each iteration.
    pub acceptance_trace: Vec<f64>,
    /// Proposal width used during each iteration.
    pub r_trace: Vec<f64>,
    /// Accepted block updates within each iteration.
    pub accepted_per_iteration: Vec<usize>,
    /// Log-likelihood at the end of each iteration.
    pub loglik_trace: Vec<f64>,
}

impl ChainOutput {
    fn append(&mut self, other: ChainOutput) {
        self.samples.extend(other.samples);
        self.acceptance_trace.extend(other.acceptance_trace);
        self.r_trace.extend(other.r_trace);
        self.accepted_per_iteration.extend(other.accepted_per_iteration);
        self.loglik_trace.extend(other.loglik_trace);
    }

    /// Acceptance rate within consecutive windows of `window` iterations starting at `from`.
    pub fn windowed_acceptance(&self, from: usize, window: usize, blocks: usize) -> Vec<f64> {
        self.accepted_per_iteration[from.min(self.accepted_per_iteration.len())..]
            .chunks_exact(window)
            .map(|w| w.iter().sum::<usize>() as f64 / (window * blocks) as f64)
            .collect()
    }
}

/// Resumable chain position.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub iteration: usize,
    pub r: f64,
    pub accepted: u64,
    pub decisions: u64,
    pub tensor: CoefficientTensor,
    rng: ChaCha8Rng,
}

impl PartialEq for ChainState {
    fn eq(&self, other: &Self) -> bool {
        self.iteration == other.iteration
            && self.r == other.r
            && self.accepted == other.accepted
            && self.decisions == other.decisions
            && self.tensor == other.tensor
            && self.rng.get_seed() == other.rng.get_seed()
            && self.rng.get_stream() == other.rng.get_stream()
            && self.rng.get_word_pos() == other.rng.get_word_pos()
    }
}

impl ChainState {
    pub fn new(init: CoefficientTensor, config: &McmcConfig) -> Self {
        Self {
            iteration: 0,
            r: config.r_initial,
            accepted: 0,
            decisions: 0,
            tensor: init,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        }
    }

    pub fn cumulative_acceptance(&self) -> f64 {
        if self.decisions == 0 {
            0.0
        } else {
            self.accepted as f64 / self.decisions as f64
        }
    }

    /// Plain-text checkpoint: config echo, position, RNG state and tensor.
    pub fn to_text(&self, config: &McmcConfig) -> String {
        let seed: String = self.rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
        let mut out = String::new();
        out.push_str(&format!(
            "config iterations={} burn_in={} r_initial={} acc_low={} acc_high={} seed={} thin={}\n",
            config.iterations,
            config.burn_in,
            config.r_initial,
            config.acc_low,
            config.acc_high,
            config.seed,
            config.thin
        ));
        out.push_str(&format!("iteration {}\n", self.iteration));
        out.push_str(&format!("r {}\n", self.r));
        out.push_str(&format!("accepted {}\n", self.accepted));
        out.push_str(&format!("decisions {}\n", self.decisions));
        out.push_str(&format!(
            "rng {} {} {}\n",
            seed,
            self.rng.get_stream(),
            self.rng.get_word_pos()
        ));
        out.push_str("tensor\n");
        out.push_str(&self.tensor.to_text());
        out
    }

    pub fn from_text(text: &str) -> Result<(McmcConfig, Self)> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut next = |key: &str| -> Result<(usize, String)> {
            let (n, line) = lines.next().ok_or(Error::Parse {
                line: 0,
                message: format!("checkpoint ended before `{key}`"),
            })?;
            let rest = line.strip_prefix(key).ok_or(Error::Parse {
                line: n + 1,
                message: format!("expected `{key}`"),
            })?;
            Ok((n + 1, rest.trim().to_string()))
        };
        let (n, cfg) = next("config")?;
        let config = parse_config(&cfg).map_err(|message| Error::Parse { line: n, message })?;
        let iteration = parse_field(next("iteration")?)?;
        let r = parse_field(next("r")?)?;
        let accepted = parse_field(next("accepted")?)?;
        let decisions = parse_field(next("decisions")?)?;
        let (n, rng_line) = next("rng")?;
        let rng = parse_rng(&rng_line).map_err(|message| Error::Parse { line: n, message })?;
        let (n, rest) = next("tensor")?;
        if !rest.is_empty() {
            return Err(Error::Parse {
                line: n,
                message: "unexpected content after `tensor`".into(),
            });
        }
        let tail: Vec<&str> = text.lines().skip(n).collect();
        let tensor = CoefficientTensor::from_text(&tail.join("\n"))?;
        config.validate()?;
        Ok((
            config,
            Self {
                iteration,
                r,
                accepted,
                decisions,
                tensor,
                rng,
            },
        ))
    }
}

fn parse_field<T: std::str::FromStr>((line, value): (usize, String)) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| Error::Parse {
        line,
        message: e.to_string(),
    })
}

fn parse_config(text: &str) -> std::result::Result<McmcConfig, String> {
    let mut config = McmcConfig::default();
    for pair in text.split_whitespace() {
        let (key, value) = pair.split_once('=').ok_or(format!("malformed entry `{pair}`"))?;
        let bad = |e: &dyn std::fmt::Display| format!("{key}: {e}");
        match key {
            "iterations" => config.iterations = value.parse().map_err(|e| bad(&e))?,
            "burn_in" => config.burn_in = value.parse().map_err(|e| bad(&e))?,
            "r_initial" => config.r_initial = value.parse().map_err(|e| bad(&e))?,
            "acc_low" => config.acc_low = value.parse().map_err(|e| bad(&e))?,
            "acc_high" => config.acc_high = value.parse().map_err(|e| bad(&e))?,
            "seed" => config.seed = value.parse().map_err(|e| bad(&e))?,
            "thin" => config.thin = value.parse().map_err(|e| bad(&e))?,
            other => return Err(format!("unknown config key `{other}`")),
        }
    }
    Ok(config)
}

fn parse_rng(text: &str) -> std::result::Result<ChaCha8Rng, String> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    let [seed_hex, stream, word_pos] = parts[..] else {
        return Err("rng line needs seed, stream and word position".into());
    };
    if seed_hex.len() != 64 {
        return Err("rng seed must be 64 hex digits".into());
    }
    let mut seed = [0u8; 32];
    for (i, byte) in seed.iter_mut().enumerate() {
        *byte = u8::from_str_radix(&seed_hex[2 * i..2 * i + 2], 16).map_err(|e| e.to_string())?;
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream.parse().map_err(|e: std::num::ParseIntError| e.to_string())?);
    rng.set_word_pos(word_pos.parse().map_err(|e: std::num::ParseIntError| e.to_string())?);
    Ok(rng)
}

/// Runs up to `steps` further iterations from `state`, never past `config.iterations`.
pub fn advance<L: LogLikelihood + ?Sized>(
    model: &L,
    state: &mut ChainState,
    config: &McmcConfig,
    steps: usize,
) -> Result<ChainOutput> {
    config.validate()?;
    let mut cache = CachedLogLik::new(model, &state.tensor);
    let end = (state.iteration + steps).min(config.iterations);
    let mut out = ChainOutput::default();
    let blocks = state.tensor.num_blocks();
    while state.iteration < end {
        let mut accepted = 0;
        for k in 0..blocks {
            if mh_block_update(&mut state.tensor, k, state.r, &mut cache, &mut state.rng) {
                accepted += 1;
            }
        }
        state.accepted += accepted as u64;
        state.decisions += blocks as u64;
        let cumulative = state.cumulative_acceptance();
        out.r_trace.push(state.r);
        out.acceptance_trace.push(cumulative);
        out.accepted_per_iteration.push(accepted);
        out.loglik_trace.push(cache.total());
        if config.keeps(state.iteration) {
            out.samples.push(state.tensor.clone());
        }
        // r is frozen once burn-in ends so retained draws come from one kernel
        if state.iteration < config.burn_in {
            state.r = adapt_r(state.r, cumulative, config.acc_low, config.acc_high);
        }
        state.iteration += 1;
    }
    Ok(out)
}

/// Runs a full chain from `init`.
pub fn run_chain<L: LogLikelihood + ?Sized>(
    model: &L,
    init: CoefficientTensor,
    config: &McmcConfig,
) -> Result<ChainOutput> {
    let mut state = ChainState::new(init, config);
    advance(model, &mut state, config, config.iterations)
}

/// Continues a checkpointed chain to completion and appends to `previous`.
pub fn resume_chain<L: LogLikelihood + ?Sized>(
    model: &L,
    state: &mut ChainState,
    config: &McmcConfig,
    mut previous: ChainOutput,
) -> Result<ChainOutput> {
    let rest = advance(model, state, config, config.iterations)?;
    previous.append(rest);
    Ok(previous)
}
