//! Greedy coordinate search over a collection of simplex blocks.
//!
//! A run starts at step `s_initial` and sweeps every block, trying each
//! ordered (give, take) pair with transfer `min(step, γ_give)` and keeping the
//! best improving move. When a sweep gains less than `tol_fun_1` the step is
//! divided by `rho1` (first run) or `rho2` (later runs); the run ends once the
//! step falls below `phi`. After each run, increments under `lambda` are zeroed
//! if that does not lower the objective. Runs repeat until one gains less than
//! `tol_fun_2`, `max_runs` is reached, or `max_iter` sweeps have been spent.

use rand::Rng;
use rand_distr::Exp1;

use crate::coeff::{CoefficientTensor, ModelSpec, SimplexBlock};
use crate::error::{Error, Result};
use crate::likelihood::{CachedLogLik, LogLikelihood};

/// Smallest increment in a returned tensor.
pub const INCREMENT_FLOOR: f64 = 1e-8;
/// Random restarts tried when the centroid has zero likelihood.
pub const RANDOM_RESTARTS: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerTuning {
    pub s_initial: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub phi: f64,
    pub lambda: f64,
    pub tol_fun_1: f64,
    pub tol_fun_2: f64,
    pub max_iter: usize,
    pub max_runs: usize,
}

impl Default for OptimizerTuning {
    fn default() -> Self {
        Self {
            s_initial: 1.0,
            rho1: 2.0,
            rho2: 1.05,
            phi: 1e-2,
            lambda: 1e-3,
            tol_fun_1: 1e-2,
            tol_fun_2: 1e-2,
            max_iter: 5000,
            max_runs: 200,
        }
    }
}

impl OptimizerTuning {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.s_initial, self.phi, self.lambda, self.tol_fun_1, self.tol_fun_2];
        if positive.iter().any(|v| !(*v > 0.0)) || self.max_iter == 0 || self.max_runs == 0 {
            return Err(Error::Config("optimizer tuning values must be positive".into()));
        }
        if !(self.rho1 > 1.0 && self.rho2 > 1.0) {
            return Err(Error::Config("step decay rates must exceed 1".into()));
        }
        Ok(())
    }
}

/// Result of [`optimize_traced`].
#[derive(Clone, Debug)]
pub struct Optimum {
    pub tensor: CoefficientTensor,
    pub objective: f64,
    pub start_objective: f64,
    /// Objective after every sweep, starting with the start value.
    pub trace: Vec<f64>,
}

fn random_tensor<R: Rng + ?Sized>(spec: ModelSpec, rng: &mut R) -> CoefficientTensor {
    let blocks = (0..spec.num_blocks())
        .map(|_| {
            let w: Vec<f64> = (0..spec.block_len()).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            SimplexBlock::normalized(w).expect("exponential draws are positive")
        })
        .collect();
    CoefficientTensor::from_blocks(spec, blocks).expect("blocks built from spec")
}

fn floored(block: &SimplexBlock) -> SimplexBlock {
    let w = block.increments().iter().map(|g| g.max(INCREMENT_FLOOR)).collect();
    SimplexBlock::normalized(w).expect("floored increments are positive")
}

fn sparsified(block: &SimplexBlock, lambda: f64) -> Option<SimplexBlock> {
    if block.increments().iter().all(|g| *g == 0.0 || *g >= lambda) {
        return None;
    }
    let w = block.increments().iter().map(|g| if *g < lambda { 0.0 } else { *g }).collect();
    SimplexBlock::normalized(w).ok()
}

/// Maximizes `objective` and returns the maximizer.
pub fn optimize<L, R>(objective: &L, spec: ModelSpec, tuning: &OptimizerTuning, rng: &mut R) -> Result<CoefficientTensor>
where
    L: LogLikelihood + ?Sized,
    R: Rng + ?Sized,
{
    Ok(optimize_traced(objective, spec, tuning, rng)?.tensor)
}

/// [`optimize`] with the objective trajectory.
pub fn optimize_traced<L, R>(objective: &L, spec: ModelSpec, tuning: &OptimizerTuning, rng: &mut R) -> Result<Optimum>
where
    L: LogLikelihood + ?Sized,
    R: Rng + ?Sized,
{
    tuning.validate()?;
    let mut tensor = CoefficientTensor::uniform(spec);
    let mut start = objective.total(&tensor);
    let mut attempts = 0;
    while start == f64::NEG_INFINITY && attempts < RANDOM_RESTARTS {
        tensor = random_tensor(spec, rng);
        start = objective.total(&tensor);
        attempts += 1;
    }
    if start == f64::NEG_INFINITY {
        return Err(Error::Optimization(format!(
            "objective is -inf at the centroid and at {RANDOM_RESTARTS} random starts"
        )));
    }
    let initial = tensor.clone();

    let mut cache = CachedLogLik::new(objective, &tensor);
    let mut current = cache.total();
    let mut trace = vec![current];
    let n = spec.block_len();
    let mut sweeps = 0;

    'runs: for run in 0..tuning.max_runs {
        let run_start = current;
        let decay = if run == 0 { tuning.rho1 } else { tuning.rho2 };
        let mut step = tuning.s_initial;
        while step >= tuning.phi {
            let sweep_start = current;
            for k in 0..spec.num_blocks() {
                let base = tensor.block(k).clone();
                let mut best: Option<(f64, SimplexBlock)> = None;
                for give in 0..n {
                    let amount = step.min(base.increments()[give]);
                    if amount <= 0.0 {
                        continue;
                    }
                    for take in (0..n).filter(|t| *t != give) {
                        let mut w = base.increments().to_vec();
                        w[give] -= amount;
                        w[take] += amount;
                        let trial = SimplexBlock::from_raw(w);
                        tensor.replace_block(k, trial.clone());
                        let value = cache.trial(&tensor, k);
                        let bar = best.as_ref().map_or(current, |(v, _)| *v);
                        if value > bar {
                            best = Some((value, trial));
                        }
                    }
                }
                match best {
                    Some((value, block)) => {
                        tensor.replace_block(k, block);
                        cache.trial(&tensor, k);
                        cache.commit();
                        current = value;
                    }
                    None => {
                        tensor.replace_block(k, base);
                    }
                }
            }
            sweeps += 1;
            trace.push(current);
            if current - sweep_start < tuning.tol_fun_1 {
                step /= decay;
            }
            if sweeps >= tuning.max_iter {
                break 'runs;
            }
        }

        for k in 0..spec.num_blocks() {
            if let Some(sparse) = sparsified(tensor.block(k), tuning.lambda) {
                let old = tensor.replace_block(k, sparse);
                let value = cache.trial(&tensor, k);
                if value >= current {
                    cache.commit();
                    current = value;
                } else {
                    tensor.replace_block(k, old);
                }
            }
        }
        trace.push(current);

        if current - run_start < tuning.tol_fun_2 {
            break;
        }
    }

    let floored_blocks = tensor.blocks().iter().map(floored).collect();
    let mut result = CoefficientTensor::from_blocks(spec, floored_blocks)?;
    let mut value = objective.total(&result);
    if !(value >= start) {
        result = initial;
        value = start;
    }
    Ok(Optimum {
        tensor: result,
        objective: value,
        start_objective: start,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::Method;
    use crate::likelihood::FnLikelihood;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_bowl_returns_centroid() {
        let spec = ModelSpec::quadratic(Method::Npsqr, 1, 4).unwrap();
        let n = spec.block_len() as f64;
        let f = FnLikelihood::new(move |t: &CoefficientTensor| {
            -t.flatten().iter().map(|g| (g - 1.0 / n).powi(2)).sum::<f64>()
        });
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = optimize(&f, spec, &OptimizerTuning::default(), &mut rng).unwrap();
        for g in t.flatten() {
            assert!((g - 1.0 / n).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_log_objective_hits_lagrange_solution() {
        let spec = ModelSpec::new(Method::Npsqr, 1, 2, 1, 4, 1).unwrap();
        let w = [1.0, 2.0, 3.0, 4.0, 5.0];
        let f = FnLikelihood::new(move |t: &CoefficientTensor| {
            t.block(0).increments().iter().zip(w).map(|(g, wj)| wj * g.ln()).sum()
        });
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = optimize(&f, spec, &OptimizerTuning::default(), &mut rng).unwrap();
        for (g, wj) in t.block(0).increments().iter().zip(w) {
            assert!((g - wj / 15.0).abs() < 1e-2, "{g} vs {}", wj / 15.0);
        }
    }

    #[test]
    fn trajectory_never_decreases() {
        let spec = ModelSpec::quadratic(Method::Npsqr, 1, 3).unwrap();
        let f = FnLikelihood::new(|t: &CoefficientTensor| {
            t.flatten().iter().enumerate().map(|(i, g)| ((i % 3) as f64 + 0.5) * g.ln()).sum()
        });
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let opt = optimize_traced(&f, spec, &OptimizerTuning::default(), &mut rng).unwrap();
        assert!(opt.trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(opt.objective >= opt.start_objective);
        assert!(opt.tensor.flatten().iter().all(|g| *g >= INCREMENT_FLOOR * 0.99));
    }

    #[test]
    fn infeasible_centroid_uses_random_restarts() {
        let spec = ModelSpec::quadratic(Method::Npsqr, 1, 3).unwrap();
        let n = spec.block_len() as f64;
        let f = FnLikelihood::new(move |t: &CoefficientTensor| {
            if (t.block(0).increments()[0] - 1.0 / n).abs() < 1e-9 {
                f64::NEG_INFINITY
            } else {
                0.0
            }
        });
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(optimize(&f, spec, &OptimizerTuning::default(), &mut rng).is_ok());

        let never = FnLikelihood::new(|_: &CoefficientTensor| f64::NEG_INFINITY);
        let err = optimize(&never, spec, &OptimizerTuning::default(), &mut rng).unwrap_err();
        assert!(matches!(err, Error::Optimization(_)));
    }

    #[test]
    fn deterministic_under_seed() {
        let spec = ModelSpec::quadratic(Method::Npsqr, 1, 3).unwrap();
        let f = FnLikelihood::new(|t: &CoefficientTensor| -(t.block(1).increments()[2] - 0.4).powi(2));
        let a = optimize(&f, spec, &OptimizerTuning::default(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = optimize(&f, spec, &OptimizerTuning::default(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }
}
