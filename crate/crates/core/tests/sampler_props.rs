use npqr::coeff::{CoefficientTensor, Method, ModelSpec, SimplexBlock};
use npqr::likelihood::{loglik_npsqr_complete, Dataset, Likelihood, Observations};
use npqr::sampler::{
    advance, log_acceptance_ratio, log_proposal_density, propose_block, resume_chain, run_chain, ChainOutput,
    ChainState, McmcConfig,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn simplex(len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = SimplexBlock> {
    prop::collection::vec(0.01f64..1.0, len).prop_map(|w| SimplexBlock::normalized(w).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn proposals_stay_on_the_simplex(from in simplex(2..=8), r in 1.001f64..5.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let to = propose_block(&from, r, &mut rng);
        prop_assert_eq!(to.len(), from.len());
        prop_assert!(to.increments().iter().all(|v| *v > 0.0));
        prop_assert!((to.increments().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(log_proposal_density(&to, &from, r).is_finite());
    }

    // reversibility: the move and its reverse have reciprocal acceptance ratios
    #[test]
    fn acceptance_ratio_is_antisymmetric(
        from in simplex(2..=6),
        r in 1.01f64..3.0,
        seed in any::<u64>(),
        l0 in -50.0f64..0.0,
        l1 in -50.0f64..0.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let to = propose_block(&from, r, &mut rng);
        let forward = log_acceptance_ratio(l0, l1, &from, &to, r);
        let backward = log_acceptance_ratio(l1, l0, &to, &from, r);
        prop_assert!((forward + backward).abs() < 1e-8, "{} {}", forward, backward);
    }

    #[test]
    fn outside_the_support_has_zero_density(from in simplex(3..=3), r in 1.01f64..2.0) {
        // an increment ratio beyond r² is unreachable
        let g = from.increments();
        let far = SimplexBlock::normalized(vec![g[0] * r * r * 1.5, g[1], g[2]]).unwrap();
        prop_assert_eq!(log_proposal_density(&far, &from, r), f64::NEG_INFINITY);
    }
}

fn study_problem() -> (ModelSpec, Dataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 60;
    let x: Vec<f64> = (0..n).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|xi| (0.2 + 0.6 * xi + 0.15 * (rand::Rng::random::<f64>(&mut rng) - 0.5)).clamp(0.0, 1.0))
        .collect();
    (ModelSpec::quadratic(Method::Npsqr, 1, 4).unwrap(), Dataset::new(1, x, y).unwrap())
}

fn config(iterations: usize) -> McmcConfig {
    McmcConfig {
        iterations,
        burn_in: iterations / 4,
        seed: 11,
        ..McmcConfig::default()
    }
}

#[test]
fn chain_keeps_tensors_valid_and_logliks_consistent() {
    let (spec, data) = study_problem();
    let lik = Likelihood::new(spec, Observations::Complete(data.clone())).unwrap();
    let out = run_chain(&lik, CoefficientTensor::uniform(spec), &config(400)).unwrap();
    assert_eq!(out.samples.len(), 300);
    for t in &out.samples {
        for b in t.blocks() {
            assert!(b.increments().iter().all(|v| *v >= 0.0));
            assert!((b.increments().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        for k in 0..=10 {
            let c = t.coeff_at(&[k as f64 / 10.0]).unwrap();
            assert!(c.windows(2).all(|w| w[0] <= w[1]));
        }
    }
    let last = out.samples.last().unwrap();
    let direct = loglik_npsqr_complete(last, &data).unwrap();
    let traced = *out.loglik_trace.last().unwrap();
    assert!((direct - traced).abs() <= 1e-9 * direct.abs().max(1.0));
    assert!(out.r_trace.iter().all(|r| *r > 1.0));
}

#[test]
fn chain_is_deterministic_under_seed() {
    let (spec, data) = study_problem();
    let lik = Likelihood::new(spec, Observations::Complete(data)).unwrap();
    let a = run_chain(&lik, CoefficientTensor::uniform(spec), &config(200)).unwrap();
    let b = run_chain(&lik, CoefficientTensor::uniform(spec), &config(200)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn checkpoint_resume_matches_an_uninterrupted_run() {
    let (spec, data) = study_problem();
    let lik = Likelihood::new(spec, Observations::Complete(data)).unwrap();
    let cfg = config(240);
    let whole = run_chain(&lik, CoefficientTensor::uniform(spec), &cfg).unwrap();

    let mut state = ChainState::new(CoefficientTensor::uniform(spec), &cfg);
    // stop inside burn-in so the adaptation state must survive the round trip
    let first: ChainOutput = advance(&lik, &mut state, &cfg, 37).unwrap();
    let text = state.to_text(&cfg);
    let (cfg2, mut restored) = ChainState::from_text(&text).unwrap();
    assert_eq!(cfg2, cfg);
    let resumed = resume_chain(&lik, &mut restored, &cfg2, first).unwrap();
    assert_eq!(resumed, whole);
}
