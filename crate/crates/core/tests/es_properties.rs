use hebb_core::es::{
    estimate_gradient, per_synapse_fast_update, sample_population, shape_fitness, EsConfig, EsState, FitnessShaping,
    Updater,
};
use hebb_core::genotype::{Genotype, GenotypeModel, ModelKind, Params};
use hebb_core::seed;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn genotypes(pop: Vec<hebb_core::es::Candidate>) -> Vec<Genotype> {
    pop.into_iter().map(|c| c.genotype).collect()
}

#[test]
fn fast_path_matches_generic_score_function_path() {
    let mut rng = seed::rng_from_seed(1);
    for trial in 0..10 {
        let n_rows = rng.random_range(1..12);
        let model = GenotypeModel::per_synapse(n_rows, 5, rng.random_range(0.05..0.5), 1.0, trial).unwrap();
        for shaping in [FitnessShaping::Raw, FitnessShaping::CenteredRanks] {
            let cfg = EsConfig {
                population_size: 2 * rng.random_range(1..20),
                learning_rate: rng.random_range(0.01..1.0),
                fitness_shaping: shaping,
                ..EsConfig::default()
            };
            let pop = genotypes(sample_population(&model, &cfg, trial, 0));
            let raw: Vec<f64> = (0..pop.len())
                .map(|_| rng.sample::<f64, _>(StandardNormal) * 10.0)
                .collect();
            let shaped = shape_fitness(&raw, shaping).unwrap();

            let grad = estimate_gradient(&pop, &shaped, &model).unwrap();
            let mut state = EsState::new(model.clone(), &cfg, trial);
            state.sgd_update(&cfg, &grad).unwrap();
            let generic = state.model.params().mu.clone();

            let mu = &model.params().mu;
            let eps: Vec<Array2<f64>> = pop.iter().map(|g| (&g.h - mu) / model.sigma()).collect();
            let fast = per_synapse_fast_update(&model, &eps, &shaped, cfg.learning_rate).unwrap();

            for (a, b) in generic.iter().zip(fast.iter()) {
                let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-8);
                assert!(rel < 1e-10, "trial {trial}: {a} vs {b}");
            }
        }
    }
}

fn quadratic_run(seed: u64) -> f64 {
    let n_rows = 8;
    let mut rng = seed::rng_from_seed(seed);
    let target = Array2::from_shape_simple_fn((n_rows, 5), || rng.sample::<f64, _>(StandardNormal));
    let start = &target + &Array2::from_shape_simple_fn((n_rows, 5), || if rng.random::<bool>() { 1.0 } else { -1.0 });
    let model = GenotypeModel::from_parts(
        ModelKind::PerSynapse,
        Params {
            mu: start,
            lambda: None,
        },
        0.1,
        None,
    )
    .unwrap();
    let cfg = EsConfig {
        population_size: 64,
        learning_rate: 0.1,
        ..EsConfig::default()
    };
    let mut state = EsState::new(model, &cfg, seed);
    for g in 0..200 {
        let pop = genotypes(sample_population(&state.model, &cfg, seed, g));
        let raw: Vec<f64> = pop.iter().map(|z| -(&z.h - &target).mapv(|d| d * d).sum()).collect();
        let shaped = shape_fitness(&raw, cfg.fitness_shaping).unwrap();
        let grad = estimate_gradient(&pop, &shaped, &state.model).unwrap();
        state.apply(&cfg, &grad).unwrap();
    }
    (&state.model.params().mu - &target)
        .iter()
        .fold(0.0_f64, |m, d| m.max(d.abs()))
}

#[test]
fn quadratic_surrogate_converges() {
    let hits = (0..10).filter(|&s| quadratic_run(s) < 0.05).count();
    assert!(hits >= 9, "only {hits}/10 seeds converged");
}

#[test]
fn adam_moments_stay_finite() {
    let model = GenotypeModel::shared_gmm(6, 3, 0.1, 1.0, 0).unwrap();
    let cfg = EsConfig {
        updater: Updater::Adam,
        learning_rate: 1.0,
        decay: 0.9931,
        ..EsConfig::default()
    };
    let mut state = EsState::new(model, &cfg, 0);
    let mut rng = seed::rng_from_seed(3);
    for _ in 0..10_000 {
        let mut g = state.model.params().zeros_like();
        let flat: Vec<f64> = (0..g.len())
            .map(|_| {
                if rng.random::<f64>() < 0.3 {
                    0.0
                } else {
                    rng.random_range(-1e3..1e3)
                }
            })
            .collect();
        g.set_from_flat(&flat).unwrap();
        state.apply(&cfg, &g).unwrap();
    }
    let adam = state.adam.as_ref().unwrap();
    assert!(adam.m.is_finite() && adam.v.is_finite());
    assert!(state.model.params().is_finite());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Centered ranks only see the ordering of fitness.
    #[test]
    fn rank_shaping_is_invariant_to_monotone_transforms(
        raw in prop::collection::vec(-50.0..50.0f64, 2..40),
        scale in 0.01..10.0f64,
        shift in -100.0..100.0f64,
        seed in any::<u64>(),
    ) {
        let model = GenotypeModel::shared_gmm(4, 2, 0.2, 1.0, seed).unwrap();
        let pop: Vec<Genotype> = (0..raw.len()).map(|j| model.sample(seed ^ j as u64)).collect();
        let transformed: Vec<f64> = raw.iter().map(|f| (f / 50.0).exp() * scale + shift).collect();
        let a = shape_fitness(&raw, FitnessShaping::CenteredRanks).unwrap();
        let b = shape_fitness(&transformed, FitnessShaping::CenteredRanks).unwrap();
        prop_assert_eq!(&a, &b);
        let ga = estimate_gradient(&pop, &a, &model).unwrap();
        let gb = estimate_gradient(&pop, &b, &model).unwrap();
        prop_assert_eq!(ga, gb);
    }

    #[test]
    fn centered_ranks_have_zero_mean(raw in prop::collection::vec(-1e6..1e6f64, 2..100)) {
        let s = shape_fitness(&raw, FitnessShaping::CenteredRanks).unwrap();
        prop_assert!(s.iter().sum::<f64>().abs() < 1e-12);
        prop_assert!(s.iter().all(|v| (-0.5 - 1e-12..=0.5 + 1e-12).contains(v)));
    }
}
