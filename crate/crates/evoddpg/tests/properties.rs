//! Property tests for the numeric plumbing: serialization round-trips,
//! operator bound-safety, and output-range invariants.

use evoddpg::agent::Normalizer;
use evoddpg::env::{compute_reward, env_spec, EnvName};
use evoddpg::ga::{crossover, default_gene_specs, mutate, Chromosome};
use evoddpg::nn::{Activation, Mlp};
use proptest::prelude::*;

proptest! {
    #[test]
    fn mlp_flatten_roundtrips(seed in any::<u64>(), hidden in 1usize..6, inputs in 1usize..5, outputs in 1usize..4) {
        let layers = [inputs, hidden, outputs];
        let net = Mlp::init(&layers, Activation::Relu, Activation::Tanh, seed).unwrap();
        let flat = net.flatten();
        prop_assert_eq!(flat.len(), net.param_count());
        let mut other = Mlp::init(&layers, Activation::Relu, Activation::Tanh, seed ^ 1).unwrap();
        other.set_from_flat(&flat).unwrap();
        prop_assert_eq!(other.flatten(), flat);
    }

    #[test]
    fn ga_operators_stay_in_bounds(seed in any::<u64>(), rate in 0.0f64..=1.0, sigma in 0.0f64..=1.0) {
        use rand::SeedableRng;
        let specs = default_gene_specs();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let genes: Vec<f64> = specs
            .iter()
            .map(|s| {
                let (lo, hi) = s.search_bounds();
                lo + (hi - lo) * 0.5
            })
            .collect();
        let a = Chromosome { genes: genes.clone() };
        let b = mutate(&a, 1.0, sigma, &specs, &mut rng);
        prop_assert!(b.in_bounds(&specs));
        let (c1, c2) = crossover(&a, &b, rate, &specs, &mut rng);
        prop_assert!(c1.in_bounds(&specs));
        prop_assert!(c2.in_bounds(&specs));
        let m = mutate(&c1, rate, sigma, &specs, &mut rng);
        prop_assert!(m.in_bounds(&specs));
    }

    #[test]
    fn reward_is_sparse_binary(ax in -2.0f64..2.0, ay in -2.0f64..2.0, dx in -2.0f64..2.0, dy in -2.0f64..2.0) {
        let spec = env_spec(EnvName::PointReach);
        let r = compute_reward(&[ax, ay], &[dx, dy], &spec).unwrap();
        prop_assert!(r == 0.0 || r == -1.0);
        let dist = ((ax - dx).powi(2) + (ay - dy).powi(2)).sqrt();
        prop_assert_eq!(r == 0.0, dist <= spec.success_threshold_distance);
    }

    #[test]
    fn normalizer_output_is_clipped(values in proptest::collection::vec(-1e6f64..1e6, 1..50), query in -1e9f64..1e9) {
        let mut norm = Normalizer::new(1, 5.0);
        for v in &values {
            norm.update(std::iter::once(&[*v][..]));
        }
        let z = norm.normalize(&[query]);
        prop_assert!(z[0].is_finite());
        prop_assert!(z[0].abs() <= 5.0);
    }
}
