//! Shared helpers for integration tests: small randomized instances.

use abacgen_core::policy::{generate_rules, Policy};
use abacgen_core::sampling::RngStream;
use abacgen_core::spec::{DistributionSpec, GenerationSpec};
use abacgen_core::{assign_attribute_values, generate_names, AbacDataset};

pub fn pick(rng: &mut RngStream, low: u64, high: u64) -> u64 {
    low + rng.next_u128_below((high - low + 1) as u128) as u64
}

pub fn random_distribution(rng: &mut RngStream, cardinality: usize) -> DistributionSpec {
    match pick(rng, 0, 2) {
        0 => DistributionSpec::Uniform,
        1 => DistributionSpec::Normal {
            mean: pick(rng, 0, cardinality as u64) as f64,
            variance: 0.25 + pick(rng, 0, 15) as f64 * 0.25,
        },
        _ => DistributionSpec::Poisson {
            lambda: 0.5 + pick(rng, 0, 9) as f64 * 0.5,
        },
    }
}

/// A small random instance: entity sizes <= 4, attribute counts <= 3,
/// cardinalities <= 3, rule counts <= 3 (clamped to the rule space).
pub fn random_small_instance(seed: u64) -> (GenerationSpec, AbacDataset, Policy) {
    let mut rng = RngStream::new(seed, "test-instance");
    let mut spec = GenerationSpec {
        subject_size: pick(&mut rng, 1, 4),
        object_size: pick(&mut rng, 1, 4),
        environment_size: pick(&mut rng, 1, 4),
        ..GenerationSpec::default()
    };
    let mut space: u128 = 1;
    for (counts, values, dists) in [
        (
            &mut spec.subject_attributes_count,
            &mut spec.subject_attributes_values,
            &mut spec.subject_distributions,
        ),
        (
            &mut spec.object_attributes_count,
            &mut spec.object_attributes_values,
            &mut spec.object_distributions,
        ),
        (
            &mut spec.environment_attributes_count,
            &mut spec.environment_attributes_values,
            &mut spec.environment_distributions,
        ),
    ] {
        *counts = pick(&mut rng, 0, 3) as usize;
        for _ in 0..*counts {
            let cardinality = pick(&mut rng, 1, 3) as usize;
            space = space.saturating_mul(cardinality as u128);
            values.push(cardinality);
            dists.push(random_distribution(&mut rng, cardinality));
        }
    }
    spec.permit_rules_count = pick(&mut rng, 0, 3);
    spec.deny_rules_count = pick(&mut rng, 0, 3);
    // Clamp to the rule space so generation cannot exhaust it.
    while u128::from(spec.permit_rules_count + spec.deny_rules_count) > space {
        if spec.deny_rules_count > 0 {
            spec.deny_rules_count -= 1;
        } else {
            spec.permit_rules_count -= 1;
        }
    }

    let dataset = assign_attribute_values(generate_names(&spec), &spec, seed).unwrap();
    let policy = generate_rules(&dataset, &spec, seed).unwrap();
    (spec, dataset, policy)
}
