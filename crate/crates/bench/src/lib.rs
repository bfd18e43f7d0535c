//! Shared instance builders for the criterion benchmarks.

use abacgen_core::policy::{generate_rules, Policy};
use abacgen_core::spec::{DistributionSpec, GenerationSpec};
use abacgen_core::{assign_attribute_values, generate_names, AbacDataset};

/// A generation spec sized for benchmark workloads: `scale` subjects,
/// `scale / 4` objects, `scale / 20` environments, three attributes per
/// entity type over mixed distributions.
pub fn bench_spec(scale: u64, permit_rules: u64, deny_rules: u64) -> GenerationSpec {
    let mixed = |n: usize| -> (Vec<usize>, Vec<DistributionSpec>) {
        let cardinalities = vec![4, 6, 5][..n].to_vec();
        let distributions = vec![
            DistributionSpec::Uniform,
            DistributionSpec::Normal {
                mean: 3.0,
                variance: 1.5,
            },
            DistributionSpec::Poisson { lambda: 2.0 },
        ][..n]
            .to_vec();
        (cardinalities, distributions)
    };
    let (subject_values, subject_dists) = mixed(3);
    let (object_values, object_dists) = mixed(3);
    let (environment_values, environment_dists) = mixed(3);
    GenerationSpec {
        subject_size: scale,
        object_size: (scale / 4).max(1),
        environment_size: (scale / 20).max(1),
        permit_rules_count: permit_rules,
        deny_rules_count: deny_rules,
        subject_attributes_count: 3,
        object_attributes_count: 3,
        environment_attributes_count: 3,
        subject_attributes_values: subject_values,
        object_attributes_values: object_values,
        environment_attributes_values: environment_values,
        subject_distributions: subject_dists,
        object_distributions: object_dists,
        environment_distributions: environment_dists,
    }
}

pub fn bench_instance(scale: u64, rules: u64, seed: u64) -> (AbacDataset, Policy) {
    let spec = bench_spec(scale, rules / 2 + rules % 2, rules / 2);
    let dataset = assign_attribute_values(generate_names(&spec), &spec, seed).unwrap();
    let policy = generate_rules(&dataset, &spec, seed).unwrap();
    (dataset, policy)
}
