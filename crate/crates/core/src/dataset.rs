//! Materialization of the ABAC system: entity identifiers, attribute names,
//! value sets, and the per-entity attribute-value assignment maps.
//!
//! Naming scheme: subjects `S_1..S_n`, attributes `SA_i`/`OA_j`/`EA_k`, and
//! values `SA_i_j`. Assignments are drawn per attribute with one
//! [`RngStream`] per attribute (stream id = attribute name) in ascending
//! entity order, so results do not depend on how entities are iterated
//! elsewhere.

use indexmap::IndexMap;

use crate::sampling::{sample_index, RngStream, SamplingError};
use crate::spec::{DistributionSpec, GenerationSpec, Violation};

/// The three entity categories of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Subject,
    Object,
    Environment,
}

impl EntityKind {
    pub const ALL: [EntityKind; 3] = [
        EntityKind::Subject,
        EntityKind::Object,
        EntityKind::Environment,
    ];

    pub fn entity_prefix(self) -> &'static str {
        match self {
            EntityKind::Subject => "S",
            EntityKind::Object => "O",
            EntityKind::Environment => "E",
        }
    }

    pub fn attribute_prefix(self) -> &'static str {
        match self {
            EntityKind::Subject => "SA",
            EntityKind::Object => "OA",
            EntityKind::Environment => "EA",
        }
    }

    pub fn from_attribute_prefix(prefix: &str) -> Option<EntityKind> {
        match prefix {
            "SA" => Some(EntityKind::Subject),
            "OA" => Some(EntityKind::Object),
            "EA" => Some(EntityKind::Environment),
            _ => None,
        }
    }
}

impl std::fmt::Display for EntityKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EntityKind::Subject => "subject",
            EntityKind::Object => "object",
            EntityKind::Environment => "environment",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GeneratorError {
    #[error("sampling for attribute {attribute} failed: {source}")]
    Sampling {
        attribute: String,
        source: SamplingError,
    },
}

/// A fully named (and, after assignment, fully valued) ABAC system.
///
/// All maps preserve insertion order, which is the generation order and the
/// serialization order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AbacDataset {
    pub subjects: Vec<String>,
    pub objects: Vec<String>,
    pub environments: Vec<String>,
    pub subject_attributes: Vec<String>,
    pub object_attributes: Vec<String>,
    pub environment_attributes: Vec<String>,
    /// SAV / OAV / EAV: attribute name -> ordered value names.
    pub subject_attribute_values: IndexMap<String, Vec<String>>,
    pub object_attribute_values: IndexMap<String, Vec<String>>,
    pub environment_attribute_values: IndexMap<String, Vec<String>>,
    /// SV / OV / EV: entity name -> one value per attribute, in attribute order.
    pub subject_assignments: IndexMap<String, Vec<String>>,
    pub object_assignments: IndexMap<String, Vec<String>>,
    pub environment_assignments: IndexMap<String, Vec<String>>,
}

impl AbacDataset {
    pub fn entities(&self, kind: EntityKind) -> &ValueList {
        match kind {
            EntityKind::Subject => &self.subjects,
            EntityKind::Object => &self.objects,
            EntityKind::Environment => &self.environments,
        }
    }

    pub fn attributes(&self, kind: EntityKind) -> &ValueList {
        match kind {
            EntityKind::Subject => &self.subject_attributes,
            EntityKind::Object => &self.object_attributes,
            EntityKind::Environment => &self.environment_attributes,
        }
    }

    pub fn attribute_values(&self, kind: EntityKind) -> &IndexMap<String, Vec<String>> {
        match kind {
            EntityKind::Subject => &self.subject_attribute_values,
            EntityKind::Object => &self.object_attribute_values,
            EntityKind::Environment => &self.environment_attribute_values,
        }
    }

    pub fn assignments(&self, kind: EntityKind) -> &IndexMap<String, Vec<String>> {
        match kind {
            EntityKind::Subject => &self.subject_assignments,
            EntityKind::Object => &self.object_assignments,
            EntityKind::Environment => &self.environment_assignments,
        }
    }

    fn assignments_mut(&mut self, kind: EntityKind) -> &mut IndexMap<String, Vec<String>> {
        match kind {
            EntityKind::Subject => &mut self.subject_assignments,
            EntityKind::Object => &mut self.object_assignments,
            EntityKind::Environment => &mut self.environment_assignments,
        }
    }

    /// Checks every structural invariant of the dataset against its spec.
    pub fn validate(&self, spec: &GenerationSpec) -> Vec<Violation> {
        let mut out = Vec::new();
        let expectations = [
            (
                EntityKind::Subject,
                spec.subject_size,
                spec.subject_attributes_count,
                &spec.subject_attributes_values,
            ),
            (
                EntityKind::Object,
                spec.object_size,
                spec.object_attributes_count,
                &spec.object_attributes_values,
            ),
            (
                EntityKind::Environment,
                spec.environment_size,
                spec.environment_attributes_count,
                &spec.environment_attributes_values,
            ),
        ];
        for (kind, size, attr_count, cardinalities) in expectations {
            let prefix = kind.attribute_prefix();
            let entities = self.entities(kind);
            if entities.len() as u64 != size {
                out.push(Violation {
                    path: format!("{prefix}:entities"),
                    message: format!("expected {size} entities, found {}", entities.len()),
                });
            }
            let attrs = self.attributes(kind);
            if attrs.len() != attr_count {
                out.push(Violation {
                    path: format!("{prefix}:attributes"),
                    message: format!("expected {attr_count} attributes, found {}", attrs.len()),
                });
            }
            let value_sets = self.attribute_values(kind);
            for (i, attr) in attrs.iter().enumerate() {
                match value_sets.get(attr) {
                    None => out.push(Violation {
                        path: format!("{prefix}:values:{attr}"),
                        message: "no value set".into(),
                    }),
                    Some(values) => {
                        if let Some(&want) = cardinalities.get(i) {
                            if values.len() != want {
                                out.push(Violation {
                                    path: format!("{prefix}:values:{attr}"),
                                    message: format!(
                                        "expected {want} values, found {}",
                                        values.len()
                                    ),
                                });
                            }
                        }
                    }
                }
            }
            let assignments = self.assignments(kind);
            for entity in entities {
                match assignments.get(entity) {
                    None => out.push(Violation {
                        path: format!("{prefix}:assignments:{entity}"),
                        message: "no assignment row".into(),
                    }),
                    Some(row) => {
                        if row.len() != attrs.len() {
                            out.push(Violation {
                                path: format!("{prefix}:assignments:{entity}"),
                                message: format!(
                                    "expected {} values, found {}",
                                    attrs.len(),
                                    row.len()
                                ),
                            });
                        }
                        for (i, value) in row.iter().enumerate() {
                            let in_domain = attrs
                                .get(i)
                                .and_then(|attr| value_sets.get(attr))
                                .map(|values| values.contains(value))
                                .unwrap_or(false);
                            if !in_domain {
                                out.push(Violation {
                                    path: format!("{prefix}:assignments:{entity}[{i}]"),
                                    message: format!("value {value:?} outside attribute domain"),
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

type ValueList = Vec<String>;

/// Builds all entity, attribute, and value names for a spec. Deterministic;
/// assignment maps are left with empty rows.
pub fn generate_names(spec: &GenerationSpec) -> AbacDataset {
    let mut dataset = AbacDataset::default();
    let shapes = [
        (
            EntityKind::Subject,
            spec.subject_size,
            &spec.subject_attributes_values,
        ),
        (
            EntityKind::Object,
            spec.object_size,
            &spec.object_attributes_values,
        ),
        (
            EntityKind::Environment,
            spec.environment_size,
            &spec.environment_attributes_values,
        ),
    ];
    for (kind, size, cardinalities) in shapes {
        let entities: Vec<String> = (1..=size)
            .map(|i| format!("{}_{i}", kind.entity_prefix()))
            .collect();
        let attributes: Vec<String> = (1..=cardinalities.len())
            .map(|i| format!("{}_{i}", kind.attribute_prefix()))
            .collect();
        let mut value_sets = IndexMap::new();
        for (attr, &cardinality) in attributes.iter().zip(cardinalities) {
            let values: Vec<String> = (1..=cardinality).map(|j| format!("{attr}_{j}")).collect();
            value_sets.insert(attr.clone(), values);
        }
        let assignments: IndexMap<String, Vec<String>> = entities
            .iter()
            .map(|e| (e.clone(), Vec::new()))
            .collect();
        match kind {
            EntityKind::Subject => {
                dataset.subjects = entities;
                dataset.subject_attributes = attributes;
                dataset.subject_attribute_values = value_sets;
                dataset.subject_assignments = assignments;
            }
            EntityKind::Object => {
                dataset.objects = entities;
                dataset.object_attributes = attributes;
                dataset.object_attribute_values = value_sets;
                dataset.object_assignments = assignments;
            }
            EntityKind::Environment => {
                dataset.environments = entities;
                dataset.environment_attributes = attributes;
                dataset.environment_attribute_values = value_sets;
                dataset.environment_assignments = assignments;
            }
        }
    }
    dataset
}

/// Draws one value per entity per attribute according to the spec's
/// distributions and fills the assignment maps.
///
/// Values for each attribute are drawn as a column (ascending entity index)
/// from that attribute's own stream, then transposed into per-entity rows.
pub fn assign_attribute_values(
    mut dataset: AbacDataset,
    spec: &GenerationSpec,
    master_seed: u64,
) -> Result<AbacDataset, GeneratorError> {
    let groups = [
        (EntityKind::Subject, &spec.subject_distributions),
        (EntityKind::Object, &spec.object_distributions),
        (EntityKind::Environment, &spec.environment_distributions),
    ];
    for (kind, distributions) in groups {
        let attributes = dataset.attributes(kind).clone();
        let population = dataset.entities(kind).len();
        let mut columns: Vec<Vec<String>> = Vec::with_capacity(attributes.len());
        for (attr, dist) in attributes.iter().zip(distributions) {
            let cardinality = dataset.attribute_values(kind)[attr].len();
            columns.push(draw_column(attr, dist, cardinality, population, master_seed)?);
        }
        let assignments = dataset.assignments_mut(kind);
        for (entity_idx, row) in assignments.values_mut().enumerate() {
            *row = columns.iter().map(|col| col[entity_idx].clone()).collect();
        }
    }
    Ok(dataset)
}

fn draw_column(
    attribute: &str,
    dist: &DistributionSpec,
    cardinality: usize,
    population: usize,
    master_seed: u64,
) -> Result<Vec<String>, GeneratorError> {
    let mut rng = RngStream::new(master_seed, attribute);
    let mut column = Vec::with_capacity(population);
    for _ in 0..population {
        let k = sample_index(dist, cardinality, &mut rng).map_err(|source| {
            GeneratorError::Sampling {
                attribute: attribute.to_string(),
                source,
            }
        })?;
        column.push(format!("{attribute}_{k}"));
    }
    Ok(column)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::listing_like_spec;

    #[test]
    fn names_follow_scheme() {
        let ds = generate_names(&listing_like_spec());
        assert_eq!(ds.subjects, vec!["S_1", "S_2", "S_3"]);
        assert_eq!(ds.objects, vec!["O_1", "O_2", "O_3"]);
        assert_eq!(ds.environments, vec!["E_1", "E_2"]);
        assert_eq!(ds.subject_attributes, vec!["SA_1", "SA_2"]);
        assert_eq!(
            ds.subject_attribute_values["SA_2"],
            vec!["SA_2_1", "SA_2_2", "SA_2_3", "SA_2_4"]
        );
        assert_eq!(ds.object_attribute_values["OA_2"], vec!["OA_2_1"]);
        assert_eq!(
            ds.environment_attribute_values["EA_1"],
            vec!["EA_1_1", "EA_1_2"]
        );
        // Assignment rows exist but are empty before assignment.
        assert!(ds.subject_assignments["S_1"].is_empty());
    }

    #[test]
    fn no_attributes_is_vacuous() {
        let mut spec = listing_like_spec();
        spec.subject_attributes_count = 0;
        spec.subject_attributes_values.clear();
        spec.subject_distributions.clear();
        let ds = assign_attribute_values(generate_names(&spec), &spec, 5).unwrap();
        assert!(ds.subject_attributes.is_empty());
        assert!(ds.subject_attribute_values.is_empty());
        for row in ds.subject_assignments.values() {
            assert!(row.is_empty());
        }
        assert!(ds.validate(&spec).is_empty());
    }

    #[test]
    fn cardinality_one_always_assigns_the_single_value() {
        let spec = listing_like_spec();
        let ds = assign_attribute_values(generate_names(&spec), &spec, 99).unwrap();
        for row in ds.object_assignments.values() {
            assert_eq!(row[1], "OA_2_1");
        }
    }

    #[test]
    fn assignment_is_seed_deterministic() {
        let spec = listing_like_spec();
        let a = assign_attribute_values(generate_names(&spec), &spec, 42).unwrap();
        let b = assign_attribute_values(generate_names(&spec), &spec, 42).unwrap();
        assert_eq!(a, b);
        let c = assign_attribute_values(generate_names(&spec), &spec, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn assignments_validate_against_spec() {
        let spec = listing_like_spec();
        let ds = assign_attribute_values(generate_names(&spec), &spec, 7).unwrap();
        assert!(ds.validate(&spec).is_empty());
    }

    #[test]
    fn validator_catches_out_of_domain_value() {
        let spec = listing_like_spec();
        let mut ds = assign_attribute_values(generate_names(&spec), &spec, 7).unwrap();
        ds.subject_assignments["S_2"][0] = "SA_9_1".to_string();
        let violations = ds.validate(&spec);
        assert!(violations.iter().any(|v| v.path.contains("S_2")));
    }

    #[test]
    fn uniform_marginals_near_expected() {
        let mut spec = listing_like_spec();
        spec.subject_size = 100_000;
        spec.subject_attributes_count = 1;
        spec.subject_attributes_values = vec![5];
        spec.subject_distributions = vec![DistributionSpec::Uniform];
        let ds = assign_attribute_values(generate_names(&spec), &spec, 2025).unwrap();
        let mut counts = [0u64; 5];
        for row in ds.subject_assignments.values() {
            let idx: usize = row[0].rsplit('_').next().unwrap().parse().unwrap();
            counts[idx - 1] += 1;
        }
        for c in counts {
            assert!((c as f64 - 20_000.0).abs() < 400.0, "{counts:?}");
        }
    }

    #[test]
    fn column_multiset_is_order_independent() {
        // Drawing the column once and distributing it to entities in any
        // order leaves the per-attribute multiset unchanged.
        let spec = listing_like_spec();
        let ds = assign_attribute_values(generate_names(&spec), &spec, 11).unwrap();
        let mut forward: Vec<String> = ds
            .subject_assignments
            .values()
            .map(|row| row[0].clone())
            .collect();
        let mut permuted: Vec<String> = ds
            .subject_assignments
            .values()
            .rev()
            .map(|row| row[0].clone())
            .collect();
        forward.sort();
        permuted.sort();
        assert_eq!(forward, permuted);
    }
}
