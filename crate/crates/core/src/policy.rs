//! Policy generation and access-control-matrix evaluation.
//!
//! Rules are full conjunctions: one `attribute = value` condition for every
//! subject, object, and environment attribute, in SA..OA..EA order. Permit
//! rules combine disjunctively; any matching deny rule wins
//! (deny-overrides-permit).
//!
//! Evaluation is factored through an [`EntityMatchIndex`]: for each rule, the
//! sets of subjects, objects, and environments satisfying its per-section
//! conditions, stored as bit vectors. A tuple (s, o, e) matches a rule iff
//! all three membership bits are set, so the full matrix streams out of the
//! index without re-checking conditions per tuple. A naive per-tuple
//! evaluator is kept alongside as the correctness oracle.

use indexmap::IndexMap;
use std::collections::HashSet;

use crate::dataset::{AbacDataset, EntityKind};
use crate::sampling::RngStream;
use crate::spec::GenerationSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    Permit,
    Deny,
}

/// A full-conjunction rule: one condition per attribute, SA..OA..EA order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Rule {
    pub conditions: Vec<(String, String)>,
    pub effect: Effect,
}

/// The permit and deny rule lists.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Policy {
    pub permit: Vec<Rule>,
    pub deny: Vec<Rule>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PolicyError {
    #[error(
        "cannot produce {requested} distinct rules: the rule space has only {space} \
         combinations (or the retry budget of {budget} resamples was exhausted)"
    )]
    RuleSpaceExhausted {
        requested: u64,
        space: u128,
        budget: u64,
    },
    #[error("rule syntax error: {0}")]
    RuleSyntax(String),
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("value {value:?} is not in the domain of attribute {attribute:?}")]
    ValueNotInDomain { attribute: String, value: String },
}

/// Stream id for the rule-generation random stream.
const RULE_STREAM_ID: &str = "rules";

/// Generates the requested permit and deny rules, value choices uniform over
/// each attribute's value set, all rules distinct within and across lists.
///
/// Collisions are resampled with a budget of 10x the requested rule count;
/// an impossible request (more rules than the rule space holds) fails
/// immediately.
pub fn generate_rules(
    dataset: &AbacDataset,
    spec: &GenerationSpec,
    master_seed: u64,
) -> Result<Policy, PolicyError> {
    let requested = spec.permit_rules_count + spec.deny_rules_count;
    let space = rule_space_size(dataset);
    let budget = requested.saturating_mul(10);
    if u128::from(requested) > space {
        return Err(PolicyError::RuleSpaceExhausted {
            requested,
            space,
            budget,
        });
    }

    let mut rng = RngStream::new(master_seed, RULE_STREAM_ID);
    let mut seen: HashSet<Vec<(String, String)>> = HashSet::new();
    let mut policy = Policy::default();
    let mut resamples = 0u64;
    for rule_idx in 0..requested {
        let effect = if rule_idx < spec.permit_rules_count {
            Effect::Permit
        } else {
            Effect::Deny
        };
        loop {
            let conditions = draw_conditions(dataset, &mut rng);
            if seen.insert(conditions.clone()) {
                let rule = Rule { conditions, effect };
                match effect {
                    Effect::Permit => policy.permit.push(rule),
                    Effect::Deny => policy.deny.push(rule),
                }
                break;
            }
            resamples += 1;
            if resamples > budget {
                return Err(PolicyError::RuleSpaceExhausted {
                    requested,
                    space,
                    budget,
                });
            }
        }
    }
    Ok(policy)
}

fn rule_space_size(dataset: &AbacDataset) -> u128 {
    let mut space: u128 = 1;
    for kind in EntityKind::ALL {
        for values in dataset.attribute_values(kind).values() {
            space = space.saturating_mul(values.len() as u128);
        }
    }
    space
}

fn draw_conditions(dataset: &AbacDataset, rng: &mut RngStream) -> Vec<(String, String)> {
    let mut conditions = Vec::new();
    for kind in EntityKind::ALL {
        for attr in dataset.attributes(kind) {
            let values = &dataset.attribute_values(kind)[attr];
            let pick = rng.next_u128_below(values.len() as u128) as usize;
            conditions.push((attr.clone(), values[pick].clone()));
        }
    }
    conditions
}

/// Renders a rule in its text form: `SA_1=SA_1_2, SA_2=SA_2_4, ...`.
pub fn render_rule(rule: &Rule) -> String {
    rule.conditions
        .iter()
        .map(|(attr, value)| format!("{attr}={value}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Parses a rule string back into a [`Rule`]; the inverse of [`render_rule`].
///
/// Conditions must cover every attribute exactly once in SA..OA..EA order;
/// whitespace around commas is tolerated. The effect is supplied by the
/// caller (rule strings carry no effect of their own).
pub fn parse_rule(text: &str, dataset: &AbacDataset, effect: Effect) -> Result<Rule, PolicyError> {
    let expected: Vec<&String> = EntityKind::ALL
        .iter()
        .flat_map(|&kind| dataset.attributes(kind).iter())
        .collect();
    let parts: Vec<&str> = if text.trim().is_empty() {
        Vec::new()
    } else {
        text.split(',').map(str::trim).collect()
    };
    if parts.len() != expected.len() {
        return Err(PolicyError::RuleSyntax(format!(
            "expected {} conditions, found {}",
            expected.len(),
            parts.len()
        )));
    }
    let mut conditions = Vec::with_capacity(parts.len());
    for (part, expected_attr) in parts.iter().zip(&expected) {
        let (attr, value) = part.split_once('=').ok_or_else(|| {
            PolicyError::RuleSyntax(format!("condition {part:?} is not ATTR=VALUE"))
        })?;
        let attr = attr.trim();
        let value = value.trim();
        let domain = EntityKind::ALL
            .iter()
            .find_map(|&kind| dataset.attribute_values(kind).get(attr));
        let domain = match domain {
            Some(d) => d,
            None => return Err(PolicyError::UnknownAttribute(attr.to_string())),
        };
        if attr != expected_attr.as_str() {
            return Err(PolicyError::RuleSyntax(format!(
                "expected condition for {expected_attr}, found {attr}"
            )));
        }
        if !domain.iter().any(|v| v == value) {
            return Err(PolicyError::ValueNotInDomain {
                attribute: attr.to_string(),
                value: value.to_string(),
            });
        }
        conditions.push((attr.to_string(), value.to_string()));
    }
    Ok(Rule { conditions, effect })
}

/// Fixed-length bit vector over entity indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityBitset {
    words: Vec<u64>,
    len: usize,
}

impl EntityBitset {
    pub fn empty(len: usize) -> Self {
        EntityBitset {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn full(len: usize) -> Self {
        let mut set = EntityBitset {
            words: vec![u64::MAX; len.div_ceil(64)],
            len,
        };
        set.trim();
        set
    }

    fn trim(&mut self) {
        let tail = self.len % 64;
        if tail != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn insert(&mut self, index: usize) {
        debug_assert!(index < self.len);
        self.words[index / 64] |= 1u64 << (index % 64);
    }

    pub fn contains(&self, index: usize) -> bool {
        debug_assert!(index < self.len);
        self.words[index / 64] >> (index % 64) & 1 == 1
    }

    pub fn intersect_with(&mut self, other: &EntityBitset) {
        debug_assert_eq!(self.len, other.len);
        for (w, o) in self.words.iter_mut().zip(&other.words) {
            *w &= o;
        }
    }

    pub fn union_with(&mut self, other: &EntityBitset) {
        debug_assert_eq!(self.len, other.len);
        for (w, o) in self.words.iter_mut().zip(&other.words) {
            *w |= o;
        }
    }

    pub fn clear(&mut self) {
        self.words.fill(0);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }
}

/// Per-rule entity match sets: which subjects, objects, and environments
/// satisfy the rule's respective condition sections.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleMatch {
    pub subjects: EntityBitset,
    pub objects: EntityBitset,
    pub environments: EntityBitset,
}

impl RuleMatch {
    pub fn matches(&self, s: usize, o: usize, e: usize) -> bool {
        self.subjects.contains(s) && self.objects.contains(o) && self.environments.contains(e)
    }
}

/// Precomputed match sets for every rule of a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityMatchIndex {
    pub permit: Vec<RuleMatch>,
    pub deny: Vec<RuleMatch>,
    dims: (usize, usize, usize),
}

impl EntityMatchIndex {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    /// Tuple count of the full matrix.
    pub fn tuple_count(&self) -> u128 {
        self.dims.0 as u128 * self.dims.1 as u128 * self.dims.2 as u128
    }

    /// Decision for a single tuple through the index.
    pub fn decide(&self, s: usize, o: usize, e: usize) -> bool {
        self.permit.iter().any(|r| r.matches(s, o, e))
            && !self.deny.iter().any(|r| r.matches(s, o, e))
    }
}

/// Builds the match index by intersecting per-attribute inverted value sets.
///
/// For each attribute, a value -> entity bitset map is built once by a single
/// pass over the assignments; each rule's section set is then the
/// intersection of its condition bitsets.
pub fn build_match_index(dataset: &AbacDataset, policy: &Policy) -> EntityMatchIndex {
    let inverted: Vec<IndexMap<&str, IndexMap<&str, EntityBitset>>> = EntityKind::ALL
        .iter()
        .map(|&kind| invert_assignments(dataset, kind))
        .collect();
    let dims = (
        dataset.subjects.len(),
        dataset.objects.len(),
        dataset.environments.len(),
    );
    let build = |rule: &Rule| -> RuleMatch {
        let sections = EntityKind::ALL.map(|kind| {
            let population = dataset.entities(kind).len();
            let mut section = EntityBitset::full(population);
            for (attr, value) in &rule.conditions {
                let Some(value_sets) = inverted[kind_ordinal(kind)].get(attr.as_str()) else {
                    continue; // condition belongs to another section
                };
                match value_sets.get(value.as_str()) {
                    Some(set) => section.intersect_with(set),
                    // Value assigned to no entity: the section is empty.
                    None => section = EntityBitset::empty(population),
                }
            }
            section
        });
        let [subjects, objects, environments] = sections;
        RuleMatch {
            subjects,
            objects,
            environments,
        }
    };
    EntityMatchIndex {
        permit: policy.permit.iter().map(build).collect(),
        deny: policy.deny.iter().map(build).collect(),
        dims,
    }
}

fn kind_ordinal(kind: EntityKind) -> usize {
    match kind {
        EntityKind::Subject => 0,
        EntityKind::Object => 1,
        EntityKind::Environment => 2,
    }
}

fn invert_assignments(
    dataset: &AbacDataset,
    kind: EntityKind,
) -> IndexMap<&str, IndexMap<&str, EntityBitset>> {
    let population = dataset.entities(kind).len();
    let attributes = dataset.attributes(kind);
    let mut inverted: IndexMap<&str, IndexMap<&str, EntityBitset>> = attributes
        .iter()
        .map(|attr| (attr.as_str(), IndexMap::new()))
        .collect();
    for (entity_idx, row) in dataset.assignments(kind).values().enumerate() {
        for (attr_idx, value) in row.iter().enumerate() {
            let attr = attributes[attr_idx].as_str();
            inverted[attr]
                .entry(value.as_str())
                .or_insert_with(|| EntityBitset::empty(population))
                .insert(entity_idx);
        }
    }
    inverted
}

/// One access-control-matrix entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AcmDecision {
    pub subject: usize,
    pub object: usize,
    pub environment: usize,
    pub permit: bool,
}

impl AcmDecision {
    pub fn bit(&self) -> u8 {
        self.permit as u8
    }
}

/// Streams the full matrix in lexicographic (s, o, e) order.
///
/// Memory beyond the index is two environment-sized masks: for each (s, o)
/// pair, the union of environment sets of the permit rules matching (s, o)
/// and likewise for deny; each environment then costs two bit probes.
pub fn evaluate_acm(index: &EntityMatchIndex) -> AcmStream<'_> {
    AcmStream::new(index)
}

pub struct AcmStream<'a> {
    index: &'a EntityMatchIndex,
    s: usize,
    o: usize,
    e: usize,
    permit_rules_for_s: Vec<usize>,
    deny_rules_for_s: Vec<usize>,
    permit_envs: EntityBitset,
    deny_envs: EntityBitset,
    exhausted: bool,
}

impl<'a> AcmStream<'a> {
    fn new(index: &'a EntityMatchIndex) -> Self {
        let (n_s, _, n_e) = index.dims();
        let mut stream = AcmStream {
            index,
            s: 0,
            o: 0,
            e: 0,
            permit_rules_for_s: Vec::new(),
            deny_rules_for_s: Vec::new(),
            permit_envs: EntityBitset::empty(n_e),
            deny_envs: EntityBitset::empty(n_e),
            exhausted: index.tuple_count() == 0,
        };
        if !stream.exhausted && n_s > 0 {
            stream.enter_subject();
            stream.enter_object();
        }
        stream
    }

    fn enter_subject(&mut self) {
        self.permit_rules_for_s.clear();
        self.deny_rules_for_s.clear();
        for (i, rule) in self.index.permit.iter().enumerate() {
            if rule.subjects.contains(self.s) {
                self.permit_rules_for_s.push(i);
            }
        }
        for (i, rule) in self.index.deny.iter().enumerate() {
            if rule.subjects.contains(self.s) {
                self.deny_rules_for_s.push(i);
            }
        }
    }

    fn enter_object(&mut self) {
        self.permit_envs.clear();
        for &i in &self.permit_rules_for_s {
            let rule = &self.index.permit[i];
            if rule.objects.contains(self.o) {
                self.permit_envs.union_with(&rule.environments);
            }
        }
        self.deny_envs.clear();
        for &i in &self.deny_rules_for_s {
            let rule = &self.index.deny[i];
            if rule.objects.contains(self.o) {
                self.deny_envs.union_with(&rule.environments);
            }
        }
    }
}

impl Iterator for AcmStream<'_> {
    type Item = AcmDecision;

    fn next(&mut self) -> Option<AcmDecision> {
        if self.exhausted {
            return None;
        }
        let (n_s, n_o, n_e) = self.index.dims();
        let decision = AcmDecision {
            subject: self.s,
            object: self.o,
            environment: self.e,
            permit: self.permit_envs.contains(self.e) && !self.deny_envs.contains(self.e),
        };
        self.e += 1;
        if self.e == n_e {
            self.e = 0;
            self.o += 1;
            if self.o == n_o {
                self.o = 0;
                self.s += 1;
                if self.s == n_s {
                    self.exhausted = true;
                    return Some(decision);
                }
                self.enter_subject();
            }
            self.enter_object();
        }
        Some(decision)
    }
}

/// Direct per-tuple evaluation against the assignment maps; the oracle the
/// indexed evaluator is checked against.
pub fn evaluate_tuple_naive(
    dataset: &AbacDataset,
    policy: &Policy,
    s: usize,
    o: usize,
    e: usize,
) -> bool {
    let any_match = |rules: &[Rule]| {
        rules
            .iter()
            .any(|rule| rule_matches_naive(dataset, rule, s, o, e))
    };
    any_match(&policy.permit) && !any_match(&policy.deny)
}

fn rule_matches_naive(dataset: &AbacDataset, rule: &Rule, s: usize, o: usize, e: usize) -> bool {
    rule.conditions.iter().all(|(attr, value)| {
        for (kind, entity_idx) in [
            (EntityKind::Subject, s),
            (EntityKind::Object, o),
            (EntityKind::Environment, e),
        ] {
            if let Some(pos) = dataset.attributes(kind).iter().position(|a| a == attr) {
                let entity = &dataset.entities(kind)[entity_idx];
                return dataset.assignments(kind)[entity][pos] == *value;
            }
        }
        false
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_names;
    use crate::spec::listing_like_spec;
    use indexmap::IndexMap;

    // The reference dataset: the worked output example for the
    // listing-like spec, with its permit and deny rule.
    pub(crate) fn reference_dataset() -> (AbacDataset, Policy) {
        let mut ds = generate_names(&listing_like_spec());
        let set =
            |map: &mut IndexMap<String, Vec<String>>, key: &str, row: &[&str]| {
                map.insert(key.into(), row.iter().map(|s| s.to_string()).collect());
            };
        set(&mut ds.subject_assignments, "S_1", &["SA_1_2", "SA_2_3"]);
        set(&mut ds.subject_assignments, "S_2", &["SA_1_2", "SA_2_4"]);
        set(&mut ds.subject_assignments, "S_3", &["SA_1_1", "SA_2_3"]);
        set(&mut ds.object_assignments, "O_1", &["OA_1_2", "OA_2_1"]);
        set(&mut ds.object_assignments, "O_2", &["OA_1_1", "OA_2_1"]);
        set(&mut ds.object_assignments, "O_3", &["OA_1_1", "OA_2_1"]);
        set(&mut ds.environment_assignments, "E_1", &["EA_1_2"]);
        set(&mut ds.environment_assignments, "E_2", &["EA_1_2"]);
        let permit = parse_rule(
            "SA_1=SA_1_2, SA_2=SA_2_4, OA_1=OA_1_1, OA_2=OA_2_1, EA_1=EA_1_2",
            &ds,
            Effect::Permit,
        )
        .unwrap();
        let deny = parse_rule(
            "SA_1=SA_1_1, SA_2=SA_2_3, OA_1=OA_1_1, OA_2=OA_2_1, EA_1=EA_1_2",
            &ds,
            Effect::Deny,
        )
        .unwrap();
        (
            ds,
            Policy {
                permit: vec![permit],
                deny: vec![deny],
            },
        )
    }

    fn entity_index(names: &[String], name: &str) -> usize {
        names.iter().position(|n| n == name).unwrap()
    }

    #[test]
    fn naive_decisions_on_reference_dataset() {
        let (ds, policy) = reference_dataset();
        let s = |n| entity_index(&ds.subjects, n);
        let o = |n| entity_index(&ds.objects, n);
        let e = |n| entity_index(&ds.environments, n);
        // S_2 satisfies the permit rule and not the deny rule.
        assert!(evaluate_tuple_naive(&ds, &policy, s("S_2"), o("O_2"), e("E_1")));
        // S_3 completes the deny match.
        assert!(!evaluate_tuple_naive(&ds, &policy, s("S_3"), o("O_2"), e("E_1")));
        // S_1 matches neither rule fully.
        assert!(!evaluate_tuple_naive(&ds, &policy, s("S_1"), o("O_1"), e("E_2")));
    }

    #[test]
    fn deny_overrides_permit() {
        let (ds, mut policy) = reference_dataset();
        // Make the deny rule coincide with the permit rule: the permit-matching
        // tuple must flip to deny.
        policy.deny = vec![Rule {
            conditions: policy.permit[0].conditions.clone(),
            effect: Effect::Deny,
        }];
        let s = entity_index(&ds.subjects, "S_2");
        let o = entity_index(&ds.objects, "O_2");
        let e = entity_index(&ds.environments, "E_1");
        assert!(!evaluate_tuple_naive(&ds, &policy, s, o, e));
        let index = build_match_index(&ds, &policy);
        assert!(!index.decide(s, o, e));
        // Removing the deny rule restores the grant.
        policy.deny.clear();
        assert!(evaluate_tuple_naive(&ds, &policy, s, o, e));
        let index = build_match_index(&ds, &policy);
        assert!(index.decide(s, o, e));
    }

    #[test]
    fn no_permit_rules_means_all_deny() {
        let (ds, mut policy) = reference_dataset();
        policy.permit.clear();
        let index = build_match_index(&ds, &policy);
        assert!(evaluate_acm(&index).all(|d| !d.permit));
    }

    #[test]
    fn match_index_agrees_with_definition() {
        let (ds, policy) = reference_dataset();
        let index = build_match_index(&ds, &policy);
        // Permit rule subject section: SA_1=SA_1_2 and SA_2=SA_2_4 -> S_2 only.
        assert!(!index.permit[0].subjects.contains(0));
        assert!(index.permit[0].subjects.contains(1));
        assert!(!index.permit[0].subjects.contains(2));
        // Deny rule subject section: SA_1=SA_1_1 and SA_2=SA_2_3 -> S_3 only.
        assert_eq!(index.deny[0].subjects.count_ones(), 1);
        assert!(index.deny[0].subjects.contains(2));
        // Environments: EA_1=EA_1_2 matches both.
        assert_eq!(index.permit[0].environments.count_ones(), 2);
    }

    #[test]
    fn rule_with_unassigned_value_matches_nothing() {
        let (ds, _) = reference_dataset();
        // OA_1=OA_1_2 is only held by O_1; SA_2=SA_2_1 is held by nobody.
        let rule = parse_rule(
            "SA_1=SA_1_2, SA_2=SA_2_1, OA_1=OA_1_1, OA_2=OA_2_1, EA_1=EA_1_1",
            &ds,
            Effect::Permit,
        )
        .unwrap();
        let policy = Policy {
            permit: vec![rule],
            deny: vec![],
        };
        let index = build_match_index(&ds, &policy);
        assert_eq!(index.permit[0].subjects.count_ones(), 0);
        // EA_1_1 assigned to no environment either.
        assert_eq!(index.permit[0].environments.count_ones(), 0);
    }

    #[test]
    fn acm_stream_matches_naive_on_reference() {
        let (ds, policy) = reference_dataset();
        let index = build_match_index(&ds, &policy);
        let mut count = 0;
        for d in evaluate_acm(&index) {
            let want = evaluate_tuple_naive(&ds, &policy, d.subject, d.object, d.environment);
            assert_eq!(d.permit, want, "tuple {:?}", (d.subject, d.object, d.environment));
            count += 1;
        }
        assert_eq!(count, 18);
    }

    #[test]
    fn acm_stream_is_lexicographic() {
        let (ds, policy) = reference_dataset();
        let index = build_match_index(&ds, &policy);
        let order: Vec<(usize, usize, usize)> = evaluate_acm(&index)
            .map(|d| (d.subject, d.object, d.environment))
            .collect();
        let mut expected = Vec::new();
        for s in 0..3 {
            for o in 0..3 {
                for e in 0..2 {
                    expected.push((s, o, e));
                }
            }
        }
        assert_eq!(order, expected);
    }

    #[test]
    fn generate_rules_shapes_and_determinism() {
        let spec = listing_like_spec();
        let ds = crate::dataset::assign_attribute_values(generate_names(&spec), &spec, 42).unwrap();
        let policy = generate_rules(&ds, &spec, 42).unwrap();
        assert_eq!(policy.permit.len(), 1);
        assert_eq!(policy.deny.len(), 1);
        for rule in policy.permit.iter().chain(&policy.deny) {
            assert_eq!(rule.conditions.len(), 5);
            let attrs: Vec<&str> = rule.conditions.iter().map(|(a, _)| a.as_str()).collect();
            assert_eq!(attrs, vec!["SA_1", "SA_2", "OA_1", "OA_2", "EA_1"]);
        }
        assert_ne!(policy.permit[0].conditions, policy.deny[0].conditions);
        let policy2 = generate_rules(&ds, &spec, 42).unwrap();
        assert_eq!(policy, policy2);
    }

    #[test]
    fn generate_rules_zero_permit() {
        let mut spec = listing_like_spec();
        spec.permit_rules_count = 0;
        let ds = crate::dataset::assign_attribute_values(generate_names(&spec), &spec, 1).unwrap();
        let policy = generate_rules(&ds, &spec, 1).unwrap();
        assert!(policy.permit.is_empty());
        assert_eq!(policy.deny.len(), 1);
        let index = build_match_index(&ds, &policy);
        assert!(evaluate_acm(&index).all(|d| !d.permit));
    }

    #[test]
    fn generate_rules_exhaustion_by_pigeonhole() {
        let mut spec = listing_like_spec();
        spec.subject_attributes_values = vec![1, 1];
        spec.object_attributes_values = vec![1, 1];
        spec.environment_attributes_values = vec![1];
        let ds = crate::dataset::assign_attribute_values(generate_names(&spec), &spec, 1).unwrap();
        let err = generate_rules(&ds, &spec, 1).unwrap_err();
        assert!(matches!(err, PolicyError::RuleSpaceExhausted { space: 1, .. }));
    }

    #[test]
    fn parse_rule_rejects_bad_input() {
        let (ds, _) = reference_dataset();
        let err = parse_rule(
            "SA_1=SA_9_1, SA_2=SA_2_4, OA_1=OA_1_1, OA_2=OA_2_1, EA_1=EA_1_2",
            &ds,
            Effect::Permit,
        )
        .unwrap_err();
        assert_eq!(
            err,
            PolicyError::ValueNotInDomain {
                attribute: "SA_1".into(),
                value: "SA_9_1".into()
            }
        );
        let err = parse_rule(
            "SA_9=SA_1_1, SA_2=SA_2_4, OA_1=OA_1_1, OA_2=OA_2_1, EA_1=EA_1_2",
            &ds,
            Effect::Permit,
        )
        .unwrap_err();
        assert_eq!(err, PolicyError::UnknownAttribute("SA_9".into()));
        let err = parse_rule("SA_1=SA_1_1", &ds, Effect::Permit).unwrap_err();
        assert!(matches!(err, PolicyError::RuleSyntax(_)));
    }

    #[test]
    fn parse_rule_tolerates_whitespace() {
        let (ds, policy) = reference_dataset();
        let loose = "SA_1=SA_1_2 ,SA_2=SA_2_4,   OA_1=OA_1_1 , OA_2=OA_2_1 ,EA_1=EA_1_2";
        let rule = parse_rule(loose, &ds, Effect::Permit).unwrap();
        assert_eq!(rule, policy.permit[0]);
        assert_eq!(
            render_rule(&rule),
            "SA_1=SA_1_2, SA_2=SA_2_4, OA_1=OA_1_1, OA_2=OA_2_1, EA_1=EA_1_2"
        );
    }

    #[test]
    fn bitset_basics() {
        let mut set = EntityBitset::empty(70);
        set.insert(0);
        set.insert(69);
        assert!(set.contains(0) && set.contains(69) && !set.contains(1));
        assert_eq!(set.count_ones(), 2);
        let full = EntityBitset::full(70);
        assert_eq!(full.count_ones(), 70);
        let mut inter = full.clone();
        inter.intersect_with(&set);
        assert_eq!(inter, set);
    }
}
