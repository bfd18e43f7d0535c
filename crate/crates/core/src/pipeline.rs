//! End-to-end flows shared by the CLI and the HTTP service, so both surfaces
//! produce identical archives for identical inputs.

use serde_json::Value;

use crate::artifacts::{
    package_zip, plan_tuples, planned_decisions, write_access_data, write_acm, write_output_json,
    ArtifactsError, OutputBundle, TuplePlan, ValueEncoding, DEFAULT_MAX_ACM_TUPLES,
};
use crate::attestation::{build_report, render_attestation, AttestationError, AttestationReport};
use crate::dataset::{assign_attribute_values, generate_names, GeneratorError};
use crate::policy::{build_match_index, generate_rules, PolicyError};
use crate::sketch::backend::BackendError;
use crate::sketch::{process_sketch_archive, SketchEntry, SketchError, SketchPipelineConfig, SpecFragment};
use crate::spec::{serialize_spec, validate_spec, GenerationSpec, SpecError, Violation};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("specification invalid ({} violation(s))", .0.len())]
    InvalidSpec(Vec<Violation>),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("merge conflict: {0}")]
    MergeConflict(String),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Artifacts(#[from] ArtifactsError),
    #[error(transparent)]
    Attestation(#[from] AttestationError),
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse classification used for exit codes and HTTP statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// The input specification (or input files) are invalid.
    Spec,
    /// Generation could not proceed (rule space, matrix size, samplers).
    Generation,
    /// The configured LLM backend failed.
    Backend,
    /// Filesystem / IO trouble.
    Io,
}

impl PipelineError {
    pub fn class(&self) -> ErrorClass {
        match self {
            PipelineError::InvalidSpec(_)
            | PipelineError::Spec(_)
            | PipelineError::MergeConflict(_) => ErrorClass::Spec,
            PipelineError::Artifacts(ArtifactsError::Io(_)) | PipelineError::Io(_) => ErrorClass::Io,
            PipelineError::Artifacts(ArtifactsError::MalformedOutput { .. })
            | PipelineError::Artifacts(ArtifactsError::Rule { .. }) => ErrorClass::Spec,
            PipelineError::Attestation(AttestationError::Inconsistent { .. }) => ErrorClass::Spec,
            PipelineError::Backend(_) | PipelineError::Sketch(SketchError::Backend(_)) => {
                ErrorClass::Backend
            }
            PipelineError::Sketch(_) => ErrorClass::Spec,
            PipelineError::Generator(_)
            | PipelineError::Policy(_)
            | PipelineError::Artifacts(_)
            | PipelineError::Attestation(_) => ErrorClass::Generation,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::InvalidSpec(_) => "InvalidSpec",
            PipelineError::Spec(SpecError::Syntax(_)) => "SyntaxError",
            PipelineError::Spec(SpecError::Schema { .. }) => "SchemaError",
            PipelineError::MergeConflict(_) => "MergeConflict",
            PipelineError::Generator(_) => "GenerationError",
            PipelineError::Policy(PolicyError::RuleSpaceExhausted { .. }) => "RuleSpaceExhausted",
            PipelineError::Policy(_) => "PolicyError",
            PipelineError::Artifacts(ArtifactsError::AcmTooLarge { .. }) => "AcmTooLarge",
            PipelineError::Artifacts(_) => "ArtifactsError",
            PipelineError::Attestation(_) => "AttestationError",
            PipelineError::Sketch(_) => "SketchError",
            PipelineError::Backend(_) => "BackendError",
            PipelineError::Io(_) => "IoError",
        }
    }

    /// Machine-readable payload: `{"error": {kind, message, ...}}`.
    pub fn to_json(&self) -> Value {
        let mut inner = serde_json::Map::new();
        inner.insert("kind".into(), self.kind().into());
        inner.insert("message".into(), self.to_string().into());
        match self {
            PipelineError::InvalidSpec(violations) => {
                inner.insert(
                    "violations".into(),
                    serde_json::to_value(violations).expect("violations serialize"),
                );
            }
            PipelineError::Spec(SpecError::Schema { path, .. }) => {
                inner.insert("path".into(), path.clone().into());
            }
            PipelineError::Artifacts(ArtifactsError::AcmTooLarge { .. }) => {
                inner.insert(
                    "hint".into(),
                    "re-run with tuple sampling (--sample-tuples K) or without matrix output (--no-acm)"
                        .into(),
                );
            }
            _ => {}
        }
        let mut outer = serde_json::Map::new();
        outer.insert("error".into(), Value::Object(inner));
        Value::Object(outer)
    }
}

/// Options for the generation flow.
#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub seed: u64,
    pub max_acm_tuples: u64,
    pub sample_tuples: Option<u64>,
    pub no_acm: bool,
    pub value_encoding: ValueEncoding,
}

impl GenerateOptions {
    pub fn new(seed: u64) -> Self {
        GenerateOptions {
            seed,
            max_acm_tuples: DEFAULT_MAX_ACM_TUPLES,
            sample_tuples: None,
            no_acm: false,
            value_encoding: ValueEncoding::Names,
        }
    }
}

/// Result of the generation flow: archive bytes plus summary facts.
#[derive(Debug)]
pub struct GenerateOutput {
    pub zip_bytes: Vec<u8>,
    pub tuple_count: u128,
    pub acm_lines: Option<u64>,
    pub report: AttestationReport,
}

/// Full generation: validate, materialize, generate rules, evaluate the
/// matrix, attest, and package the archive.
pub fn run_generate(
    spec: &GenerationSpec,
    options: &GenerateOptions,
) -> Result<GenerateOutput, PipelineError> {
    let mut violations = validate_spec(spec);
    if !options.no_acm && spec.permit_rules_count + spec.deny_rules_count == 0 {
        violations.push(Violation {
            path: "permit_rules_count".into(),
            message: "at least one permit or deny rule is required when matrix output is on"
                .into(),
        });
    }
    if !violations.is_empty() {
        return Err(PipelineError::InvalidSpec(violations));
    }

    let dataset = assign_attribute_values(generate_names(spec), spec, options.seed)?;
    let policy = generate_rules(&dataset, spec, options.seed)?;
    let index = build_match_index(&dataset, &policy);
    let tuple_count = index.tuple_count();
    let plan = plan_tuples(
        tuple_count,
        options.max_acm_tuples,
        options.sample_tuples,
        options.no_acm,
        options.seed,
    )?;

    let mut members: Vec<(String, Vec<u8>)> = Vec::new();
    members.push(("input.json".into(), serialize_spec(spec).into_bytes()));
    members.push((
        "output.json".into(),
        write_output_json(&dataset, &policy).into_bytes(),
    ));

    let mut acm_lines = None;
    let mut sampled = None;
    if let Some(plan) = &plan {
        sampled = plan.sample_size();
        let mut acm = Vec::new();
        let lines = write_acm(&dataset, planned_decisions(&index, plan), sampled, &mut acm)?;
        acm_lines = Some(lines);
        members.push(("ACM.txt".into(), acm));
        let mut data = Vec::new();
        write_access_data(
            &dataset,
            planned_decisions(&index, plan),
            options.value_encoding,
            &mut data,
        )?;
        members.push(("access_data.txt".into(), data));
    }

    let report = build_report(&dataset, spec)?;
    for (name, content) in render_attestation(&report) {
        members.push((format!("attestation/{name}"), content.into_bytes()));
    }
    members.push((
        "attestation/report.json".into(),
        serde_json::to_vec_pretty(&report).expect("report serializes"),
    ));

    let bundle = OutputBundle {
        members,
        seed: options.seed,
        tuple_count: Some(tuple_count),
        sampled_tuples: sampled,
    };
    Ok(GenerateOutput {
        zip_bytes: package_zip(&bundle)?,
        tuple_count,
        acm_lines,
        report,
    })
}

/// Re-evaluates an already generated system into fresh `ACM.txt` bytes.
/// Used to verify that a serialized system reproduces its archive.
pub fn reevaluate_acm(
    dataset: &crate::dataset::AbacDataset,
    policy: &crate::policy::Policy,
    sampled: Option<u64>,
    seed: u64,
    cap: u64,
) -> Result<Vec<u8>, PipelineError> {
    let index = build_match_index(dataset, policy);
    let plan = plan_tuples(index.tuple_count(), cap, sampled, false, seed)?
        .unwrap_or(TuplePlan::Full);
    let mut out = Vec::new();
    write_acm(dataset, planned_decisions(&index, &plan), plan.sample_size(), &mut out)?;
    Ok(out)
}

/// The companion minimal config of the sketch flow: sizes and rule counts
/// only.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimalSpec {
    pub subject_size: u64,
    pub object_size: u64,
    pub environment_size: u64,
    pub permit_rules_count: u64,
    pub deny_rules_count: u64,
}

const FRAGMENT_KEYS: [&str; 9] = [
    "subject_attributes_count",
    "object_attributes_count",
    "environment_attributes_count",
    "subject_attributes_values",
    "object_attributes_values",
    "environment_attributes_values",
    "subject_distributions",
    "object_distributions",
    "environment_distributions",
];

/// Parses the minimal JSON. Any attribute-shape or distribution key present
/// is a merge conflict: those come from the sketches.
pub fn parse_minimal_spec(bytes: &[u8]) -> Result<MinimalSpec, PipelineError> {
    let value: Value = serde_json::from_slice(bytes)
        .map_err(|e| PipelineError::Spec(SpecError::Syntax(e.to_string())))?;
    let obj = value.as_object().ok_or_else(|| {
        PipelineError::Spec(SpecError::Schema {
            path: String::new(),
            message: "top-level value must be an object".into(),
        })
    })?;
    for key in obj.keys() {
        if FRAGMENT_KEYS.contains(&key.as_str()) {
            return Err(PipelineError::MergeConflict(format!(
                "minimal config already specifies {key}; remove it or drop the sketches"
            )));
        }
    }
    let allowed = [
        "subject_size",
        "object_size",
        "environment_size",
        "permit_rules_count",
        "deny_rules_count",
        "accepted_rules_count",
        "denied_rules_count",
    ];
    for key in obj.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(PipelineError::Spec(SpecError::Schema {
                path: key.clone(),
                message: "unknown key".into(),
            }));
        }
    }
    let get = |canonical: &str, alias: Option<&str>| -> Result<u64, PipelineError> {
        let slot = obj
            .get(canonical)
            .or_else(|| alias.and_then(|a| obj.get(a)));
        match slot {
            Some(v) => v.as_u64().ok_or_else(|| {
                PipelineError::Spec(SpecError::Schema {
                    path: canonical.into(),
                    message: "expected a non-negative integer".into(),
                })
            }),
            None => Err(PipelineError::Spec(SpecError::Schema {
                path: canonical.into(),
                message: "missing key".into(),
            })),
        }
    };
    Ok(MinimalSpec {
        subject_size: get("subject_size", None)?,
        object_size: get("object_size", None)?,
        environment_size: get("environment_size", None)?,
        permit_rules_count: get("permit_rules_count", Some("accepted_rules_count"))?,
        deny_rules_count: get("deny_rules_count", Some("denied_rules_count"))?,
    })
}

/// Combines the minimal config with a sketch fragment into a full spec.
pub fn merge_fragment(minimal: &MinimalSpec, fragment: &SpecFragment) -> GenerationSpec {
    GenerationSpec {
        subject_size: minimal.subject_size,
        object_size: minimal.object_size,
        environment_size: minimal.environment_size,
        permit_rules_count: minimal.permit_rules_count,
        deny_rules_count: minimal.deny_rules_count,
        subject_attributes_count: fragment.subject_values.len(),
        object_attributes_count: fragment.object_values.len(),
        environment_attributes_count: fragment.environment_values.len(),
        subject_attributes_values: fragment.subject_values.clone(),
        object_attributes_values: fragment.object_values.clone(),
        environment_attributes_values: fragment.environment_values.clone(),
        subject_distributions: fragment.subject_distributions.clone(),
        object_distributions: fragment.object_distributions.clone(),
        environment_distributions: fragment.environment_distributions.clone(),
    }
}

/// Result of the extraction flow.
#[derive(Debug)]
pub struct ExtractOutput {
    pub merged: GenerationSpec,
    pub merged_json: String,
    pub comparisons: Vec<(String, Vec<u8>)>,
    pub log: Vec<String>,
    pub failures: Vec<(String, String)>,
}

/// Sketch extraction: process every image, aggregate, and merge over the
/// minimal config. Per-image failures are collected, not fatal.
pub fn run_extract(
    minimal_json: &[u8],
    entries: Vec<SketchEntry>,
    backend: &dyn crate::sketch::backend::LlmBackend,
    config: &SketchPipelineConfig,
) -> Result<ExtractOutput, PipelineError> {
    let minimal = parse_minimal_spec(minimal_json)?;
    let outcome = process_sketch_archive(entries, backend, config)?;
    let merged = merge_fragment(&minimal, &outcome.fragment);
    let violations = validate_spec(&merged);
    if !violations.is_empty() {
        return Err(PipelineError::InvalidSpec(violations));
    }
    Ok(ExtractOutput {
        merged_json: serialize_spec(&merged),
        merged,
        comparisons: outcome.comparisons,
        log: outcome.log,
        failures: outcome.failures,
    })
}
