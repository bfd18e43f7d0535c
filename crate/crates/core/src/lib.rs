//! Synthetic ABAC dataset generation.
//!
//! From a JSON generation spec (or hand-drawn distribution sketches
//! interpreted through a pluggable vision-LLM backend), this crate produces:
//!
//! * entity, attribute, and value names with per-entity attribute-value
//!   assignments drawn from user-specified distributions (uniform,
//!   truncated normal, normalized Poisson);
//! * permit and deny policies of full-conjunction rules;
//! * the access control matrix under deny-overrides semantics, evaluated
//!   through a bitset rule-match index with a naive oracle alongside;
//! * distribution-attestation reports (expected vs actual counts, error
//!   metrics, SVG charts, CSV tables);
//! * a deterministic zip archive of all output files.
//!
//! Everything is seedable: one 64-bit master seed fans out into independent
//! named streams, so identical inputs and seed reproduce archives
//! byte-for-byte.

pub mod artifacts;
pub mod attestation;
pub mod dataset;
pub mod normal;
pub mod pipeline;
pub mod policy;
pub mod sampling;
pub mod sketch;
pub mod spec;

pub use artifacts::{package_zip, write_output_json, OutputBundle, ValueEncoding};
pub use attestation::{build_report, AttestationReport};
pub use dataset::{assign_attribute_values, generate_names, AbacDataset, EntityKind};
pub use pipeline::{
    run_extract, run_generate, ErrorClass, ExtractOutput, GenerateOptions, GenerateOutput,
    PipelineError,
};
pub use policy::{
    build_match_index, evaluate_acm, evaluate_tuple_naive, generate_rules, AcmDecision, Effect,
    EntityMatchIndex, Policy, Rule,
};
pub use sampling::{BinMasses, RngStream};
pub use sketch::backend::{BackendRequest, HttpLlmBackend, LlmBackend, MockLlmBackend};
pub use sketch::{SketchEntry, SketchPipelineConfig};
pub use spec::{parse_spec, serialize_spec, validate_spec, DistributionSpec, GenerationSpec};
