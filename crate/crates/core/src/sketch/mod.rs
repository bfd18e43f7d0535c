//! The hand-drawn sketch pipeline: from an archive (zip or directory) of
//! distribution sketches to a generation-spec fragment, via a pluggable
//! vision-LLM backend with iterative parameter refinement.
//!
//! Per image the pipeline sanitizes the bytes, asks the backend for the
//! attribute identity drawn in the sketch (never the filename), classifies
//! the distribution family with type-specific parameters, renders an
//! interpreted plot, and iteratively refines the parameters against a
//! side-by-side comparison until they stabilize or the round limit is hit.
//! Extractions are then aggregated into per-type distribution and
//! value-count lists, enforcing contiguous attribute indices.

pub mod backend;
pub mod prompts;
pub mod render;

use std::io::Read;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde_json::Value;

use crate::dataset::EntityKind;
use crate::spec::DistributionSpec;
use backend::{BackendError, BackendRequest, LlmBackend, RequestPart};
use prompts::PromptTemplates;
use render::{compose_comparison, render_interpretation, PLOT_HEIGHT, PLOT_WIDTH};

/// Default maximum accepted image size.
pub const DEFAULT_MAX_IMAGE_BYTES: usize = 8 * 1024 * 1024;
/// Default maximum refinement rounds.
pub const DEFAULT_MAX_REFINE: u32 = 3;
/// Default number of images processed concurrently.
pub const DEFAULT_PARALLELISM: usize = 4;
/// Relative tolerance below which refined parameters count as unchanged.
const CONVERGENCE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum SketchError {
    #[error("declared media type {declared:?} does not match the image content")]
    MediaTypeMismatch { declared: String },
    #[error("unsupported media type {0:?}; only image/png and image/jpeg are accepted")]
    UnsupportedType(String),
    #[error("image is {size} bytes, above the limit of {limit}")]
    TooLarge { size: usize, limit: usize },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("backend reply unusable: {0}")]
    UnparseableResponse(String),
    #[error("backend found no attribute identifier in the sketch")]
    IdentityMissing,
    #[error("extracted parameters out of range: {0}")]
    ParamOutOfRange(String),
    #[error("two sketches carry the same identity {0}")]
    DuplicateIdentity(String),
    #[error("{kind} attribute indices are not contiguous from 1: found {found:?}")]
    NonContiguousIndices { kind: EntityKind, found: Vec<usize> },
    #[error("no valid image survived sanitization")]
    ArchiveEmpty,
    #[error("cannot read sketch source: {0}")]
    Archive(String),
    #[error("image decode failed: {0}")]
    Image(String),
}

/// One input image: name (for logs only), declared media type, raw bytes.
#[derive(Debug, Clone)]
pub struct SketchEntry {
    pub name: String,
    pub declared_media_type: String,
    pub bytes: Vec<u8>,
}

/// A sanitized image ready for backend calls.
#[derive(Debug, Clone)]
pub struct SanitizedImage {
    pub media_type: String,
    pub bytes: Vec<u8>,
}

/// Distribution family plus its extracted parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum FamilyParams {
    Normal { mu: f64, sigma: f64 },
    Poisson { lambda: f64 },
    Uniform { low: f64, high: f64 },
}

impl FamilyParams {
    pub fn family(&self) -> &'static str {
        match self {
            FamilyParams::Normal { .. } => "Normal",
            FamilyParams::Poisson { .. } => "Poisson",
            FamilyParams::Uniform { .. } => "Uniform",
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            FamilyParams::Normal { mu, sigma } => {
                serde_json::json!({"family": "Normal", "mu": mu, "sigma": sigma})
            }
            FamilyParams::Poisson { lambda } => {
                serde_json::json!({"family": "Poisson", "lambda": lambda})
            }
            FamilyParams::Uniform { low, high } => {
                serde_json::json!({"family": "Uniform", "low": low, "high": high})
            }
        }
    }

    /// The distribution the aggregated config will carry. Uniform's range is
    /// validated during extraction but not propagated: the value count read
    /// from the sketch governs.
    pub fn to_distribution(&self) -> DistributionSpec {
        match self {
            FamilyParams::Normal { mu, sigma } => DistributionSpec::Normal {
                mean: *mu,
                variance: sigma * sigma,
            },
            FamilyParams::Poisson { lambda } => DistributionSpec::Poisson { lambda: *lambda },
            FamilyParams::Uniform { .. } => DistributionSpec::Uniform,
        }
    }

    fn close_to(&self, other: &FamilyParams) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= CONVERGENCE_TOLERANCE * a.abs().max(1.0);
        match (self, other) {
            (
                FamilyParams::Normal { mu: m1, sigma: s1 },
                FamilyParams::Normal { mu: m2, sigma: s2 },
            ) => close(*m1, *m2) && close(*s1, *s2),
            (FamilyParams::Poisson { lambda: l1 }, FamilyParams::Poisson { lambda: l2 }) => {
                close(*l1, *l2)
            }
            (
                FamilyParams::Uniform { low: a1, high: b1 },
                FamilyParams::Uniform { low: a2, high: b2 },
            ) => close(*a1, *a2) && close(*b1, *b2),
            _ => false,
        }
    }
}

/// Attribute identity read from the sketch itself.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchIdentity {
    pub kind: EntityKind,
    pub index: usize,
    pub value_count: usize,
    pub x_axis_min: f64,
    pub x_axis_max: f64,
}

impl SketchIdentity {
    pub fn label(&self) -> String {
        format!("{}-{}", self.kind.attribute_prefix(), self.index)
    }
}

/// Everything extracted from one sketch.
#[derive(Debug, Clone)]
pub struct SketchExtraction {
    pub identity: SketchIdentity,
    pub params: FamilyParams,
    /// Refinement calls that returned parameters.
    pub iterations: u32,
    /// Side-by-side comparison documents, one per rendered round.
    pub comparisons: Vec<Vec<u8>>,
    pub warnings: Vec<String>,
}

impl SketchExtraction {
    pub fn final_comparison(&self) -> &[u8] {
        self.comparisons.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Pipeline tuning knobs.
#[derive(Debug, Clone)]
pub struct SketchPipelineConfig {
    pub max_refine: u32,
    pub parallelism: usize,
    pub max_image_bytes: usize,
    pub prompts: PromptTemplates,
}

impl Default for SketchPipelineConfig {
    fn default() -> Self {
        SketchPipelineConfig {
            max_refine: DEFAULT_MAX_REFINE,
            parallelism: DEFAULT_PARALLELISM,
            max_image_bytes: DEFAULT_MAX_IMAGE_BYTES,
            prompts: PromptTemplates::default(),
        }
    }
}

const PNG_MAGIC: [u8; 8] = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a];
const JPEG_MAGIC: [u8; 3] = [0xff, 0xd8, 0xff];

/// Accepts only content whose magic bytes agree with the declared media type
/// and whose size is within the limit.
pub fn sanitize_image(
    bytes: &[u8],
    declared_media_type: &str,
    max_bytes: usize,
) -> Result<SanitizedImage, SketchError> {
    let magic_ok = match declared_media_type {
        "image/png" => bytes.starts_with(&PNG_MAGIC),
        "image/jpeg" => bytes.starts_with(&JPEG_MAGIC),
        other => return Err(SketchError::UnsupportedType(other.to_string())),
    };
    if !magic_ok {
        return Err(SketchError::MediaTypeMismatch {
            declared: declared_media_type.to_string(),
        });
    }
    if bytes.len() > max_bytes {
        return Err(SketchError::TooLarge {
            size: bytes.len(),
            limit: max_bytes,
        });
    }
    Ok(SanitizedImage {
        media_type: declared_media_type.to_string(),
        bytes: bytes.to_vec(),
    })
}

fn request(prompt: &str, images: &[&SanitizedImage]) -> BackendRequest {
    let mut parts = vec![RequestPart::Text(prompt.to_string())];
    for image in images {
        parts.push(RequestPart::Image {
            media_type: image.media_type.clone(),
            bytes: image.bytes.clone(),
        });
    }
    BackendRequest {
        parts,
        json_response: true,
    }
}

fn reply_json(reply: &str) -> Result<Value, SketchError> {
    serde_json::from_str(reply)
        .map_err(|e| SketchError::UnparseableResponse(format!("reply is not JSON: {e}")))
}

/// Asks the backend for the identity drawn in the sketch. Filenames are never
/// consulted.
pub fn read_attribute_identity(
    image: &SanitizedImage,
    backend: &dyn LlmBackend,
    prompts: &PromptTemplates,
) -> Result<SketchIdentity, SketchError> {
    let reply = backend.generate(&request(&prompts.identity, &[image]))?;
    let doc = reply_json(&reply)?;
    let type_field = doc.get("type");
    let kind_str = match type_field {
        None => return Err(SketchError::UnparseableResponse("missing \"type\"".into())),
        Some(Value::Null) => return Err(SketchError::IdentityMissing),
        Some(v) => v
            .as_str()
            .ok_or_else(|| SketchError::UnparseableResponse("\"type\" must be a string".into()))?,
    };
    if kind_str.is_empty() {
        return Err(SketchError::IdentityMissing);
    }
    let kind = EntityKind::from_attribute_prefix(kind_str).ok_or_else(|| {
        SketchError::UnparseableResponse(format!("\"type\" {kind_str:?} is not SA, OA or EA"))
    })?;
    let positive = |key: &str| -> Result<usize, SketchError> {
        doc.get(key)
            .and_then(Value::as_u64)
            .filter(|&v| v >= 1)
            .map(|v| v as usize)
            .ok_or_else(|| {
                SketchError::UnparseableResponse(format!("missing or invalid {key:?}"))
            })
    };
    let index = positive("index")?;
    let value_count = positive("values")?;
    let (x_axis_min, x_axis_max) = match (doc.get("x_axis_min"), doc.get("x_axis_max")) {
        (Some(lo), Some(hi)) => {
            let lo = lo.as_f64().ok_or_else(|| {
                SketchError::UnparseableResponse("x_axis_min must be a number".into())
            })?;
            let hi = hi.as_f64().ok_or_else(|| {
                SketchError::UnparseableResponse("x_axis_max must be a number".into())
            })?;
            if !(hi > lo) {
                return Err(SketchError::UnparseableResponse(
                    "x_axis_max must exceed x_axis_min".into(),
                ));
            }
            (lo, hi)
        }
        // Axis range defaults to the value range when not drawn.
        _ => (0.0, value_count as f64),
    };
    Ok(SketchIdentity {
        kind,
        index,
        value_count,
        x_axis_min,
        x_axis_max,
    })
}

fn parse_family_params(doc: &Value) -> Result<FamilyParams, SketchError> {
    let family = doc
        .get("family")
        .and_then(Value::as_str)
        .ok_or_else(|| SketchError::UnparseableResponse("missing \"family\"".into()))?;
    let number = |key: &str| -> Result<f64, SketchError> {
        doc.get(key)
            .and_then(Value::as_f64)
            .ok_or_else(|| SketchError::UnparseableResponse(format!("missing or invalid {key:?}")))
    };
    let params = match family {
        "Normal" => FamilyParams::Normal {
            mu: number("mu")?,
            sigma: number("sigma")?,
        },
        "Poisson" => FamilyParams::Poisson {
            lambda: number("lambda")?,
        },
        "Uniform" => FamilyParams::Uniform {
            low: number("low")?,
            high: number("high")?,
        },
        other => {
            return Err(SketchError::UnparseableResponse(format!(
                "unknown family {other:?}"
            )))
        }
    };
    match &params {
        FamilyParams::Normal { sigma, .. } if *sigma <= 0.0 || !sigma.is_finite() => {
            return Err(SketchError::ParamOutOfRange(format!("sigma = {sigma}")))
        }
        FamilyParams::Normal { mu, .. } if !mu.is_finite() => {
            return Err(SketchError::ParamOutOfRange(format!("mu = {mu}")))
        }
        FamilyParams::Poisson { lambda } if *lambda <= 0.0 || !lambda.is_finite() => {
            return Err(SketchError::ParamOutOfRange(format!("lambda = {lambda}")))
        }
        FamilyParams::Uniform { low, high } if !(low < high) => {
            return Err(SketchError::ParamOutOfRange(format!(
                "low = {low}, high = {high}"
            )))
        }
        _ => {}
    }
    Ok(params)
}

/// Classifies the distribution family and extracts its parameters.
pub fn classify_and_extract(
    image: &SanitizedImage,
    backend: &dyn LlmBackend,
    prompts: &PromptTemplates,
) -> Result<FamilyParams, SketchError> {
    let reply = backend.generate(&request(&prompts.extract, &[image]))?;
    parse_family_params(&reply_json(&reply)?)
}

/// Iteratively refines extracted parameters against side-by-side comparisons.
///
/// Each round sends the refinement prompt, the original sketch, and the
/// current comparison composite, then parses corrected parameters. The loop
/// stops when parameters stabilize (relative change below 1e-6) or after
/// `max_refine` rounds. Any backend or parse error ends the loop with a
/// warning, keeping the last valid parameters.
pub fn refine_params(
    original: &SanitizedImage,
    mut extraction: SketchExtraction,
    backend: &dyn LlmBackend,
    prompts: &PromptTemplates,
    max_refine: u32,
) -> SketchExtraction {
    for _round in 0..max_refine {
        let comparison = SanitizedImage {
            media_type: "image/png".into(),
            bytes: extraction.final_comparison().to_vec(),
        };
        let prompt = prompts.render_refine(
            &extraction.params.to_json().to_string(),
            extraction.identity.x_axis_min,
            extraction.identity.x_axis_max,
        );
        let reply = match backend.generate(&request(&prompt, &[original, &comparison])) {
            Ok(reply) => reply,
            Err(err) => {
                extraction
                    .warnings
                    .push(format!("refinement stopped: {err}"));
                return extraction;
            }
        };
        let corrected = match reply_json(&reply).and_then(|doc| parse_family_params(&doc)) {
            Ok(p) => p,
            Err(err) => {
                extraction
                    .warnings
                    .push(format!("refinement stopped: {err}"));
                return extraction;
            }
        };
        extraction.iterations += 1;
        if corrected.close_to(&extraction.params) {
            return extraction;
        }
        extraction.params = corrected;
        let plot = render_interpretation(
            &extraction.params,
            extraction.identity.x_axis_min,
            extraction.identity.x_axis_max,
            PLOT_WIDTH,
            PLOT_HEIGHT,
        );
        match compose_comparison(&original.bytes, &plot) {
            Ok(composite) => extraction.comparisons.push(composite),
            Err(err) => {
                extraction
                    .warnings
                    .push(format!("refinement stopped: {err}"));
                return extraction;
            }
        }
    }
    extraction
}

/// Runs the full per-image path: sanitize, identity, classify, render,
/// compose, refine.
pub fn process_sketch(
    entry: &SketchEntry,
    backend: &dyn LlmBackend,
    config: &SketchPipelineConfig,
) -> Result<SketchExtraction, SketchError> {
    let image = sanitize_image(&entry.bytes, &entry.declared_media_type, config.max_image_bytes)?;
    let identity = read_attribute_identity(&image, backend, &config.prompts)?;
    let params = classify_and_extract(&image, backend, &config.prompts)?;
    let plot = render_interpretation(
        &params,
        identity.x_axis_min,
        identity.x_axis_max,
        PLOT_WIDTH,
        PLOT_HEIGHT,
    );
    let comparison = compose_comparison(&image.bytes, &plot)?;
    let extraction = SketchExtraction {
        identity,
        params,
        iterations: 0,
        comparisons: vec![comparison],
        warnings: Vec::new(),
    };
    Ok(refine_params(
        &image,
        extraction,
        backend,
        &config.prompts,
        config.max_refine,
    ))
}

/// Spec fragment produced by aggregation: value-count and distribution lists
/// per entity type, ordered by attribute index. Entity sizes and rule counts
/// are not part of a fragment; they come from the companion minimal config.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpecFragment {
    pub subject_values: Vec<usize>,
    pub subject_distributions: Vec<DistributionSpec>,
    pub object_values: Vec<usize>,
    pub object_distributions: Vec<DistributionSpec>,
    pub environment_values: Vec<usize>,
    pub environment_distributions: Vec<DistributionSpec>,
}

/// Aggregates extractions into a fragment, enforcing distinct identities and
/// contiguous indices (1..N) per attribute type.
pub fn aggregate_config(extractions: &[SketchExtraction]) -> Result<SpecFragment, SketchError> {
    let mut fragment = SpecFragment::default();
    for kind in EntityKind::ALL {
        let mut of_kind: Vec<&SketchExtraction> = extractions
            .iter()
            .filter(|e| e.identity.kind == kind)
            .collect();
        of_kind.sort_by_key(|e| e.identity.index);
        for pair in of_kind.windows(2) {
            if pair[0].identity.index == pair[1].identity.index {
                return Err(SketchError::DuplicateIdentity(pair[0].identity.label()));
            }
        }
        let indices: Vec<usize> = of_kind.iter().map(|e| e.identity.index).collect();
        if indices.iter().enumerate().any(|(i, &idx)| idx != i + 1) {
            return Err(SketchError::NonContiguousIndices {
                kind,
                found: indices,
            });
        }
        let values: Vec<usize> = of_kind.iter().map(|e| e.identity.value_count).collect();
        let dists: Vec<DistributionSpec> =
            of_kind.iter().map(|e| e.params.to_distribution()).collect();
        match kind {
            EntityKind::Subject => {
                fragment.subject_values = values;
                fragment.subject_distributions = dists;
            }
            EntityKind::Object => {
                fragment.object_values = values;
                fragment.object_distributions = dists;
            }
            EntityKind::Environment => {
                fragment.environment_values = values;
                fragment.environment_distributions = dists;
            }
        }
    }
    Ok(fragment)
}

/// Outcome of processing a whole sketch archive.
#[derive(Debug)]
pub struct ArchiveOutcome {
    pub fragment: SpecFragment,
    /// (file name, PNG bytes) of the final comparison per sketch, named by
    /// attribute identity.
    pub comparisons: Vec<(String, Vec<u8>)>,
    /// One line per input entry, in sorted-name order.
    pub log: Vec<String>,
    /// (entry name, error message) for every failed image.
    pub failures: Vec<(String, String)>,
}

/// Processes every image of a sketch source: entries are handled in
/// sorted-name order (identity still never comes from the name), concurrently
/// up to the configured parallelism, then aggregated.
pub fn process_sketch_archive(
    mut entries: Vec<SketchEntry>,
    backend: &dyn LlmBackend,
    config: &SketchPipelineConfig,
) -> Result<ArchiveOutcome, SketchError> {
    entries.sort_by(|a, b| a.name.cmp(&b.name));
    if entries.is_empty() {
        return Err(SketchError::ArchiveEmpty);
    }

    let results = run_parallel(&entries, backend, config);

    let mut extractions = Vec::new();
    let mut log = Vec::new();
    let mut failures = Vec::new();
    let mut any_sanitized = false;
    for (entry, result) in entries.iter().zip(results) {
        match result {
            Ok(extraction) => {
                any_sanitized = true;
                log.push(format!(
                    "{}: ok {} {} iterations={}{}",
                    entry.name,
                    extraction.identity.label(),
                    extraction.params.family(),
                    extraction.iterations,
                    if extraction.warnings.is_empty() {
                        String::new()
                    } else {
                        format!(" warnings={}", extraction.warnings.join("; "))
                    }
                ));
                extractions.push(extraction);
            }
            Err(err) => {
                if !matches!(
                    err,
                    SketchError::MediaTypeMismatch { .. }
                        | SketchError::UnsupportedType(_)
                        | SketchError::TooLarge { .. }
                ) {
                    any_sanitized = true;
                }
                log.push(format!("{}: rejected ({err})", entry.name));
                failures.push((entry.name.clone(), err.to_string()));
            }
        }
    }
    if !any_sanitized {
        return Err(SketchError::ArchiveEmpty);
    }

    let fragment = aggregate_config(&extractions)?;
    // Comparison files are named and ordered by identity, so output never
    // depends on input file names.
    let mut by_identity: Vec<&SketchExtraction> = extractions.iter().collect();
    by_identity.sort_by_key(|e| (e.identity.kind as u8, e.identity.index));
    let comparisons = by_identity
        .iter()
        .map(|e| {
            (
                format!(
                    "{}_{}_comparison.png",
                    e.identity.kind.attribute_prefix(),
                    e.identity.index
                ),
                e.final_comparison().to_vec(),
            )
        })
        .collect();
    Ok(ArchiveOutcome {
        fragment,
        comparisons,
        log,
        failures,
    })
}

fn run_parallel(
    entries: &[SketchEntry],
    backend: &dyn LlmBackend,
    config: &SketchPipelineConfig,
) -> Vec<Result<SketchExtraction, SketchError>> {
    let workers = config.parallelism.clamp(1, entries.len());
    let slots: Vec<Mutex<Option<Result<SketchExtraction, SketchError>>>> =
        entries.iter().map(|_| Mutex::new(None)).collect();
    let cursor = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::SeqCst);
                if i >= entries.len() {
                    break;
                }
                let result = process_sketch(&entries[i], backend, config);
                *slots[i].lock().expect("result slot") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().expect("slot lock").expect("slot filled"))
        .collect()
}

/// Loads sketch entries from a directory or a zip archive. The declared media
/// type comes from the file extension.
pub fn load_sketch_entries(path: &Path) -> Result<Vec<SketchEntry>, SketchError> {
    if path.is_dir() {
        entries_from_dir(path)
    } else {
        entries_from_zip(path)
    }
}

fn declared_type_for(name: &str) -> String {
    let lower = name.to_ascii_lowercase();
    if lower.ends_with(".png") {
        "image/png".into()
    } else if lower.ends_with(".jpg") || lower.ends_with(".jpeg") {
        "image/jpeg".into()
    } else {
        "application/octet-stream".into()
    }
}

fn entries_from_dir(dir: &Path) -> Result<Vec<SketchEntry>, SketchError> {
    let mut entries = Vec::new();
    let read_dir = std::fs::read_dir(dir).map_err(|e| SketchError::Archive(e.to_string()))?;
    for item in read_dir {
        let item = item.map_err(|e| SketchError::Archive(e.to_string()))?;
        if !item.path().is_file() {
            continue;
        }
        let name = item.file_name().to_string_lossy().into_owned();
        let bytes =
            std::fs::read(item.path()).map_err(|e| SketchError::Archive(e.to_string()))?;
        entries.push(SketchEntry {
            declared_media_type: declared_type_for(&name),
            name,
            bytes,
        });
    }
    Ok(entries)
}

fn entries_from_zip(path: &Path) -> Result<Vec<SketchEntry>, SketchError> {
    let file = std::fs::File::open(path).map_err(|e| SketchError::Archive(e.to_string()))?;
    let mut archive =
        zip::ZipArchive::new(file).map_err(|e| SketchError::Archive(e.to_string()))?;
    let mut entries = Vec::new();
    for i in 0..archive.len() {
        let mut member = archive
            .by_index(i)
            .map_err(|e| SketchError::Archive(e.to_string()))?;
        if member.is_dir() {
            continue;
        }
        let name = member.name().to_string();
        let mut bytes = Vec::new();
        member
            .read_to_end(&mut bytes)
            .map_err(|e| SketchError::Archive(e.to_string()))?;
        entries.push(SketchEntry {
            declared_media_type: declared_type_for(&name),
            name,
            bytes,
        });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use backend::MockLlmBackend;
    use std::collections::HashMap;

    pub(crate) fn tiny_png(tint: u8) -> Vec<u8> {
        let img = image::RgbImage::from_pixel(16, 12, image::Rgb([tint, 128, 200]));
        let mut out = std::io::Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png).unwrap();
        out.into_inner()
    }

    fn sanitized(tint: u8) -> SanitizedImage {
        SanitizedImage {
            media_type: "image/png".into(),
            bytes: tiny_png(tint),
        }
    }

    fn mock_for(image: &SanitizedImage, replies: Vec<Value>) -> MockLlmBackend {
        MockLlmBackend::new(HashMap::from([(
            MockLlmBackend::key_for_image(&image.bytes),
            replies,
        )]))
    }

    #[test]
    fn sanitize_accepts_real_png() {
        let png = tiny_png(1);
        let image = sanitize_image(&png, "image/png", DEFAULT_MAX_IMAGE_BYTES).unwrap();
        assert_eq!(image.media_type, "image/png");
    }

    #[test]
    fn sanitize_rejects_disguised_text() {
        let err = sanitize_image(b"hello, not an image", "image/png", 1024).unwrap_err();
        assert!(matches!(err, SketchError::MediaTypeMismatch { .. }));
    }

    #[test]
    fn sanitize_rejects_unknown_type() {
        let err = sanitize_image(&tiny_png(1), "image/gif", 1024).unwrap_err();
        assert!(matches!(err, SketchError::UnsupportedType(t) if t == "image/gif"));
    }

    #[test]
    fn sanitize_enforces_size_limit() {
        let png = tiny_png(1);
        let err = sanitize_image(&png, "image/png", png.len() - 1).unwrap_err();
        assert!(matches!(err, SketchError::TooLarge { .. }));
    }

    #[test]
    fn identity_parses_canned_reply() {
        let image = sanitized(1);
        let mock = mock_for(
            &image,
            vec![serde_json::json!({"type": "EA", "index": 3, "values": 5})],
        );
        let id = read_attribute_identity(&image, &mock, &PromptTemplates::default()).unwrap();
        assert_eq!(id.kind, EntityKind::Environment);
        assert_eq!(id.index, 3);
        assert_eq!(id.value_count, 5);
        // Axis defaults to the value range.
        assert_eq!((id.x_axis_min, id.x_axis_max), (0.0, 5.0));
    }

    #[test]
    fn identity_missing_index_is_unparseable() {
        let image = sanitized(2);
        let mock = mock_for(&image, vec![serde_json::json!({"type": "EA", "values": 5})]);
        let err = read_attribute_identity(&image, &mock, &PromptTemplates::default()).unwrap_err();
        assert!(matches!(err, SketchError::UnparseableResponse(_)));
    }

    #[test]
    fn identity_null_type_is_identity_missing() {
        let image = sanitized(3);
        let mock = mock_for(&image, vec![serde_json::json!({"type": null})]);
        let err = read_attribute_identity(&image, &mock, &PromptTemplates::default()).unwrap_err();
        assert!(matches!(err, SketchError::IdentityMissing));
    }

    #[test]
    fn extract_parses_families_and_ranges() {
        let image = sanitized(4);
        let mock = mock_for(
            &image,
            vec![serde_json::json!({"family": "Normal", "mu": 4, "sigma": 1.5})],
        );
        let params = classify_and_extract(&image, &mock, &PromptTemplates::default()).unwrap();
        assert_eq!(params, FamilyParams::Normal { mu: 4.0, sigma: 1.5 });

        let mock = mock_for(
            &image,
            vec![serde_json::json!({"family": "Poisson", "lambda": -1})],
        );
        let err = classify_and_extract(&image, &mock, &PromptTemplates::default()).unwrap_err();
        assert!(matches!(err, SketchError::ParamOutOfRange(_)));

        let mock = mock_for(
            &image,
            vec![serde_json::json!({"family": "Uniform", "low": 5, "high": 2})],
        );
        let err = classify_and_extract(&image, &mock, &PromptTemplates::default()).unwrap_err();
        assert!(matches!(err, SketchError::ParamOutOfRange(_)));
    }

    fn base_extraction(image: &SanitizedImage, params: FamilyParams) -> SketchExtraction {
        let identity = SketchIdentity {
            kind: EntityKind::Subject,
            index: 1,
            value_count: 8,
            x_axis_min: 0.0,
            x_axis_max: 8.0,
        };
        let plot =
            render_interpretation(&params, identity.x_axis_min, identity.x_axis_max, 64, 48);
        let comparison = compose_comparison(&image.bytes, &plot).unwrap();
        SketchExtraction {
            identity,
            params,
            iterations: 0,
            comparisons: vec![comparison],
            warnings: Vec::new(),
        }
    }

    #[test]
    fn refine_fixpoint_stops_after_one_round() {
        let image = sanitized(5);
        let params = FamilyParams::Normal { mu: 4.0, sigma: 1.0 };
        let mock = mock_for(&image, vec![params.to_json()]);
        let refined = refine_params(
            &image,
            base_extraction(&image, params.clone()),
            &mock,
            &PromptTemplates::default(),
            DEFAULT_MAX_REFINE,
        );
        assert_eq!(refined.iterations, 1);
        assert_eq!(refined.params, params);
        assert_eq!(refined.comparisons.len(), 1);
        assert!(refined.warnings.is_empty());
    }

    #[test]
    fn refine_converges_on_second_round() {
        // Script: sigma 1 -> 2 -> 2.
        let image = sanitized(6);
        let initial = FamilyParams::Normal { mu: 4.0, sigma: 1.0 };
        let corrected = FamilyParams::Normal { mu: 4.0, sigma: 2.0 };
        let mock = mock_for(&image, vec![corrected.to_json(), corrected.to_json()]);
        let refined = refine_params(
            &image,
            base_extraction(&image, initial),
            &mock,
            &PromptTemplates::default(),
            DEFAULT_MAX_REFINE,
        );
        assert_eq!(refined.iterations, 2);
        assert_eq!(refined.params, corrected);
        assert_eq!(refined.comparisons.len(), 2);
    }

    #[test]
    fn refine_error_keeps_last_valid_params() {
        let image = sanitized(7);
        let initial = FamilyParams::Normal { mu: 4.0, sigma: 1.0 };
        let corrected = FamilyParams::Normal { mu: 4.0, sigma: 2.0 };
        let mock = mock_for(
            &image,
            vec![corrected.to_json(), serde_json::json!({"__error": "backend down"})],
        );
        let refined = refine_params(
            &image,
            base_extraction(&image, initial),
            &mock,
            &PromptTemplates::default(),
            DEFAULT_MAX_REFINE,
        );
        assert_eq!(refined.params, corrected);
        assert_eq!(refined.iterations, 1);
        assert_eq!(refined.warnings.len(), 1);
        assert!(refined.warnings[0].contains("backend down"));
    }

    #[test]
    fn refine_honors_round_limit() {
        // Script keeps changing sigma; the loop must stop at max_refine.
        let image = sanitized(8);
        let replies: Vec<Value> = (2..10)
            .map(|s| FamilyParams::Normal { mu: 4.0, sigma: s as f64 }.to_json())
            .collect();
        let mock = mock_for(&image, replies);
        let refined = refine_params(
            &image,
            base_extraction(&image, FamilyParams::Normal { mu: 4.0, sigma: 1.0 }),
            &mock,
            &PromptTemplates::default(),
            3,
        );
        assert_eq!(refined.iterations, 3);
        assert_eq!(refined.params, FamilyParams::Normal { mu: 4.0, sigma: 4.0 });
    }

    fn extraction_with_identity(kind: EntityKind, index: usize, values: usize) -> SketchExtraction {
        SketchExtraction {
            identity: SketchIdentity {
                kind,
                index,
                value_count: values,
                x_axis_min: 0.0,
                x_axis_max: values as f64,
            },
            params: FamilyParams::Uniform { low: 0.0, high: values as f64 },
            iterations: 1,
            comparisons: vec![],
            warnings: vec![],
        }
    }

    #[test]
    fn aggregate_orders_by_index_and_counts_types() {
        let extractions = vec![
            extraction_with_identity(EntityKind::Subject, 2, 4),
            extraction_with_identity(EntityKind::Environment, 1, 2),
            extraction_with_identity(EntityKind::Subject, 1, 3),
        ];
        let fragment = aggregate_config(&extractions).unwrap();
        assert_eq!(fragment.subject_values, vec![3, 4]);
        assert_eq!(fragment.subject_distributions.len(), 2);
        assert_eq!(fragment.environment_values, vec![2]);
        assert!(fragment.object_values.is_empty());
    }

    #[test]
    fn aggregate_rejects_gaps_and_duplicates() {
        let gap = vec![
            extraction_with_identity(EntityKind::Subject, 1, 3),
            extraction_with_identity(EntityKind::Subject, 3, 4),
        ];
        assert!(matches!(
            aggregate_config(&gap).unwrap_err(),
            SketchError::NonContiguousIndices { .. }
        ));
        let dup = vec![
            extraction_with_identity(EntityKind::Object, 2, 3),
            extraction_with_identity(EntityKind::Object, 2, 4),
        ];
        assert!(matches!(
            aggregate_config(&dup).unwrap_err(),
            SketchError::DuplicateIdentity(label) if label == "OA-2"
        ));
    }

    #[test]
    fn uniform_range_is_validated_but_dropped() {
        let params = FamilyParams::Uniform { low: 1.0, high: 5.0 };
        assert_eq!(params.to_distribution(), DistributionSpec::Uniform);
        let normal = FamilyParams::Normal { mu: 3.0, sigma: 1.5 };
        assert_eq!(
            normal.to_distribution(),
            DistributionSpec::Normal { mean: 3.0, variance: 2.25 }
        );
    }

    #[test]
    fn archive_empty_when_nothing_survives() {
        let backend = MockLlmBackend::new(HashMap::new());
        let config = SketchPipelineConfig::default();
        assert!(matches!(
            process_sketch_archive(vec![], &backend, &config),
            Err(SketchError::ArchiveEmpty)
        ));
        let entries = vec![SketchEntry {
            name: "notes.txt".into(),
            declared_media_type: "application/octet-stream".into(),
            bytes: b"text".to_vec(),
        }];
        assert!(matches!(
            process_sketch_archive(entries, &backend, &config),
            Err(SketchError::ArchiveEmpty)
        ));
    }
}
