//! Output files and archive packaging.
//!
//! * `output.json` — the complete generated system (entities, attributes,
//!   value sets, assignments, rule strings).
//! * `ACM.txt` — header `# subjects=<n_s> objects=<n_o> environments=<n_e>`
//!   followed by one `S_i<TAB>O_j<TAB>E_k<TAB>d` line per tuple in
//!   lexicographic (s, o, e) order. When tuple sampling is active a second
//!   header line `# sampled=<K>` records the sample size.
//! * `access_data.txt` — CSV with one row per tuple: the attribute values of
//!   the tuple's entities followed by the 0/1 decision, same tuple order as
//!   `ACM.txt`.
//! * the archive — fixed member order and timestamps, so identical inputs
//!   and seed produce byte-identical zips; `manifest.json` lists every
//!   member with size and SHA-256, plus the seed.
//!
//! Full matrix enumeration is refused above a configurable tuple cap
//! (default 10^7): callers must then either sample tuples (uniform, without
//! replacement, seeded) or skip the matrix files.

use std::io::Write;

use indexmap::IndexMap;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::dataset::{AbacDataset, EntityKind};
use crate::policy::{
    evaluate_acm, parse_rule, render_rule, AcmDecision, Effect, EntityMatchIndex, Policy,
    PolicyError,
};
use crate::sampling::RngStream;

/// Default ceiling on fully enumerated tuples.
pub const DEFAULT_MAX_ACM_TUPLES: u64 = 10_000_000;

/// Stream id for tuple sampling.
const TUPLE_SAMPLE_STREAM_ID: &str = "tuple-sample";

#[derive(Debug, thiserror::Error)]
pub enum ArtifactsError {
    #[error(
        "the access control matrix has {tuples} tuples, above the cap of {cap}; \
         sample tuples or disable matrix output"
    )]
    AcmTooLarge { tuples: u128, cap: u64 },
    #[error("output document invalid at {path}: {message}")]
    MalformedOutput { path: String, message: String },
    #[error("rule {index} in {list}: {source}")]
    Rule {
        list: &'static str,
        index: usize,
        source: PolicyError,
    },
    #[error("archive write failed: {0}")]
    Zip(#[from] zip::result::ZipError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Builds the `output.json` document: entity sets, attribute definitions,
/// value sets, assignments, and rendered rule strings, in generation order.
pub fn write_output_json(dataset: &AbacDataset, policy: &Policy) -> String {
    let names = |list: &[String]| Value::Array(list.iter().map(|s| s.clone().into()).collect());
    let map_of_lists = |map: &IndexMap<String, Vec<String>>| {
        let mut out = Map::new();
        for (key, values) in map {
            out.insert(key.clone(), names(values));
        }
        Value::Object(out)
    };
    let rules = |rules: &[crate::policy::Rule]| {
        Value::Array(rules.iter().map(|r| render_rule(r).into()).collect())
    };
    let mut doc = Map::new();
    doc.insert("S".into(), names(&dataset.subjects));
    doc.insert("O".into(), names(&dataset.objects));
    doc.insert("E".into(), names(&dataset.environments));
    doc.insert("SA".into(), names(&dataset.subject_attributes));
    doc.insert("OA".into(), names(&dataset.object_attributes));
    doc.insert("EA".into(), names(&dataset.environment_attributes));
    doc.insert("SAV".into(), map_of_lists(&dataset.subject_attribute_values));
    doc.insert("OAV".into(), map_of_lists(&dataset.object_attribute_values));
    doc.insert(
        "EAV".into(),
        map_of_lists(&dataset.environment_attribute_values),
    );
    doc.insert("SV".into(), map_of_lists(&dataset.subject_assignments));
    doc.insert("OV".into(), map_of_lists(&dataset.object_assignments));
    doc.insert("EV".into(), map_of_lists(&dataset.environment_assignments));
    doc.insert("permit_rules".into(), rules(&policy.permit));
    doc.insert("deny_rules".into(), rules(&policy.deny));
    serde_json::to_string_pretty(&Value::Object(doc)).expect("output serialization cannot fail")
}

/// The canonical `output.json` key set, in order.
pub const OUTPUT_JSON_KEYS: [&str; 14] = [
    "S", "O", "E", "SA", "OA", "EA", "SAV", "OAV", "EAV", "SV", "OV", "EV", "permit_rules",
    "deny_rules",
];

/// Parses an `output.json` document back into a dataset and policy.
pub fn parse_output_json(bytes: &[u8]) -> Result<(AbacDataset, Policy), ArtifactsError> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| ArtifactsError::MalformedOutput {
        path: String::new(),
        message: e.to_string(),
    })?;
    let obj = value.as_object().ok_or_else(|| malformed("", "expected an object"))?;
    for key in obj.keys() {
        if !OUTPUT_JSON_KEYS.contains(&key.as_str()) {
            return Err(malformed(key, "unknown key"));
        }
    }
    let list = |key: &str| -> Result<Vec<String>, ArtifactsError> {
        obj.get(key)
            .ok_or_else(|| malformed(key, "missing key"))?
            .as_array()
            .ok_or_else(|| malformed(key, "expected an array"))?
            .iter()
            .map(|v| {
                v.as_str()
                    .map(String::from)
                    .ok_or_else(|| malformed(key, "expected strings"))
            })
            .collect()
    };
    let map = |key: &str| -> Result<IndexMap<String, Vec<String>>, ArtifactsError> {
        let m = obj
            .get(key)
            .ok_or_else(|| malformed(key, "missing key"))?
            .as_object()
            .ok_or_else(|| malformed(key, "expected an object"))?;
        m.iter()
            .map(|(k, v)| {
                let values = v
                    .as_array()
                    .ok_or_else(|| malformed(format!("{key}.{k}"), "expected an array"))?
                    .iter()
                    .map(|s| {
                        s.as_str()
                            .map(String::from)
                            .ok_or_else(|| malformed(format!("{key}.{k}"), "expected strings"))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok((k.clone(), values))
            })
            .collect()
    };
    let dataset = AbacDataset {
        subjects: list("S")?,
        objects: list("O")?,
        environments: list("E")?,
        subject_attributes: list("SA")?,
        object_attributes: list("OA")?,
        environment_attributes: list("EA")?,
        subject_attribute_values: map("SAV")?,
        object_attribute_values: map("OAV")?,
        environment_attribute_values: map("EAV")?,
        subject_assignments: map("SV")?,
        object_assignments: map("OV")?,
        environment_assignments: map("EV")?,
    };
    let parse_rules = |key: &'static str, effect: Effect| -> Result<Vec<_>, ArtifactsError> {
        list(key)?
            .iter()
            .enumerate()
            .map(|(index, text)| {
                parse_rule(text, &dataset, effect).map_err(|source| ArtifactsError::Rule {
                    list: key,
                    index,
                    source,
                })
            })
            .collect()
    };
    let policy = Policy {
        permit: parse_rules("permit_rules", Effect::Permit)?,
        deny: parse_rules("deny_rules", Effect::Deny)?,
    };
    Ok((dataset, policy))
}

fn malformed(path: impl Into<String>, message: impl Into<String>) -> ArtifactsError {
    ArtifactsError::MalformedOutput {
        path: path.into(),
        message: message.into(),
    }
}

/// How the tuple space will be traversed.
#[derive(Debug, Clone, PartialEq)]
pub enum TuplePlan {
    /// Every tuple, lexicographic order.
    Full,
    /// A sorted, uniform without-replacement sample of tuple ranks.
    Sampled(Vec<u128>),
}

impl TuplePlan {
    pub fn sample_size(&self) -> Option<u64> {
        match self {
            TuplePlan::Full => None,
            TuplePlan::Sampled(ranks) => Some(ranks.len() as u64),
        }
    }
}

/// Decides between full enumeration, sampling, and no matrix output.
///
/// Returns `None` when matrix output is disabled. Fails with `AcmTooLarge`
/// when the tuple count exceeds the cap and no sample size was given.
pub fn plan_tuples(
    tuples: u128,
    cap: u64,
    sample: Option<u64>,
    no_acm: bool,
    master_seed: u64,
) -> Result<Option<TuplePlan>, ArtifactsError> {
    if no_acm {
        return Ok(None);
    }
    if let Some(k) = sample {
        if u128::from(k) >= tuples {
            return Ok(Some(TuplePlan::Full));
        }
        return Ok(Some(TuplePlan::Sampled(sample_tuple_ranks(
            tuples,
            k,
            master_seed,
        ))));
    }
    if tuples > u128::from(cap) {
        return Err(ArtifactsError::AcmTooLarge { tuples, cap });
    }
    Ok(Some(TuplePlan::Full))
}

// Uniform sample of k distinct ranks from [0, total), returned sorted.
// Inverts to sampling the complement when k is more than half of total.
fn sample_tuple_ranks(total: u128, k: u64, master_seed: u64) -> Vec<u128> {
    let mut rng = RngStream::new(master_seed, TUPLE_SAMPLE_STREAM_ID);
    let k = k as u128;
    let invert = k > total / 2;
    let target = if invert { total - k } else { k };
    let mut picked = std::collections::HashSet::with_capacity(target as usize);
    while (picked.len() as u128) < target {
        picked.insert(rng.next_u128_below(total));
    }
    let mut ranks: Vec<u128> = if invert {
        (0..total).filter(|r| !picked.contains(r)).collect()
    } else {
        picked.into_iter().collect()
    };
    ranks.sort_unstable();
    ranks
}

/// Decision iterator for the planned tuple traversal.
pub fn planned_decisions<'a>(
    index: &'a EntityMatchIndex,
    plan: &'a TuplePlan,
) -> Box<dyn Iterator<Item = AcmDecision> + 'a> {
    match plan {
        TuplePlan::Full => Box::new(evaluate_acm(index)),
        TuplePlan::Sampled(ranks) => {
            let (_, n_o, n_e) = index.dims();
            Box::new(ranks.iter().map(move |&rank| {
                let e = (rank % n_e as u128) as usize;
                let rest = rank / n_e as u128;
                let o = (rest % n_o as u128) as usize;
                let s = (rest / n_o as u128) as usize;
                AcmDecision {
                    subject: s,
                    object: o,
                    environment: e,
                    permit: index.decide(s, o, e),
                }
            }))
        }
    }
}

/// Writes `ACM.txt`; returns the number of data lines.
pub fn write_acm<W: Write>(
    dataset: &AbacDataset,
    decisions: impl Iterator<Item = AcmDecision>,
    sampled: Option<u64>,
    out: &mut W,
) -> std::io::Result<u64> {
    writeln!(
        out,
        "# subjects={} objects={} environments={}",
        dataset.subjects.len(),
        dataset.objects.len(),
        dataset.environments.len()
    )?;
    if let Some(k) = sampled {
        writeln!(out, "# sampled={k}")?;
    }
    let mut lines = 0u64;
    for d in decisions {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            dataset.subjects[d.subject],
            dataset.objects[d.object],
            dataset.environments[d.environment],
            d.bit()
        )?;
        lines += 1;
    }
    Ok(lines)
}

/// Cell encoding for `access_data.txt`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValueEncoding {
    /// Value names (`SA_1_2`), self-describing.
    #[default]
    Names,
    /// 1-based value indices within each attribute's value set.
    Indices,
}

/// Writes `access_data.txt`: one CSV row per tuple, attribute values of the
/// tuple's entities plus the decision. Returns the number of data rows.
pub fn write_access_data<W: Write>(
    dataset: &AbacDataset,
    decisions: impl Iterator<Item = AcmDecision>,
    encoding: ValueEncoding,
    out: &mut W,
) -> std::io::Result<u64> {
    let mut header: Vec<&str> = Vec::new();
    for kind in EntityKind::ALL {
        header.extend(dataset.attributes(kind).iter().map(String::as_str));
    }
    header.push("decision");
    writeln!(out, "{}", header.join(","))?;

    // Rows are assembled from pre-rendered per-entity fragments.
    let fragment = |kind: EntityKind| -> Vec<String> {
        dataset
            .assignments(kind)
            .values()
            .map(|row| match encoding {
                ValueEncoding::Names => row.join(","),
                ValueEncoding::Indices => row
                    .iter()
                    .map(|v| v.rsplit('_').next().unwrap_or("0").to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            })
            .collect()
    };
    let subject_rows = fragment(EntityKind::Subject);
    let object_rows = fragment(EntityKind::Object);
    let environment_rows = fragment(EntityKind::Environment);

    let mut lines = 0u64;
    for d in decisions {
        let mut row = String::new();
        for part in [
            &subject_rows[d.subject],
            &object_rows[d.object],
            &environment_rows[d.environment],
        ] {
            if !part.is_empty() {
                row.push_str(part);
                row.push(',');
            }
        }
        writeln!(out, "{row}{}", d.bit())?;
        lines += 1;
    }
    Ok(lines)
}

/// All archive members in their fixed order, plus the manifest inputs.
#[derive(Debug, Clone)]
pub struct OutputBundle {
    pub members: Vec<(String, Vec<u8>)>,
    pub seed: u64,
    pub tuple_count: Option<u128>,
    pub sampled_tuples: Option<u64>,
}

#[derive(serde::Serialize)]
struct Manifest<'a> {
    generator: &'static str,
    version: &'static str,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    tuple_count: Option<u128>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sampled_tuples: Option<u64>,
    files: Vec<ManifestEntry<'a>>,
}

#[derive(serde::Serialize)]
struct ManifestEntry<'a> {
    name: &'a str,
    size: u64,
    sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Deterministic zip of arbitrary members, in the order given.
pub fn package_simple_zip(members: &[(String, Vec<u8>)]) -> Result<Vec<u8>, ArtifactsError> {
    use zip::write::SimpleFileOptions;
    use zip::{CompressionMethod, ZipWriter};
    let options = SimpleFileOptions::default()
        .compression_method(CompressionMethod::Deflated)
        .last_modified_time(zip::DateTime::default())
        .unix_permissions(0o644);
    let mut writer = ZipWriter::new(std::io::Cursor::new(Vec::new()));
    for (name, bytes) in members {
        writer.start_file(name, options)?;
        writer.write_all(bytes)?;
    }
    Ok(writer.finish()?.into_inner())
}

/// Packages the bundle into a deterministic zip: fixed member order, fixed
/// timestamps, `manifest.json` appended last.
pub fn package_zip(bundle: &OutputBundle) -> Result<Vec<u8>, ArtifactsError> {
    use zip::write::SimpleFileOptions;
    use zip::{CompressionMethod, ZipWriter};

    let manifest = Manifest {
        generator: "abacgen",
        version: env!("CARGO_PKG_VERSION"),
        seed: bundle.seed,
        tuple_count: bundle.tuple_count,
        sampled_tuples: bundle.sampled_tuples,
        files: bundle
            .members
            .iter()
            .map(|(name, bytes)| ManifestEntry {
                name,
                size: bytes.len() as u64,
                sha256: sha256_hex(bytes),
            })
            .collect(),
    };
    let manifest_bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");

    let options = SimpleFileOptions::default()
        .compression_method(CompressionMethod::Deflated)
        .last_modified_time(zip::DateTime::default())
        .unix_permissions(0o644);
    let mut writer = ZipWriter::new(std::io::Cursor::new(Vec::new()));
    for (name, bytes) in &bundle.members {
        writer.start_file(name, options)?;
        writer.write_all(bytes)?;
    }
    writer.start_file("manifest.json", options)?;
    writer.write_all(&manifest_bytes)?;
    Ok(writer.finish()?.into_inner())
}
