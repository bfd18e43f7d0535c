//! The generation specification: the parsed, validated form of `input.json`.
//!
//! Parsing is strict: unknown keys are rejected with the offending key path,
//! list lengths must agree with their declared counts, and distribution
//! objects must carry exactly the parameters their family requires. The
//! permit/deny rule counts accept the alias spellings
//! `accepted_rules_count` / `denied_rules_count`; serialization always emits
//! the canonical names.

use serde_json::{Map, Value};

/// Distribution of one attribute's value assignment over its entities.
#[derive(Debug, Clone, PartialEq)]
pub enum DistributionSpec {
    Uniform,
    Normal { mean: f64, variance: f64 },
    Poisson { lambda: f64 },
}

impl DistributionSpec {
    pub fn code(&self) -> &'static str {
        match self {
            DistributionSpec::Uniform => "U",
            DistributionSpec::Normal { .. } => "N",
            DistributionSpec::Poisson { .. } => "P",
        }
    }

    /// Human-readable family plus parameters, used in reports and plots.
    pub fn describe(&self) -> String {
        match self {
            DistributionSpec::Uniform => "Uniform".to_string(),
            DistributionSpec::Normal { mean, variance } => {
                format!("Normal(mean={mean}, variance={variance})")
            }
            DistributionSpec::Poisson { lambda } => format!("Poisson(lambda={lambda})"),
        }
    }
}

impl serde::Serialize for DistributionSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serde_json::Value::from(self).serialize(serializer)
    }
}

impl From<&DistributionSpec> for Value {
    fn from(dist: &DistributionSpec) -> Value {
        let mut map = Map::new();
        map.insert("distribution".into(), Value::String(dist.code().into()));
        match dist {
            DistributionSpec::Uniform => {}
            DistributionSpec::Normal { mean, variance } => {
                map.insert("mean".into(), json_number(*mean));
                map.insert("variance".into(), json_number(*variance));
            }
            DistributionSpec::Poisson { lambda } => {
                map.insert("lambda".into(), json_number(*lambda));
            }
        }
        Value::Object(map)
    }
}

// Integral values serialize as JSON integers, matching the usual hand-written
// form of input.json.
fn json_number(v: f64) -> Value {
    if v.is_finite() && v.fract() == 0.0 && v.abs() < 9e15 {
        Value::Number((v as i64).into())
    } else {
        serde_json::Number::from_f64(v)
            .map(Value::Number)
            .unwrap_or(Value::Null)
    }
}

/// Parsed `input.json`: sizes, attribute shapes, distributions, rule counts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GenerationSpec {
    pub subject_size: u64,
    pub object_size: u64,
    pub environment_size: u64,
    pub permit_rules_count: u64,
    pub deny_rules_count: u64,
    pub subject_attributes_count: usize,
    pub object_attributes_count: usize,
    pub environment_attributes_count: usize,
    pub subject_attributes_values: Vec<usize>,
    pub object_attributes_values: Vec<usize>,
    pub environment_attributes_values: Vec<usize>,
    pub subject_distributions: Vec<DistributionSpec>,
    pub object_distributions: Vec<DistributionSpec>,
    pub environment_distributions: Vec<DistributionSpec>,
}

/// One failed invariant, with the JSON key path it concerns.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SpecError {
    #[error("malformed JSON: {0}")]
    Syntax(String),
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
}

impl SpecError {
    fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        SpecError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn path(&self) -> Option<&str> {
        match self {
            SpecError::Syntax(_) => None,
            SpecError::Schema { path, .. } => Some(path),
        }
    }
}

const SIZE_KEYS: [&str; 3] = ["subject_size", "object_size", "environment_size"];
const COUNT_KEYS: [&str; 3] = [
    "subject_attributes_count",
    "object_attributes_count",
    "environment_attributes_count",
];
const VALUES_KEYS: [&str; 3] = [
    "subject_attributes_values",
    "object_attributes_values",
    "environment_attributes_values",
];
const DIST_KEYS: [&str; 3] = [
    "subject_distributions",
    "object_distributions",
    "environment_distributions",
];

/// Parses and structurally validates an `input.json` document.
pub fn parse_spec(bytes: &[u8]) -> Result<GenerationSpec, SpecError> {
    let value: Value =
        serde_json::from_slice(bytes).map_err(|e| SpecError::Syntax(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| SpecError::schema("", "top-level value must be an object"))?;

    let known: Vec<&str> = SIZE_KEYS
        .iter()
        .chain(COUNT_KEYS.iter())
        .chain(VALUES_KEYS.iter())
        .chain(DIST_KEYS.iter())
        .copied()
        .chain([
            "permit_rules_count",
            "deny_rules_count",
            "accepted_rules_count",
            "denied_rules_count",
        ])
        .collect();
    for key in obj.keys() {
        if !known.contains(&key.as_str()) {
            return Err(SpecError::schema(key, "unknown key"));
        }
    }

    let mut spec = GenerationSpec {
        subject_size: require_u64(obj, "subject_size")?,
        object_size: require_u64(obj, "object_size")?,
        environment_size: require_u64(obj, "environment_size")?,
        permit_rules_count: require_aliased_u64(obj, "permit_rules_count", "accepted_rules_count")?,
        deny_rules_count: require_aliased_u64(obj, "deny_rules_count", "denied_rules_count")?,
        ..GenerationSpec::default()
    };
    spec.subject_attributes_count = require_usize(obj, "subject_attributes_count")?;
    spec.object_attributes_count = require_usize(obj, "object_attributes_count")?;
    spec.environment_attributes_count = require_usize(obj, "environment_attributes_count")?;

    let counts = [
        spec.subject_attributes_count,
        spec.object_attributes_count,
        spec.environment_attributes_count,
    ];
    let mut values = Vec::new();
    let mut dists = Vec::new();
    for i in 0..3 {
        values.push(parse_values_list(obj, VALUES_KEYS[i], counts[i])?);
        dists.push(parse_distributions_list(obj, DIST_KEYS[i], counts[i])?);
    }
    spec.environment_distributions = dists.pop().unwrap();
    spec.object_distributions = dists.pop().unwrap();
    spec.subject_distributions = dists.pop().unwrap();
    spec.environment_attributes_values = values.pop().unwrap();
    spec.object_attributes_values = values.pop().unwrap();
    spec.subject_attributes_values = values.pop().unwrap();
    Ok(spec)
}

fn require_key<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value, SpecError> {
    obj.get(key)
        .ok_or_else(|| SpecError::schema(key, "missing key"))
}

fn as_u64(value: &Value, path: &str) -> Result<u64, SpecError> {
    value
        .as_u64()
        .ok_or_else(|| SpecError::schema(path, "expected a non-negative integer"))
}

fn require_u64(obj: &Map<String, Value>, key: &str) -> Result<u64, SpecError> {
    as_u64(require_key(obj, key)?, key)
}

fn require_usize(obj: &Map<String, Value>, key: &str) -> Result<usize, SpecError> {
    let v = require_u64(obj, key)?;
    usize::try_from(v).map_err(|_| SpecError::schema(key, "value too large"))
}

fn require_aliased_u64(
    obj: &Map<String, Value>,
    canonical: &str,
    alias: &str,
) -> Result<u64, SpecError> {
    match (obj.get(canonical), obj.get(alias)) {
        (Some(v), None) => as_u64(v, canonical),
        (None, Some(v)) => as_u64(v, alias),
        (Some(_), Some(_)) => Err(SpecError::schema(
            alias,
            format!("duplicates {canonical}; provide exactly one spelling"),
        )),
        (None, None) => Err(SpecError::schema(canonical, "missing key")),
    }
}

fn parse_values_list(
    obj: &Map<String, Value>,
    key: &str,
    expected_len: usize,
) -> Result<Vec<usize>, SpecError> {
    let arr = require_key(obj, key)?
        .as_array()
        .ok_or_else(|| SpecError::schema(key, "expected an array of integers"))?;
    if arr.len() != expected_len {
        return Err(SpecError::schema(
            key,
            format!(
                "length {} does not match the declared attribute count {}",
                arr.len(),
                expected_len
            ),
        ));
    }
    arr.iter()
        .enumerate()
        .map(|(i, v)| {
            let path = format!("{key}[{i}]");
            let n = as_u64(v, &path)?;
            usize::try_from(n).map_err(|_| SpecError::schema(&path, "value too large"))
        })
        .collect()
}

fn parse_distributions_list(
    obj: &Map<String, Value>,
    key: &str,
    expected_len: usize,
) -> Result<Vec<DistributionSpec>, SpecError> {
    let arr = require_key(obj, key)?
        .as_array()
        .ok_or_else(|| SpecError::schema(key, "expected an array of distribution objects"))?;
    if arr.len() != expected_len {
        return Err(SpecError::schema(
            key,
            format!(
                "length {} does not match the declared attribute count {}",
                arr.len(),
                expected_len
            ),
        ));
    }
    arr.iter()
        .enumerate()
        .map(|(i, v)| parse_distribution(v, &format!("{key}[{i}]")))
        .collect()
}

fn parse_distribution(value: &Value, path: &str) -> Result<DistributionSpec, SpecError> {
    let obj = value
        .as_object()
        .ok_or_else(|| SpecError::schema(path, "expected a distribution object"))?;
    let code = obj
        .get("distribution")
        .ok_or_else(|| SpecError::schema(format!("{path}.distribution"), "missing key"))?
        .as_str()
        .ok_or_else(|| SpecError::schema(format!("{path}.distribution"), "expected a string"))?;
    let allowed: &[&str] = match code {
        "U" => &["distribution"],
        "N" => &["distribution", "mean", "variance"],
        "P" => &["distribution", "lambda"],
        other => {
            return Err(SpecError::schema(
                format!("{path}.distribution"),
                format!("unknown distribution code {other:?}; expected \"U\", \"N\" or \"P\""),
            ))
        }
    };
    for key in obj.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(SpecError::schema(
                format!("{path}.{key}"),
                format!("key not allowed for distribution {code:?}"),
            ));
        }
    }
    let number = |key: &str| -> Result<f64, SpecError> {
        obj.get(key)
            .ok_or_else(|| SpecError::schema(format!("{path}.{key}"), "missing key"))?
            .as_f64()
            .ok_or_else(|| SpecError::schema(format!("{path}.{key}"), "expected a number"))
    };
    Ok(match code {
        "U" => DistributionSpec::Uniform,
        "N" => DistributionSpec::Normal {
            mean: number("mean")?,
            variance: number("variance")?,
        },
        _ => DistributionSpec::Poisson {
            lambda: number("lambda")?,
        },
    })
}

/// Checks every typed invariant; returns one violation per failure.
pub fn validate_spec(spec: &GenerationSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let sizes = [
        spec.subject_size,
        spec.object_size,
        spec.environment_size,
    ];
    for (key, size) in SIZE_KEYS.iter().zip(sizes) {
        if size < 1 {
            out.push(Violation::new(*key, "entity size must be at least 1"));
        }
    }
    let counts = [
        spec.subject_attributes_count,
        spec.object_attributes_count,
        spec.environment_attributes_count,
    ];
    let values = [
        &spec.subject_attributes_values,
        &spec.object_attributes_values,
        &spec.environment_attributes_values,
    ];
    let dists = [
        &spec.subject_distributions,
        &spec.object_distributions,
        &spec.environment_distributions,
    ];
    for i in 0..3 {
        if values[i].len() != counts[i] {
            out.push(Violation::new(
                VALUES_KEYS[i],
                format!(
                    "length {} does not match {} = {}",
                    values[i].len(),
                    COUNT_KEYS[i],
                    counts[i]
                ),
            ));
        }
        if dists[i].len() != counts[i] {
            out.push(Violation::new(
                DIST_KEYS[i],
                format!(
                    "length {} does not match {} = {}",
                    dists[i].len(),
                    COUNT_KEYS[i],
                    counts[i]
                ),
            ));
        }
        for (j, &cardinality) in values[i].iter().enumerate() {
            if cardinality < 1 {
                out.push(Violation::new(
                    format!("{}[{}]", VALUES_KEYS[i], j),
                    "value cardinality must be at least 1",
                ));
            }
        }
        for (j, dist) in dists[i].iter().enumerate() {
            let path = format!("{}[{}]", DIST_KEYS[i], j);
            match dist {
                DistributionSpec::Uniform => {}
                DistributionSpec::Normal { mean, variance } => {
                    if !mean.is_finite() {
                        out.push(Violation::new(format!("{path}.mean"), "must be finite"));
                    }
                    if !variance.is_finite() || *variance <= 0.0 {
                        out.push(Violation::new(
                            format!("{path}.variance"),
                            "must be a positive finite number",
                        ));
                    }
                }
                DistributionSpec::Poisson { lambda } => {
                    if !lambda.is_finite() || *lambda <= 0.0 {
                        out.push(Violation::new(
                            format!("{path}.lambda"),
                            "must be a positive finite number",
                        ));
                    }
                }
            }
        }
    }
    out
}

/// Serializes a spec back to `input.json` form, keys in canonical order.
pub fn serialize_spec(spec: &GenerationSpec) -> String {
    let mut map = Map::new();
    map.insert("subject_size".into(), spec.subject_size.into());
    map.insert("object_size".into(), spec.object_size.into());
    map.insert("environment_size".into(), spec.environment_size.into());
    map.insert("permit_rules_count".into(), spec.permit_rules_count.into());
    map.insert("deny_rules_count".into(), spec.deny_rules_count.into());
    map.insert(
        "subject_attributes_count".into(),
        (spec.subject_attributes_count as u64).into(),
    );
    map.insert(
        "object_attributes_count".into(),
        (spec.object_attributes_count as u64).into(),
    );
    map.insert(
        "environment_attributes_count".into(),
        (spec.environment_attributes_count as u64).into(),
    );
    let value_list = |values: &[usize]| {
        Value::Array(values.iter().map(|&v| Value::from(v as u64)).collect())
    };
    map.insert(
        "subject_attributes_values".into(),
        value_list(&spec.subject_attributes_values),
    );
    map.insert(
        "object_attributes_values".into(),
        value_list(&spec.object_attributes_values),
    );
    map.insert(
        "environment_attributes_values".into(),
        value_list(&spec.environment_attributes_values),
    );
    let dist_list =
        |dists: &[DistributionSpec]| Value::Array(dists.iter().map(Value::from).collect());
    map.insert(
        "subject_distributions".into(),
        dist_list(&spec.subject_distributions),
    );
    map.insert(
        "object_distributions".into(),
        dist_list(&spec.object_distributions),
    );
    map.insert(
        "environment_distributions".into(),
        dist_list(&spec.environment_distributions),
    );
    serde_json::to_string_pretty(&Value::Object(map)).expect("spec serialization cannot fail")
}

#[cfg(test)]
pub(crate) fn listing_like_spec() -> GenerationSpec {
    GenerationSpec {
        subject_size: 3,
        object_size: 3,
        environment_size: 2,
        permit_rules_count: 1,
        deny_rules_count: 1,
        subject_attributes_count: 2,
        object_attributes_count: 2,
        environment_attributes_count: 1,
        subject_attributes_values: vec![2, 4],
        object_attributes_values: vec![2, 1],
        environment_attributes_values: vec![2],
        subject_distributions: vec![
            DistributionSpec::Uniform,
            DistributionSpec::Normal {
                mean: 2.0,
                variance: 1.0,
            },
        ],
        object_distributions: vec![
            DistributionSpec::Poisson { lambda: 1.0 },
            DistributionSpec::Uniform,
        ],
        environment_distributions: vec![DistributionSpec::Uniform],
    }
}
