//! Distribution attestation: expected-vs-actual count comparison per
//! attribute, the per-attribute error
//! `epsilon_i = sum_k |E[Count(a_k)] - Actual(a_k)| / Actual(a_k)`,
//! and group/overall means.
//!
//! A term whose actual count is zero contributes `|E_k|` (denominator
//! replaced by 1) and flags the attribute, keeping the error finite. Besides
//! the raw epsilon the report also carries `epsilon_i / n_i * 100`, the mean
//! percent error per value, since the raw sum grows with the number of
//! values.

use crate::dataset::{AbacDataset, EntityKind};
use crate::sampling::{self, SamplingError};
use crate::spec::{DistributionSpec, GenerationSpec};

#[derive(Debug, thiserror::Error)]
pub enum AttestationError {
    #[error("expected {expected} entries but actual has {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("cannot average an empty attribute group")]
    EmptyGroup,
    #[error("attribute {attribute}: {source}")]
    ExpectedCounts {
        attribute: String,
        source: SamplingError,
    },
    #[error("dataset inconsistent with spec: attribute {attribute} {message}")]
    Inconsistent { attribute: String, message: String },
}

/// Expected-vs-actual comparison for one attribute.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct AttributeAttestation {
    pub attribute: String,
    pub distribution: DistributionSpec,
    pub expected: Vec<f64>,
    pub actual: Vec<u64>,
    /// Raw error: sum of per-value relative deviations.
    pub epsilon: f64,
    /// epsilon / value-count x 100: mean percent error per value.
    pub epsilon_per_value_pct: f64,
    /// Number of terms where the actual count was zero and the denominator
    /// was replaced by 1.
    pub zero_actual_terms: usize,
}

/// All attributes of one entity type.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EntityGroupAttestation {
    pub entity_kind: EntityKind,
    pub population: u64,
    pub attributes: Vec<AttributeAttestation>,
    pub mean_epsilon: Option<f64>,
    pub mean_epsilon_per_value_pct: Option<f64>,
}

/// The full attestation report: groups in subject, object, environment order.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct AttestationReport {
    pub groups: Vec<EntityGroupAttestation>,
    pub overall_mean_epsilon: Option<f64>,
    pub overall_mean_epsilon_per_value_pct: Option<f64>,
}

impl AttestationReport {
    pub fn group(&self, kind: EntityKind) -> &EntityGroupAttestation {
        self.groups
            .iter()
            .find(|g| g.entity_kind == kind)
            .expect("report always carries all three groups")
    }
}

/// Computes the attribute-level error; returns the error and the number of
/// zero-denominator substitutions.
pub fn attribute_error(expected: &[f64], actual: &[u64]) -> Result<(f64, usize), AttestationError> {
    if expected.is_empty() || expected.len() != actual.len() {
        return Err(AttestationError::LengthMismatch {
            expected: expected.len(),
            actual: actual.len(),
        });
    }
    let mut epsilon = 0.0;
    let mut zero_terms = 0;
    for (&e, &a) in expected.iter().zip(actual) {
        if a == 0 {
            epsilon += e.abs();
            zero_terms += 1;
        } else {
            epsilon += (e - a as f64).abs() / a as f64;
        }
    }
    Ok((epsilon, zero_terms))
}

/// Arithmetic mean of attribute errors.
pub fn mean_error(errors: &[f64]) -> Result<f64, AttestationError> {
    if errors.is_empty() {
        return Err(AttestationError::EmptyGroup);
    }
    Ok(errors.iter().sum::<f64>() / errors.len() as f64)
}

/// Tallies actual counts from the assignment maps, computes expected counts
/// from the spec's distributions, and assembles the report.
pub fn build_report(
    dataset: &AbacDataset,
    spec: &GenerationSpec,
) -> Result<AttestationReport, AttestationError> {
    let group_specs = [
        (EntityKind::Subject, &spec.subject_distributions),
        (EntityKind::Object, &spec.object_distributions),
        (EntityKind::Environment, &spec.environment_distributions),
    ];
    let mut groups = Vec::with_capacity(3);
    for (kind, distributions) in group_specs {
        let population = dataset.entities(kind).len() as u64;
        let attributes = dataset.attributes(kind);
        let mut entries = Vec::with_capacity(attributes.len());
        for (attr_idx, attr) in attributes.iter().enumerate() {
            let values = &dataset.attribute_values(kind)[attr];
            let dist = distributions.get(attr_idx).ok_or_else(|| {
                AttestationError::Inconsistent {
                    attribute: attr.clone(),
                    message: "has no distribution in the spec".into(),
                }
            })?;
            let actual = tally_actual(dataset, kind, attr_idx, values)?;
            let expected = sampling::expected_counts(dist, values.len(), population).map_err(
                |source| AttestationError::ExpectedCounts {
                    attribute: attr.clone(),
                    source,
                },
            )?;
            let (epsilon, zero_actual_terms) = attribute_error(&expected, &actual)?;
            entries.push(AttributeAttestation {
                attribute: attr.clone(),
                distribution: dist.clone(),
                epsilon,
                epsilon_per_value_pct: epsilon / values.len() as f64 * 100.0,
                expected,
                actual,
                zero_actual_terms,
            });
        }
        let epsilons: Vec<f64> = entries.iter().map(|a| a.epsilon).collect();
        let pcts: Vec<f64> = entries.iter().map(|a| a.epsilon_per_value_pct).collect();
        groups.push(EntityGroupAttestation {
            entity_kind: kind,
            population,
            mean_epsilon: mean_error(&epsilons).ok(),
            mean_epsilon_per_value_pct: mean_error(&pcts).ok(),
            attributes: entries,
        });
    }
    let all_eps: Vec<f64> = groups
        .iter()
        .flat_map(|g| g.attributes.iter().map(|a| a.epsilon))
        .collect();
    let all_pcts: Vec<f64> = groups
        .iter()
        .flat_map(|g| g.attributes.iter().map(|a| a.epsilon_per_value_pct))
        .collect();
    Ok(AttestationReport {
        overall_mean_epsilon: mean_error(&all_eps).ok(),
        overall_mean_epsilon_per_value_pct: mean_error(&all_pcts).ok(),
        groups,
    })
}

fn tally_actual(
    dataset: &AbacDataset,
    kind: EntityKind,
    attr_idx: usize,
    values: &[String],
) -> Result<Vec<u64>, AttestationError> {
    let mut counts = vec![0u64; values.len()];
    for row in dataset.assignments(kind).values() {
        let value = row.get(attr_idx).ok_or_else(|| AttestationError::Inconsistent {
            attribute: dataset.attributes(kind)[attr_idx].clone(),
            message: "assignment row is missing this attribute".into(),
        })?;
        let pos = values.iter().position(|v| v == value).ok_or_else(|| {
            AttestationError::Inconsistent {
                attribute: dataset.attributes(kind)[attr_idx].clone(),
                message: format!("assigned value {value:?} outside the value set"),
            }
        })?;
        counts[pos] += 1;
    }
    Ok(counts)
}

/// Renders one SVG bar chart per attribute plus the flat counts CSV.
/// Returned as (file name, content) pairs; the CSV comes last.
pub fn render_attestation(report: &AttestationReport) -> Vec<(String, String)> {
    let mut files = Vec::new();
    for group in &report.groups {
        for attr in &group.attributes {
            files.push((format!("{}.svg", attr.attribute), attribute_svg(attr)));
        }
    }
    files.push(("counts.csv".to_string(), counts_csv(report)));
    files
}

/// Flat machine-readable table: one row per attribute value.
pub fn counts_csv(report: &AttestationReport) -> String {
    let mut out = String::from("attribute,value,expected,actual,abs_diff,rel_err\n");
    for group in &report.groups {
        for attr in &group.attributes {
            let values = value_labels(attr);
            for ((label, &e), &a) in values.iter().zip(&attr.expected).zip(&attr.actual) {
                let diff = (e - a as f64).abs();
                let rel = if a == 0 { e.abs() } else { diff / a as f64 };
                out.push_str(&format!(
                    "{},{},{:.6},{},{:.6},{:.6}\n",
                    attr.attribute, label, e, a, diff, rel
                ));
            }
        }
    }
    out
}

fn value_labels(attr: &AttributeAttestation) -> Vec<String> {
    (1..=attr.expected.len())
        .map(|j| format!("{}_{j}", attr.attribute))
        .collect()
}

const SVG_WIDTH: u32 = 640;
const SVG_HEIGHT: u32 = 400;
const MARGIN_LEFT: f64 = 56.0;
const MARGIN_RIGHT: f64 = 16.0;
const MARGIN_TOP: f64 = 48.0;
const MARGIN_BOTTOM: f64 = 56.0;
const EXPECTED_FILL: &str = "#4c78a8";
const ACTUAL_FILL: &str = "#f58518";

/// Paired expected/actual bars for one attribute, labeled with value names.
pub fn attribute_svg(attr: &AttributeAttestation) -> String {
    let n = attr.expected.len();
    let plot_w = SVG_WIDTH as f64 - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = SVG_HEIGHT as f64 - MARGIN_TOP - MARGIN_BOTTOM;
    let max_value = attr
        .expected
        .iter()
        .copied()
        .chain(attr.actual.iter().map(|&a| a as f64))
        .fold(1.0f64, f64::max);
    let y_top = nice_ceiling(max_value);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_WIDTH}\" height=\"{SVG_HEIGHT}\" \
         viewBox=\"0 0 {SVG_WIDTH} {SVG_HEIGHT}\">\n"
    ));
    svg.push_str("  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" \
         text-anchor=\"middle\">{} — {}</text>\n",
        SVG_WIDTH / 2,
        xml_escape(&attr.attribute),
        xml_escape(&attr.distribution.describe())
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"38\" font-family=\"sans-serif\" font-size=\"11\" \
         text-anchor=\"middle\" fill=\"#444\">error={:.4} ({:.2}% per value)</text>\n",
        SVG_WIDTH / 2,
        attr.epsilon,
        attr.epsilon_per_value_pct
    ));

    // Horizontal gridlines with y-axis tick labels.
    for tick in 0..=4 {
        let frac = tick as f64 / 4.0;
        let y = MARGIN_TOP + plot_h * (1.0 - frac);
        svg.push_str(&format!(
            "  <line x1=\"{MARGIN_LEFT}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" \
             stroke=\"#ddd\"/>\n",
            MARGIN_LEFT + plot_w
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" \
             text-anchor=\"end\" fill=\"#444\">{:.0}</text>\n",
            MARGIN_LEFT - 6.0,
            y + 3.5,
            y_top * frac
        ));
    }

    let slot = plot_w / n as f64;
    let bar_w = (slot * 0.35).min(40.0);
    for (i, label) in value_labels(attr).iter().enumerate() {
        let center = MARGIN_LEFT + slot * (i as f64 + 0.5);
        let pairs = [
            (attr.expected[i], EXPECTED_FILL, center - bar_w),
            (attr.actual[i] as f64, ACTUAL_FILL, center),
        ];
        for (value, fill, x) in pairs {
            let h = (value / y_top * plot_h).max(0.0);
            let y = MARGIN_TOP + plot_h - h;
            svg.push_str(&format!(
                "  <rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{bar_w:.1}\" height=\"{h:.1}\" \
                 fill=\"{fill}\"/>\n"
            ));
        }
        svg.push_str(&format!(
            "  <text x=\"{center:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" \
             text-anchor=\"middle\" fill=\"#222\">{}</text>\n",
            MARGIN_TOP + plot_h + 16.0,
            xml_escape(label)
        ));
    }

    // Legend.
    let legend_y = SVG_HEIGHT as f64 - 18.0;
    svg.push_str(&format!(
        "  <rect x=\"{MARGIN_LEFT}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{EXPECTED_FILL}\"/>\n",
        legend_y - 10.0
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{legend_y:.1}\" font-family=\"sans-serif\" font-size=\"11\">Expected</text>\n",
        MARGIN_LEFT + 16.0
    ));
    svg.push_str(&format!(
        "  <rect x=\"{:.1}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{ACTUAL_FILL}\"/>\n",
        MARGIN_LEFT + 90.0,
        legend_y - 10.0
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{legend_y:.1}\" font-family=\"sans-serif\" font-size=\"11\">Actual</text>\n",
        MARGIN_LEFT + 106.0
    ));
    svg.push_str("</svg>\n");
    svg
}

fn nice_ceiling(v: f64) -> f64 {
    let magnitude = 10f64.powf(v.log10().floor());
    let scaled = v / magnitude;
    let nice = if scaled <= 1.0 {
        1.0
    } else if scaled <= 2.0 {
        2.0
    } else if scaled <= 4.0 {
        4.0
    } else if scaled <= 5.0 {
        5.0
    } else if scaled <= 8.0 {
        8.0
    } else {
        10.0
    };
    nice * magnitude
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
