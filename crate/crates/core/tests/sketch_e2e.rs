//! End-to-end sketch pipeline against the deterministic scripted backend:
//! fixture archive to merged config, filename independence, and failure
//! modes.

use std::collections::HashMap;

use abacgen_core::pipeline::{run_extract, run_generate, GenerateOptions, PipelineError};
use abacgen_core::sketch::{SketchEntry, SketchError, SketchPipelineConfig};
use abacgen_core::spec::DistributionSpec;
use abacgen_core::MockLlmBackend;
use serde_json::{json, Value};

fn fixture_png(tint: u8) -> Vec<u8> {
    let mut img = image::RgbImage::from_pixel(64, 48, image::Rgb([255, 255, 255]));
    // A crude curve so fixtures are distinguishable by content.
    for x in 0..64u32 {
        let y = 24 + ((x as i32 * (tint as i32 % 5 + 1)) % 20) - 10;
        img.put_pixel(x, y.clamp(0, 47) as u32, image::Rgb([tint, 0, 0]));
    }
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).unwrap();
    out.into_inner()
}

struct Fixture {
    bytes: Vec<u8>,
    replies: Vec<Value>,
}

fn fixture(tint: u8, identity: Value, extract: Value) -> Fixture {
    Fixture {
        bytes: fixture_png(tint),
        // Identity, extraction, then one refinement reply equal to the
        // extraction so the loop converges in one round.
        replies: vec![identity, extract.clone(), extract],
    }
}

// SA-1 Uniform, SA-2 Normal, OA-1 Poisson.
fn standard_fixtures() -> Vec<Fixture> {
    vec![
        fixture(
            10,
            json!({"type": "SA", "index": 1, "values": 3}),
            json!({"family": "Uniform", "low": 0, "high": 3}),
        ),
        fixture(
            20,
            json!({"type": "SA", "index": 2, "values": 4, "x_axis_min": 0, "x_axis_max": 4}),
            json!({"family": "Normal", "mu": 2, "sigma": 1}),
        ),
        fixture(
            30,
            json!({"type": "OA", "index": 1, "values": 2}),
            json!({"family": "Poisson", "lambda": 1}),
        ),
    ]
}

fn backend_for(fixtures: &[Fixture]) -> MockLlmBackend {
    let scripts: HashMap<String, Vec<Value>> = fixtures
        .iter()
        .map(|f| (MockLlmBackend::key_for_image(&f.bytes), f.replies.clone()))
        .collect();
    MockLlmBackend::new(scripts)
}

fn entries_named(fixtures: &[Fixture], names: &[&str]) -> Vec<SketchEntry> {
    fixtures
        .iter()
        .zip(names)
        .map(|(f, name)| SketchEntry {
            name: name.to_string(),
            declared_media_type: "image/png".into(),
            bytes: f.bytes.clone(),
        })
        .collect()
}

const MINIMAL: &[u8] = br#"{
    "subject_size": 5, "object_size": 4, "environment_size": 1,
    "permit_rules_count": 1, "deny_rules_count": 1
}"#;

#[test]
fn fixture_archive_yields_mergeable_config() {
    let fixtures = standard_fixtures();
    let backend = backend_for(&fixtures);
    let entries = entries_named(&fixtures, &["a.png", "b.png", "c.png"]);
    let out = run_extract(MINIMAL, entries, &backend, &SketchPipelineConfig::default()).unwrap();

    assert_eq!(out.merged.subject_attributes_count, 2);
    assert_eq!(out.merged.subject_attributes_values, vec![3, 4]);
    assert_eq!(
        out.merged.subject_distributions,
        vec![
            DistributionSpec::Uniform,
            DistributionSpec::Normal { mean: 2.0, variance: 1.0 }
        ]
    );
    assert_eq!(
        out.merged.object_distributions,
        vec![DistributionSpec::Poisson { lambda: 1.0 }]
    );
    assert_eq!(out.merged.environment_attributes_count, 0);
    assert!(out.failures.is_empty());
    assert_eq!(out.comparisons.len(), 3);
    assert_eq!(out.comparisons[0].0, "SA_1_comparison.png");

    // The merged config is accepted by the generation flow (no matrix:
    // an empty environment attribute set is fine, the matrix covers it).
    let generated = run_generate(&out.merged, &GenerateOptions::new(11)).unwrap();
    assert_eq!(generated.tuple_count, 5 * 4);
}

#[test]
fn renaming_fixture_files_changes_nothing() {
    let fixtures = standard_fixtures();

    let out_a = run_extract(
        MINIMAL,
        entries_named(&fixtures, &["a.png", "b.png", "c.png"]),
        &backend_for(&fixtures),
        &SketchPipelineConfig::default(),
    )
    .unwrap();
    let out_b = run_extract(
        MINIMAL,
        entries_named(&fixtures, &["zz_totally.png", "different.png", "names.png"]),
        &backend_for(&fixtures),
        &SketchPipelineConfig::default(),
    )
    .unwrap();

    assert_eq!(out_a.merged, out_b.merged);
    assert_eq!(out_a.merged_json, out_b.merged_json);
    assert_eq!(out_a.comparisons, out_b.comparisons);
}

#[test]
fn pipeline_is_bit_reproducible_with_mock_backend() {
    let fixtures = standard_fixtures();
    let run = || {
        run_extract(
            MINIMAL,
            entries_named(&fixtures, &["a.png", "b.png", "c.png"]),
            &backend_for(&fixtures),
            &SketchPipelineConfig::default(),
        )
        .unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a.merged_json, b.merged_json);
    assert_eq!(a.comparisons, b.comparisons);
    assert_eq!(a.log, b.log);
}

#[test]
fn non_contiguous_indices_fail() {
    // SA-1 and SA-3 with no SA-2.
    let fixtures = vec![
        fixture(
            40,
            json!({"type": "SA", "index": 1, "values": 3}),
            json!({"family": "Uniform", "low": 0, "high": 3}),
        ),
        fixture(
            50,
            json!({"type": "SA", "index": 3, "values": 2}),
            json!({"family": "Uniform", "low": 0, "high": 2}),
        ),
    ];
    let err = run_extract(
        MINIMAL,
        entries_named(&fixtures, &["one.png", "three.png"]),
        &backend_for(&fixtures),
        &SketchPipelineConfig::default(),
    )
    .unwrap_err();
    match err {
        PipelineError::Sketch(SketchError::NonContiguousIndices { found, .. }) => {
            assert_eq!(found, vec![1, 3]);
        }
        other => panic!("expected NonContiguousIndices, got {other:?}"),
    }
}

#[test]
fn duplicate_identities_fail() {
    let fixtures = vec![
        fixture(
            60,
            json!({"type": "OA", "index": 2, "values": 3}),
            json!({"family": "Uniform", "low": 0, "high": 3}),
        ),
        fixture(
            70,
            json!({"type": "OA", "index": 2, "values": 4}),
            json!({"family": "Uniform", "low": 0, "high": 4}),
        ),
    ];
    let err = run_extract(
        MINIMAL,
        entries_named(&fixtures, &["p.png", "q.png"]),
        &backend_for(&fixtures),
        &SketchPipelineConfig::default(),
    )
    .unwrap_err();
    assert!(matches!(
        err,
        PipelineError::Sketch(SketchError::DuplicateIdentity(label)) if label == "OA-2"
    ));
}

#[test]
fn rejected_entries_are_logged_and_skipped() {
    let mut fixtures = standard_fixtures();
    fixtures.truncate(2); // SA-1, SA-2 keep the indices contiguous
    let backend = backend_for(&fixtures);
    let mut entries = entries_named(&fixtures, &["a.png", "b.png"]);
    entries.push(SketchEntry {
        name: "notes.txt".into(),
        declared_media_type: "application/octet-stream".into(),
        bytes: b"just text".to_vec(),
    });
    let out = run_extract(MINIMAL, entries, &backend, &SketchPipelineConfig::default()).unwrap();
    assert_eq!(out.failures.len(), 1);
    assert_eq!(out.failures[0].0, "notes.txt");
    assert_eq!(out.merged.subject_attributes_count, 2);
    assert!(out.log.iter().any(|line| line.starts_with("notes.txt: rejected")));
}

#[test]
fn minimal_config_with_distributions_is_a_merge_conflict() {
    let fixtures = standard_fixtures();
    let backend = backend_for(&fixtures);
    let minimal = br#"{
        "subject_size": 5, "object_size": 4, "environment_size": 1,
        "permit_rules_count": 1, "deny_rules_count": 1,
        "subject_distributions": [{"distribution": "U"}]
    }"#;
    let err = run_extract(
        minimal,
        entries_named(&fixtures, &["a.png", "b.png", "c.png"]),
        &backend,
        &SketchPipelineConfig::default(),
    )
    .unwrap_err();
    assert!(matches!(err, PipelineError::MergeConflict(_)));
}

#[test]
fn zip_and_directory_sources_agree() {
    use std::io::Write;
    let fixtures = standard_fixtures();
    let dir = tempfile::tempdir().unwrap();
    let names = ["s1.png", "s2.png", "o1.png"];
    for (f, name) in fixtures.iter().zip(names) {
        std::fs::write(dir.path().join(name), &f.bytes).unwrap();
    }
    let zip_path = dir.path().join("sketches.zip");
    {
        let file = std::fs::File::create(&zip_path).unwrap();
        let mut writer = zip::ZipWriter::new(file);
        for (f, name) in fixtures.iter().zip(names) {
            writer
                .start_file(name, zip::write::SimpleFileOptions::default())
                .unwrap();
            writer.write_all(&f.bytes).unwrap();
        }
        writer.finish().unwrap();
    }

    let from_dir = abacgen_core::sketch::load_sketch_entries(dir.path()).unwrap();
    let from_zip = abacgen_core::sketch::load_sketch_entries(&zip_path).unwrap();
    // The directory listing also contains sketches.zip itself; restrict to
    // the fixture names before comparing.
    let mut dir_named: Vec<(String, Vec<u8>)> = from_dir
        .into_iter()
        .filter(|e| names.contains(&e.name.as_str()))
        .map(|e| (e.name, e.bytes))
        .collect();
    let mut zip_named: Vec<(String, Vec<u8>)> =
        from_zip.into_iter().map(|e| (e.name, e.bytes)).collect();
    dir_named.sort();
    zip_named.sort();
    assert_eq!(dir_named, zip_named);
}
