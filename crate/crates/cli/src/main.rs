//! Command-line front end.
//!
//! Subcommands: `generate` (input.json to dataset archive), `extract`
//! (hand-drawn sketches plus a minimal config to a full input.json),
//! `attest` (recompute the distribution attestation of an existing output),
//! and `pipeline` (extract then generate in one run).
//!
//! Progress goes to stdout; every failure emits a single JSON error object
//! on stderr. Exit codes: 0 success, 2 specification/input errors,
//! 3 generation errors, 4 I/O errors, 5 per-image failures under --strict.

use std::hash::{BuildHasher, Hasher};
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use abacgen_core::artifacts::{parse_output_json, DEFAULT_MAX_ACM_TUPLES};
use abacgen_core::attestation::render_attestation;
use abacgen_core::pipeline::{
    run_extract, run_generate, ErrorClass, ExtractOutput, GenerateOptions, PipelineError,
};
use abacgen_core::sketch::{load_sketch_entries, SketchPipelineConfig, DEFAULT_MAX_REFINE};
use abacgen_core::{
    build_report, parse_spec, validate_spec, HttpLlmBackend, LlmBackend, MockLlmBackend,
};

const EXIT_SPEC: i32 = 2;
const EXIT_GENERATION: i32 = 3;
const EXIT_IO: i32 = 4;
const EXIT_STRICT: i32 = 5;

#[derive(Parser)]
#[command(
    name = "abacgen",
    version,
    about = "Synthetic ABAC dataset generator: entities, attribute distributions, policies, access control matrices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset archive from an input.json specification
    Generate(GenerateArgs),
    /// Interpret hand-drawn distribution sketches into a merged input.json
    Extract(ExtractArgs),
    /// Recompute the distribution attestation for an existing output
    Attest(AttestArgs),
    /// Extract from sketches, then generate, in one invocation
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Path to input.json
    #[arg(long)]
    input: PathBuf,
    /// Output directory for dataset.zip
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Master seed; drawn randomly (and printed) when omitted
    #[arg(long)]
    seed: Option<u64>,
    /// Largest access-control-matrix size enumerated in full
    #[arg(long, default_value_t = DEFAULT_MAX_ACM_TUPLES)]
    max_acm_tuples: u64,
    /// Emit only K tuples, sampled uniformly without replacement
    #[arg(long)]
    sample_tuples: Option<u64>,
    /// Skip ACM.txt and access_data.txt entirely
    #[arg(long)]
    no_acm: bool,
}

#[derive(Args)]
struct BackendArgs {
    /// LLM backend endpoint URL, or mock://<script.json> for the scripted
    /// offline backend
    #[arg(long)]
    backend_endpoint: Option<String>,
    /// Model identifier passed to the backend
    #[arg(long, default_value = "default")]
    backend_model: String,
    /// Name of the environment variable holding the backend credential
    #[arg(long)]
    credential_env: Option<String>,
    /// Maximum parameter-refinement rounds per sketch
    #[arg(long, default_value_t = DEFAULT_MAX_REFINE)]
    max_refine: u32,
}

#[derive(Args)]
struct ExtractArgs {
    /// Path to the minimal JSON (sizes and rule counts only)
    #[arg(long)]
    input: PathBuf,
    /// Directory or zip archive of sketch images
    #[arg(long)]
    sketches: PathBuf,
    /// Output directory for the merged input.json and comparison images
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    /// Fail (exit 5) if any image could not be processed
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct AttestArgs {
    /// Directory or dataset.zip containing input.json and output.json
    #[arg(long)]
    input: PathBuf,
    /// Output directory for the attestation files
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    extract: ExtractArgs,
    /// Master seed for generation; drawn randomly (and printed) when omitted
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_MAX_ACM_TUPLES)]
    max_acm_tuples: u64,
    #[arg(long)]
    sample_tuples: Option<u64>,
    #[arg(long)]
    no_acm: bool,
}

struct Failure {
    code: i32,
    payload: serde_json::Value,
}

impl Failure {
    fn new(code: i32, payload: serde_json::Value) -> Self {
        Failure { code, payload }
    }

    fn io(context: &str, err: std::io::Error) -> Self {
        Failure::new(
            EXIT_IO,
            json!({"error": {"kind": "IoError", "message": format!("{context}: {err}")}}),
        )
    }
}

impl From<PipelineError> for Failure {
    fn from(err: PipelineError) -> Self {
        let code = match err.class() {
            ErrorClass::Spec | ErrorClass::Backend => EXIT_SPEC,
            ErrorClass::Generation => EXIT_GENERATION,
            ErrorClass::Io => EXIT_IO,
        };
        Failure::new(code, err.to_json())
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(&args),
        Command::Extract(args) => cmd_extract(&args).map(|_| ()),
        Command::Attest(args) => cmd_attest(&args),
        Command::Pipeline(args) => cmd_pipeline(&args),
    };
    if let Err(failure) = result {
        eprintln!("{}", failure.payload);
        std::process::exit(failure.code);
    }
}

fn resolve_seed(requested: Option<u64>) -> u64 {
    requested.unwrap_or_else(|| {
        // One fresh 64-bit value from the randomly keyed SipHash state.
        std::collections::hash_map::RandomState::new()
            .build_hasher()
            .finish()
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::io(&format!("reading {}", path.display()), e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| Failure::io(&format!("creating {}", parent.display()), e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Failure::io(&format!("writing {}", path.display()), e))
}

fn cmd_generate(args: &GenerateArgs) -> Result<(), Failure> {
    let bytes = read_file(&args.input)?;
    let spec = parse_spec(&bytes).map_err(|e| Failure::from(PipelineError::from(e)))?;
    let seed = resolve_seed(args.seed);
    println!("seed: {seed}");
    let options = GenerateOptions {
        seed,
        max_acm_tuples: args.max_acm_tuples,
        sample_tuples: args.sample_tuples,
        no_acm: args.no_acm,
        ..GenerateOptions::new(seed)
    };
    let output = run_generate(&spec, &options)?;
    let archive_path = args.out.join("dataset.zip");
    write_file(&archive_path, &output.zip_bytes)?;
    println!("tuples: {}", output.tuple_count);
    if let Some(lines) = output.acm_lines {
        println!("acm lines: {lines}");
    }
    println!("archive: {}", archive_path.display());
    Ok(())
}

fn build_backend(args: &BackendArgs) -> Result<Arc<dyn LlmBackend>, Failure> {
    let endpoint = args.backend_endpoint.as_deref().ok_or_else(|| {
        Failure::new(
            EXIT_SPEC,
            json!({"error": {"kind": "BackendError",
                   "message": "no backend configured; pass --backend-endpoint"}}),
        )
    })?;
    if let Some(script) = endpoint.strip_prefix("mock://") {
        let mock = MockLlmBackend::from_script_file(Path::new(script))
            .map_err(|e| Failure::from(PipelineError::from(e)))?;
        return Ok(Arc::new(mock));
    }
    Ok(Arc::new(HttpLlmBackend::new(
        endpoint,
        args.backend_model.clone(),
        args.credential_env.clone(),
        Duration::from_secs(60),
    )))
}

fn cmd_extract(args: &ExtractArgs) -> Result<ExtractOutput, Failure> {
    let minimal = read_file(&args.input)?;
    let entries =
        load_sketch_entries(&args.sketches).map_err(|e| Failure::from(PipelineError::from(e)))?;
    let backend = build_backend(&args.backend)?;
    let config = SketchPipelineConfig {
        max_refine: args.backend.max_refine,
        ..SketchPipelineConfig::default()
    };
    let output = run_extract(&minimal, entries, backend.as_ref(), &config)?;

    for line in &output.log {
        println!("{line}");
    }
    write_file(&args.out.join("input.json"), output.merged_json.as_bytes())?;
    for (name, bytes) in &output.comparisons {
        write_file(&args.out.join("attestation/sketches").join(name), bytes)?;
    }
    println!("merged spec: {}", args.out.join("input.json").display());
    if !output.failures.is_empty() {
        let failures: Vec<_> = output
            .failures
            .iter()
            .map(|(name, message)| json!({"image": name, "message": message}))
            .collect();
        if args.strict {
            return Err(Failure::new(
                EXIT_STRICT,
                json!({"error": {"kind": "ImageFailures",
                       "message": format!("{} image(s) failed under --strict", failures.len()),
                       "failures": failures}}),
            ));
        }
        println!("warnings: {} image(s) skipped", failures.len());
    }
    Ok(output)
}

fn cmd_attest(args: &AttestArgs) -> Result<(), Failure> {
    let (input_bytes, output_bytes) = load_generated_pair(&args.input)?;
    let spec = parse_spec(&input_bytes).map_err(|e| Failure::from(PipelineError::from(e)))?;
    let violations = validate_spec(&spec);
    if !violations.is_empty() {
        return Err(Failure::from(PipelineError::InvalidSpec(violations)));
    }
    let (dataset, _policy) =
        parse_output_json(&output_bytes).map_err(|e| Failure::from(PipelineError::from(e)))?;
    let inconsistencies = dataset.validate(&spec);
    if !inconsistencies.is_empty() {
        return Err(Failure::from(PipelineError::InvalidSpec(inconsistencies)));
    }
    let report =
        build_report(&dataset, &spec).map_err(|e| Failure::from(PipelineError::from(e)))?;
    for (name, content) in render_attestation(&report) {
        write_file(&args.out.join("attestation").join(name), content.as_bytes())?;
    }
    write_file(
        &args.out.join("attestation/report.json"),
        &serde_json::to_vec_pretty(&report).expect("report serializes"),
    )?;
    println!("attestation: {}", args.out.join("attestation").display());
    Ok(())
}

fn load_generated_pair(path: &Path) -> Result<(Vec<u8>, Vec<u8>), Failure> {
    if path.is_dir() {
        return Ok((
            read_file(&path.join("input.json"))?,
            read_file(&path.join("output.json"))?,
        ));
    }
    let file = std::fs::File::open(path)
        .map_err(|e| Failure::io(&format!("opening {}", path.display()), e))?;
    let mut archive = zip::ZipArchive::new(file).map_err(|e| {
        Failure::new(
            EXIT_SPEC,
            json!({"error": {"kind": "ArchiveError",
                   "message": format!("{} is not a readable zip: {e}", path.display())}}),
        )
    })?;
    let mut member = |name: &str| -> Result<Vec<u8>, Failure> {
        let mut buf = Vec::new();
        archive
            .by_name(name)
            .map_err(|e| {
                Failure::new(
                    EXIT_SPEC,
                    json!({"error": {"kind": "ArchiveError",
                           "message": format!("archive member {name}: {e}")}}),
                )
            })?
            .read_to_end(&mut buf)
            .map_err(|e| Failure::io(&format!("reading member {name}"), e))?;
        Ok(buf)
    };
    Ok((member("input.json")?, member("output.json")?))
}

fn cmd_pipeline(args: &PipelineArgs) -> Result<(), Failure> {
    let extracted = cmd_extract(&args.extract)?;
    let seed = resolve_seed(args.seed);
    println!("seed: {seed}");
    let options = GenerateOptions {
        seed,
        max_acm_tuples: args.max_acm_tuples,
        sample_tuples: args.sample_tuples,
        no_acm: args.no_acm,
        ..GenerateOptions::new(seed)
    };
    let output = run_generate(&extracted.merged, &options)?;
    let archive_path = args.extract.out.join("dataset.zip");
    write_file(&archive_path, &output.zip_bytes)?;
    println!("archive: {}", archive_path.display());
    Ok(())
}
