mod runlog;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use labelsynth::clustering::{subdivide_labels, SubdivideOptions};
use labelsynth::metrics::evaluate;
use labelsynth::morphology::{fill_holes, largest_cc};
use labelsynth::nifti::{read_image, read_labels, write_nifti, DataType};
use labelsynth::phantom::phantom_brain;
use labelsynth::pipeline::preprocess_for_inference;
use labelsynth::schema::{format_parent_mapping, parse_parent_mapping};
use labelsynth::{generate_batch, load_config, GeneratorConfig, LabelSchema, LabelVolume};

use runlog::RunLog;

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_PARTIAL: u8 = 2;
const EXIT_FATAL: u8 = 3;

#[derive(Parser)]
#[command(name = "labelsynth", version, about = "Synthesise training images from label maps and evaluate segmentations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic image/target pairs from a directory of label maps.
    Generate(GenerateArgs),
    /// Resample a scan to isotropic resolution and normalise its intensities.
    Preprocess(PreprocessArgs),
    /// Keep the largest component of each label and fill enclosed holes.
    Postprocess(PostprocessArgs),
    /// Score a segmentation against ground truth (Dice, SD95, volumes).
    Evaluate(EvaluateArgs),
    /// Split labels into intensity clusters to enrich a training map.
    EnhanceLabels(EnhanceArgs),
    /// Write the built-in procedural head phantom.
    Phantom(PhantomArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// TOML configuration; built-in defaults when absent.
    #[arg(long, env = "LABELSYNTH_CONFIG")]
    config: Option<PathBuf>,
    /// Directory of label maps (.nii or .nii.gz), or a single map.
    #[arg(long)]
    maps: PathBuf,
    /// Number of samples.
    #[arg(long)]
    count: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Sub-label to parent mapping written by `enhance-labels`, for
    /// subdivided maps.
    #[arg(long)]
    sub_labels: Option<PathBuf>,
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Target isotropic resolution in mm.
    #[arg(long, default_value_t = 1.0)]
    resolution: f64,
}

#[derive(Args)]
struct PostprocessArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Label schema; the built-in brain schema when absent.
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Label schema; the built-in brain schema when absent.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Output CSV table.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EnhanceArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Subdivided label map.
    #[arg(long)]
    out: PathBuf,
    /// Sub-label to parent mapping (CSV).
    #[arg(long)]
    map: PathBuf,
    /// Fixed number of background classes instead of a random 3 to 10.
    #[arg(long)]
    bg_classes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PhantomArgs {
    #[arg(long)]
    out: PathBuf,
    /// Edge length in voxels.
    #[arg(long, default_value_t = 64)]
    size: usize,
}

type Failure = (u8, String);

fn fatal(e: impl std::fmt::Display) -> Failure {
    (EXIT_FATAL, e.to_string())
}

fn load_schema(path: Option<&Path>) -> Result<LabelSchema, Failure> {
    match path {
        Some(p) => LabelSchema::load(p).map_err(fatal),
        None => Ok(LabelSchema::default_brain()),
    }
}

fn is_nifti(p: &Path) -> bool {
    let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
    name.ends_with(".nii") || name.ends_with(".nii.gz")
}

fn read_maps(path: &Path) -> Result<Vec<LabelVolume>, Failure> {
    let files = if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| fatal(format!("{}: {e}", path.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && is_nifti(p))
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        return Err(fatal(format!("no label maps found in {}", path.display())));
    }
    files.iter().map(|f| read_labels(f).map_err(fatal)).collect()
}

fn generate(args: GenerateArgs, log: &mut RunLog) -> Result<u8, Failure> {
    let mut cfg = match &args.config {
        Some(p) => load_config(p).map_err(fatal)?,
        None => GeneratorConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let mut schema = load_schema(cfg.schema.as_deref())?;
    if let Some(path) = &args.sub_labels {
        let text = std::fs::read_to_string(path).map_err(|e| fatal(format!("{}: {e}", path.display())))?;
        schema = schema
            .with_parent_mapping(parse_parent_mapping(&text).map_err(fatal)?)
            .map_err(fatal)?;
    }
    let maps = read_maps(&args.maps)?;
    log.event(format!("loaded {} label map(s) from {}", maps.len(), args.maps.display()));
    std::fs::create_dir_all(&args.out).map_err(|e| fatal(format!("{}: {e}", args.out.display())))?;
    let resolved = args.out.join("run_config.toml");
    std::fs::write(&resolved, cfg.to_toml()).map_err(|e| fatal(format!("{}: {e}", resolved.display())))?;
    log.event(format!("resolved configuration written to {}", resolved.display()));
    let report = generate_batch(&maps, &cfg, &schema, args.count, &args.out, args.workers).map_err(fatal)?;
    for (i, ms) in &report.timings_ms {
        log.event(format!("sample {i} generated in {ms} ms"));
    }
    for w in &report.warnings {
        log.warn(w.clone());
    }
    if !report.skipped.is_empty() {
        log.event(format!("{} complete sample(s) already present, skipped", report.skipped.len()));
    }
    for f in &report.failures {
        log.error(format!("sample {} failed: {}", f.index, f.message));
    }
    log.event(format!(
        "{} generated, {} skipped, {} failed",
        report.generated.len(),
        report.skipped.len(),
        report.failures.len()
    ));
    Ok(if report.failures.is_empty() { EXIT_OK } else { EXIT_PARTIAL })
}

fn preprocess(args: PreprocessArgs, log: &mut RunLog) -> Result<u8, Failure> {
    let scan = read_image(&args.input).map_err(fatal)?;
    let out = preprocess_for_inference(&scan, args.resolution).map_err(fatal)?;
    if out.degenerate {
        log.warn(format!("{}: constant intensities, output is all zeros", args.input.display()));
    }
    write_nifti(&out.volume, &args.out, DataType::Float32, false).map_err(fatal)?;
    log.event(format!("wrote {} with dims {:?}", args.out.display(), out.volume.dims()));
    Ok(EXIT_OK)
}

fn postprocess(args: PostprocessArgs, log: &mut RunLog) -> Result<u8, Failure> {
    let schema = load_schema(args.schema.as_deref())?;
    let mut seg = read_labels(&args.input).map_err(fatal)?;
    for label in seg.labels() {
        if label != 0 {
            seg = largest_cc(&seg, label);
        }
    }
    let seg = fill_holes(&seg, &schema.fillable_labels());
    write_nifti(&seg, &args.out, DataType::Int32, false).map_err(fatal)?;
    log.event(format!("wrote {}", args.out.display()));
    Ok(EXIT_OK)
}

fn evaluate_cmd(args: EvaluateArgs, log: &mut RunLog) -> Result<u8, Failure> {
    let schema = load_schema(args.schema.as_deref())?;
    let pred = read_labels(&args.pred).map_err(fatal)?;
    let gt = read_labels(&args.gt).map_err(fatal)?;
    let report = evaluate(&pred, &gt, &schema.evaluate_labels()).map_err(fatal)?;
    for r in &report.rows {
        if r.sd95_mm.is_none() {
            log.warn(format!("label {} missing from a segmentation, SD95 not defined", r.label));
        }
    }
    std::fs::write(&args.out, report.to_csv()).map_err(|e| fatal(format!("{}: {e}", args.out.display())))?;
    if let Some(d) = report.mean_dice() {
        log.event(format!("mean Dice {d:.4} over {} labels", report.rows.len()));
    }
    Ok(EXIT_OK)
}

fn enhance(args: EnhanceArgs, log: &mut RunLog) -> Result<u8, Failure> {
    let image = read_image(&args.image).map_err(fatal)?;
    let labels = read_labels(&args.labels).map_err(fatal)?;
    let opts = SubdivideOptions {
        bg_classes: args.bg_classes,
        ..SubdivideOptions::default()
    };
    let sub = subdivide_labels(&image, &labels, &opts, args.seed).map_err(fatal)?;
    for w in &sub.warnings {
        log.warn(w.clone());
    }
    write_nifti(&sub.labels, &args.out, DataType::Int32, false).map_err(fatal)?;
    std::fs::write(&args.map, format_parent_mapping(&sub.parents))
        .map_err(|e| fatal(format!("{}: {e}", args.map.display())))?;
    log.event(format!(
        "{} sub-labels, {} background classes",
        sub.parents.len(),
        sub.background_classes
    ));
    Ok(EXIT_OK)
}

fn phantom(args: PhantomArgs, log: &mut RunLog) -> Result<u8, Failure> {
    if args.size < 8 {
        return Err((EXIT_USAGE, "--size must be at least 8".into()));
    }
    let v = phantom_brain([args.size; 3]);
    write_nifti(&v, &args.out, DataType::Int16, false).map_err(fatal)?;
    log.event(format!("wrote {} ({} labels)", args.out.display(), v.labels().len()));
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            return ExitCode::from(code);
        }
    };
    let mut log = RunLog::new();
    let result = match cli.command {
        Command::Generate(a) => generate(a, &mut log),
        Command::Preprocess(a) => preprocess(a, &mut log),
        Command::Postprocess(a) => postprocess(a, &mut log),
        Command::Evaluate(a) => evaluate_cmd(a, &mut log),
        Command::EnhanceLabels(a) => enhance(a, &mut log),
        Command::Phantom(a) => phantom(a, &mut log),
    };
    if !log.warnings().is_empty() {
        log.event(format!("{} distinct warning(s) raised", log.warnings().len()));
    }
    match result {
        Ok(code) => ExitCode::from(code),
        Err((code, msg)) => {
            log.error(&msg);
            ExitCode::from(code)
        }
    }
}
