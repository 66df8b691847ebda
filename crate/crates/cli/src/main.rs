//! `docquad` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid data, 3 I/O failure.
//! Results are JSON on standard output, or written to `--out`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use docquad::augment::{augment_sample_traced, AugmentConfig, Sample};
use docquad::dataset_io::{
    load_entities, load_grid, load_manifest, load_prediction, load_quad, report_to_csv, report_to_json,
    write_atomic, ReportFormat,
};
use docquad::detect::{decode_grid, nms, select_top, DecodeConfig};
use docquad::geometry::{quad_iou, Quad};
use docquad::harness::{
    bench, evaluate_detection, evaluate_ocr, load_alignments, make_folds, write_fixture_set, BenchPayload,
    FixtureConfig, FoldPlan, PredictionSource, WarpKind, BENCH_OPS, DEFAULT_K,
};
use docquad::ocr_metric::{align, ocr_score_detailed, AlignMode, NormalizeConfig};
use docquad::raster::{encode_png, load_image};
use docquad::rectify::{rectify_document, RectifyConfig};
use docquad::rng::SeededRng;
use docquad::Error;

#[derive(Debug, Parser)]
#[command(name = "docquad", version, about = "Document quadrilateral detection toolkit")]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Suppress progress messages on standard error.
    #[arg(long, global = true)]
    quiet: bool,

    /// Write the JSON (or CSV) result here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Produce augmented copies of an annotated image.
    Augment(AugmentArgs),
    /// Decode a detection grid into quadrilaterals.
    Decode(DecodeArgs),
    /// Project a document quadrilateral onto an upright rectangle.
    Rectify(RectifyArgs),
    /// Score OCR output against ground-truth entities.
    ScoreOcr(ScoreOcrArgs),
    /// Intersection over union of two quadrilaterals.
    Iou(IouArgs),
    /// Split a manifest's items into cross-validation folds.
    Folds(FoldsArgs),
    /// Evaluate detections over cross-validation folds.
    Eval(EvalArgs),
    /// Evaluate OCR predictions for every manifest item.
    EvalOcr(EvalOcrArgs),
    /// Time a single-item pipeline operation.
    Bench(BenchArgs),
    /// Generate synthetic fixture scenes with a manifest.
    Fixtures(FixturesArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    #[arg(long)]
    image: PathBuf,
    /// Quad as inline JSON `[[x,y],...]` or a path to a JSON file.
    #[arg(long)]
    quad: String,
    /// Maximum |pitch| and |yaw| in degrees; roll is capped at 45.
    #[arg(long, default_value_t = 55.0)]
    sigma: f64,
    #[arg(long, value_enum, default_value = "on")]
    photometric: OnOff,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    count: u32,
    #[arg(long)]
    out_dir: PathBuf,
    /// Output width; defaults to the input width.
    #[arg(long)]
    width: Option<u32>,
    /// Output height; defaults to the input height.
    #[arg(long)]
    height: Option<u32>,
}

#[derive(Debug, Args)]
struct DecodeOpts {
    /// Confidence threshold.
    #[arg(long, default_value_t = 0.35)]
    conf: f64,
    /// NMS IoU threshold.
    #[arg(long, default_value_t = 0.3)]
    nms: f64,
}

impl DecodeOpts {
    fn config(&self) -> Result<DecodeConfig, Failure> {
        let cfg = DecodeConfig {
            conf_threshold: self.conf,
            nms_iou: self.nms,
        };
        cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct DecodeArgs {
    #[arg(long)]
    grid: PathBuf,
    #[command(flatten)]
    opts: DecodeOpts,
}

#[derive(Debug, Args)]
struct RectifyArgs {
    #[arg(long)]
    image: PathBuf,
    /// Quad as inline JSON or a path; alternative to `--grid`.
    #[arg(long, conflicts_with = "grid", required_unless_present = "grid")]
    quad: Option<String>,
    /// Detection grid whose top detection is rectified.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[command(flatten)]
    opts: DecodeOpts,
    /// Document width over height.
    #[arg(long, default_value_t = 1.5)]
    aspect: f64,
    #[arg(long, default_value_t = 600)]
    width: u32,
    /// Where to write the rectified PNG.
    #[arg(long)]
    output_image: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Name,
    Box,
}

impl From<ModeArg> for AlignMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Name => AlignMode::Name,
            ModeArg::Box => AlignMode::Box,
        }
    }
}

#[derive(Debug, Args)]
struct ScoreOcrArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, value_enum, default_value = "name")]
    mode: ModeArg,
    /// Compare case-insensitively.
    #[arg(long)]
    casefold: bool,
}

#[derive(Debug, Args)]
struct IouArgs {
    #[arg(long)]
    a: String,
    #[arg(long)]
    b: String,
}

#[derive(Debug, Args)]
struct FoldsArgs {
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SourceArg {
    Grids,
    Quads,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Fold plan from `folds`; built from `--seed` when omitted.
    #[arg(long)]
    folds: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "grids")]
    source: SourceArg,
    #[command(flatten)]
    opts: DecodeOpts,
    /// Report format; defaults to the `--out` extension, else JSON.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Debug, Args)]
struct EvalOcrArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory of `<id>.json` predictions.
    #[arg(long)]
    pred_dir: PathBuf,
    #[arg(long, value_enum, default_value = "name")]
    mode: ModeArg,
    #[arg(long)]
    casefold: bool,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, value_parser = BENCH_OPS)]
    op: String,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    iters: u64,
    #[arg(long, default_value_t = 5)]
    warmup: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum WarpArg {
    Identity,
    Affine,
    Perspective,
    Random,
}

#[derive(Debug, Args)]
struct FixturesArgs {
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "random")]
    warp: WarpArg,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Core(Error),
    Io(PathBuf, std::io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Core(e) if e.is_io() => 3,
            Failure::Core(_) => 2,
            Failure::Io(..) => 3,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) => m.clone(),
            Failure::Core(e) => e.to_string(),
            Failure::Io(p, e) => format!("{}: {e}", p.display()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

/// Result payload: JSON for most commands, pre-rendered bytes for CSV reports.
enum Output {
    Json(Value),
    Bytes(Vec<u8>),
}

struct Ctx {
    seed: u64,
    quiet: bool,
    out: Option<PathBuf>,
}

impl Ctx {
    fn note(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os()))
}

fn run(argv: impl IntoIterator<Item = OsString>) -> u8 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let ctx = Ctx {
        seed: cli.seed,
        quiet: cli.quiet,
        out: cli.out,
    };
    match dispatch(&ctx, cli.command).and_then(|o| emit(&ctx, o)) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.exit_code()
        }
    }
}

fn emit(ctx: &Ctx, out: Output) -> CliResult<()> {
    let bytes = match out {
        Output::Json(v) => {
            let mut s = json_line(&v);
            s.push('\n');
            s.into_bytes()
        }
        Output::Bytes(b) => b,
    };
    match &ctx.out {
        Some(p) => write_atomic(p, &bytes)?,
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(&bytes)
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::Io(PathBuf::from("<stdout>"), e))?;
        }
    }
    Ok(())
}

/// Compact JSON with a space after each separator, e.g. `{"iou": 1.0}`.
fn json_line(v: &Value) -> String {
    match v {
        Value::Object(map) => {
            let fields: Vec<String> = map
                .iter()
                .map(|(k, v)| format!("{}: {}", Value::String(k.clone()), json_line(v)))
                .collect();
            format!("{{{}}}", fields.join(", "))
        }
        Value::Array(items) => {
            let items: Vec<String> = items.iter().map(json_line).collect();
            format!("[{}]", items.join(", "))
        }
        other => other.to_string(),
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result serializes")
}

fn dispatch(ctx: &Ctx, cmd: Command) -> CliResult<Output> {
    match cmd {
        Command::Augment(a) => cmd_augment(ctx, a),
        Command::Decode(a) => cmd_decode(a),
        Command::Rectify(a) => cmd_rectify(ctx, a),
        Command::ScoreOcr(a) => cmd_score_ocr(a),
        Command::Iou(a) => cmd_iou(a),
        Command::Folds(a) => cmd_folds(ctx, a),
        Command::Eval(a) => cmd_eval(ctx, a),
        Command::EvalOcr(a) => cmd_eval_ocr(ctx, a),
        Command::Bench(a) => cmd_bench(ctx, a),
        Command::Fixtures(a) => cmd_fixtures(ctx, a),
    }
}

/// Inline JSON when the argument looks like an array, otherwise a file path.
fn parse_quad(arg: &str) -> CliResult<Quad<f64>> {
    if arg.trim_start().starts_with('[') {
        serde_json::from_str(arg).map_err(|e| Failure::Usage(format!("invalid inline quad: {e}")))
    } else {
        Ok(load_quad(arg)?)
    }
}

fn report_format(explicit: Option<FormatArg>, out: Option<&Path>) -> ReportFormat {
    match explicit {
        Some(FormatArg::Json) => ReportFormat::Json,
        Some(FormatArg::Csv) => ReportFormat::Csv,
        None => out.map_or(ReportFormat::Json, ReportFormat::from_path),
    }
}

fn report_output(report: &docquad::dataset_io::EvalReport, format: ReportFormat) -> Output {
    match format {
        ReportFormat::Json => Output::Bytes(report_to_json(report)),
        ReportFormat::Csv => Output::Bytes(report_to_csv(report)),
    }
}

/// Builds a directory's contents in a sibling staging directory and moves
/// them into place only when `fill` succeeds.
fn staged<T>(out_dir: &Path, fill: impl FnOnce(&Path) -> CliResult<T>) -> CliResult<T> {
    let parent = match out_dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(|e| Failure::Io(parent.clone(), e))?;
    let stage = tempfile::Builder::new()
        .prefix(".docquad-stage")
        .tempdir_in(&parent)
        .map_err(|e| Failure::Io(parent.clone(), e))?;
    let value = fill(stage.path())?;
    if out_dir.exists() {
        move_tree(stage.path(), out_dir)?;
    } else {
        fs::rename(stage.path(), out_dir).map_err(|e| Failure::Io(out_dir.to_path_buf(), e))?;
    }
    Ok(value)
}

fn move_tree(src: &Path, dst: &Path) -> CliResult<()> {
    fs::create_dir_all(dst).map_err(|e| Failure::Io(dst.to_path_buf(), e))?;
    let entries = fs::read_dir(src).map_err(|e| Failure::Io(src.to_path_buf(), e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Failure::Io(src.to_path_buf(), e))?;
        let target = dst.join(entry.file_name());
        if entry.path().is_dir() {
            move_tree(&entry.path(), &target)?;
        } else {
            fs::rename(entry.path(), &target).map_err(|e| Failure::Io(target.clone(), e))?;
        }
    }
    Ok(())
}

fn cmd_augment(ctx: &Ctx, a: AugmentArgs) -> CliResult<Output> {
    let quad = parse_quad(&a.quad)?;
    let image = load_image(&a.image)?;
    let cfg = AugmentConfig::new(
        a.sigma,
        matches!(a.photometric, OnOff::On),
        a.width.unwrap_or(image.width()),
        a.height.unwrap_or(image.height()),
    );
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let sample = Sample { image, quad };

    let files = staged(&a.out_dir, |dir| {
        let mut files = Vec::new();
        for i in 0..a.count {
            let trace = augment_sample_traced(&sample, &mut SeededRng::for_item(ctx.seed, i as u64), &cfg)?;
            let stem = format!("aug_{i:04}");
            write_atomic(dir.join(format!("{stem}.png")), &encode_png(&trace.sample.image)?)?;
            let meta = json!({
                "quad": trace.sample.quad,
                "angles": trace.angles,
                "homography": trace.homography,
                "photometric": trace.photometric,
            });
            let mut text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
            text.push('\n');
            write_atomic(dir.join(format!("{stem}.json")), text.as_bytes())?;
            files.push(stem);
        }
        Ok(files)
    })?;
    ctx.note(&format!("wrote {} augmented samples to {}", files.len(), a.out_dir.display()));
    Ok(Output::Json(json!({"count": files.len(), "samples": files})))
}

fn cmd_decode(a: DecodeArgs) -> CliResult<Output> {
    let cfg = a.opts.config()?;
    let grid = load_grid(&a.grid)?.cast::<f64>();
    let kept = nms(&decode_grid(&grid, &cfg), cfg.nms_iou);
    let top = select_top(&kept);
    Ok(Output::Json(json!({"detections": kept, "top": top})))
}

fn cmd_rectify(ctx: &Ctx, a: RectifyArgs) -> CliResult<Output> {
    let cfg = RectifyConfig {
        aspect: a.aspect,
        target_width: a.width,
    };
    let (w, h) = cfg.output_dims().map_err(|e| Failure::Usage(e.to_string()))?;
    let decode = a.opts.config()?;
    let image = load_image(&a.image)?;
    let quad = match (&a.quad, &a.grid) {
        (Some(q), _) => parse_quad(q)?,
        (None, Some(g)) => {
            let grid = load_grid(g)?.cast::<f64>();
            match select_top(&nms(&decode_grid(&grid, &decode), decode.nms_iou)) {
                Some(d) => d.quad,
                None => return Err(Error::MissingPrediction(g.display().to_string()).into()),
            }
        }
        (None, None) => unreachable!("clap requires one of --quad/--grid"),
    };
    let page = rectify_document(&image, &quad, &cfg)?;
    write_atomic(&a.output_image, &encode_png(&page)?)?;
    ctx.note(&format!("wrote {}x{} page to {}", w, h, a.output_image.display()));
    Ok(Output::Json(json!({
        "quad": quad,
        "width": w,
        "height": h,
        "image": a.output_image,
    })))
}

fn cmd_score_ocr(a: ScoreOcrArgs) -> CliResult<Output> {
    let gt = load_entities(&a.gt)?;
    let pred = load_prediction(&a.pred)?;
    AlignMode::from(a.mode).check(&pred)?;
    let norm = NormalizeConfig {
        casefold: a.casefold,
        ..NormalizeConfig::default()
    };
    let score = ocr_score_detailed(&gt, &align(&gt, &pred), &norm)?;
    Ok(Output::Json(to_json(&score)))
}

fn cmd_iou(a: IouArgs) -> CliResult<Output> {
    let qa = parse_quad(&a.a)?;
    let qb = parse_quad(&a.b)?;
    Ok(Output::Json(json!({"iou": quad_iou(&qa, &qb)})))
}

fn cmd_folds(ctx: &Ctx, a: FoldsArgs) -> CliResult<Output> {
    if a.k < 2 {
        return Err(Failure::Usage(format!("--k must be at least 2, got {}", a.k)));
    }
    let manifest = load_manifest(&a.manifest)?;
    let plan = make_folds(&manifest.ids(), a.k, ctx.seed)?;
    Ok(Output::Json(to_json(&plan)))
}

fn cmd_eval(ctx: &Ctx, a: EvalArgs) -> CliResult<Output> {
    let decode = a.opts.config()?;
    let format = report_format(a.format, ctx.out.as_deref());
    let manifest = load_manifest(&a.manifest)?;
    let plan: FoldPlan = match &a.folds {
        Some(p) => {
            let bytes = fs::read(p).map_err(|e| Failure::Io(p.clone(), e))?;
            serde_json::from_slice(&bytes).map_err(|source| Error::Json {
                path: p.clone(),
                source,
            })?
        }
        None => make_folds(&manifest.ids(), DEFAULT_K.min(manifest.items.len().max(2)), ctx.seed)?,
    };
    let source = match a.source {
        SourceArg::Grids => PredictionSource::Grids(decode),
        SourceArg::Quads => PredictionSource::PredQuads,
    };
    let report = evaluate_detection(&manifest, &plan, &source)?;
    Ok(report_output(&report, format))
}

fn cmd_eval_ocr(ctx: &Ctx, a: EvalOcrArgs) -> CliResult<Output> {
    let format = report_format(a.format, ctx.out.as_deref());
    let manifest = load_manifest(&a.manifest)?;
    let alignments = load_alignments(&manifest, &a.pred_dir, Some(a.mode.into()))?;
    let norm = NormalizeConfig {
        casefold: a.casefold,
        ..NormalizeConfig::default()
    };
    let report = evaluate_ocr(&manifest, &alignments, &norm)?;
    Ok(report_output(&report, format))
}

fn cmd_bench(ctx: &Ctx, a: BenchArgs) -> CliResult<Output> {
    let payload = BenchPayload::standard(ctx.seed)?;
    let stats = bench(&a.op, &payload, a.iters as usize, a.warmup as usize)?;
    let mut v = to_json(&stats);
    v["op"] = Value::String(a.op);
    Ok(Output::Json(v))
}

fn cmd_fixtures(ctx: &Ctx, a: FixturesArgs) -> CliResult<Output> {
    let cfg = FixtureConfig {
        warp: match a.warp {
            WarpArg::Identity => Some(WarpKind::Identity),
            WarpArg::Affine => Some(WarpKind::Affine),
            WarpArg::Perspective => Some(WarpKind::Perspective),
            WarpArg::Random => None,
        },
        ..FixtureConfig::default()
    };
    let items = staged(&a.out_dir, |dir| Ok(write_fixture_set(dir, a.count, ctx.seed, &cfg)?))?;
    ctx.note(&format!("wrote {} fixtures to {}", items.len(), a.out_dir.display()));
    Ok(Output::Json(json!({
        "count": items.len(),
        "manifest": a.out_dir.join("manifest.json"),
    })))
}
