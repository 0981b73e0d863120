//! The `pdk` command line.
//!
//! Exit codes: 0 success, 1 I/O or format error, 2 validation or contract
//! error (including bad arguments).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::Serialize;

use crate::colormap::{palette_from_json, render, ColorMapConfig};
use crate::dataset_io::{
    decode_depth, decode_disparity, disparity_to_depth, encode_depth, encode_disparity, read_file,
    ClassSet, DepthMap, DisparityMap, PanopticDecoder, PanopticEncoding, PanopticMap,
    SegmentsSidecar, StereoCamera,
};
use crate::depth_metrics::{DepthReport, DepthSums};
use crate::error::Error;
use crate::fusion::{instance_depths, records_from_json, records_to_json, InstanceDepthRecord};
use crate::panoptic_metrics::{match_segments, MatchResult, PqAccumulator};
use crate::par;
use crate::synth::{generate_scene_with, Perturbation, SceneSpec};

pub const LOG_ENV: &str = "PDK_LOG";

#[derive(Debug, Parser)]
#[command(
    name = "pdk",
    version,
    about = "Panoptic segmentation + depth evaluation and fusion"
)]
pub struct Cli {
    /// More log output (-v info, -vv debug); PDK_LOG overrides.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,

    /// Worker threads for per-image work (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert 16-bit disparity PNGs to 16-bit depth PNGs.
    ConvertDisparity(ConvertArgs),
    /// Panoptic Quality of predictions against ground truth.
    EvalPanoptic(EvalPanopticArgs),
    /// Depth error metrics of predictions against ground truth.
    EvalDepth(EvalDepthArgs),
    /// Mean depth per segment.
    Fuse(FuseArgs),
    /// Render the panoptic-depth color map.
    Render(RenderArgs),
    /// Write synthetic ground-truth / prediction scenes.
    Synth(SynthArgs),
    /// Disparity → depth → instance depths → color map for one image.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args, Clone)]
pub struct PanopticInput {
    /// Panoptic raster encoding.
    #[arg(long, value_enum, default_value_t = PanopticEncoding::RgbId)]
    pub encoding: PanopticEncoding,
    /// External label value to treat as void.
    #[arg(long)]
    pub void_label: Option<u32>,
    /// Class list JSON `[{id, name, isthing}]` (default: Cityscapes).
    #[arg(long)]
    pub classes: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// Disparity PNG or directory of PNGs.
    #[arg(long)]
    pub disparity: PathBuf,
    /// Camera JSON, or a directory of `<stem>.json` camera files.
    #[arg(long)]
    pub camera: PathBuf,
    /// Output PNG (file input) or directory (directory input).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalPanopticArgs {
    /// Ground-truth PNG or directory of `<stem>.png` (+ `<stem>.json`).
    #[arg(long)]
    pub gt: PathBuf,
    /// Prediction PNG or directory, paired with the ground truth by stem.
    #[arg(long)]
    pub pred: PathBuf,
    #[command(flatten)]
    pub input: PanopticInput,
    /// Score a missing prediction as empty instead of failing.
    #[arg(long)]
    pub allow_missing_pred: bool,
    /// Write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalDepthArgs {
    /// Ground-truth depth PNG or directory.
    #[arg(long)]
    pub gt: PathBuf,
    /// Predicted depth PNG or directory, paired with the ground truth by stem.
    #[arg(long)]
    pub pred: PathBuf,
    /// Skip ground-truth images without a prediction instead of failing.
    #[arg(long)]
    pub allow_missing_pred: bool,
    /// Write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Panoptic PNG.
    #[arg(long)]
    pub panoptic: PathBuf,
    /// Segment sidecar (default: `<panoptic stem>.json`).
    #[arg(long)]
    pub segments: Option<PathBuf>,
    #[command(flatten)]
    pub input: PanopticInput,
    /// Depth PNG.
    #[arg(long)]
    pub depth: PathBuf,
    /// Instances JSON output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct ColorArgs {
    /// Depth in metres drawn red (hue 0°).
    #[arg(long, default_value_t = 0.0)]
    pub near: f64,
    /// Depth in metres and beyond drawn blue (hue 240°).
    #[arg(long, default_value_t = 80.0)]
    pub far: f64,
    /// Palette JSON `{"<category_id>": [r, g, b]}` (default: Cityscapes).
    #[arg(long)]
    pub palette: Option<PathBuf>,
    /// Do not draw black segment boundaries.
    #[arg(long)]
    pub no_boundaries: bool,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Panoptic PNG.
    #[arg(long)]
    pub panoptic: PathBuf,
    /// Segment sidecar (default: `<panoptic stem>.json`).
    #[arg(long)]
    pub segments: Option<PathBuf>,
    #[command(flatten)]
    pub input: PanopticInput,
    /// Instances JSON from `fuse`.
    #[arg(long, conflicts_with = "depth", required_unless_present = "depth")]
    pub instances: Option<PathBuf>,
    /// Depth PNG; instance depths are computed on the fly.
    #[arg(long)]
    pub depth: Option<PathBuf>,
    #[command(flatten)]
    pub color: ColorArgs,
    /// Color PNG output.
    #[arg(long)]
    pub out: PathBuf,
    /// Annotation JSON output (default: `<out stem>_annotations.json`).
    #[arg(long)]
    pub annotations: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// SceneSpec JSON; overrides the shape flags below.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Image width in pixels.
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    /// Image height in pixels.
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    /// Thing instances per scene.
    #[arg(long, default_value_t = 4)]
    pub things: usize,
    /// Horizontal stuff bands per scene.
    #[arg(long, default_value_t = 3)]
    pub stuff: usize,
    /// Seed of the first scene.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pixels eroded from each predicted thing.
    #[arg(long, default_value_t = 0)]
    pub erosion: usize,
    /// Probability of a wrong predicted category.
    #[arg(long, default_value_t = 0.0)]
    pub flip_rate: f64,
    /// Probability that a thing is missing from the prediction.
    #[arg(long, default_value_t = 0.0)]
    pub drop_rate: f64,
    /// Relative uniform noise on predicted depth.
    #[arg(long, default_value_t = 0.0)]
    pub depth_noise: f64,
    /// Number of scenes; scene `i` uses seed `seed + i`.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Stereo baseline in metres used to write ground-truth disparity.
    #[arg(long, default_value_t = 0.209313)]
    pub baseline: f64,
    /// Focal length in pixels used to write ground-truth disparity.
    #[arg(long, default_value_t = 2262.52)]
    pub focal: f64,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Panoptic PNG.
    #[arg(long)]
    pub panoptic: PathBuf,
    /// Segment sidecar (default: `<panoptic stem>.json`).
    #[arg(long)]
    pub segments: Option<PathBuf>,
    #[command(flatten)]
    pub input: PanopticInput,
    /// 16-bit disparity PNG.
    #[arg(long)]
    pub disparity: PathBuf,
    /// Camera JSON with baseline and focal length.
    #[arg(long)]
    pub camera: PathBuf,
    #[command(flatten)]
    pub color: ColorArgs,
    /// Directory for `<stem>_depth.png`, `<stem>_instances.json`,
    /// `<stem>_color.png` and `<stem>_annotations.json`.
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// An error with the file or item it concerns.
#[derive(Debug)]
pub struct CliError {
    pub context: String,
    pub source: Error,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.context.is_empty() {
            write!(f, "{}", self.source)
        } else {
            write!(f, "{}: {}", self.context, self.source)
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        if self.source.is_io_or_format() {
            1
        } else {
            2
        }
    }
}

impl From<Error> for CliError {
    fn from(source: Error) -> Self {
        Self {
            context: String::new(),
            source,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

trait Context<T> {
    fn context(self, what: impl fmt::Display) -> CliResult<T>;
}

impl<T> Context<T> for crate::error::Result<T> {
    fn context(self, what: impl fmt::Display) -> CliResult<T> {
        self.map_err(|source| CliError {
            context: what.to_string(),
            source,
        })
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    Error::Validation(msg.into()).into()
}

/// Files written by a command. Unless [`Outputs::commit`] is called, every
/// file is removed again on drop, so a failing command leaves nothing behind.
#[derive(Default)]
struct Outputs {
    written: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    fn write(&mut self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".partial");
        let tmp = PathBuf::from(tmp);
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| {
            let _ = fs::remove_file(&tmp);
            Error::io(path, e)
        })?;
        self.written.push(path.to_path_buf());
        log::debug!("wrote {}", path.display());
        Ok(())
    }

    fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
    }
}

pub fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, level))
        .format_timestamp(None)
        .try_init();
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    init_logging(cli.verbose);
    let jobs = cli.jobs;
    match par::with_jobs(jobs, move || execute(cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::ConvertDisparity(a) => convert_disparity(&a),
        Command::EvalPanoptic(a) => eval_panoptic(&a),
        Command::EvalDepth(a) => eval_depth(&a),
        Command::Fuse(a) => fuse(&a),
        Command::Render(a) => render_cmd(&a),
        Command::Synth(a) => synth(&a),
        Command::Pipeline(a) => pipeline(&a),
    }
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    read_file(path).context("")
}

fn to_json<T: Serialize + ?Sized>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s.into_bytes()
}

fn load_classes(path: Option<&Path>) -> CliResult<ClassSet> {
    match path {
        Some(p) => ClassSet::from_json(&read(p)?).context(p.display()),
        None => Ok(ClassSet::cityscapes()),
    }
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// `<stem>.png` files of a directory, keyed (and thus ordered) by stem. A
/// plain file yields itself.
fn png_stems(path: &Path) -> CliResult<BTreeMap<String, PathBuf>> {
    if path.is_file() {
        return Ok(BTreeMap::from([(stem_of(path), path.to_path_buf())]));
    }
    let entries = fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let p = entry.map_err(|e| Error::io(path, e))?.path();
        if p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            out.insert(stem_of(&p), p);
        }
    }
    Ok(out)
}

struct Paired {
    pairs: Vec<(String, PathBuf, Option<PathBuf>)>,
}

/// Pairs ground truth with predictions by basename stem.
fn pair_stems(gt: &Path, pred: &Path, allow_missing: bool) -> CliResult<Paired> {
    let gts = png_stems(gt)?;
    let preds = png_stems(pred)?;
    if gt.is_file() && pred.is_file() {
        let (g, p) = (gts.into_values().next(), preds.into_values().next());
        let (Some(g), Some(p)) = (g, p) else {
            return Err(invalid("missing input file"));
        };
        return Ok(Paired {
            pairs: vec![(stem_of(&g), g, Some(p))],
        });
    }
    let shared = gts.keys().filter(|k| preds.contains_key(*k)).count();
    let missing: Vec<&String> = gts.keys().filter(|k| !preds.contains_key(*k)).collect();
    let extra: Vec<&String> = preds.keys().filter(|k| !gts.contains_key(*k)).collect();
    if gts.is_empty() {
        return Err(invalid(format!(
            "no ground-truth PNGs found in {}",
            gt.display()
        )));
    }
    if shared == 0 && !allow_missing {
        let mut listed: Vec<&String> = missing.clone();
        listed.extend(extra.iter().copied());
        return Err(invalid(format!(
            "no shared basenames between {} and {}; unmatched stems: {}",
            gt.display(),
            pred.display(),
            listed
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    if !missing.is_empty() && !allow_missing {
        return Err(invalid(format!(
            "ground truth without prediction: {}",
            missing
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    if !extra.is_empty() {
        log::warn!(
            "predictions without ground truth ignored: {}",
            extra
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        );
    }
    let pairs = gts
        .into_iter()
        .map(|(stem, g)| {
            let p = preds.get(&stem).cloned();
            (stem, g, p)
        })
        .collect();
    Ok(Paired { pairs })
}

fn sidecar_path(png: &Path, explicit: Option<&Path>) -> PathBuf {
    explicit.map_or_else(|| png.with_extension("json"), Path::to_path_buf)
}

fn load_panoptic(
    png: &Path,
    segments: Option<&Path>,
    input: &PanopticInput,
    classes: &ClassSet,
) -> CliResult<PanopticMap> {
    let decoder = PanopticDecoder {
        encoding: input.encoding,
        void_label: input.void_label,
    };
    let raster = read(png)?;
    let sidecar = match input.encoding {
        PanopticEncoding::CityscapeInstanceIds => None,
        _ => {
            let path = sidecar_path(png, segments);
            let bytes = read(&path)?;
            Some(SegmentsSidecar::from_json(&bytes).context(path.display())?)
        }
    };
    decoder
        .decode(&raster, sidecar.as_ref(), classes)
        .context(png.display())
}

fn load_depth(path: &Path) -> CliResult<DepthMap> {
    decode_depth(&read(path)?).context(path.display())
}

fn load_disparity(path: &Path) -> CliResult<DisparityMap> {
    decode_disparity(&read(path)?).context(path.display())
}

fn load_camera(path: &Path) -> CliResult<StereoCamera> {
    StereoCamera::from_json(&read(path)?).context(path.display())
}

fn color_config(args: &ColorArgs, classes: &ClassSet) -> CliResult<ColorMapConfig> {
    let mut cfg = ColorMapConfig {
        near_m: args.near,
        far_m: args.far,
        draw_boundaries: !args.no_boundaries,
        ..ColorMapConfig::default()
    };
    if let Some(p) = &args.palette {
        cfg.stuff_palette = palette_from_json(&read(p)?).context(p.display())?;
    }
    cfg.validate(classes)?;
    Ok(cfg)
}

fn encode_depth_png(depth: &DepthMap, label: &str) -> CliResult<Vec<u8>> {
    let enc = encode_depth(depth).context(label)?;
    if enc.clamped > 0 {
        log::warn!(
            "{label}: {} pixel(s) clamped to the depth file range",
            enc.clamped
        );
    }
    Ok(enc.png)
}

fn convert_disparity(a: &ConvertArgs) -> CliResult<()> {
    let inputs = png_stems(&a.disparity)?;
    if inputs.is_empty() {
        return Err(invalid(format!(
            "no disparity PNGs in {}",
            a.disparity.display()
        )));
    }
    let single = a.disparity.is_file();
    let shared_camera = if a.camera.is_dir() {
        None
    } else {
        Some(load_camera(&a.camera)?)
    };
    let items: Vec<(String, PathBuf)> = inputs.into_iter().collect();
    let converted = par::map(&items, |(stem, path)| -> CliResult<Vec<u8>> {
        let cam = match shared_camera {
            Some(c) => c,
            None => load_camera(&a.camera.join(format!("{stem}.json")))?,
        };
        let depth = disparity_to_depth(&load_disparity(path)?, &cam);
        encode_depth_png(&depth, stem)
    });
    let mut out = Outputs::default();
    for ((stem, _), png) in items.iter().zip(converted) {
        let png = png?;
        let target = if single {
            a.out.clone()
        } else {
            a.out.join(format!("{stem}.png"))
        };
        out.write(&target, &png)?;
    }
    log::info!("converted {} disparity map(s)", items.len());
    out.commit();
    Ok(())
}

fn eval_panoptic(a: &EvalPanopticArgs) -> CliResult<()> {
    let classes = load_classes(a.input.classes.as_deref())?;
    let paired = pair_stems(&a.gt, &a.pred, a.allow_missing_pred)?;
    let matches: Vec<CliResult<MatchResult>> = par::map(&paired.pairs, |(stem, g, p)| {
        let gt = load_panoptic(g, None, &a.input, &classes)?;
        let pred = match p {
            Some(p) => load_panoptic(p, None, &a.input, &classes)?,
            None => {
                log::warn!("{stem}: no prediction, scoring as empty");
                PanopticMap::new(gt.width(), gt.height(), vec![0; gt.ids().len()], [])
                    .context(stem)?
            }
        };
        match_segments(&gt, &pred, &classes).context(stem)
    });
    // Accumulate in stem order so IoU sums do not depend on scheduling.
    let mut acc = PqAccumulator::new();
    for m in matches {
        acc.accumulate(&m?);
    }
    let report = acc.finalize(&classes)?;
    print!("{}", report.to_table());
    let mut out = Outputs::default();
    if let Some(path) = &a.out {
        out.write(path, &to_json(&report))?;
    }
    out.commit();
    Ok(())
}

#[derive(Serialize)]
struct DepthEvalOutput {
    #[serde(flatten)]
    pooled: DepthReport,
    per_image: BTreeMap<String, DepthReport>,
    units: BTreeMap<&'static str, &'static str>,
}

fn depth_units() -> BTreeMap<&'static str, &'static str> {
    BTreeMap::from([
        ("IRMSE", "1/km (depths in metres, x1000)"),
        ("SILog", "x100, natural log"),
        ("delta", "fraction of jointly valid pixels, strict <"),
        ("pooling", "sums pooled over all pixels of all images"),
    ])
}

fn eval_depth(a: &EvalDepthArgs) -> CliResult<()> {
    let paired = pair_stems(&a.gt, &a.pred, a.allow_missing_pred)?;
    let evaluated: Vec<(String, PathBuf, PathBuf)> = paired
        .pairs
        .into_iter()
        .filter_map(|(s, g, p)| match p {
            Some(p) => Some((s, g, p)),
            None => {
                log::warn!("{s}: no prediction, skipped");
                None
            }
        })
        .collect();
    let sums: Vec<CliResult<DepthSums>> = par::map(&evaluated, |(stem, g, p)| {
        let gt = load_depth(g)?;
        let pred = load_depth(p)?;
        DepthSums::from_maps(&pred, &gt).context(stem)
    });
    let mut pooled = DepthSums::default();
    let mut per_image = BTreeMap::new();
    println!("{}", DepthReport::table_header());
    for ((stem, _, _), s) in evaluated.iter().zip(sums) {
        let s = s?;
        let r = s.report().context(stem)?;
        println!("{}", r.table_row(stem));
        pooled.merge(&s);
        per_image.insert(stem.clone(), r);
    }
    let pooled = pooled.report().context("pooled evaluation")?;
    println!("{}", pooled.table_row("All"));
    let mut out = Outputs::default();
    if let Some(path) = &a.out {
        let doc = DepthEvalOutput {
            pooled,
            per_image,
            units: depth_units(),
        };
        out.write(path, &to_json(&doc))?;
    }
    out.commit();
    Ok(())
}

fn fuse(a: &FuseArgs) -> CliResult<()> {
    let classes = load_classes(a.input.classes.as_deref())?;
    let pan = load_panoptic(&a.panoptic, a.segments.as_deref(), &a.input, &classes)?;
    let depth = load_depth(&a.depth)?;
    let records = instance_depths(&pan, &depth).context(a.panoptic.display())?;
    let mut out = Outputs::default();
    out.write(
        &a.out,
        format!("{}\n", records_to_json(&records)).as_bytes(),
    )?;
    out.commit();
    Ok(())
}

fn annotations_path(out: &Path) -> PathBuf {
    out.with_file_name(format!("{}_annotations.json", stem_of(out)))
}

fn render_cmd(a: &RenderArgs) -> CliResult<()> {
    let classes = load_classes(a.input.classes.as_deref())?;
    let cfg = color_config(&a.color, &classes)?;
    let pan = load_panoptic(&a.panoptic, a.segments.as_deref(), &a.input, &classes)?;
    let records: Vec<InstanceDepthRecord> = match (&a.instances, &a.depth) {
        (Some(p), _) => records_from_json(&read(p)?).context(p.display())?,
        (None, Some(d)) => instance_depths(&pan, &load_depth(d)?).context(d.display())?,
        (None, None) => return Err(invalid("render needs --instances or --depth")),
    };
    let rendered = render(&pan, &records, &cfg, &classes).context(a.panoptic.display())?;
    let mut out = Outputs::default();
    out.write(&a.out, &rendered.to_png()?)?;
    let ann = a
        .annotations
        .clone()
        .unwrap_or_else(|| annotations_path(&a.out));
    out.write(
        &ann,
        format!("{}\n", rendered.annotations_json()).as_bytes(),
    )?;
    out.commit();
    Ok(())
}

fn synth(a: &SynthArgs) -> CliResult<()> {
    let classes = ClassSet::cityscapes();
    let base = match &a.spec {
        Some(p) => serde_json::from_slice::<SceneSpec>(&read(p)?)
            .map_err(Error::from)
            .context(p.display())?,
        None => SceneSpec {
            perturbation: Perturbation {
                boundary_erosion_px: a.erosion,
                class_flip_rate: a.flip_rate,
                drop_rate: a.drop_rate,
                depth_noise_rel: a.depth_noise,
            },
            ..SceneSpec::new(a.width, a.height, a.things, a.stuff, a.seed)
        },
    };
    base.validate(&classes)?;
    let camera = StereoCamera::new(a.baseline, a.focal)?;
    let specs: Vec<SceneSpec> = (0..a.count.max(1) as u64)
        .map(|i| SceneSpec {
            seed: base.seed.wrapping_add(i),
            ..base.clone()
        })
        .collect();
    let width = (specs.len().max(2) - 1).to_string().len().max(4);
    let files = par::map(&specs, |spec| -> CliResult<_> {
        let stem = format!("scene_{:0width$}", spec.seed.wrapping_sub(base.seed));
        let scene = generate_scene_with(spec, &classes).context(&stem)?;
        let enc = scene.encode(&stem).context(&stem)?;
        let disp_values: Vec<f64> = scene
            .gt_depth
            .values()
            .iter()
            .map(|d| camera.focal_px * camera.baseline_m / d)
            .collect();
        let disp = DisparityMap::dense(spec.width, spec.height, disp_values).context(&stem)?;
        let disp_png = encode_disparity(&disp).context(&stem)?;
        Ok((stem, spec.clone(), enc, disp_png))
    });

    let mut out = Outputs::default();
    let root = &a.out;
    out.write(
        &root.join("classes.json"),
        format!("{}\n", classes.to_json()).as_bytes(),
    )?;
    out.write(
        &root.join("camera.json"),
        format!("{}\n", camera.to_json()).as_bytes(),
    )?;
    out.write(&root.join("scene_spec.json"), &to_json(&base))?;
    for f in files {
        let (stem, spec, enc, disp_png) = f?;
        let png = format!("{stem}.png");
        let json = format!("{stem}.json");
        out.write(&root.join("gt").join(&png), &enc.gt_png)?;
        out.write(&root.join("gt").join(&json), &to_json(&enc.gt_segments))?;
        out.write(&root.join("pred").join(&png), &enc.pred_png)?;
        out.write(&root.join("pred").join(&json), &to_json(&enc.pred_segments))?;
        out.write(&root.join("gt_depth").join(&png), &enc.gt_depth_png)?;
        out.write(&root.join("pred_depth").join(&png), &enc.pred_depth_png)?;
        out.write(&root.join("disparity").join(&png), &disp_png)?;
        out.write(&root.join("specs").join(&json), &to_json(&spec))?;
    }
    log::info!("wrote {} scene(s) to {}", specs.len(), root.display());
    out.commit();
    Ok(())
}

fn pipeline(a: &PipelineArgs) -> CliResult<()> {
    let classes = load_classes(a.input.classes.as_deref())?;
    let cfg = color_config(&a.color, &classes)?;
    let cam = load_camera(&a.camera)?;
    let pan = load_panoptic(&a.panoptic, a.segments.as_deref(), &a.input, &classes)?;
    let disp = load_disparity(&a.disparity)?;

    let depth_png = encode_depth_png(&disparity_to_depth(&disp, &cam), "depth")?;
    // Fuse the depth exactly as it is stored on disk, so the written files
    // are mutually consistent.
    let depth = decode_depth(&depth_png).context("depth")?;
    let records = instance_depths(&pan, &depth).context(a.panoptic.display())?;
    let rendered = render(&pan, &records, &cfg, &classes).context(a.panoptic.display())?;

    let stem = stem_of(&a.panoptic);
    let dir = &a.out_dir;
    let mut out = Outputs::default();
    out.write(&dir.join(format!("{stem}_depth.png")), &depth_png)?;
    out.write(
        &dir.join(format!("{stem}_instances.json")),
        format!("{}\n", records_to_json(&records)).as_bytes(),
    )?;
    out.write(&dir.join(format!("{stem}_color.png")), &rendered.to_png()?)?;
    out.write(
        &dir.join(format!("{stem}_annotations.json")),
        format!("{}\n", rendered.annotations_json()).as_bytes(),
    )?;
    out.commit();
    Ok(())
}
