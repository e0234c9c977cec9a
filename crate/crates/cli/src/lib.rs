//! `slotrack` command implementations. `main.rs` only parses arguments and
//! maps errors onto exit codes.

pub mod config;
pub mod plot;

#[cfg(test)]
mod command_tests;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};
use slotrack::augment::pseudo_video_along;
use slotrack::baseline::BaselineConfig;
use slotrack::metrics::{owta, sot_3d_iou, EvalConfig, GtVideo, OwtaReport, PredictionFile, VideoPredictions};
use slotrack::model::{prompt_matrix, Model};
use slotrack::synthdata::{generate_dataset, read_dataset, rerender, write_dataset, Dataset, SceneVideo};
use slotrack::tape::Matrix;
use slotrack::tracker::{random_video, sot_video, tbd_video, track_video};
use slotrack::trainloss::{train, TrainData, TrainState};
use slotrack::BBox;
use thiserror::Error;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Core(slotrack::Error),
}

impl From<slotrack::Error> for CliError {
    fn from(e: slotrack::Error) -> Self {
        match e {
            slotrack::Error::Config(m) => CliError::Config(m),
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    /// 2 for configuration problems, 3 for anything wrong with the data.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Core(_) => 3,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "slotrack", version, about = "Synthetic open-world tracking lab")]
pub struct Cli {
    /// TOML run configuration; every block is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides `seed` in the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic dataset.
    Gen(GenArgs),
    /// Train the recurrent tracker.
    Train(TrainArgs),
    /// Run the tracker over a split and write predictions.
    Track(TrackArgs),
    /// Score predictions against a split.
    Eval(EvalArgs),
    /// Run the tracking-by-detection baseline.
    Baseline(BaselineArgs),
    /// Dump per-slot box centres on sliding-window videos.
    Slots(SlotsArgs),
    /// Render a report CSV as an SVG bar chart.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
    /// Videos in each of the train and eval splits.
    #[arg(long)]
    pub videos: Option<usize>,
    #[arg(long)]
    pub stills: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
    /// Continue from a `checkpoint.json` written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Total steps, split between the phases in the configured ratio.
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub phase1_steps: Option<u64>,
    #[arg(long)]
    pub phase2_steps: Option<u64>,
    #[arg(long)]
    pub clip_len: Option<usize>,
    /// Train on real clips only.
    #[arg(long)]
    pub no_pseudo: bool,
    /// Train on pseudo-videos only.
    #[arg(long)]
    pub no_real: bool,
    #[arg(long)]
    pub no_mosaic: bool,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "eval")]
    pub split: String,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Rollout frame rate; must be a multiple of the annotation rate.
    #[arg(long)]
    pub fps: Option<f64>,
    /// Follow one ground-truth track (needs --video).
    #[arg(long)]
    pub sot: Option<u32>,
    #[arg(long)]
    pub video: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Directory for report.json and report.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub no_constraint: bool,
    #[arg(long)]
    pub calibration_factor: Option<f64>,
    /// Comma-separated IoU thresholds.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub fps: Option<f64>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub sim_threshold: Option<f64>,
    /// Random identities instead of similarity linking.
    #[arg(long)]
    pub random: bool,
}

#[derive(Debug, Args)]
pub struct SlotsArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Index of the still to slide over.
    #[arg(long, default_value_t = 0)]
    pub still: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Objectness floor in probability space.
    #[arg(long)]
    pub floor: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Resolve the configuration, log it, and run one command.
pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match cli.command {
        Command::Gen(a) => cmd_gen(&mut cfg, &a),
        Command::Train(a) => cmd_train(&mut cfg, &a),
        Command::Track(a) => cmd_track(&cfg, &a),
        Command::Eval(a) => cmd_eval(&mut cfg, &a),
        Command::Baseline(a) => cmd_baseline(&mut cfg, &a),
        Command::Slots(a) => cmd_slots(&mut cfg, &a),
        Command::Plot(a) => plot::cmd_plot(&a.report, &a.out),
    }
}

fn log_config(cfg: &RunConfig) {
    eprintln!("# resolved config\n{}", cfg.to_toml());
}

pub(crate) fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| slotrack::Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| slotrack::Error::io(path, e).into())
}

fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let empty = fs::read_dir(dir).map_err(|e| slotrack::Error::io(dir, e))?.next().is_none();
        if !empty && !force {
            return Err(CliError::Data(format!("{} exists; pass --force to overwrite", dir.display())));
        }
        if !empty {
            fs::remove_dir_all(dir).map_err(|e| slotrack::Error::io(dir, e))?;
        }
    }
    fs::create_dir_all(dir).map_err(|e| slotrack::Error::io(dir, e).into())
}

/// SHA-256 over every file under `dir`, visited in sorted path order.
pub fn dir_digest(dir: &Path) -> Result<String> {
    fn visit(dir: &Path, files: &mut Vec<PathBuf>) -> std::io::Result<()> {
        for entry in fs::read_dir(dir)? {
            let p = entry?.path();
            if p.is_dir() {
                visit(&p, files)?;
            } else {
                files.push(p);
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    visit(dir, &mut files).map_err(|e| slotrack::Error::io(dir, e))?;
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        let rel = f.strip_prefix(dir).unwrap_or(&f);
        h.update(rel.to_string_lossy().as_bytes());
        h.update(fs::read(&f).map_err(|e| slotrack::Error::io(&f, e))?);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

pub fn cmd_gen(cfg: &mut RunConfig, a: &GenArgs) -> Result<()> {
    if let Some(n) = a.videos {
        cfg.data.train.videos = n;
        cfg.data.eval.videos = n;
    }
    if let Some(n) = a.stills {
        cfg.data.stills = n;
    }
    log_config(cfg);
    if a.out.exists() && !a.force {
        return Err(CliError::Data(format!("{} exists; pass --force to overwrite", a.out.display())));
    }
    let dataset = generate_dataset(&cfg.data, cfg.seed)?;
    prepare_out_dir(&a.out, a.force)?;
    write_dataset(&a.out, &dataset)?;
    write(&a.out.join("config.toml"), &cfg.to_toml())?;
    let known = dataset.catalog.classes.iter().filter(|c| c.known).count();
    println!("catalog: {known} known, {} unknown classes", dataset.catalog.classes.len() - known);
    for split in ["train", "eval", "stills"] {
        let videos: Vec<&SceneVideo> = dataset.split(split).collect();
        let tracks: usize = videos.iter().map(|v| v.tracks.len()).sum();
        println!("{split}: {} videos, {tracks} tracks", videos.len());
    }
    println!("digest: {}", dir_digest(&a.out)?);
    Ok(())
}

fn train_data(dataset: &Dataset) -> TrainData {
    TrainData {
        catalog: dataset.catalog.clone(),
        stills: dataset.split("stills").cloned().collect(),
        real: dataset.split("train").cloned().collect(),
    }
}

pub fn cmd_train(cfg: &mut RunConfig, a: &TrainArgs) -> Result<()> {
    let t = &mut cfg.train;
    if let Some(n) = a.steps {
        let total = t.total_steps().max(1);
        let p1 = (n as u128 * t.phase1_steps as u128 / total as u128) as u64;
        t.phase1_steps = p1;
        t.phase2_steps = n - p1;
        t.warmup_steps = t.warmup_steps.min(n);
    }
    if let Some(n) = a.phase1_steps {
        t.phase1_steps = n;
    }
    if let Some(n) = a.phase2_steps {
        t.phase2_steps = n;
    }
    t.warmup_steps = t.warmup_steps.min(t.total_steps());
    if let Some(n) = a.clip_len {
        t.clip_len = n;
    }
    if a.no_pseudo {
        t.use_pseudo = false;
    }
    if a.no_real {
        t.use_real = false;
    }
    if a.no_mosaic {
        t.augment.mosaic_prob = 0.0;
    }
    cfg.validate()?;
    log_config(cfg);
    let dataset = read_dataset(&a.data)?;
    let resume = match &a.resume {
        Some(p) => Some(TrainState::from_json(&fs::read_to_string(p).map_err(|e| slotrack::Error::io(p, e))?)?),
        None => None,
    };
    if resume.is_none() {
        prepare_out_dir(&a.out, a.force)?;
    } else {
        fs::create_dir_all(&a.out).map_err(|e| slotrack::Error::io(&a.out, e))?;
    }
    let mut log = String::from("step,phase,lr,loss,cls,l1,giou,grad_norm,owta_known,owta_unknown\n");
    let log_path = a.out.join("train_log.csv");
    if resume.is_some() {
        if let Ok(prev) = fs::read_to_string(&log_path) {
            log = prev;
        }
    }
    let probe: Vec<&SceneVideo> = dataset.split("eval").take(cfg.log.eval_videos).collect();
    let gts: Vec<GtVideo> = probe.iter().map(|v| GtVideo::from_scene(v)).collect();
    let prompts = known_prompts(&dataset);
    let mut failure = None;
    let state = train(&cfg.train, &train_data(&dataset), &cfg.model, cfg.seed, resume, &mut |r, model| {
        let mut metrics = String::from(",");
        if !probe.is_empty() {
            let scored = probe
                .iter()
                .map(|v| track_video(model, v, &prompts))
                .collect::<slotrack::Result<Vec<_>>>()
                .and_then(|p| owta(&p, &gts, &dataset.catalog, &cfg.eval));
            match scored {
                Ok(rep) => metrics = format!("{:.6},{:.6}", rep.owta("known", "all"), rep.owta("unknown", "all")),
                Err(e) => failure = Some(e),
            }
        }
        let line = format!(
            "{},{},{:e},{:.6},{:.6},{:.6},{:.6},{:.6},{metrics}\n",
            r.step, r.phase, r.lr, r.loss, r.cls, r.l1, r.giou, r.grad_norm
        );
        eprint!("{line}");
        log.push_str(&line);
    })?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    write(&a.out.join("checkpoint.json"), &state.to_json())?;
    write(&a.out.join("model.json"), &state.model.to_json())?;
    write(&log_path, &log)?;
    write(&a.out.join("config.toml"), &cfg.to_toml())?;
    println!("trained {} steps; checkpoint in {}", state.optimizer.step, a.out.display());
    Ok(())
}

/// A model checkpoint or a full training checkpoint.
pub fn load_model(path: &Path) -> Result<Model> {
    let text = fs::read_to_string(path).map_err(|e| slotrack::Error::io(path, e))?;
    match TrainState::from_json(&text) {
        Ok(s) => Ok(s.model),
        Err(_) => Ok(Model::from_json(&text)?),
    }
}

/// Known-class prompts, the vocabulary the model is queried with.
pub fn known_prompts(dataset: &Dataset) -> Matrix {
    let known: Vec<Vec<f64>> = dataset.catalog.classes.iter().filter(|c| c.known).map(|c| c.prompt.clone()).collect();
    prompt_matrix(&known)
}

fn split_videos<'a>(dataset: &'a Dataset, split: &'a str) -> Result<Vec<&'a SceneVideo>> {
    let videos: Vec<&SceneVideo> = dataset.split(split).collect();
    if videos.is_empty() && !matches!(split, "train" | "eval" | "stills") {
        return Err(CliError::Data(format!("unknown split {split}")));
    }
    Ok(videos)
}

/// Render `video` at `fps`. The annotated frames of the result line up with
/// the annotated frames of the original.
pub fn at_fps(dataset: &Dataset, video: &SceneVideo, fps: Option<f64>) -> Result<SceneVideo> {
    let Some(fps) = fps else {
        return Ok(video.clone());
    };
    let annotated: Vec<usize> = (0..video.len()).filter(|&i| video.annotated[i]).collect();
    let stride = if annotated.len() > 1 { annotated[1] - annotated[0] } else { 1 };
    let rate = video.fps / stride as f64;
    let ratio = fps / rate;
    if !(ratio >= 1.0) || (ratio - ratio.round()).abs() > 1e-9 {
        return Err(CliError::Config(format!(
            "fps {fps} is not a multiple of the annotation rate {rate} of video {}",
            video.video_id
        )));
    }
    if (fps - video.fps).abs() < 1e-12 {
        return Ok(video.clone());
    }
    let dense = rerender(&dataset.catalog, video, fps)?;
    if dense.annotated.iter().filter(|&&a| a).count() != annotated.len() {
        return Err(CliError::Data(format!("video {} does not re-render onto its annotated frames", video.video_id)));
    }
    Ok(dense)
}

pub fn cmd_track(cfg: &RunConfig, a: &TrackArgs) -> Result<()> {
    log_config(cfg);
    let model = load_model(&a.checkpoint)?;
    let dataset = read_dataset(&a.split.data)?;
    let prompts = known_prompts(&dataset);
    let videos = split_videos(&dataset, &a.split.split)?;
    let mut out = Vec::new();
    if let Some(track_id) = a.sot {
        let id = a.video.as_deref().ok_or_else(|| CliError::Config("--sot needs --video".into()))?;
        let video = videos
            .iter()
            .find(|v| v.video_id == id)
            .ok_or_else(|| CliError::Data(format!("no video {id} in split {}", a.split.split)))?;
        let preds = sot_video(&model, &at_fps(&dataset, video, a.fps)?, &prompts, track_id)?;
        let gt = GtVideo::from_scene(video);
        let track = gt.tracks.iter().find(|t| t.track_id == track_id).expect("track exists");
        let boxes: Vec<Option<BBox>> = preds.frames.iter().map(|f| f.first().map(|p| p.bbox)).collect();
        let gt_boxes: Vec<Option<BBox>> = track.entries.iter().map(|e| e.get()).collect();
        println!("3d_iou: {:.6}", sot_3d_iou(&boxes, &gt_boxes)?);
        out.push(preds);
    } else {
        for v in videos {
            out.push(track_video(&model, &at_fps(&dataset, v, a.fps)?, &prompts)?);
        }
    }
    write(&a.out, &PredictionFile::new(out).to_json())?;
    println!("predictions written to {}", a.out.display());
    Ok(())
}

pub fn cmd_baseline(cfg: &mut RunConfig, a: &BaselineArgs) -> Result<()> {
    if let Some(k) = a.top_k {
        cfg.baseline.top_k = k;
    }
    if let Some(s) = a.sim_threshold {
        cfg.baseline.sim_threshold = s;
    }
    cfg.validate()?;
    log_config(cfg);
    let model = load_model(&a.checkpoint)?;
    let dataset = read_dataset(&a.split.data)?;
    let prompts = known_prompts(&dataset);
    let bcfg: &BaselineConfig = &cfg.baseline;
    let mut out = Vec::new();
    for v in split_videos(&dataset, &a.split.split)? {
        let dense = at_fps(&dataset, v, a.fps)?;
        out.push(if a.random {
            random_video(&model, &dense, &prompts, bcfg.top_k, cfg.seed)?
        } else {
            tbd_video(&model, &dense, &prompts, bcfg)?
        });
    }
    write(&a.out, &PredictionFile::new(out).to_json())?;
    println!("predictions written to {}", a.out.display());
    Ok(())
}

/// Score a prediction file against one split of a dataset.
pub fn evaluate(preds: &[VideoPredictions], dataset: &Dataset, split: &str, eval: &EvalConfig) -> Result<OwtaReport> {
    let gts: Vec<GtVideo> = split_videos(dataset, split)?.into_iter().map(GtVideo::from_scene).collect();
    Ok(owta(preds, &gts, &dataset.catalog, eval)?)
}

pub fn cmd_eval(cfg: &mut RunConfig, a: &EvalArgs) -> Result<()> {
    if a.no_constraint {
        cfg.eval.enforce_constraint = false;
    }
    if let Some(f) = a.calibration_factor {
        cfg.eval.calibration_factor = f;
    }
    if let Some(t) = &a.thresholds {
        cfg.eval.thresholds = t.clone();
    }
    cfg.validate()?;
    log_config(cfg);
    let dataset = read_dataset(&a.split.data)?;
    let text = fs::read_to_string(&a.predictions).map_err(|e| slotrack::Error::io(&a.predictions, e))?;
    let preds = PredictionFile::from_json(&text)?;
    let report = evaluate(&preds.videos, &dataset, &a.split.split, &cfg.eval)?;
    write(&a.out.join("report.json"), &report.to_json())?;
    write(&a.out.join("report.csv"), &report.to_csv())?;
    let mut stdout = std::io::stdout().lock();
    for g in slotrack::metrics::GROUPS {
        let r = report.row(g, "all").expect("row");
        let _ = writeln!(stdout, "{g:8} OWTA {:.4}  DetRe {:.4}  AssAcc {:.4}", r.owta, r.det_re, r.ass_acc);
    }
    Ok(())
}

/// Slot traces over a crop window sliding left to right across one still.
pub fn slot_rows(model: &Model, dataset: &Dataset, still: usize, floor_prob: f64, frames: usize, window: f64) -> Result<Vec<slotrack::model::SlotCenter>> {
    let stills: Vec<&SceneVideo> = dataset.split("stills").collect();
    let s = stills
        .get(still)
        .ok_or_else(|| CliError::Data(format!("still {still} out of range ({} stills)", stills.len())))?;
    let c = &model.config;
    let start = BBox::new(window / 2.0, 0.5, window, window);
    let end = BBox::new(1.0 - window / 2.0, 0.5, window, window);
    let clip = pseudo_video_along(&s.frames[0], &[], frames.max(2), start, end, c.image_height, c.image_width);
    let floor = (floor_prob / (1.0 - floor_prob)).ln();
    let mut rows = model.slot_center_dump(&[clip.frames], &known_prompts(dataset), floor)?;
    rows.sort_by_key(|r| (r.slot, r.frame));
    Ok(rows)
}

pub fn cmd_slots(cfg: &mut RunConfig, a: &SlotsArgs) -> Result<()> {
    if let Some(f) = a.floor {
        cfg.slots.floor = f;
    }
    cfg.validate()?;
    log_config(cfg);
    let model = load_model(&a.checkpoint)?;
    let dataset = read_dataset(&a.data)?;
    let rows = slot_rows(&model, &dataset, a.still, cfg.slots.floor, cfg.slots.frames, cfg.slots.window)?;
    let mut csv = String::from("slot,frame,cx,cy,w,h,objectness\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{:.6},{:.6},{:.6},{:.6},{:.6}\n", r.slot, r.frame, r.cx, r.cy, r.w, r.h, r.objectness));
    }
    write(&a.out, &csv)?;
    println!("{} rows written to {}", rows.len(), a.out.display());
    Ok(())
}
