//! Procedural videos of colored shapes with exact ground truth, plus the
//! on-disk dataset format.
//!
//! A [`ClassCatalog`] fixes each class's look (shape and color) and a seeded
//! unit-norm prompt embedding that stands in for a frozen text encoder.
//! Classes are flagged known or unknown; the training sampler only sees
//! labels of known classes while evaluation videos contain both.
//!
//! Object parameters are sampled before any frame is rendered, so the same
//! scene seed can be re-rendered at a different frame rate with identical
//! motion (used for high-FPS evaluation).
//!
//! Layout on disk:
//!
//! ```text
//! <root>/catalog.json
//! <root>/videos/<video_id>.json
//! ```
//!
//! Every document carries `"version": 1`. Frames are stored inline as
//! base64-encoded RGB8 rows; rendered pixels are quantized to 8 bits, so the
//! encoding is lossless.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::seed;
use crate::video::{AnnotatedClip, GtTrack, Image, TrackEntry};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Rect,
    Ellipse,
    Diamond,
    Ring,
    Cross,
    Triangle,
}

impl Shape {
    /// Point test in local coordinates where the box spans `[-1, 1]^2`.
    fn contains(self, u: f64, v: f64) -> bool {
        if u.abs() >= 1.0 || v.abs() >= 1.0 {
            return false;
        }
        match self {
            Shape::Rect => true,
            Shape::Ellipse => u * u + v * v < 1.0,
            Shape::Diamond => u.abs() + v.abs() < 1.0,
            Shape::Ring => {
                let r = u * u + v * v;
                r < 1.0 && r > 0.3
            }
            Shape::Cross => u.abs() < 0.4 || v.abs() < 0.4,
            Shape::Triangle => v > 2.0 * u.abs() - 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Appearance {
    pub shape: Shape,
    pub color: [u8; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub class_id: u32,
    pub name: String,
    pub prompt: Vec<f64>,
    pub appearance: Appearance,
    pub known: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassCatalog {
    pub version: u32,
    pub embed_dim: usize,
    pub classes: Vec<ClassSpec>,
}

const PALETTE: [(&str, Shape, [u8; 3]); 8] = [
    ("red square", Shape::Rect, [225, 45, 40]),
    ("green disc", Shape::Ellipse, [40, 205, 70]),
    ("blue diamond", Shape::Diamond, [60, 100, 240]),
    ("yellow ring", Shape::Ring, [235, 215, 40]),
    ("magenta cross", Shape::Cross, [215, 55, 205]),
    ("cyan triangle", Shape::Triangle, [45, 215, 215]),
    ("orange disc", Shape::Ellipse, [245, 140, 30]),
    ("white square", Shape::Rect, [235, 235, 235]),
];

impl ClassCatalog {
    /// The first `num_known` palette entries are known, the next `num_unknown` unknown.
    pub fn generate(num_known: usize, num_unknown: usize, embed_dim: usize, seed_value: u64) -> Result<Self> {
        let total = num_known + num_unknown;
        if total > PALETTE.len() {
            return Err(Error::Config(format!(
                "catalog supports at most {} classes, asked for {total}",
                PALETTE.len()
            )));
        }
        if embed_dim == 0 {
            return Err(Error::Config("embed_dim must be positive".into()));
        }
        let mut rng = seed::rng(seed_value, "catalog.prompts", 0);
        let classes = PALETTE[..total]
            .iter()
            .enumerate()
            .map(|(i, (name, shape, color))| {
                let mut v: Vec<f64> = (0..embed_dim).map(|_| rng.sample(StandardNormal)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter_mut().for_each(|x| *x /= norm);
                ClassSpec {
                    class_id: i as u32,
                    name: name.to_string(),
                    prompt: v,
                    appearance: Appearance {
                        shape: *shape,
                        color: *color,
                    },
                    known: i < num_known,
                }
            })
            .collect();
        let catalog = ClassCatalog {
            version: FORMAT_VERSION,
            embed_dim,
            classes,
        };
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids: Vec<u32> = self.classes.iter().map(|c| c.class_id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.classes.len() {
            return Err(Error::Data("duplicate class_id in catalog".into()));
        }
        if !self.classes.iter().any(|c| c.known) || !self.classes.iter().any(|c| !c.known) {
            return Err(Error::Data("catalog needs at least one known and one unknown class".into()));
        }
        for c in &self.classes {
            let norm = c.prompt.iter().map(|x| x * x).sum::<f64>().sqrt();
            if c.prompt.len() != self.embed_dim || (norm - 1.0).abs() > 1e-9 {
                return Err(Error::Data(format!("prompt of class {} is not a unit vector of dim {}", c.class_id, self.embed_dim)));
            }
        }
        Ok(())
    }

    pub fn get(&self, class_id: u32) -> Option<&ClassSpec> {
        self.classes.iter().find(|c| c.class_id == class_id)
    }

    /// Position of a class in prompt order.
    pub fn prompt_index(&self, class_id: u32) -> Option<usize> {
        self.classes.iter().position(|c| c.class_id == class_id)
    }

    pub fn is_known(&self, class_id: u32) -> bool {
        self.get(class_id).is_some_and(|c| c.known)
    }

    pub fn prompts(&self) -> Vec<Vec<f64>> {
        self.classes.iter().map(|c| c.prompt.clone()).collect()
    }

    pub fn num_known(&self) -> usize {
        self.classes.iter().filter(|c| c.known).count()
    }

    pub fn num_unknown(&self) -> usize {
        self.classes.len() - self.num_known()
    }

    fn pool(&self, pool: ClassPool) -> Vec<u32> {
        self.classes
            .iter()
            .filter(|c| match pool {
                ClassPool::All => true,
                ClassPool::Known => c.known,
                ClassPool::Unknown => !c.known,
            })
            .map(|c| c.class_id)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    Static,
    Linear,
    /// Pairs of same-class objects swap horizontal order on separate rows.
    Crossing,
    /// Like `Crossing`, but both objects share a row and pass behind one another.
    Occluding,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassPool {
    All,
    Known,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    pub num_objects: usize,
    /// Seconds.
    pub duration: f64,
    pub fps: f64,
    pub motion: Motion,
    /// Probability that an object enters late, and (independently) that it exits early.
    pub enter_exit_rate: f64,
    /// Object extent range in pixels.
    pub min_size: f64,
    pub max_size: f64,
    /// Pixels per second for linear motion.
    pub max_speed: f64,
    pub classes: ClassPool,
    /// Only every n-th frame carries annotations.
    pub annotate_every: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            height: 32,
            width: 32,
            num_objects: 2,
            duration: 12.0,
            fps: 1.0,
            motion: Motion::Linear,
            enter_exit_rate: 0.0,
            min_size: 6.0,
            max_size: 9.0,
            max_speed: 2.0,
            classes: ClassPool::All,
            annotate_every: 1,
        }
    }
}

impl SceneConfig {
    pub fn frame_count(&self) -> usize {
        (self.duration * self.fps).round() as usize
    }

    /// Largest `num_objects` the motion layout can place without stacking bands.
    pub fn capacity(&self) -> usize {
        let band = self.max_size.ceil() as usize + 2;
        match self.motion {
            Motion::Static | Motion::Linear => (self.height * self.width) / (band * band * 2),
            Motion::Crossing => {
                let pairs = self.height / (2 * band);
                let spare = (self.height - pairs * 2 * band) / band;
                2 * pairs + spare
            }
            Motion::Occluding => 2 * (self.height / band),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.height == 0 || self.width == 0 {
            return bad("frame dims must be positive");
        }
        if !(self.fps > 0.0) || !(self.duration > 0.0) {
            return bad("fps and duration must be positive");
        }
        if self.frame_count() < 2 {
            return bad("duration * fps must be at least 2 frames");
        }
        if !(0.0..=1.0).contains(&self.enter_exit_rate) {
            return bad("enter_exit_rate must lie in [0, 1]");
        }
        if !(self.min_size >= 1.0 && self.max_size >= self.min_size) {
            return bad("object size range is invalid");
        }
        if self.max_size + 2.0 > self.height.min(self.width) as f64 {
            return bad("objects do not fit in the frame");
        }
        if self.annotate_every == 0 {
            return bad("annotate_every must be at least 1");
        }
        if self.num_objects > self.capacity() {
            return Err(Error::Config(format!(
                "num_objects {} exceeds layout capacity {} for {:?} motion",
                self.num_objects,
                self.capacity(),
                self.motion
            )));
        }
        Ok(())
    }
}

/// Regeneration parameters stored alongside each generated video.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub config: SceneConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneVideo {
    pub video_id: String,
    pub split: String,
    pub fps: f64,
    pub frames: Vec<Image>,
    pub tracks: Vec<GtTrack>,
    /// Which frames carry annotations.
    pub annotated: Vec<bool>,
    pub scene: Option<SceneSpec>,
}

impl SceneVideo {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames.first().map_or((0, 0), |f| (f.height, f.width))
    }

    pub fn clip(&self) -> AnnotatedClip {
        AnnotatedClip {
            frames: self.frames.clone(),
            tracks: self.tracks.clone(),
            fps: self.fps,
        }
    }
}

/// Sampled, frame-rate independent object state.
#[derive(Clone, Debug)]
struct ObjectPlan {
    class_id: u32,
    w: f64,
    h: f64,
    start: (f64, f64),
    velocity: (f64, f64),
    reflect: bool,
    enter: f64,
    exit: f64,
}

impl ObjectPlan {
    fn center_at(&self, t: f64, width: usize, height: usize) -> (f64, f64) {
        let x = self.start.0 + self.velocity.0 * t;
        let y = self.start.1 + self.velocity.1 * t;
        if !self.reflect {
            return (x, y);
        }
        (
            reflect_into(x, 0.5 * self.w, width as f64 - 0.5 * self.w),
            reflect_into(y, 0.5 * self.h, height as f64 - 0.5 * self.h),
        )
    }
}

fn reflect_into(x: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    if span <= 0.0 {
        return lo;
    }
    let u = (x - lo).rem_euclid(2.0 * span);
    lo + if u > span { 2.0 * span - u } else { u }
}

fn plan_objects(catalog: &ClassCatalog, seed_value: u64, cfg: &SceneConfig) -> Result<Vec<ObjectPlan>> {
    let pool = catalog.pool(cfg.classes);
    if pool.is_empty() && cfg.num_objects > 0 {
        return Err(Error::Config(format!("class pool {:?} is empty", cfg.classes)));
    }
    let mut rng = seed::rng(seed_value, "scene.objects", 0);
    let (wf, hf) = (cfg.width as f64, cfg.height as f64);
    let size = |rng: &mut rand_chacha::ChaCha8Rng| {
        (
            rng.random_range(cfg.min_size..=cfg.max_size),
            rng.random_range(cfg.min_size..=cfg.max_size),
        )
    };
    let mut plans = Vec::with_capacity(cfg.num_objects);
    match cfg.motion {
        Motion::Static | Motion::Linear => {
            for _ in 0..cfg.num_objects {
                let class_id = pool[rng.random_range(0..pool.len())];
                let (w, h) = size(&mut rng);
                let start = (
                    rng.random_range(0.5 * w..=wf - 0.5 * w),
                    rng.random_range(0.5 * h..=hf - 0.5 * h),
                );
                let velocity = if cfg.motion == Motion::Static {
                    (0.0, 0.0)
                } else {
                    let angle = rng.random_range(0.0..std::f64::consts::TAU);
                    let speed = cfg.max_speed * rng.random_range(0.25..=1.0);
                    (speed * angle.cos(), speed * angle.sin())
                };
                plans.push(ObjectPlan {
                    class_id,
                    w,
                    h,
                    start,
                    velocity,
                    reflect: true,
                    enter: 0.0,
                    exit: f64::INFINITY,
                });
            }
        }
        Motion::Crossing | Motion::Occluding => {
            let band = cfg.max_size.ceil() + 2.0;
            let separate_rows = cfg.motion == Motion::Crossing;
            let mut top = 0.0;
            let mut remaining = cfg.num_objects;
            while remaining > 0 {
                let twins = remaining >= 2;
                let class_id = pool[rng.random_range(0..pool.len())];
                let count = if twins { 2 } else { 1 };
                let rows_used = if twins && separate_rows { 2.0 } else { 1.0 };
                let slack = (hf - top - rows_used * band).max(0.0);
                let jitter = rng.random_range(0.0..=slack.min(band));
                let row_top = top + jitter;
                let left = rng.random_range(0.0..=wf / 4.0);
                let right = rng.random_range(0.0..=wf / 4.0);
                for k in 0..count {
                    let (w, h) = size(&mut rng);
                    let y = row_top + band * (if separate_rows { k as f64 } else { 0.0 }) + 0.5 * band;
                    let x_lo = 0.5 * w + 1.0 + left;
                    let x_hi = wf - 0.5 * w - 1.0 - right;
                    let (x0, x1) = if k == 0 { (x_lo, x_hi) } else { (x_hi, x_lo) };
                    let v = (x1 - x0) / cfg.duration;
                    plans.push(ObjectPlan {
                        class_id,
                        w,
                        h,
                        start: (x0, y),
                        velocity: (v, 0.0),
                        reflect: false,
                        enter: 0.0,
                        exit: f64::INFINITY,
                    });
                }
                top = row_top + rows_used * band;
                remaining -= count;
            }
        }
    }
    for p in &mut plans {
        if rng.random_bool(cfg.enter_exit_rate) {
            p.enter = rng.random_range(0.0..0.5 * cfg.duration);
        }
        if rng.random_bool(cfg.enter_exit_rate) {
            p.exit = rng.random_range(0.5 * cfg.duration..cfg.duration);
        }
    }
    Ok(plans)
}

fn background(seed_value: u64) -> [f32; 3] {
    let mut rng = seed::rng(seed_value, "scene.background", 0);
    let mut bg = [0.0f32; 3];
    for c in &mut bg {
        *c = rng.random_range(0u8..=30) as f32 / 255.0;
    }
    bg
}

fn rgb(color: [u8; 3]) -> [f32; 3] {
    [color[0] as f32 / 255.0, color[1] as f32 / 255.0, color[2] as f32 / 255.0]
}

/// Render one frame; returns the image and the tight visible box per object.
fn render_frame(
    catalog: &ClassCatalog,
    plans: &[(ObjectPlan, (f64, f64), bool)],
    height: usize,
    width: usize,
    bg: [f32; 3],
) -> (Image, Vec<Option<BBox>>) {
    let mut img = Image::filled(height, width, bg);
    let mut ids = vec![usize::MAX; height * width];
    for (k, (plan, (cx, cy), visible)) in plans.iter().enumerate() {
        if !visible {
            continue;
        }
        let spec = catalog.get(plan.class_id).expect("class in catalog");
        let color = rgb(spec.appearance.color);
        let r_lo = (cy - 0.5 * plan.h).floor().max(0.0) as usize;
        let r_hi = ((cy + 0.5 * plan.h).ceil().max(0.0) as usize).min(height);
        let c_lo = (cx - 0.5 * plan.w).floor().max(0.0) as usize;
        let c_hi = ((cx + 0.5 * plan.w).ceil().max(0.0) as usize).min(width);
        for r in r_lo..r_hi {
            let v = (r as f64 + 0.5 - cy) / (0.5 * plan.h);
            for c in c_lo..c_hi {
                let u = (c as f64 + 0.5 - cx) / (0.5 * plan.w);
                if spec.appearance.shape.contains(u, v) {
                    img.set_pixel(r, c, color);
                    ids[r * width + c] = k;
                }
            }
        }
    }
    let mut extents: Vec<Option<(usize, usize, usize, usize)>> = vec![None; plans.len()];
    for r in 0..height {
        for c in 0..width {
            let k = ids[r * width + c];
            if k == usize::MAX {
                continue;
            }
            let e = extents[k].get_or_insert((r, c, r, c));
            e.0 = e.0.min(r);
            e.1 = e.1.min(c);
            e.2 = e.2.max(r);
            e.3 = e.3.max(c);
        }
    }
    let boxes = extents
        .into_iter()
        .map(|e| {
            e.map(|(r0, c0, r1, c1)| {
                BBox::from_corners(
                    c0 as f64 / width as f64,
                    r0 as f64 / height as f64,
                    (c1 + 1) as f64 / width as f64,
                    (r1 + 1) as f64 / height as f64,
                )
            })
        })
        .collect();
    (img, boxes)
}

/// Render a scene. Identical `(catalog, seed, config)` gives bitwise-identical output.
pub fn generate_scene(catalog: &ClassCatalog, seed_value: u64, cfg: &SceneConfig) -> Result<SceneVideo> {
    cfg.validate()?;
    let plans = plan_objects(catalog, seed_value, cfg)?;
    let bg = background(seed_value);
    let n = cfg.frame_count();
    let mut frames = Vec::with_capacity(n);
    let mut tracks: Vec<GtTrack> = plans
        .iter()
        .enumerate()
        .map(|(k, p)| GtTrack {
            track_id: k as u32,
            class_id: p.class_id,
            entries: Vec::with_capacity(n),
        })
        .collect();
    let annotated: Vec<bool> = (0..n).map(|i| i % cfg.annotate_every == 0).collect();
    for (i, &is_annotated) in annotated.iter().enumerate() {
        let t = i as f64 / cfg.fps;
        let placed: Vec<_> = plans
            .iter()
            .map(|p| {
                let visible = t >= p.enter && t < p.exit;
                (p.clone(), p.center_at(t, cfg.width, cfg.height), visible)
            })
            .collect();
        let (img, boxes) = render_frame(catalog, &placed, cfg.height, cfg.width, bg);
        frames.push(img);
        for (track, b) in tracks.iter_mut().zip(boxes) {
            track.entries.push(match b {
                Some(b) if is_annotated => TrackEntry::present(b),
                _ => TrackEntry::ABSENT,
            });
        }
    }
    Ok(SceneVideo {
        video_id: String::new(),
        split: String::new(),
        fps: cfg.fps,
        frames,
        tracks,
        annotated,
        scene: Some(SceneSpec {
            seed: seed_value,
            config: cfg.clone(),
        }),
    })
}

/// Re-render a stored scene at `fps`, keeping motion identical in time.
pub fn rerender(catalog: &ClassCatalog, video: &SceneVideo, fps: f64) -> Result<SceneVideo> {
    let spec = video
        .scene
        .as_ref()
        .ok_or_else(|| Error::Data(format!("video {} has no regeneration parameters", video.video_id)))?;
    let mut cfg = spec.config.clone();
    let factor = fps / cfg.fps;
    cfg.fps = fps;
    cfg.annotate_every = (spec.config.annotate_every as f64 * factor).round().max(1.0) as usize;
    let mut out = generate_scene(catalog, spec.seed, &cfg)?;
    out.video_id = video.video_id.clone();
    out.split = video.split.clone();
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StillConfig {
    pub height: usize,
    pub width: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    pub min_size: f64,
    pub max_size: f64,
    pub classes: ClassPool,
}

impl Default for StillConfig {
    fn default() -> Self {
        StillConfig {
            height: 64,
            width: 64,
            min_objects: 4,
            max_objects: 9,
            min_size: 6.0,
            max_size: 9.0,
            classes: ClassPool::Known,
        }
    }
}

/// A single annotated image (stored as a one-frame video) for pseudo-video training.
pub fn generate_still(catalog: &ClassCatalog, seed_value: u64, cfg: &StillConfig) -> Result<SceneVideo> {
    if cfg.min_objects > cfg.max_objects || cfg.max_size + 2.0 > cfg.height.min(cfg.width) as f64 {
        return Err(Error::Config("invalid still configuration".into()));
    }
    let pool = catalog.pool(cfg.classes);
    if pool.is_empty() {
        return Err(Error::Config(format!("class pool {:?} is empty", cfg.classes)));
    }
    let mut rng = seed::rng(seed_value, "still.objects", 0);
    let count = rng.random_range(cfg.min_objects..=cfg.max_objects);
    let placed: Vec<_> = (0..count)
        .map(|_| {
            let class_id = pool[rng.random_range(0..pool.len())];
            let w = rng.random_range(cfg.min_size..=cfg.max_size);
            let h = rng.random_range(cfg.min_size..=cfg.max_size);
            let cx = rng.random_range(0.5 * w..=cfg.width as f64 - 0.5 * w);
            let cy = rng.random_range(0.5 * h..=cfg.height as f64 - 0.5 * h);
            let plan = ObjectPlan {
                class_id,
                w,
                h,
                start: (cx, cy),
                velocity: (0.0, 0.0),
                reflect: false,
                enter: 0.0,
                exit: f64::INFINITY,
            };
            (plan, (cx, cy), true)
        })
        .collect();
    let (img, boxes) = render_frame(catalog, &placed, cfg.height, cfg.width, background(seed_value));
    let tracks = placed
        .iter()
        .zip(boxes)
        .enumerate()
        .filter_map(|(k, ((plan, _, _), b))| {
            b.map(|b| GtTrack {
                track_id: k as u32,
                class_id: plan.class_id,
                entries: vec![TrackEntry::present(b)],
            })
        })
        .collect();
    Ok(SceneVideo {
        video_id: String::new(),
        split: "stills".into(),
        fps: 1.0,
        frames: vec![img],
        tracks,
        annotated: vec![true],
        scene: None,
    })
}

/// Per-split generation parameters: each video draws its object count and
/// motion model from the given ranges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub videos: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    pub motions: Vec<Motion>,
    pub scene: SceneConfig,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            videos: 10,
            min_objects: 1,
            max_objects: 2,
            motions: vec![Motion::Linear],
            scene: SceneConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub num_known: usize,
    pub num_unknown: usize,
    pub embed_dim: usize,
    pub train: SplitSpec,
    pub eval: SplitSpec,
    pub stills: usize,
    pub still: StillConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            num_known: 3,
            num_unknown: 2,
            embed_dim: 32,
            train: SplitSpec {
                videos: 40,
                min_objects: 1,
                max_objects: 4,
                motions: vec![Motion::Linear, Motion::Crossing, Motion::Occluding],
                scene: SceneConfig {
                    classes: ClassPool::Known,
                    enter_exit_rate: 0.3,
                    annotate_every: 2,
                    ..SceneConfig::default()
                },
            },
            eval: SplitSpec {
                videos: 50,
                min_objects: 2,
                max_objects: 4,
                motions: vec![Motion::Crossing],
                scene: SceneConfig {
                    classes: ClassPool::All,
                    ..SceneConfig::default()
                },
            },
            stills: 200,
            still: StillConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub catalog: ClassCatalog,
    pub videos: Vec<SceneVideo>,
}

impl Dataset {
    pub fn split<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a SceneVideo> + 'a {
        self.videos.iter().filter(move |v| v.split == name)
    }
}

/// Videos of one split. Each draws a motion model and an object count, the
/// count clamped to what that motion's layout can hold.
pub fn generate_split(catalog: &ClassCatalog, root_seed: u64, name: &str, spec: &SplitSpec) -> Result<Vec<SceneVideo>> {
    if spec.motions.is_empty() || spec.min_objects > spec.max_objects {
        return Err(Error::Config(format!("split {name}: need motions and min_objects <= max_objects")));
    }
    (0..spec.videos)
        .map(|i| {
            let video_seed = seed::derive(root_seed, name, i as u64);
            let mut rng = seed::rng(video_seed, "split.layout", 0);
            let mut cfg = spec.scene.clone();
            cfg.motion = spec.motions[rng.random_range(0..spec.motions.len())];
            cfg.num_objects = rng.random_range(spec.min_objects..=spec.max_objects).min(cfg.capacity());
            let mut v = generate_scene(catalog, video_seed, &cfg)?;
            v.video_id = format!("{name}_{i:04}");
            v.split = name.to_string();
            Ok(v)
        })
        .collect()
}

pub fn generate_dataset(cfg: &DatasetConfig, seed_value: u64) -> Result<Dataset> {
    let catalog = ClassCatalog::generate(cfg.num_known, cfg.num_unknown, cfg.embed_dim, seed_value)?;
    let mut videos = generate_split(&catalog, seed_value, "train", &cfg.train)?;
    videos.extend(generate_split(&catalog, seed_value, "eval", &cfg.eval)?);
    for i in 0..cfg.stills {
        let mut v = generate_still(&catalog, seed::derive(seed_value, "stills", i as u64), &cfg.still)?;
        v.video_id = format!("stills_{i:04}");
        videos.push(v);
    }
    Ok(Dataset { catalog, videos })
}

// ---------------------------------------------------------------------------
// Serialization

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FramesDoc {
    encoding: String,
    height: usize,
    width: usize,
    data: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VideoDoc {
    version: u32,
    video_id: String,
    split: String,
    fps: f64,
    annotated: Vec<bool>,
    #[serde(default)]
    scene: Option<SceneSpec>,
    tracks: Vec<GtTrack>,
    frames: FramesDoc,
}

fn encode_frame(img: &Image) -> String {
    let bytes: Vec<u8> = img.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    B64.encode(bytes)
}

fn decode_frame(s: &str, height: usize, width: usize) -> std::result::Result<Image, String> {
    let bytes = B64.decode(s).map_err(|e| e.to_string())?;
    if bytes.len() != height * width * 3 {
        return Err(format!("frame has {} bytes, expected {}", bytes.len(), height * width * 3));
    }
    Ok(Image {
        height,
        width,
        data: bytes.iter().map(|&b| b as f32 / 255.0).collect(),
    })
}

pub fn video_to_json(v: &SceneVideo) -> String {
    let (height, width) = v.dims();
    let doc = VideoDoc {
        version: FORMAT_VERSION,
        video_id: v.video_id.clone(),
        split: v.split.clone(),
        fps: v.fps,
        annotated: v.annotated.clone(),
        scene: v.scene.clone(),
        tracks: v.tracks.clone(),
        frames: FramesDoc {
            encoding: "rgb8-base64".into(),
            height,
            width,
            data: v.frames.iter().map(encode_frame).collect(),
        },
    };
    serde_json::to_string_pretty(&doc).expect("video serializes")
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(text.len());
        }
        offset += l.len();
    }
    text.len()
}

/// Parse one video document; `record` is its index within the dataset.
pub fn video_from_json(text: &str, record: usize) -> Result<SceneVideo> {
    let doc: VideoDoc = serde_json::from_str(text).map_err(|e| Error::Parse {
        record,
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let data_err = |message: String| Error::Parse {
        record,
        offset: 0,
        message,
    };
    if doc.version != FORMAT_VERSION {
        return Err(data_err(format!("unsupported version {}", doc.version)));
    }
    if doc.frames.encoding != "rgb8-base64" {
        return Err(data_err(format!("unknown frame encoding {}", doc.frames.encoding)));
    }
    let frames = doc
        .frames
        .data
        .iter()
        .map(|s| decode_frame(s, doc.frames.height, doc.frames.width))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(data_err)?;
    if doc.annotated.len() != frames.len() || doc.tracks.iter().any(|t| t.entries.len() != frames.len()) {
        return Err(data_err("track entries or annotation mask misaligned with frames".into()));
    }
    if doc
        .tracks
        .iter()
        .flat_map(|t| &t.entries)
        .any(|e| e.present && !e.bbox.is_some_and(|b| b.is_valid()))
    {
        return Err(data_err("present entry without a valid box".into()));
    }
    Ok(SceneVideo {
        video_id: doc.video_id,
        split: doc.split,
        fps: doc.fps,
        frames,
        tracks: doc.tracks,
        annotated: doc.annotated,
        scene: doc.scene,
    })
}

pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    let videos_dir = dir.join("videos");
    fs::create_dir_all(&videos_dir).map_err(|e| Error::io(&videos_dir, e))?;
    let catalog_path = dir.join("catalog.json");
    let catalog = serde_json::to_string_pretty(&dataset.catalog).expect("catalog serializes");
    fs::write(&catalog_path, catalog).map_err(|e| Error::io(&catalog_path, e))?;
    for (i, v) in dataset.videos.iter().enumerate() {
        let name = if v.video_id.is_empty() {
            format!("video_{i:06}")
        } else {
            v.video_id.clone()
        };
        let path = videos_dir.join(format!("{name}.json"));
        fs::write(&path, video_to_json(v)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

pub fn read_catalog(dir: &Path) -> Result<ClassCatalog> {
    let path = dir.join("catalog.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let catalog: ClassCatalog = serde_json::from_str(&text).map_err(|e| Error::Parse {
        record: 0,
        offset: byte_offset(&text, e.line(), e.column()),
        message: format!("catalog.json: {e}"),
    })?;
    if catalog.version != FORMAT_VERSION {
        return Err(Error::Data(format!("unsupported catalog version {}", catalog.version)));
    }
    catalog.validate()?;
    Ok(catalog)
}

/// Read `catalog.json` and every `videos/*.json` in file-name order.
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let catalog = read_catalog(dir)?;
    let videos_dir = dir.join("videos");
    let mut paths: Vec<_> = match fs::read_dir(&videos_dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(Error::io(&videos_dir, e)),
    };
    paths.sort();
    let videos = paths
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            video_from_json(&text, i).map_err(|e| match e {
                Error::Parse { record, offset, message } => Error::Parse {
                    record,
                    offset,
                    message: format!("{}: {message}", p.display()),
                },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { catalog, videos })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog() -> ClassCatalog {
        ClassCatalog::generate(3, 2, 16, 11).unwrap()
    }

    #[test]
    fn catalog_invariants() {
        let c = catalog();
        assert_eq!(c.num_known(), 3);
        assert_eq!(c.num_unknown(), 2);
        c.validate().unwrap();
        assert!(ClassCatalog::generate(3, 0, 16, 1).is_err());
    }

    #[test]
    fn empty_scene_is_background_only() {
        let cfg = SceneConfig {
            num_objects: 0,
            ..SceneConfig::default()
        };
        let v = generate_scene(&catalog(), 3, &cfg).unwrap();
        assert!(v.tracks.is_empty());
        let first = v.frames[0].pixel(0, 0);
        assert!(v.frames.iter().all(|f| f.data.chunks(3).all(|p| p == first)));
    }

    #[test]
    fn static_object_keeps_its_box() {
        let cfg = SceneConfig {
            num_objects: 1,
            motion: Motion::Static,
            ..SceneConfig::default()
        };
        let v = generate_scene(&catalog(), 5, &cfg).unwrap();
        let boxes: Vec<_> = v.tracks[0].entries.iter().map(|e| e.get().unwrap()).collect();
        assert!(boxes.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn crossing_pair_swaps_horizontal_order() {
        let cfg = SceneConfig {
            num_objects: 2,
            motion: Motion::Crossing,
            ..SceneConfig::default()
        };
        for s in 0..10 {
            let v = generate_scene(&catalog(), s, &cfg).unwrap();
            let n = v.len();
            let x = |t: usize, f: usize| v.tracks[t].entries[f].get().unwrap().cx;
            assert!(x(0, 0) < x(1, 0));
            assert!(x(0, n - 1) > x(1, n - 1));
            assert_eq!(v.tracks[0].class_id, v.tracks[1].class_id);
        }
    }

    #[test]
    fn capacity_is_enforced() {
        let cfg = SceneConfig {
            num_objects: 50,
            ..SceneConfig::default()
        };
        assert!(matches!(generate_scene(&catalog(), 0, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn boxes_bound_rendered_colors() {
        // Objects of distinct classes: scan frames for each class color.
        let cat = catalog();
        for s in 0..20 {
            let cfg = SceneConfig {
                num_objects: 3,
                motion: Motion::Linear,
                enter_exit_rate: 0.3,
                ..SceneConfig::default()
            };
            let v = generate_scene(&cat, s, &cfg).unwrap();
            let mut classes: Vec<_> = v.tracks.iter().map(|t| t.class_id).collect();
            classes.sort_unstable();
            classes.dedup();
            if classes.len() != v.tracks.len() {
                continue;
            }
            for (f, frame) in v.frames.iter().enumerate() {
                for t in &v.tracks {
                    let color = rgb(cat.get(t.class_id).unwrap().appearance.color);
                    let mut ext: Option<(usize, usize, usize, usize)> = None;
                    for r in 0..frame.height {
                        for c in 0..frame.width {
                            if frame.pixel(r, c) == color {
                                let e = ext.get_or_insert((r, c, r, c));
                                *e = (e.0.min(r), e.1.min(c), e.2.max(r), e.3.max(c));
                            }
                        }
                    }
                    match (t.entries[f].get(), ext) {
                        (Some(b), Some((r0, c0, r1, c1))) => {
                            let (x0, y0, x1, y1) = b.to_corners();
                            let px = |v: f64, n: usize| v * n as f64;
                            assert!((px(x0, 32) - c0 as f64).abs() <= 1.0);
                            assert!((px(y0, 32) - r0 as f64).abs() <= 1.0);
                            assert!((px(x1, 32) - (c1 + 1) as f64).abs() <= 1.0);
                            assert!((px(y1, 32) - (r1 + 1) as f64).abs() <= 1.0);
                        }
                        (None, None) => {}
                        other => panic!("presence mismatch at frame {f}: {other:?}"),
                    }
                }
            }
        }
    }

    #[test]
    fn rerender_matches_at_shared_times() {
        let cat = catalog();
        let cfg = SceneConfig {
            num_objects: 2,
            motion: Motion::Crossing,
            ..SceneConfig::default()
        };
        let v = generate_scene(&cat, 9, &cfg).unwrap();
        let fast = rerender(&cat, &v, 4.0).unwrap();
        assert_eq!(fast.len(), 4 * v.len());
        for i in 0..v.len() {
            assert_eq!(fast.frames[4 * i], v.frames[i]);
            assert!(fast.annotated[4 * i]);
            assert!(!fast.annotated[4 * i + 1]);
            for (a, b) in v.tracks.iter().zip(&fast.tracks) {
                assert_eq!(a.entries[i], b.entries[4 * i]);
            }
        }
    }

    #[test]
    fn sparse_annotation_mask() {
        let cfg = SceneConfig {
            num_objects: 1,
            annotate_every: 2,
            ..SceneConfig::default()
        };
        let v = generate_scene(&catalog(), 1, &cfg).unwrap();
        assert!(v.tracks[0].entries[1].get().is_none());
        assert!(v.tracks[0].entries[0].get().is_some());
        assert_eq!(v.annotated, (0..12).map(|i| i % 2 == 0).collect::<Vec<_>>());
    }

    #[test]
    fn truncated_document_reports_offset() {
        let cat = catalog();
        let v = generate_scene(&cat, 2, &SceneConfig::default()).unwrap();
        let text = video_to_json(&v);
        let cut = &text[..text.len() / 2];
        match video_from_json(cut, 7) {
            Err(Error::Parse { record, offset, .. }) => {
                assert_eq!(record, 7);
                assert!(offset > 0 && offset <= cut.len());
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
