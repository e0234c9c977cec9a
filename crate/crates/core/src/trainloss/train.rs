use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adam_step, gradients, LossTrack, LossWeights, OptimizerConfig, OptimizerState};
use crate::augment::{
    augment_clip, frame_annotations, interpolate_annotations, pseudo_video, sample_clip_augment, sample_mosaic,
    temporal_mosaic, AugmentConfig, ClipAugment,
};
use crate::error::{Error, Result};
use crate::model::{prompt_matrix, Dropout, Model, ModelConfig};
use crate::seed;
use crate::synthdata::{ClassCatalog, SceneVideo};
use crate::tape::Matrix;
use crate::video::AnnotatedClip;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub clip_len: usize,
    /// Pseudo-video-only steps.
    pub phase1_steps: u64,
    /// Steps on the pseudo/real mixture.
    pub phase2_steps: u64,
    /// Probability that a phase-2 clip is a pseudo-video.
    pub pseudo_mix: f64,
    pub use_pseudo: bool,
    pub use_real: bool,
    pub base_lr: f64,
    pub warmup_steps: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub grad_clip_norm: f64,
    pub log_every: u64,
    pub loss: LossWeights,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        // Full-scale recipe: batch 32, lr 3e-6 with 1k warmup steps, 100k pseudo-only then 100k mixed steps.
        TrainConfig {
            batch_size: 8,
            clip_len: 4,
            phase1_steps: 1500,
            phase2_steps: 3500,
            pseudo_mix: 0.5,
            use_pseudo: true,
            use_real: true,
            base_lr: 2e-3,
            warmup_steps: 250,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            grad_clip_norm: 1.0,
            log_every: 50,
            loss: LossWeights::default(),
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn total_steps(&self) -> u64 {
        self.phase1_steps + self.phase2_steps
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        let total = self.total_steps();
        OptimizerConfig {
            base_lr: self.base_lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            warmup_steps: self.warmup_steps.min(total),
            total_steps: total,
            grad_clip_norm: self.grad_clip_norm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be at least 1".into()));
        }
        if self.clip_len == 0 {
            return Err(Error::Config("train.clip_len must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.pseudo_mix) {
            return Err(Error::Config("train.pseudo_mix must be in [0, 1]".into()));
        }
        if !self.use_pseudo && !self.use_real {
            return Err(Error::Config("train needs at least one of use_pseudo and use_real".into()));
        }
        if self.augment.pseudo_video_len < self.clip_len && self.use_pseudo {
            return Err(Error::Config("augment.pseudo_video_len must be at least train.clip_len".into()));
        }
        self.optimizer().validate()?;
        self.loss.validate()?;
        self.augment.validate()
    }
}

/// Training inputs. Only known classes are used as prompts and targets.
#[derive(Clone, Debug)]
pub struct TrainData {
    pub catalog: ClassCatalog,
    pub stills: Vec<SceneVideo>,
    pub real: Vec<SceneVideo>,
}

impl TrainData {
    pub fn prompt_classes(&self) -> Vec<u32> {
        self.catalog.classes.iter().filter(|c| c.known).map(|c| c.class_id).collect()
    }

    pub fn prompts(&self) -> Matrix {
        let known: Vec<Vec<f64>> = self.catalog.classes.iter().filter(|c| c.known).map(|c| c.prompt.clone()).collect();
        prompt_matrix(&known)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClipSource {
    Pseudo,
    Real,
}

/// Encoded frames plus loss targets for one training clip.
#[derive(Clone, Debug)]
pub struct PreparedClip {
    pub tokens: Vec<Matrix>,
    pub tracks: Vec<LossTrack>,
    pub prompts: Matrix,
}

/// Encode frames and map track classes onto prompt positions. Tracks of classes
/// outside `prompt_classes` are dropped.
pub fn prepare_clip(model: &Model, clip: &AnnotatedClip, prompt_classes: &[u32], prompts: &Matrix) -> Result<PreparedClip> {
    let tokens = clip.frames.iter().map(|f| model.encode_frame(f)).collect::<Result<Vec<_>>>()?;
    let tracks = clip
        .tracks
        .iter()
        .filter_map(|t| {
            prompt_classes.iter().position(|&c| c == t.class_id).map(|p| LossTrack {
                track_id: t.track_id,
                positives: vec![p],
                entries: t.entries.clone(),
            })
        })
        .collect();
    Ok(PreparedClip {
        tokens,
        tracks,
        prompts: prompts.clone(),
    })
}

fn pseudo_clip(cfg: &TrainConfig, data: &TrainData, rng: &mut ChaCha8Rng) -> Result<AnnotatedClip> {
    let still = &data.stills[rng.random_range(0..data.stills.len())];
    let clip = still.clip();
    let anns = frame_annotations(&clip, 0);
    let aug = &cfg.augment;
    let video = pseudo_video(&clip.frames[0], &anns, aug.pseudo_video_len, aug.pseudo_crop_frac, rng.random())?;
    let offset = rng.random_range(0..=video.len() - cfg.clip_len);
    let window: Vec<usize> = (offset..offset + cfg.clip_len).collect();
    let opts = ClipAugment {
        hflip: rng.random_bool(aug.flip_prob),
        time_reverse: rng.random_bool(aug.reverse_prob),
        ..ClipAugment::default()
    };
    augment_clip(&video.select_frames(&window), &opts, 0)
}

fn real_clip(cfg: &TrainConfig, data: &TrainData, rng: &mut ChaCha8Rng) -> Result<AnnotatedClip> {
    let video = &data.real[rng.random_range(0..data.real.len())];
    if video.len() < cfg.clip_len {
        return Err(Error::Data(format!("video {} is shorter than the clip length", video.video_id)));
    }
    let times: Vec<f64> = (0..video.len()).map(|i| i as f64 / video.fps).collect();
    let dense = AnnotatedClip {
        frames: video.frames.clone(),
        tracks: video
            .tracks
            .iter()
            .map(|t| interpolate_annotations(t, &video.annotated, &times))
            .collect(),
        fps: video.fps,
    };
    let stride = rng.random_range(1..=cfg.augment.subsample);
    let span = (cfg.clip_len * stride).min(video.len());
    let offset = rng.random_range(0..=video.len() - span);
    let window: Vec<usize> = (offset..offset + span).collect();
    let opts = sample_clip_augment(&cfg.augment, rng, Some(cfg.clip_len));
    augment_clip(&dense.select_frames(&window), &opts, rng.random())
}

/// Draw one augmented training clip from `source`, with temporal mosaic applied
/// at the configured rate.
pub fn sample_training_clip(cfg: &TrainConfig, data: &TrainData, source: ClipSource, rng: &mut ChaCha8Rng) -> Result<AnnotatedClip> {
    let draw = |rng: &mut ChaCha8Rng| match source {
        ClipSource::Pseudo => pseudo_clip(cfg, data, rng),
        ClipSource::Real => real_clip(cfg, data, rng),
    };
    let a = draw(rng)?;
    if !sample_mosaic(rng, cfg.augment.mosaic_prob) {
        return Ok(a);
    }
    let b = draw(rng)?;
    temporal_mosaic(&a, &b, cfg.clip_len, rng.random())
}

/// Model, optimizer moments and step counter; enough to resume exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub model: Model,
    pub optimizer: OptimizerState,
}

impl TrainState {
    pub fn new(model: Model, cfg: &TrainConfig) -> Self {
        let optimizer = OptimizerState::new(cfg.optimizer(), &model.params);
        TrainState { model, optimizer }
    }

    pub fn step(&self) -> u64 {
        self.optimizer.step
    }

    pub fn to_json(&self) -> String {
        let opt = serde_json::to_string(&self.optimizer).expect("optimizer state serializes");
        format!("{{\"version\":1,\"model\":{},\"optimizer\":{opt}}}", self.model.to_json())
    }

    pub fn from_json(text: &str) -> Result<TrainState> {
        let parse = |e: serde_json::Error| Error::Parse {
            record: 0,
            offset: e.column(),
            message: e.to_string(),
        };
        let v: serde_json::Value = serde_json::from_str(text).map_err(parse)?;
        if v.get("version").and_then(|x| x.as_u64()) != Some(1) {
            return Err(Error::Data("unsupported training state version".into()));
        }
        let model = Model::from_json(&v["model"].to_string())?;
        let optimizer: OptimizerState = serde_json::from_value(v["optimizer"].clone()).map_err(parse)?;
        if optimizer.m.len() != model.params.len() || optimizer.v.len() != model.params.len() {
            return Err(Error::Data("optimizer moments do not match the model".into()));
        }
        Ok(TrainState { model, optimizer })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogRow {
    pub step: u64,
    pub phase: u8,
    pub lr: f64,
    pub loss: f64,
    pub cls: f64,
    pub l1: f64,
    pub giou: f64,
    pub grad_norm: f64,
}

/// Run (or continue) the two-phase schedule. Every step draws its batch and
/// dropout masks from streams keyed by the step index, so a resumed run
/// matches an uninterrupted one.
pub fn train(
    cfg: &TrainConfig,
    data: &TrainData,
    model_cfg: &ModelConfig,
    root_seed: u64,
    resume: Option<TrainState>,
    on_log: &mut dyn FnMut(&LogRow, &Model),
) -> Result<TrainState> {
    cfg.validate()?;
    let has_pseudo = cfg.use_pseudo && !data.stills.is_empty();
    let has_real = cfg.use_real && !data.real.is_empty();
    if !has_pseudo && !has_real {
        return Err(Error::Data("no training clips: both pseudo and real sources are empty".into()));
    }
    let mut state = match resume {
        Some(s) => {
            if s.optimizer.config != cfg.optimizer() {
                return Err(Error::Config("resumed optimizer settings differ from the config".into()));
            }
            s
        }
        None => TrainState::new(Model::new(model_cfg.clone(), seed::derive(root_seed, "model.init", 0))?, cfg),
    };
    let classes = data.prompt_classes();
    let prompts = data.prompts();
    let total = cfg.total_steps();
    while state.optimizer.step < total {
        let step = state.optimizer.step + 1;
        let phase = if step <= cfg.phase1_steps { 1 } else { 2 };
        let mut rng = seed::rng(root_seed, "train.batch", step);
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let source = match (has_pseudo, has_real) {
                (true, false) => ClipSource::Pseudo,
                (false, true) => ClipSource::Real,
                _ if phase == 1 => ClipSource::Pseudo,
                _ => {
                    if rng.random_bool(cfg.pseudo_mix) {
                        ClipSource::Pseudo
                    } else {
                        ClipSource::Real
                    }
                }
            };
            let clip = sample_training_clip(cfg, data, source, &mut rng)?;
            batch.push(prepare_clip(&state.model, &clip, &classes, &prompts)?);
        }
        let mut drop_rng = seed::rng(root_seed, "train.dropout", step);
        let mut dropout = Dropout {
            rate: state.model.config.dropout,
            rng: &mut drop_rng,
        };
        let result = gradients(&state.model, &batch, &cfg.loss, None, Some(&mut dropout))?;
        let (lr, grad_norm) = adam_step(&mut state.optimizer, &mut state.model.params, &result.grads);
        if step % cfg.log_every.max(1) == 0 || step == total {
            let row = LogRow {
                step,
                phase,
                lr,
                loss: result.loss,
                cls: result.cls,
                l1: result.l1,
                giou: result.giou,
                grad_norm,
            };
            on_log(&row, &state.model);
        }
    }
    Ok(state)
}
