//! Run a model or the baseline over a video and emit predictions at the
//! annotated frames.

use crate::baseline::{linked_predictions, proposals_from_model, random_link, tbd_link, BaselineConfig};
use crate::error::{Error, Result};
use crate::metrics::{restrict_to_annotated, select_sot_slot, PredSlot, VideoPredictions};
use crate::model::{FramePrediction, Model};
use crate::synthdata::SceneVideo;
use crate::tape::Matrix;

/// Slot index becomes the track identity.
pub fn predictions_from_rollout(video_id: &str, rollout: &[FramePrediction]) -> VideoPredictions {
    VideoPredictions {
        video_id: video_id.to_string(),
        frames: rollout
            .iter()
            .map(|f| {
                f.iter()
                    .enumerate()
                    .map(|(q, s)| PredSlot {
                        slot_id: q as u32,
                        bbox: s.bbox,
                        objectness: s.objectness,
                    })
                    .collect()
            })
            .collect(),
    }
}

/// Recurrent rollout over every frame, kept at annotated frames.
pub fn track_video(model: &Model, video: &SceneVideo, prompts: &Matrix) -> Result<VideoPredictions> {
    let rollout = model.rollout(&video.frames, prompts)?;
    restrict_to_annotated(&predictions_from_rollout(&video.video_id, &rollout), &video.annotated)
}

/// Per-frame proposals linked by embedding similarity.
pub fn tbd_video(model: &Model, video: &SceneVideo, prompts: &Matrix, cfg: &BaselineConfig) -> Result<VideoPredictions> {
    let props = proposals_from_model(model, &video.frames, prompts, cfg.top_k)?;
    let ids = tbd_link(&props, cfg.sim_threshold)?;
    restrict_to_annotated(&linked_predictions(&video.video_id, &props, &ids), &video.annotated)
}

/// The same proposals as [`tbd_video`] with random identities.
pub fn random_video(model: &Model, video: &SceneVideo, prompts: &Matrix, top_k: usize, seed_value: u64) -> Result<VideoPredictions> {
    let props = proposals_from_model(model, &video.frames, prompts, top_k)?;
    let ids = random_link(&props, seed_value);
    restrict_to_annotated(&linked_predictions(&video.video_id, &props, &ids), &video.annotated)
}

/// Follow the slot that best covers a ground-truth track when it first
/// appears. Output holds that slot only, from the initialization frame on.
pub fn sot_video(model: &Model, video: &SceneVideo, prompts: &Matrix, track_id: u32) -> Result<VideoPredictions> {
    let track = video
        .tracks
        .iter()
        .find(|t| t.track_id == track_id)
        .ok_or_else(|| Error::Data(format!("video {} has no track {track_id}", video.video_id)))?;
    let (start, init) = track
        .entries
        .iter()
        .enumerate()
        .find_map(|(i, e)| e.get().map(|b| (i, b)))
        .ok_or_else(|| Error::Data(format!("track {track_id} of video {} is never present", video.video_id)))?;
    let dense = predictions_from_rollout(&video.video_id, &model.rollout(&video.frames, prompts)?);
    let slot = select_sot_slot(&dense.frames[start], &init).ok_or_else(|| Error::Invalid("model produced no slots".into()))?;
    let single = VideoPredictions {
        video_id: dense.video_id,
        frames: dense
            .frames
            .into_iter()
            .enumerate()
            .map(|(t, f)| if t < start { Vec::new() } else { f.into_iter().filter(|p| p.slot_id == slot).collect() })
            .collect(),
    };
    restrict_to_annotated(&single, &video.annotated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::synthdata::{generate_scene, ClassCatalog, SceneConfig};

    fn setup() -> (Model, SceneVideo, Matrix) {
        let catalog = ClassCatalog::generate(3, 2, 32, 0).unwrap();
        let cfg = SceneConfig {
            annotate_every: 2,
            ..SceneConfig::default()
        };
        let video = generate_scene(&catalog, 5, &cfg).unwrap();
        let model = Model::new(ModelConfig::default(), 1).unwrap();
        let prompts = crate::model::prompt_matrix(&catalog.prompts());
        (model, video, prompts)
    }

    #[test]
    fn outputs_cover_annotated_frames() {
        let (model, video, prompts) = setup();
        let n = video.annotated.iter().filter(|&&a| a).count();
        let q = model.config.num_queries;
        let p = track_video(&model, &video, &prompts).unwrap();
        assert_eq!(p.frames.len(), n);
        assert!(p.frames.iter().all(|f| f.len() == q));
        let b = tbd_video(&model, &video, &prompts, &BaselineConfig { top_k: 4, sim_threshold: 0.5 }).unwrap();
        assert!(b.frames.iter().all(|f| f.len() == 4));
        let r = random_video(&model, &video, &prompts, 4, 0).unwrap();
        assert_eq!(r.frames.len(), n);
    }

    #[test]
    fn sot_keeps_one_slot() {
        let (model, video, prompts) = setup();
        let id = video.tracks[0].track_id;
        let p = sot_video(&model, &video, &prompts, id).unwrap();
        let slots: std::collections::BTreeSet<u32> = p.frames.iter().flatten().map(|s| s.slot_id).collect();
        assert_eq!(slots.len(), 1);
        assert!(sot_video(&model, &video, &prompts, 999).is_err());
    }
}
