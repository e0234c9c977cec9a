//! Clip-level augmentations. Every transform is applied identically to all
//! frames of a clip, and track identities are never merged or split.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{clip_to_window, BBox};
use crate::seed;
use crate::video::{AnnotatedClip, GtTrack, Image, TrackEntry};

/// Boxes keeping less than this fraction of their area after a crop are dropped.
pub const MIN_RETAINED: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub flip_prob: f64,
    pub reverse_prob: f64,
    /// Probability of a clip-level crop on real clips.
    pub crop_prob: f64,
    /// Crop size as fractions of (height, width).
    pub crop_frac: [f64; 2],
    /// Real clips are drawn from a window up to this many times longer than
    /// the clip and then sub-sampled back to clip length.
    pub subsample: usize,
    pub mosaic_prob: f64,
    pub pseudo_video_len: usize,
    /// Pseudo-video crop window as fractions of the still's (height, width).
    pub pseudo_crop_frac: [f64; 2],
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            flip_prob: 0.5,
            reverse_prob: 0.5,
            crop_prob: 0.5,
            crop_frac: [0.75, 0.75],
            subsample: 2,
            mosaic_prob: 0.5,
            pseudo_video_len: 8,
            pseudo_crop_frac: [0.5, 0.5],
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::Config(format!("augment.{name} must be in [0, 1]")))
            }
        };
        prob("flip_prob", self.flip_prob)?;
        prob("reverse_prob", self.reverse_prob)?;
        prob("crop_prob", self.crop_prob)?;
        prob("mosaic_prob", self.mosaic_prob)?;
        for f in self.crop_frac.iter().chain(&self.pseudo_crop_frac) {
            if !(*f > 0.0 && *f <= 1.0) {
                return Err(Error::Config("augment crop fractions must be in (0, 1]".into()));
            }
        }
        if self.subsample == 0 {
            return Err(Error::Config("augment.subsample must be at least 1".into()));
        }
        if self.pseudo_video_len < 2 {
            return Err(Error::Config("augment.pseudo_video_len must be at least 2".into()));
        }
        Ok(())
    }
}

/// One box on a still image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Annotation {
    pub track_id: u32,
    pub class_id: u32,
    pub bbox: BBox,
}

/// Annotations of frame `t` of a clip.
pub fn frame_annotations(clip: &AnnotatedClip, t: usize) -> Vec<Annotation> {
    clip.tracks
        .iter()
        .filter_map(|tr| {
            tr.entries[t].get().map(|bbox| Annotation {
                track_id: tr.track_id,
                class_id: tr.class_id,
                bbox,
            })
        })
        .collect()
}

/// Slide a crop window linearly from `start` to `end` over `len` frames.
///
/// Windows are normalized boxes on `image`; each output frame is resampled to
/// `out_h x out_w`.
pub fn pseudo_video_along(
    image: &Image,
    annotations: &[Annotation],
    len: usize,
    start: BBox,
    end: BBox,
    out_h: usize,
    out_w: usize,
) -> AnnotatedClip {
    let mut frames = Vec::with_capacity(len);
    let mut tracks: Vec<GtTrack> = annotations
        .iter()
        .map(|a| GtTrack {
            track_id: a.track_id,
            class_id: a.class_id,
            entries: Vec::with_capacity(len),
        })
        .collect();
    for t in 0..len {
        let u = if len > 1 { t as f64 / (len - 1) as f64 } else { 0.0 };
        let window = BBox::new(
            start.cx + u * (end.cx - start.cx),
            start.cy + u * (end.cy - start.cy),
            start.w,
            start.h,
        );
        frames.push(image.resample(&window, out_h, out_w));
        for (track, a) in tracks.iter_mut().zip(annotations) {
            track.entries.push(match clip_to_window(&a.bbox, &window) {
                (Some(b), kept) if kept >= MIN_RETAINED => TrackEntry::present(b),
                _ => TrackEntry::ABSENT,
            });
        }
    }
    AnnotatedClip {
        frames,
        tracks: tracks.into_iter().filter(|t| !t.is_empty()).collect(),
        fps: 1.0,
    }
}

/// Pseudo-video from a still: a crop of `crop_frac` of the image translates
/// between two uniformly drawn window positions.
pub fn pseudo_video(image: &Image, annotations: &[Annotation], len: usize, crop_frac: [f64; 2], seed_value: u64) -> Result<AnnotatedClip> {
    if len < 2 {
        return Err(Error::Invalid("pseudo-video length must be at least 2".into()));
    }
    let mut rng = seed::rng(seed_value, "augment.pseudo", 0);
    let (fh, fw) = (crop_frac[0], crop_frac[1]);
    let mut endpoint = || {
        BBox::new(
            rng.random_range(0.5 * fw..=1.0 - 0.5 * fw),
            rng.random_range(0.5 * fh..=1.0 - 0.5 * fh),
            fw,
            fh,
        )
    };
    let (start, end) = (endpoint(), endpoint());
    let out_h = (image.height as f64 * fh).round() as usize;
    let out_w = (image.width as f64 * fw).round() as usize;
    Ok(pseudo_video_along(image, annotations, len, start, end, out_h, out_w))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ClipAugment {
    pub hflip: bool,
    pub time_reverse: bool,
    /// Normalized crop window; output frames keep the input size.
    pub crop: Option<BBox>,
    pub subsample_to: Option<usize>,
}

/// Apply `opts` to every frame. The seed only drives the sub-sampling draw.
pub fn augment_clip(clip: &AnnotatedClip, opts: &ClipAugment, seed_value: u64) -> Result<AnnotatedClip> {
    let mut out = match opts.subsample_to {
        Some(k) if k > clip.len() => {
            return Err(Error::Invalid(format!("cannot subsample {} frames to {k}", clip.len())));
        }
        Some(k) if k < clip.len() => {
            let mut rng = seed::rng(seed_value, "augment.subsample", 0);
            let mut idx = rand::seq::index::sample(&mut rng, clip.len(), k).into_vec();
            idx.sort_unstable();
            clip.select_frames(&idx)
        }
        _ => clip.clone(),
    };
    if let Some(window) = opts.crop {
        if !(window.area() > 0.0) {
            return Err(Error::Invalid("crop window has zero area".into()));
        }
        out = crop_clip(&out, &window);
    }
    if opts.hflip {
        out.frames = out.frames.iter().map(Image::hflip).collect();
        for t in &mut out.tracks {
            for e in &mut t.entries {
                e.bbox = e.bbox.map(|b| b.hflip());
            }
        }
    }
    if opts.time_reverse {
        out.frames.reverse();
        for t in &mut out.tracks {
            t.entries.reverse();
        }
    }
    Ok(out)
}

fn crop_clip(clip: &AnnotatedClip, window: &BBox) -> AnnotatedClip {
    AnnotatedClip {
        frames: clip.frames.iter().map(|f| f.resample(window, f.height, f.width)).collect(),
        tracks: clip
            .tracks
            .iter()
            .map(|t| GtTrack {
                track_id: t.track_id,
                class_id: t.class_id,
                entries: t
                    .entries
                    .iter()
                    .map(|e| match e.get().map(|b| clip_to_window(&b, window)) {
                        Some((Some(b), kept)) if kept >= MIN_RETAINED => TrackEntry::present(b),
                        _ => TrackEntry::ABSENT,
                    })
                    .collect(),
            })
            .filter(|t| !t.is_empty())
            .collect(),
        fps: clip.fps,
    }
}

/// Window `[offset, offset + len)` of the concatenation `[a; b]`.
///
/// Tracks of `b` are renumbered above every id of `a`.
pub fn temporal_mosaic_at(a: &AnnotatedClip, b: &AnnotatedClip, len: usize, offset: usize) -> Result<AnnotatedClip> {
    let total = a.len() + b.len();
    if len > total || offset + len > total {
        return Err(Error::Invalid(format!("mosaic window {offset}+{len} exceeds {total} frames")));
    }
    let shift = a.tracks.iter().map(|t| t.track_id + 1).max().unwrap_or(0);
    let frames: Vec<Image> = a.frames.iter().chain(&b.frames).skip(offset).take(len).cloned().collect();
    let pad = |t: &GtTrack, before: usize, after: usize, id: u32| GtTrack {
        track_id: id,
        class_id: t.class_id,
        entries: std::iter::repeat_n(TrackEntry::ABSENT, before)
            .chain(t.entries.iter().copied())
            .chain(std::iter::repeat_n(TrackEntry::ABSENT, after))
            .skip(offset)
            .take(len)
            .collect(),
    };
    let tracks = a
        .tracks
        .iter()
        .map(|t| pad(t, 0, b.len(), t.track_id))
        .chain(b.tracks.iter().map(|t| pad(t, a.len(), 0, t.track_id + shift)))
        .filter(|t| !t.is_empty())
        .collect();
    Ok(AnnotatedClip { frames, tracks, fps: a.fps })
}

/// Mosaic with a uniformly drawn window offset.
pub fn temporal_mosaic(a: &AnnotatedClip, b: &AnnotatedClip, len: usize, seed_value: u64) -> Result<AnnotatedClip> {
    let total = a.len() + b.len();
    if len > total {
        return Err(Error::Invalid(format!("mosaic of {total} frames cannot yield {len}")));
    }
    let offset = seed::rng(seed_value, "augment.mosaic", 0).random_range(0..=total - len);
    temporal_mosaic_at(a, b, len, offset)
}

pub fn sample_mosaic(rng: &mut ChaCha8Rng, prob: f64) -> bool {
    rng.random_bool(prob)
}

/// Densify a track annotated only at `keyframes`.
///
/// Between two consecutive keyframes that both show the object, each box
/// coordinate is interpolated linearly in `frame_times`. Everything else that
/// is not itself a present keyframe is absent.
pub fn interpolate_annotations(track: &GtTrack, keyframes: &[bool], frame_times: &[f64]) -> GtTrack {
    let n = track.entries.len();
    assert_eq!(keyframes.len(), n, "keyframe mask length");
    assert_eq!(frame_times.len(), n, "frame time length");
    let keys: Vec<usize> = (0..n).filter(|&i| keyframes[i]).collect();
    let mut entries = vec![TrackEntry::ABSENT; n];
    for &k in &keys {
        entries[k] = track.entries[k];
    }
    for pair in keys.windows(2) {
        let (i, j) = (pair[0], pair[1]);
        let (Some(a), Some(b)) = (track.entries[i].get(), track.entries[j].get()) else {
            continue;
        };
        let span = frame_times[j] - frame_times[i];
        for (t, entry) in entries.iter_mut().enumerate().take(j).skip(i + 1) {
            let u = (frame_times[t] - frame_times[i]) / span;
            let lerp = |x: f64, y: f64| x + u * (y - x);
            *entry = TrackEntry::present(BBox::new(lerp(a.cx, b.cx), lerp(a.cy, b.cy), lerp(a.w, b.w), lerp(a.h, b.h)));
        }
    }
    GtTrack {
        track_id: track.track_id,
        class_id: track.class_id,
        entries,
    }
}

/// Draw a clip-level augmentation from `cfg`.
pub fn sample_clip_augment(cfg: &AugmentConfig, rng: &mut ChaCha8Rng, subsample_to: Option<usize>) -> ClipAugment {
    let crop = rng.random_bool(cfg.crop_prob).then(|| {
        let [fh, fw] = cfg.crop_frac;
        BBox::new(
            rng.random_range(0.5 * fw..=1.0 - 0.5 * fw),
            rng.random_range(0.5 * fh..=1.0 - 0.5 * fh),
            fw,
            fh,
        )
    });
    ClipAugment {
        hflip: rng.random_bool(cfg.flip_prob),
        time_reverse: rng.random_bool(cfg.reverse_prob),
        crop,
        subsample_to,
    }
}
