//! Open-world tracking evaluation: per-track calibration, the non-overlap
//! constraint, per-frame matching, detection recall, association accuracy,
//! OWTA reports, and single-object 3D IoU.
//!
//! False positives never reduce a score. Only ground-truth objects are
//! counted, which is what makes the metrics usable when most of the objects a
//! tracker reports have no annotation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::assignment::{solve_assignment, CostMatrix};
use crate::error::{Error, Result};
use crate::geometry::{box_from_owned_cells, intersection_union, iou, rasterize, BBox};
use crate::synthdata::{ClassCatalog, SceneVideo};
use crate::tape::sigmoid;
use crate::video::GtTrack;

/// One predicted instance in one frame. `slot_id` is the track identity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredSlot {
    pub slot_id: u32,
    pub bbox: BBox,
    /// Raw objectness logit.
    pub objectness: f64,
}

/// Prediction interchange format for one video.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoPredictions {
    pub video_id: String,
    pub frames: Vec<Vec<PredSlot>>,
}

const PREDICTION_VERSION: u32 = 1;

/// Prediction interchange file: per video, per frame, per slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionFile {
    pub version: u32,
    pub videos: Vec<VideoPredictions>,
}

impl PredictionFile {
    pub fn new(videos: Vec<VideoPredictions>) -> Self {
        PredictionFile {
            version: PREDICTION_VERSION,
            videos,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("predictions serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PredictionFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            record: 0,
            offset: e.column(),
            message: e.to_string(),
        })?;
        if file.version != PREDICTION_VERSION {
            return Err(Error::Data(format!("unsupported prediction file version {}", file.version)));
        }
        Ok(file)
    }
}

/// Ground truth at the evaluated frames.
#[derive(Clone, Debug, PartialEq)]
pub struct GtVideo {
    pub video_id: String,
    /// Rate of the evaluated frames, used for track-length buckets.
    pub fps: f64,
    pub tracks: Vec<GtTrack>,
}

impl GtVideo {
    /// Annotated frames of a generated video.
    pub fn from_scene(video: &SceneVideo) -> GtVideo {
        let keep: Vec<usize> = (0..video.len()).filter(|&i| video.annotated[i]).collect();
        let stride = if keep.len() > 1 { keep[1] - keep[0] } else { 1 };
        GtVideo {
            video_id: video.video_id.clone(),
            fps: video.fps / stride as f64,
            tracks: video
                .tracks
                .iter()
                .map(|t| GtTrack {
                    track_id: t.track_id,
                    class_id: t.class_id,
                    entries: keep.iter().map(|&i| t.entries[i]).collect(),
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tracks.first().map_or(0, |t| t.entries.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub thresholds: Vec<f64>,
    pub grid_width: usize,
    pub grid_height: usize,
    /// Per-track calibration factor; 0 disables it.
    pub calibration_factor: f64,
    pub enforce_constraint: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            thresholds: default_thresholds(),
            grid_width: 32,
            grid_height: 32,
            calibration_factor: 0.3,
            enforce_constraint: true,
        }
    }
}

/// `0.05, 0.10, ..., 0.95`.
pub fn default_thresholds() -> Vec<f64> {
    (1..=19).map(|k| k as f64 / 20.0).collect()
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(Error::Config("eval.thresholds must not be empty".into()));
        }
        if self.thresholds.iter().any(|&a| !(a > 0.0 && a < 1.0)) || self.thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("eval.thresholds must be strictly increasing in (0, 1)".into()));
        }
        if self.grid_width == 0 || self.grid_height == 0 {
            return Err(Error::Config("eval grid dims must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.calibration_factor) {
            return Err(Error::Config("eval.calibration_factor must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Keep frames whose score reaches `factor` times the track's best score.
pub fn calibrate_track(scores: &[f64], factor: f64) -> Vec<bool> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    scores.iter().map(|&s| s >= factor * max).collect()
}

/// Apply [`calibrate_track`] to every slot of a video, in probability space.
pub fn calibrate_video(preds: &VideoPredictions, factor: f64) -> VideoPredictions {
    if factor <= 0.0 {
        return preds.clone();
    }
    let mut best: BTreeMap<u32, f64> = BTreeMap::new();
    for p in preds.frames.iter().flatten() {
        let s = sigmoid(p.objectness);
        let e = best.entry(p.slot_id).or_insert(f64::NEG_INFINITY);
        *e = e.max(s);
    }
    VideoPredictions {
        video_id: preds.video_id.clone(),
        frames: preds
            .frames
            .iter()
            .map(|f| {
                f.iter()
                    .filter(|p| sigmoid(p.objectness) >= factor * best[&p.slot_id])
                    .copied()
                    .collect()
            })
            .collect(),
    }
}

/// Surviving instance after the non-overlap constraint.
#[derive(Clone, Debug, PartialEq)]
pub struct Exclusive {
    pub slot: PredSlot,
    /// Grid cells (row-major indices) this instance owns.
    pub cells: Vec<usize>,
}

/// Give each grid cell to the covering prediction with the highest
/// `probability / max(area, cell area)`, then shrink every prediction to the
/// tight box of its cells. Predictions left without cells are dropped.
pub fn enforce_non_overlap(frame: &[PredSlot], grid_width: usize, grid_height: usize) -> Vec<Exclusive> {
    let cell_area = 1.0 / (grid_width * grid_height) as f64;
    let boxes: Vec<BBox> = frame.iter().map(|p| p.bbox).collect();
    let ranks: Vec<f64> = frame
        .iter()
        .map(|p| sigmoid(p.objectness) / p.bbox.area().max(cell_area))
        .collect();
    let grid = rasterize(&boxes, &ranks, grid_width, grid_height);
    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); frame.len()];
    for (i, owner) in grid.cells().iter().enumerate() {
        if let Some(o) = owner {
            cells[*o].push(i);
        }
    }
    frame
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            box_from_owned_cells(&grid, i).map(|bbox| Exclusive {
                slot: PredSlot { bbox, ..*p },
                cells: std::mem::take(&mut cells[i]),
            })
        })
        .collect()
}

/// Calibration then (optionally) the non-overlap constraint.
pub fn postprocess(preds: &VideoPredictions, cfg: &EvalConfig) -> VideoPredictions {
    let calibrated = calibrate_video(preds, cfg.calibration_factor);
    if !cfg.enforce_constraint {
        return calibrated;
    }
    VideoPredictions {
        video_id: calibrated.video_id.clone(),
        frames: calibrated
            .frames
            .iter()
            .map(|f| {
                enforce_non_overlap(f, cfg.grid_width, cfg.grid_height)
                    .into_iter()
                    .map(|e| e.slot)
                    .collect()
            })
            .collect(),
    }
}

/// True positives of one frame at one threshold, as `(slot_id, track_id)`.
pub fn match_frame(preds: &[PredSlot], gts: &[(u32, BBox)], alpha: f64) -> Vec<(u32, u32)> {
    let mut cost = CostMatrix::from_fn(preds.len(), gts.len(), |i, j| 1.0 - iou(&preds[i].bbox, &gts[j].1));
    for i in 0..preds.len() {
        for j in 0..gts.len() {
            if iou(&preds[i].bbox, &gts[j].1) < alpha {
                cost.forbid(i, j);
            }
        }
    }
    solve_assignment(&cost)
        .pairs
        .into_iter()
        .map(|(i, j)| (preds[i].slot_id, gts[j].0))
        .collect()
}

/// Per-video match counts at one threshold.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MatchSet {
    /// True positives per frame.
    pub tps: Vec<Vec<(u32, u32)>>,
    /// Unmatched present ground truths per frame.
    pub fns: Vec<usize>,
    /// Present frames of each ground-truth track.
    pub gt_frames: BTreeMap<u32, usize>,
}

impl MatchSet {
    pub fn tp_count(&self) -> usize {
        self.tps.iter().map(Vec::len).sum()
    }

    pub fn fn_count(&self) -> usize {
        self.fns.iter().sum()
    }
}

/// Match every frame of `preds` against the tracks of `gt` accepted by `keep`.
pub fn match_frames(preds: &VideoPredictions, gt: &GtVideo, alpha: f64, keep: &dyn Fn(&GtTrack) -> bool) -> MatchSet {
    let tracks: Vec<&GtTrack> = gt.tracks.iter().filter(|t| keep(t)).collect();
    let mut set = MatchSet::default();
    for t in &tracks {
        set.gt_frames.insert(t.track_id, t.present_count());
    }
    for (f, frame) in preds.frames.iter().enumerate() {
        let gts: Vec<(u32, BBox)> = tracks
            .iter()
            .filter_map(|t| t.entries[f].get().map(|b| (t.track_id, b)))
            .collect();
        let tp = match_frame(frame, &gts, alpha);
        set.fns.push(gts.len() - tp.len());
        set.tps.push(tp);
    }
    set
}

/// `TP / (TP + FN)`; 1 when there is no ground truth.
pub fn detection_recall(sets: &[MatchSet]) -> f64 {
    let tp: usize = sets.iter().map(MatchSet::tp_count).sum();
    let fnc: usize = sets.iter().map(MatchSet::fn_count).sum();
    if tp + fnc == 0 {
        1.0
    } else {
        tp as f64 / (tp + fnc) as f64
    }
}

/// Sum over true positives of their association score, and the TP count.
fn association_sums(set: &MatchSet) -> (f64, usize) {
    let mut pair: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    let mut pred_tp: BTreeMap<u32, usize> = BTreeMap::new();
    for &(p, g) in set.tps.iter().flatten() {
        *pair.entry((p, g)).or_default() += 1;
        *pred_tp.entry(p).or_default() += 1;
    }
    let mut sum = 0.0;
    let mut count = 0;
    for (&(p, g), &n) in &pair {
        let denom = set.gt_frames[&g] + pred_tp[&p] - n;
        sum += n as f64 * n as f64 / denom as f64;
        count += n;
    }
    (sum, count)
}

/// Mean over true positives of `|TPA| / (|TPA| + |FNA| + |FPA|)`; 0 without TPs.
pub fn association_accuracy(sets: &[MatchSet]) -> f64 {
    let (sum, count) = sets.iter().map(association_sums).fold((0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaScore {
    pub alpha: f64,
    pub det_re: f64,
    pub ass_acc: f64,
    pub owta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub group: String,
    pub bucket: String,
    /// Ground-truth tracks in this group and bucket.
    pub tracks: usize,
    pub per_alpha: Vec<AlphaScore>,
    pub det_re: f64,
    pub ass_acc: f64,
    pub owta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OwtaReport {
    pub rows: Vec<ReportRow>,
}

pub const GROUPS: [&str; 3] = ["all", "known", "unknown"];
pub const BUCKETS: [&str; 4] = ["all", "short", "medium", "long"];

/// Bucket of a track by its time span: under 3 s, 3 to 10 s, over 10 s.
pub fn length_bucket(track: &GtTrack, fps: f64) -> &'static str {
    let seconds = track.span() as f64 / fps;
    if seconds < 3.0 {
        "short"
    } else if seconds <= 10.0 {
        "medium"
    } else {
        "long"
    }
}

impl OwtaReport {
    pub fn row(&self, group: &str, bucket: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.group == group && r.bucket == bucket)
    }

    /// Mean OWTA of a row; panics if the row is missing.
    pub fn owta(&self, group: &str, bucket: &str) -> f64 {
        self.row(group, bucket).expect("report row").owta
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Columns: group, bucket, alpha (or `mean`), DetRe, AssAcc, OWTA.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,bucket,alpha,DetRe,AssAcc,OWTA\n");
        for r in &self.rows {
            for a in &r.per_alpha {
                out.push_str(&format!("{},{},{:.2},{:.6},{:.6},{:.6}\n", r.group, r.bucket, a.alpha, a.det_re, a.ass_acc, a.owta));
            }
            out.push_str(&format!("{},{},mean,{:.6},{:.6},{:.6}\n", r.group, r.bucket, r.det_re, r.ass_acc, r.owta));
        }
        out
    }
}

/// Score already post-processed predictions against ground truth.
pub fn score(preds: &[VideoPredictions], gts: &[GtVideo], catalog: &ClassCatalog, thresholds: &[f64]) -> Result<OwtaReport> {
    let gt_by_id: BTreeMap<&str, &GtVideo> = gts.iter().map(|g| (g.video_id.as_str(), g)).collect();
    let mut pairs = Vec::with_capacity(preds.len());
    for p in preds {
        let g = gt_by_id
            .get(p.video_id.as_str())
            .ok_or_else(|| Error::Data(format!("no ground truth for video {}", p.video_id)))?;
        if g.len() != p.frames.len() && !g.tracks.is_empty() {
            return Err(Error::Data(format!(
                "video {}: {} predicted frames but {} annotated frames",
                p.video_id,
                p.frames.len(),
                g.len()
            )));
        }
        pairs.push((p, *g));
    }
    let predicted: BTreeSet<&str> = preds.iter().map(|p| p.video_id.as_str()).collect();
    if let Some(missing) = gts.iter().find(|g| !predicted.contains(g.video_id.as_str())) {
        return Err(Error::Data(format!("no predictions for video {}", missing.video_id)));
    }
    let mut rows = Vec::new();
    for group in GROUPS {
        for bucket in BUCKETS {
            let keep = |t: &GtTrack, fps: f64| {
                let in_group = match group {
                    "known" => catalog.is_known(t.class_id),
                    "unknown" => !catalog.is_known(t.class_id),
                    _ => true,
                };
                in_group && !t.is_empty() && (bucket == "all" || length_bucket(t, fps) == bucket)
            };
            let tracks = pairs
                .iter()
                .map(|(_, g)| g.tracks.iter().filter(|t| keep(t, g.fps)).count())
                .sum();
            let mut per_alpha = Vec::with_capacity(thresholds.len());
            for &alpha in thresholds {
                let sets: Vec<MatchSet> = pairs
                    .iter()
                    .map(|(p, g)| match_frames(p, g, alpha, &|t| keep(t, g.fps)))
                    .collect();
                let det_re = detection_recall(&sets);
                let ass_acc = association_accuracy(&sets);
                per_alpha.push(AlphaScore {
                    alpha,
                    det_re,
                    ass_acc,
                    owta: (det_re * ass_acc).sqrt(),
                });
            }
            let n = per_alpha.len() as f64;
            rows.push(ReportRow {
                group: group.to_string(),
                bucket: bucket.to_string(),
                tracks,
                det_re: per_alpha.iter().map(|a| a.det_re).sum::<f64>() / n,
                ass_acc: per_alpha.iter().map(|a| a.ass_acc).sum::<f64>() / n,
                owta: per_alpha.iter().map(|a| a.owta).sum::<f64>() / n,
                per_alpha,
            });
        }
    }
    Ok(OwtaReport { rows })
}

/// Full evaluation: calibration, optional non-overlap constraint, then scoring.
pub fn owta(preds: &[VideoPredictions], gts: &[GtVideo], catalog: &ClassCatalog, cfg: &EvalConfig) -> Result<OwtaReport> {
    cfg.validate()?;
    let processed: Vec<VideoPredictions> = preds.iter().map(|p| postprocess(p, cfg)).collect();
    score(&processed, gts, catalog, &cfg.thresholds)
}

/// Summed per-frame intersection over summed per-frame union.
pub fn sot_3d_iou(pred: &[Option<BBox>], gt: &[Option<BBox>]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::Invalid("prediction and ground truth differ in length".into()));
    }
    if gt.iter().all(Option::is_none) {
        return Err(Error::Invalid("ground-truth track is never present".into()));
    }
    let (mut inter, mut union) = (0.0, 0.0);
    for (p, g) in pred.iter().zip(gt) {
        match (p, g) {
            (Some(p), Some(g)) => {
                let (i, u) = intersection_union(p, g);
                inter += i;
                union += u;
            }
            (Some(b), None) | (None, Some(b)) => union += b.area(),
            (None, None) => {}
        }
    }
    Ok(if union > 0.0 { inter / union } else { 0.0 })
}

/// Slot whose first-frame box best overlaps the initial ground-truth box.
pub fn select_sot_slot(first_frame: &[PredSlot], init: &BBox) -> Option<u32> {
    let mut best: Option<(f64, u32)> = None;
    for p in first_frame {
        let v = iou(&p.bbox, init);
        if best.is_none_or(|(b, _)| v > b) {
            best = Some((v, p.slot_id));
        }
    }
    best.map(|b| b.1)
}

/// Keep only frames flagged in `mask`; slot identities are untouched.
pub fn restrict_to_annotated(dense: &VideoPredictions, mask: &[bool]) -> Result<VideoPredictions> {
    if mask.len() != dense.frames.len() {
        return Err(Error::Invalid(format!(
            "mask covers {} frames, predictions have {}",
            mask.len(),
            dense.frames.len()
        )));
    }
    Ok(VideoPredictions {
        video_id: dense.video_id.clone(),
        frames: dense
            .frames
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(f, _)| f.clone())
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video::TrackEntry;

    fn slot(id: u32, b: BBox, obj: f64) -> PredSlot {
        PredSlot {
            slot_id: id,
            bbox: b,
            objectness: obj,
        }
    }

    fn track(id: u32, class_id: u32, boxes: &[Option<BBox>]) -> GtTrack {
        GtTrack {
            track_id: id,
            class_id,
            entries: boxes.iter().map(|b| b.map_or(TrackEntry::ABSENT, TrackEntry::present)).collect(),
        }
    }

    #[test]
    fn calibration_examples() {
        assert_eq!(calibrate_track(&[0.9, 0.2, 0.5], 0.3), vec![true, false, true]);
        assert_eq!(calibrate_track(&[0.9, 0.2, 0.5], 0.0), vec![true; 3]);
        assert_eq!(calibrate_track(&[0.4; 4], 1.0), vec![true; 4]);
        assert!(calibrate_track(&[], 0.3).is_empty());
    }

    #[test]
    fn non_overlap_examples() {
        let a = BBox::from_corners(0.0, 0.0, 0.5, 0.5);
        let b = BBox::from_corners(0.5, 0.5, 1.0, 1.0);
        let out = enforce_non_overlap(&[slot(0, a, 0.0), slot(1, b, 0.0)], 8, 8);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].slot.bbox, a);
        assert_eq!(out[1].slot.bbox, b);

        let out = enforce_non_overlap(&[slot(0, a, -1.0), slot(1, a, 1.0)], 8, 8);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].slot.slot_id, 1);

        let big = BBox::from_corners(0.0, 0.0, 1.0, 1.0);
        let small = BBox::from_corners(0.25, 0.25, 0.5, 0.5);
        let out = enforce_non_overlap(&[slot(0, big, -2.0), slot(1, small, 2.0)], 8, 8);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].slot.bbox, big);
        assert_eq!(out[0].cells.len(), 64 - 4);
        assert_eq!(out[1].slot.bbox, small);
    }

    #[test]
    fn single_pred_threshold_sweep() {
        let g = BBox::from_corners(0.0, 0.0, 0.5, 1.0);
        // Same height, shifted so that IoU = 0.62.
        let shift = 0.5 * (1.0 - 0.62) / (1.0 + 0.62);
        let p = BBox::from_corners(shift, 0.0, 0.5 + shift, 1.0);
        assert!((iou(&p, &g) - 0.62).abs() < 1e-12);
        for a in default_thresholds() {
            let tp = match_frame(&[slot(0, p, 0.0)], &[(0, g)], a);
            assert_eq!(tp.len() == 1, a <= 0.6 + 1e-9, "alpha {a}");
        }
    }

    fn video(frames: Vec<Vec<PredSlot>>) -> VideoPredictions {
        VideoPredictions {
            video_id: "v".into(),
            frames,
        }
    }

    fn gt(tracks: Vec<GtTrack>) -> GtVideo {
        GtVideo {
            video_id: "v".into(),
            fps: 1.0,
            tracks,
        }
    }

    #[test]
    fn recall_counts() {
        let b = BBox::new(0.3, 0.3, 0.2, 0.2);
        let g = gt(vec![track(0, 0, &[Some(b); 4])]);
        let preds = video(vec![vec![slot(0, b, 0.0)], vec![slot(0, b, 0.0)], vec![slot(0, b, 0.0)], vec![]]);
        let set = match_frames(&preds, &g, 0.5, &|_| true);
        assert_eq!(detection_recall(&[set]), 0.75);
        let none = match_frames(&video(vec![vec![]; 4]), &g, 0.5, &|_| true);
        assert_eq!(detection_recall(std::slice::from_ref(&none)), 0.0);
        assert_eq!(association_accuracy(&[none]), 0.0);
        let empty = match_frames(&video(vec![vec![]; 4]), &gt(vec![]), 0.5, &|_| true);
        assert_eq!(detection_recall(&[empty]), 1.0);
    }

    #[test]
    fn swapped_identity_halves() {
        let b = BBox::new(0.3, 0.3, 0.2, 0.2);
        let g = gt(vec![track(0, 0, &[Some(b); 4])]);
        let preds = video(vec![
            vec![slot(0, b, 0.0)],
            vec![slot(0, b, 0.0)],
            vec![slot(1, b, 0.0)],
            vec![slot(1, b, 0.0)],
        ]);
        let set = match_frames(&preds, &g, 0.5, &|_| true);
        assert!((association_accuracy(&[set]) - 0.5).abs() < 1e-15);
        let single = match_frames(&video(vec![vec![slot(3, b, 0.0)]]), &gt(vec![track(0, 0, &[Some(b)])]), 0.5, &|_| true);
        assert_eq!(association_accuracy(&[single]), 1.0);
    }

    #[test]
    fn perfect_predictions_and_geometric_mean() {
        let catalog = ClassCatalog::generate(1, 1, 4, 0).unwrap();
        let a = BBox::from_corners(0.25, 0.25, 0.5, 0.5);
        let b = BBox::from_corners(0.625, 0.5, 0.875, 0.875);
        let g = gt(vec![track(0, 0, &[Some(a), Some(a), None]), track(1, 1, &[Some(b), Some(b), Some(b)])]);
        let preds = video(vec![
            vec![slot(5, a, 1.0), slot(6, b, 1.0)],
            vec![slot(5, a, 1.0), slot(6, b, 1.0)],
            vec![slot(6, b, 1.0)],
        ]);
        let report = owta(&[preds], &[g], &catalog, &EvalConfig::default()).unwrap();
        for r in &report.rows {
            if r.tracks > 0 {
                assert!((r.owta - 1.0).abs() < 1e-12, "{} {}", r.group, r.bucket);
            }
        }
        assert_eq!(report.row("unknown", "medium").unwrap().tracks, 1);
        assert_eq!(report.row("known", "short").unwrap().tracks, 1);
        assert!(report.to_csv().lines().any(|l| l.starts_with("unknown,short,mean,")));
        assert!(((0.64f64 * 0.25).sqrt() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn zero_detections_score_zero() {
        let catalog = ClassCatalog::generate(1, 1, 4, 0).unwrap();
        let a = BBox::new(0.3, 0.3, 0.2, 0.2);
        let g = gt(vec![track(0, 0, &[Some(a), Some(a)])]);
        let report = owta(&[video(vec![vec![], vec![]])], &[g], &catalog, &EvalConfig::default()).unwrap();
        assert_eq!(report.owta("all", "all"), 0.0);
    }

    #[test]
    fn mismatched_videos_are_rejected() {
        let catalog = ClassCatalog::generate(1, 1, 4, 0).unwrap();
        let a = BBox::new(0.3, 0.3, 0.2, 0.2);
        let g = gt(vec![track(0, 0, &[Some(a), Some(a)])]);
        let err = owta(&[video(vec![vec![]])], std::slice::from_ref(&g), &catalog, &EvalConfig::default()).unwrap_err();
        assert!(err.to_string().contains('v'));
        let other = VideoPredictions {
            video_id: "w".into(),
            frames: vec![vec![], vec![]],
        };
        assert!(owta(&[other], &[g], &catalog, &EvalConfig::default()).is_err());
    }

    #[test]
    fn sot_examples() {
        let a = BBox::from_corners(0.0, 0.0, 0.5, 0.5);
        assert_eq!(sot_3d_iou(&[Some(a), None], &[Some(a), None]).unwrap(), 1.0);
        assert_eq!(sot_3d_iou(&[None, None], &[Some(a), Some(a)]).unwrap(), 0.0);
        // Equal-area boxes with IoU 0.6: intersection 0.75 A, union 1.25 A.
        let shift = 0.5 * (1.0 - 0.6) / (1.0 + 0.6);
        let b = BBox::from_corners(shift, 0.0, 0.5 + shift, 0.5);
        let v = sot_3d_iou(&[Some(b), Some(b), Some(b)], &[Some(a), Some(a), Some(a)]).unwrap();
        assert!((v - 0.6).abs() < 1e-12);
        assert!(sot_3d_iou(&[None], &[None]).is_err());
        assert_eq!(select_sot_slot(&[slot(4, b, 0.0), slot(7, a, 0.0)], &a), Some(7));
    }

    #[test]
    fn prediction_file_round_trip() {
        let b = BBox::new(0.3, 0.3, 0.2, 0.2);
        let f = PredictionFile::new(vec![video(vec![vec![slot(2, b, -0.7)], vec![]])]);
        assert_eq!(PredictionFile::from_json(&f.to_json()).unwrap(), f);
        assert!(PredictionFile::from_json("{\"version\":9,\"videos\":[]}").is_err());
    }

    #[test]
    fn restriction_examples() {
        let b = BBox::new(0.3, 0.3, 0.2, 0.2);
        let dense = video((0..8).map(|i| vec![slot(i % 3, b, 0.0)]).collect());
        assert_eq!(restrict_to_annotated(&dense, &[true; 8]).unwrap(), dense);
        let every4: Vec<bool> = (0..8).map(|i| i % 4 == 0).collect();
        let sparse = restrict_to_annotated(&dense, &every4).unwrap();
        assert_eq!(sparse.frames, vec![dense.frames[0].clone(), dense.frames[4].clone()]);
        assert!(restrict_to_annotated(&dense, &[false; 8]).unwrap().frames.is_empty());
    }

    #[test]
    fn extra_unmatched_tracks_do_not_change_scores() {
        let catalog = ClassCatalog::generate(1, 1, 4, 0).unwrap();
        let a = BBox::new(0.3, 0.3, 0.2, 0.2);
        let g = gt(vec![track(0, 0, &[Some(a), Some(a)])]);
        let base = video(vec![vec![slot(0, a, 0.0)], vec![slot(1, a, 0.0)]]);
        let mut extra = base.clone();
        for f in &mut extra.frames {
            f.push(slot(9, BBox::new(0.85, 0.85, 0.1, 0.1), 3.0));
        }
        let cfg = EvalConfig {
            enforce_constraint: false,
            ..EvalConfig::default()
        };
        let r1 = owta(&[base], std::slice::from_ref(&g), &catalog, &cfg).unwrap();
        let r2 = owta(&[extra], &[g], &catalog, &cfg).unwrap();
        assert_eq!(r1, r2);
    }
}
