//! Tracking-aware set-prediction loss with hand-derived output gradients.
//!
//! Slots are matched to ground-truth tracks once per clip: a Hungarian
//! assignment at frame `t` only considers slots and present tracks that are
//! still unmatched, and a pairing persists for the rest of the clip.

mod optim;
mod train;

pub use optim::{adam_step, lr_schedule, OptimizerConfig, OptimizerState};
pub use train::{
    prepare_clip, sample_training_clip, train, ClipSource, LogRow, PreparedClip, TrainConfig, TrainData, TrainState,
};

use serde::{Deserialize, Serialize};

use crate::assignment::{solve_assignment, CostMatrix};
use crate::error::{Error, Result};
use crate::geometry::{giou, BBox};
use crate::model::{Dropout, Model};
use crate::tape::{Gradients, Matrix, Tape};
use crate::video::TrackEntry;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub w_cls: f64,
    pub w_l1: f64,
    pub w_giou: f64,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_cls: 1.0,
            w_l1: 1.0,
            w_giou: 1.0,
            focal_alpha: 0.3,
            focal_gamma: 2.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.w_cls < 0.0 || self.w_l1 < 0.0 || self.w_giou < 0.0 {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.focal_alpha) || self.focal_gamma < 0.0 {
            return Err(Error::Config("focal_alpha must be in [0, 1] and focal_gamma non-negative".into()));
        }
        Ok(())
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    crate::tape::sigmoid(x)
}

/// Sigmoid focal cross-entropy of one logit.
pub fn focal_sigmoid_loss(logit: f64, target: bool, alpha: f64, gamma: f64) -> f64 {
    if target {
        alpha * sigmoid(-logit).powf(gamma) * softplus(-logit)
    } else {
        (1.0 - alpha) * sigmoid(logit).powf(gamma) * softplus(logit)
    }
}

/// Derivative of [`focal_sigmoid_loss`] with respect to the logit.
pub fn focal_sigmoid_grad(logit: f64, target: bool, alpha: f64, gamma: f64) -> f64 {
    let p = sigmoid(logit);
    let q = sigmoid(-logit);
    if target {
        -alpha * q.powf(gamma) * (gamma * p * softplus(-logit) + q)
    } else {
        (1.0 - alpha) * p.powf(gamma) * (gamma * q * softplus(logit) + p)
    }
}

/// Focal matching cost of asserting `positives`: positive-term minus negative-term.
pub fn focal_match_cost(logits: &[f64], positives: &[usize], w: &LossWeights) -> f64 {
    positives
        .iter()
        .map(|&p| {
            focal_sigmoid_loss(logits[p], true, w.focal_alpha, w.focal_gamma)
                - focal_sigmoid_loss(logits[p], false, w.focal_alpha, w.focal_gamma)
        })
        .sum()
}

/// Matching cost between one slot and one present target.
pub fn pair_cost(logits: &[f64], pred: &BBox, target: &BBox, positives: &[usize], w: &LossWeights) -> f64 {
    w.w_cls * focal_match_cost(logits, positives, w) + w.w_l1 * pred.l1(target) + w.w_giou * (1.0 - giou(pred, target))
}

/// GIoU and its gradient with respect to `(cx, cy, w, h)` of `a`.
///
/// Ties in the min/max selections take the branch that depends on `a`.
pub fn giou_grad(a: &BBox, b: &BBox) -> (f64, [f64; 4]) {
    let (ax0, ay0, ax1, ay1) = a.to_corners();
    let (bx0, by0, bx1, by1) = b.to_corners();
    let iw_raw = ax1.min(bx1) - ax0.max(bx0);
    let ih_raw = ay1.min(by1) - ay0.max(by0);
    let (iw, ih) = (iw_raw.max(0.0), ih_raw.max(0.0));
    let inter = iw * ih;
    let area_a = a.w * a.h;
    let union = area_a + b.w * b.h - inter;
    let cw = ax1.max(bx1) - ax0.min(bx0);
    let ch = ay1.max(by1) - ay0.min(by0);
    let enclosing = cw * ch;
    if union <= 0.0 || enclosing <= 0.0 {
        return (giou(a, b), [0.0; 4]);
    }
    let value = inter / union - 1.0 + union / enclosing;

    let d_inter = (union + inter) / (union * union) - 1.0 / enclosing;
    let d_area = -inter / (union * union) + 1.0 / enclosing;
    let d_enc = -union / (enclosing * enclosing);

    // Gradients with respect to the corners of `a`.
    let (mut gx0, mut gy0, mut gx1, mut gy1) = (0.0, 0.0, 0.0, 0.0);
    if iw_raw > 0.0 && ih_raw > 0.0 {
        if ax0 >= bx0 {
            gx0 -= d_inter * ih;
        }
        if ax1 <= bx1 {
            gx1 += d_inter * ih;
        }
        if ay0 >= by0 {
            gy0 -= d_inter * iw;
        }
        if ay1 <= by1 {
            gy1 += d_inter * iw;
        }
    }
    // area_a = (x1 - x0) (y1 - y0)
    gx0 -= d_area * a.h;
    gx1 += d_area * a.h;
    gy0 -= d_area * a.w;
    gy1 += d_area * a.w;
    if ax0 <= bx0 {
        gx0 -= d_enc * ch;
    }
    if ax1 >= bx1 {
        gx1 += d_enc * ch;
    }
    if ay0 <= by0 {
        gy0 -= d_enc * cw;
    }
    if ay1 >= by1 {
        gy1 += d_enc * cw;
    }
    let grad = [gx0 + gx1, gy0 + gy1, 0.5 * (gx1 - gx0), 0.5 * (gy1 - gy0)];
    (value, grad)
}

/// A ground-truth track as the loss sees it: which prompts are positive and
/// where the object is.
#[derive(Clone, Debug, PartialEq)]
pub struct LossTrack {
    pub track_id: u32,
    pub positives: Vec<usize>,
    pub entries: Vec<TrackEntry>,
}

/// Slot-to-track bindings accumulated over one clip.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MatchLedger {
    pairs: Vec<(usize, u32)>,
}

impl MatchLedger {
    pub fn new() -> Self {
        MatchLedger::default()
    }

    pub fn track_of(&self, slot: usize) -> Option<u32> {
        self.pairs.iter().find(|p| p.0 == slot).map(|p| p.1)
    }

    pub fn slot_of(&self, track_id: u32) -> Option<usize> {
        self.pairs.iter().find(|p| p.1 == track_id).map(|p| p.0)
    }

    /// Bind `slot` to `track_id`. Fails if either is already bound.
    pub fn insert(&mut self, slot: usize, track_id: u32) -> Result<()> {
        if self.track_of(slot).is_some() || self.slot_of(track_id).is_some() {
            return Err(Error::Invalid(format!("slot {slot} or track {track_id} already matched")));
        }
        self.pairs.push((slot, track_id));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Pairs in insertion order.
    pub fn pairs(&self) -> &[(usize, u32)] {
        &self.pairs
    }

    pub fn is_injective(&self) -> bool {
        let mut slots: Vec<usize> = self.pairs.iter().map(|p| p.0).collect();
        let mut tracks: Vec<u32> = self.pairs.iter().map(|p| p.1).collect();
        slots.sort_unstable();
        slots.dedup();
        tracks.sort_unstable();
        tracks.dedup();
        slots.len() == self.pairs.len() && tracks.len() == self.pairs.len()
    }

    /// True when `earlier` is a prefix of this ledger.
    pub fn extends(&self, earlier: &MatchLedger) -> bool {
        self.pairs.starts_with(&earlier.pairs)
    }
}

/// Per-frame head outputs: `Q x P` logits and `Q x 4` boxes.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameOutputs {
    pub logits: Matrix,
    pub boxes: Matrix,
}

impl FrameOutputs {
    pub fn bbox(&self, slot: usize) -> BBox {
        let r = self.boxes.row(slot);
        BBox::new(r[0], r[1], r[2], r[3])
    }
}

/// Match still-unmatched slots to still-unmatched tracks present at frame `t`.
///
/// Returns the new `(slot, track index)` pairs, which are also appended to `ledger`.
pub fn sticky_match(
    frame: &FrameOutputs,
    tracks: &[LossTrack],
    t: usize,
    ledger: &mut MatchLedger,
    w: &LossWeights,
) -> Vec<(usize, usize)> {
    let free_slots: Vec<usize> = (0..frame.logits.rows).filter(|&q| ledger.track_of(q).is_none()).collect();
    let free_tracks: Vec<usize> = (0..tracks.len())
        .filter(|&k| tracks[k].entries[t].present && ledger.slot_of(tracks[k].track_id).is_none())
        .collect();
    if free_slots.is_empty() || free_tracks.is_empty() {
        return Vec::new();
    }
    let cost = CostMatrix::from_fn(free_slots.len(), free_tracks.len(), |i, j| {
        let q = free_slots[i];
        let tr = &tracks[free_tracks[j]];
        let target = tr.entries[t].get().expect("present entry has a box");
        pair_cost(frame.logits.row(q), &frame.bbox(q), &target, &tr.positives, w)
    });
    let assignment = solve_assignment(&cost);
    let mut added = Vec::with_capacity(assignment.pairs.len());
    for (i, j) in assignment.pairs {
        let (q, k) = (free_slots[i], free_tracks[j]);
        ledger
            .insert(q, tracks[k].track_id)
            .expect("free slots and tracks are unmatched");
        added.push((q, k));
    }
    added
}

/// Loss value, its terms, and gradients with respect to every frame's outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipLoss {
    pub total: f64,
    /// Weighted classification term (already normalized).
    pub cls: f64,
    /// Weighted L1 term (already normalized).
    pub l1: f64,
    /// Weighted `1 - giou` term (already normalized).
    pub giou: f64,
    pub normalizer: f64,
    pub ledger: MatchLedger,
    /// New `(slot, track index)` pairs created at each frame.
    pub schedule: Vec<Vec<(usize, usize)>>,
    pub grads: Vec<FrameOutputs>,
}

/// Clip loss with sticky Hungarian matching.
pub fn clip_loss(outputs: &[FrameOutputs], tracks: &[LossTrack], w: &LossWeights) -> ClipLoss {
    clip_loss_impl(outputs, tracks, w, None)
}

/// Clip loss under a fixed matching schedule, as produced by an earlier
/// [`clip_loss`] call. Used to differentiate with the assignment held constant.
pub fn clip_loss_fixed(outputs: &[FrameOutputs], tracks: &[LossTrack], w: &LossWeights, schedule: &[Vec<(usize, usize)>]) -> ClipLoss {
    clip_loss_impl(outputs, tracks, w, Some(schedule))
}

fn clip_loss_impl(
    outputs: &[FrameOutputs],
    tracks: &[LossTrack],
    w: &LossWeights,
    fixed: Option<&[Vec<(usize, usize)>]>,
) -> ClipLoss {
    let present: usize = tracks
        .iter()
        .map(|tr| tr.entries.iter().take(outputs.len()).filter(|e| e.present).count())
        .sum();
    let norm = (present as f64).max(1.0);
    let (mut cls, mut l1, mut gi) = (0.0, 0.0, 0.0);
    let mut ledger = MatchLedger::new();
    let mut schedule = Vec::with_capacity(outputs.len());
    let mut grads = Vec::with_capacity(outputs.len());
    let (a, g) = (w.focal_alpha, w.focal_gamma);
    for (t, frame) in outputs.iter().enumerate() {
        let before = ledger.clone();
        let added = match fixed {
            None => sticky_match(frame, tracks, t, &mut ledger, w),
            Some(s) => {
                for &(q, k) in &s[t] {
                    ledger.insert(q, tracks[k].track_id).expect("fixed schedule is injective");
                }
                s[t].clone()
            }
        };
        assert!(ledger.is_injective() && ledger.extends(&before), "match ledger invariant violated");
        schedule.push(added);

        let (nq, np) = (frame.logits.rows, frame.logits.cols);
        let mut dlogits = Matrix::zeros(nq, np);
        let mut dboxes = Matrix::zeros(nq, 4);
        for q in 0..nq {
            let target = ledger
                .track_of(q)
                .and_then(|id| tracks.iter().find(|tr| tr.track_id == id))
                .and_then(|tr| tr.entries[t].get().map(|b| (b, &tr.positives)));
            let row = frame.logits.row(q);
            for (p, &x) in row.iter().enumerate() {
                let positive = target.is_some_and(|(_, pos)| pos.contains(&p));
                cls += w.w_cls * focal_sigmoid_loss(x, positive, a, g);
                dlogits.set(q, p, w.w_cls * focal_sigmoid_grad(x, positive, a, g) / norm);
            }
            if let Some((tb, _)) = target {
                let pb = frame.bbox(q);
                let (pa, ta) = (pb.to_array(), tb.to_array());
                for k in 0..4 {
                    let d = pa[k] - ta[k];
                    l1 += w.w_l1 * d.abs();
                    let sign = if d > 0.0 {
                        1.0
                    } else if d < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    dboxes.set(q, k, w.w_l1 * sign / norm);
                }
                let (value, grad) = giou_grad(&pb, &tb);
                gi += w.w_giou * (1.0 - value);
                for (k, gk) in grad.iter().enumerate() {
                    let cur = dboxes.get(q, k);
                    dboxes.set(q, k, cur - w.w_giou * gk / norm);
                }
            }
        }
        grads.push(FrameOutputs {
            logits: dlogits,
            boxes: dboxes,
        });
    }
    let (cls, l1, gi) = (cls / norm, l1 / norm, gi / norm);
    ClipLoss {
        total: cls + l1 + gi,
        cls,
        l1,
        giou: gi,
        normalizer: norm,
        ledger,
        schedule,
        grads,
    }
}

/// Mean loss over a batch with its parameter gradients.
#[derive(Clone, Debug)]
pub struct BatchLoss {
    pub loss: f64,
    pub cls: f64,
    pub l1: f64,
    pub giou: f64,
    pub grads: Gradients,
    pub schedules: Vec<Vec<Vec<(usize, usize)>>>,
}

/// Forward and backward over a batch. `fixed` pins each clip's matching;
/// `dropout` enables training-mode dropout.
pub fn gradients(
    model: &Model,
    batch: &[PreparedClip],
    w: &LossWeights,
    fixed: Option<&[Vec<Vec<(usize, usize)>>]>,
    mut dropout: Option<&mut Dropout>,
) -> Result<BatchLoss> {
    if batch.is_empty() {
        return Err(Error::Invalid("empty batch".into()));
    }
    let mut grads = model.params.zeros_like();
    let scale = 1.0 / batch.len() as f64;
    let (mut loss, mut cls, mut l1, mut gi) = (0.0, 0.0, 0.0, 0.0);
    let mut schedules = Vec::with_capacity(batch.len());
    for (i, clip) in batch.iter().enumerate() {
        let mut tape = Tape::new(&model.params);
        let prompts = tape.constant(clip.prompts.clone());
        let heads = model.forward_clip(&mut tape, &clip.tokens, prompts, dropout.as_deref_mut());
        let outputs: Vec<FrameOutputs> = heads
            .iter()
            .map(|h| FrameOutputs {
                logits: tape.value(h.logits).clone(),
                boxes: tape.value(h.boxes).clone(),
            })
            .collect();
        let cl = match fixed {
            Some(s) => clip_loss_fixed(&outputs, &clip.tracks, w, &s[i]),
            None => clip_loss(&outputs, &clip.tracks, w),
        };
        if !cl.total.is_finite() {
            return Err(Error::Invalid("non-finite loss".into()));
        }
        let mut seeds = Vec::with_capacity(2 * heads.len());
        for (h, g) in heads.iter().zip(cl.grads) {
            let mut gl = g.logits;
            gl.data.iter_mut().for_each(|v| *v *= scale);
            let mut gb = g.boxes;
            gb.data.iter_mut().for_each(|v| *v *= scale);
            seeds.push((h.logits, gl));
            seeds.push((h.boxes, gb));
        }
        tape.backward(&seeds, &mut grads);
        loss += cl.total * scale;
        cls += cl.cls * scale;
        l1 += cl.l1 * scale;
        gi += cl.giou * scale;
        schedules.push(cl.schedule);
    }
    Ok(BatchLoss {
        loss,
        cls,
        l1,
        giou: gi,
        grads,
        schedules,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: f64 = 0.3;
    const G: f64 = 2.0;

    #[test]
    fn focal_closed_forms() {
        let ln2 = std::f64::consts::LN_2;
        assert!((focal_sigmoid_loss(0.0, true, A, G) - 0.3 * 0.25 * ln2).abs() < 1e-15);
        assert!((focal_sigmoid_loss(0.0, false, A, G) - 0.7 * 0.25 * ln2).abs() < 1e-15);
        assert!(focal_sigmoid_loss(60.0, true, A, G) < 1e-20);
        for x in [-50.0, -10.0, 0.0, 10.0, 50.0] {
            for t in [true, false] {
                let v = focal_sigmoid_loss(x, t, A, G);
                assert!(v.is_finite() && v >= 0.0);
            }
        }
    }

    #[test]
    fn focal_gradient_matches_differences() {
        for x in [-7.0, -1.3, -0.2, 0.0, 0.4, 2.5, 9.0] {
            for t in [true, false] {
                for gamma in [0.0, 1.0, 2.0, 2.5] {
                    let h = 1e-6;
                    let fd = (focal_sigmoid_loss(x + h, t, A, gamma) - focal_sigmoid_loss(x - h, t, A, gamma)) / (2.0 * h);
                    let an = focal_sigmoid_grad(x, t, A, gamma);
                    assert!((fd - an).abs() < 1e-8, "x {x} t {t} g {gamma}: {fd} vs {an}");
                }
            }
        }
    }

    #[test]
    fn giou_gradient_matches_differences() {
        let cases = [
            (BBox::new(0.4, 0.5, 0.3, 0.2), BBox::new(0.5, 0.46, 0.2, 0.3)),
            (BBox::new(0.2, 0.2, 0.1, 0.1), BBox::new(0.7, 0.8, 0.2, 0.1)),
            (BBox::new(0.5, 0.5, 0.6, 0.6), BBox::new(0.52, 0.47, 0.2, 0.1)),
            (BBox::new(0.31, 0.62, 0.15, 0.33), BBox::new(0.35, 0.6, 0.3, 0.2)),
        ];
        for (a, b) in cases {
            let (v, g) = giou_grad(&a, &b);
            assert!((v - giou(&a, &b)).abs() < 1e-14);
            for k in 0..4 {
                let h = 1e-7;
                let mut up = a.to_array();
                up[k] += h;
                let mut dn = a.to_array();
                dn[k] -= h;
                let fd = (giou(&BBox::from_array(up), &b) - giou(&BBox::from_array(dn), &b)) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-6, "{k}: {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn pair_cost_terms() {
        let w = LossWeights::default();
        let b = BBox::new(0.5, 0.5, 0.2, 0.2);
        let strong = [12.0, -12.0];
        let exact = pair_cost(&strong, &b, &b, &[0], &w);
        let mismatched = pair_cost(&strong, &BBox::new(0.2, 0.3, 0.1, 0.2), &b, &[0], &w);
        let wrong_class = pair_cost(&strong, &b, &b, &[1], &w);
        assert!(exact < mismatched && exact < wrong_class);
        let only_boxes = LossWeights { w_cls: 0.0, ..w };
        assert_eq!(pair_cost(&strong, &b, &b, &[0], &only_boxes), 0.0);
        let p = BBox::from_corners(0.0, 0.0, 0.25, 1.0);
        let q = BBox::from_corners(0.75, 0.0, 1.0, 1.0);
        let giou_only = LossWeights { w_cls: 0.0, w_l1: 0.0, ..w };
        assert!((pair_cost(&strong, &p, &q, &[0], &giou_only) - 1.5).abs() < 1e-12);
    }

    fn entry(b: Option<BBox>) -> TrackEntry {
        b.map_or(TrackEntry::ABSENT, TrackEntry::present)
    }

    fn outputs(boxes: &[[BBox; 3]], logits: f64) -> Vec<FrameOutputs> {
        boxes
            .iter()
            .map(|f| FrameOutputs {
                logits: Matrix::filled(3, 2, logits),
                boxes: Matrix::from_vec(3, 4, f.iter().flat_map(|b| b.to_array()).collect()),
            })
            .collect()
    }

    #[test]
    fn ledger_grows_only_for_new_tracks() {
        let w = LossWeights::default();
        let a = BBox::new(0.2, 0.2, 0.1, 0.1);
        let b = BBox::new(0.8, 0.8, 0.1, 0.1);
        let far = BBox::new(0.5, 0.5, 0.05, 0.05);
        let tracks = vec![
            LossTrack {
                track_id: 10,
                positives: vec![0],
                entries: vec![entry(Some(a)); 4],
            },
            LossTrack {
                track_id: 20,
                positives: vec![1],
                entries: vec![entry(None), entry(None), entry(Some(b)), entry(Some(b))],
            },
        ];
        let out = outputs(&[[a, far, b]; 4], 0.0);
        let mut ledger = MatchLedger::new();
        let first = sticky_match(&out[0], &tracks, 0, &mut ledger, &w);
        assert_eq!(first, vec![(0, 0)]);
        let snapshot = ledger.clone();
        assert!(sticky_match(&out[1], &tracks, 1, &mut ledger, &w).is_empty());
        assert_eq!(ledger, snapshot);
        let entered = sticky_match(&out[2], &tracks, 2, &mut ledger, &w);
        assert_eq!(entered, vec![(2, 1)]);
        assert_eq!(ledger.pairs(), &[(0, 10), (2, 20)]);
        assert!(ledger.insert(0, 30).is_err());
    }

    #[test]
    fn empty_clip_loss_is_negative_focal_sum() {
        let w = LossWeights::default();
        let b = BBox::new(0.5, 0.5, 0.2, 0.2);
        let out = outputs(&[[b; 3], [b; 3]], -1.5);
        let l = clip_loss(&out, &[], &w);
        let expected = 2.0 * 3.0 * 2.0 * focal_sigmoid_loss(-1.5, false, A, G);
        assert!((l.total - expected).abs() < 1e-12);
        assert_eq!((l.l1, l.giou), (0.0, 0.0));
        assert_eq!(l.normalizer, 1.0);
    }

    #[test]
    fn perfect_predictions_have_tiny_loss() {
        let w = LossWeights::default();
        let a = BBox::new(0.2, 0.3, 0.1, 0.2);
        let b = BBox::new(0.7, 0.6, 0.2, 0.1);
        let tracks = vec![
            LossTrack {
                track_id: 1,
                positives: vec![0],
                entries: vec![entry(Some(a)); 2],
            },
            LossTrack {
                track_id: 2,
                positives: vec![1],
                entries: vec![entry(Some(b)); 2],
            },
        ];
        let mut out = outputs(&[[a, b, a]; 2], -30.0);
        for f in &mut out {
            f.logits.set(0, 0, 30.0);
            f.logits.set(1, 1, 30.0);
        }
        let l = clip_loss(&out, &tracks, &w);
        assert!(l.total < 1e-3, "{}", l.total);
    }

    #[test]
    fn matched_absent_track_gets_only_negatives() {
        let w = LossWeights::default();
        let a = BBox::new(0.2, 0.3, 0.1, 0.2);
        let tracks = vec![LossTrack {
            track_id: 1,
            positives: vec![0],
            entries: vec![entry(Some(a)), entry(None)],
        }];
        let out = outputs(&[[a, a, a], [a, a, a]], 0.5);
        let l = clip_loss(&out, &tracks, &w);
        assert_eq!(l.ledger.pairs(), &[(0, 1)]);
        // Frame 1: the bound slot has no positive prompt and no box gradient.
        assert!(l.grads[1].logits.data.iter().all(|&v| v > 0.0));
        assert!(l.grads[1].boxes.data.iter().all(|&v| v == 0.0));
    }
}
