use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use slotrack::baseline::cosine_similarity;
use slotrack::geometry::{box_from_owned_cells, rasterize, BBox};
use slotrack::metrics::{calibrate_track, enforce_non_overlap, owta, EvalConfig, GtVideo, PredSlot, PredictionFile, VideoPredictions};
use slotrack::synthdata::ClassCatalog;
use slotrack::tape::Matrix;
use slotrack::trainloss::{clip_loss, focal_sigmoid_grad, focal_sigmoid_loss, lr_schedule, FrameOutputs, LossTrack, LossWeights, OptimizerConfig};
use slotrack::video::{GtTrack, TrackEntry};

fn arb_box() -> impl Strategy<Value = BBox> {
    (0.04..0.5f64, 0.04..0.5f64, 0.0..1.0f64, 0.0..1.0f64).prop_map(|(w, h, u, v)| BBox::new(w / 2.0 + u * (1.0 - w), h / 2.0 + v * (1.0 - h), w, h))
}

fn arb_slot(id: u32) -> impl Strategy<Value = PredSlot> {
    (arb_box(), -5.0..5.0f64).prop_map(move |(bbox, objectness)| PredSlot { slot_id: id, bbox, objectness })
}

fn arb_frame() -> impl Strategy<Value = Vec<PredSlot>> {
    (1usize..7).prop_flat_map(|n| (0..n as u32).map(arb_slot).collect::<Vec<_>>())
}

fn arb_entry() -> impl Strategy<Value = TrackEntry> {
    prop_oneof![1 => Just(TrackEntry::ABSENT), 3 => arb_box().prop_map(TrackEntry::present)]
}

/// Frames × slots outputs plus loss tracks over the same frames.
fn arb_clip() -> impl Strategy<Value = (Vec<FrameOutputs>, Vec<LossTrack>)> {
    (1usize..4, 1usize..5, 1usize..3, 0usize..4).prop_flat_map(|(frames, slots, prompts, tracks)| {
        let outputs = prop::collection::vec(
            (
                prop::collection::vec(-4.0..4.0f64, slots * prompts),
                prop::collection::vec(arb_box(), slots),
            )
                .prop_map(move |(logits, boxes)| FrameOutputs {
                    logits: Matrix::from_vec(slots, prompts, logits),
                    boxes: Matrix::from_vec(slots, 4, boxes.iter().flat_map(|b| b.to_array()).collect()),
                }),
            frames,
        );
        let tracks = prop::collection::vec((0..prompts, prop::collection::vec(arb_entry(), frames)), tracks).prop_map(|ts| {
            ts.into_iter()
                .enumerate()
                .map(|(i, (p, entries))| LossTrack {
                    track_id: i as u32,
                    positives: vec![p],
                    entries,
                })
                .collect::<Vec<_>>()
        });
        (outputs, tracks)
    })
}

proptest! {
    #[test]
    fn sticky_matching_is_injective_and_never_rebinds((outputs, tracks) in arb_clip()) {
        let loss = clip_loss(&outputs, &tracks, &LossWeights::default());
        prop_assert!(loss.ledger.is_injective());
        let mut slots = BTreeSet::new();
        let mut seen = BTreeSet::new();
        for (t, pairs) in loss.schedule.iter().enumerate() {
            for &(q, k) in pairs {
                prop_assert!(slots.insert(q), "slot {} bound twice", q);
                prop_assert!(seen.insert(k), "track {} bound twice", k);
                prop_assert!(tracks[k].entries[t].present);
            }
        }
        let present = tracks.iter().flat_map(|t| &t.entries).filter(|e| e.present).count();
        prop_assert_eq!(loss.normalizer, present.max(1) as f64);
        prop_assert!(loss.total.is_finite() && loss.total >= 0.0);
        prop_assert!((loss.total - (loss.cls + loss.l1 + loss.giou)).abs() <= 1e-12 * loss.total.max(1.0));
    }

    #[test]
    fn focal_loss_is_positive_and_its_derivative_matches(x in -8.0..8.0f64, target: bool) {
        let h = 1e-6;
        let f = |x| focal_sigmoid_loss(x, target, 0.3, 2.0);
        prop_assert!(f(x) > 0.0);
        let numeric = (f(x + h) - f(x - h)) / (2.0 * h);
        prop_assert!((focal_sigmoid_grad(x, target, 0.3, 2.0) - numeric).abs() < 1e-6);
    }

    #[test]
    fn calibration_keeps_every_track_peak(scores in prop::collection::vec(0.0..1.0f64, 1..12), factor in 0.0..1.0f64) {
        let keep = calibrate_track(&scores, factor);
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (s, k) in scores.iter().zip(&keep) {
            if *s == max {
                prop_assert!(*k);
            }
            prop_assert_eq!(*k, *s >= factor * max);
        }
        prop_assert!(calibrate_track(&scores, 0.0).iter().all(|&k| k));
    }

    #[test]
    fn non_overlap_masks_are_disjoint_and_boxes_tight(frame in arb_frame()) {
        let (gw, gh) = (24, 20);
        let kept = enforce_non_overlap(&frame, gw, gh);
        let mut owner: BTreeMap<usize, u32> = BTreeMap::new();
        for e in &kept {
            prop_assert!(!e.cells.is_empty());
            for &c in &e.cells {
                prop_assert!(owner.insert(c, e.slot.slot_id).is_none(), "cell {} owned twice", c);
            }
        }
        // Every surviving box is the bounding box of its own cells.
        for e in &kept {
            let rows: Vec<usize> = e.cells.iter().map(|c| c / gw).collect();
            let cols: Vec<usize> = e.cells.iter().map(|c| c % gw).collect();
            let tight = BBox::from_corners(
                *cols.iter().min().unwrap() as f64 / gw as f64,
                *rows.iter().min().unwrap() as f64 / gh as f64,
                (*cols.iter().max().unwrap() + 1) as f64 / gw as f64,
                (*rows.iter().max().unwrap() + 1) as f64 / gh as f64,
            );
            for (a, b) in e.slot.bbox.to_array().iter().zip(tight.to_array()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
        // A frame with one prediction keeps it.
        let single = enforce_non_overlap(&frame[..1], gw, gh);
        let grid = rasterize(&[frame[0].bbox], &[1.0], gw, gh);
        prop_assert_eq!(single.len(), box_from_owned_cells(&grid, 0).is_some() as usize);
    }

    #[test]
    fn cosine_is_symmetric_and_bounded(a in prop::collection::vec(-3.0..3.0f64, 4), b in prop::collection::vec(-3.0..3.0f64, 4)) {
        prop_assume!(a.iter().any(|x| x.abs() > 1e-3) && b.iter().any(|x| x.abs() > 1e-3));
        let ab = cosine_similarity(&a, &b).unwrap();
        prop_assert_eq!(ab, cosine_similarity(&b, &a).unwrap());
        prop_assert!((-1.0..=1.0).contains(&ab));
    }

    #[test]
    fn lr_stays_within_base(step in 0u64..3000, warmup in 0u64..200) {
        let cfg = OptimizerConfig { warmup_steps: warmup, total_steps: 2000, ..OptimizerConfig::default() };
        let lr = lr_schedule(&cfg, step);
        prop_assert!((0.0..=cfg.base_lr).contains(&lr));
    }
}

fn scored_video() -> impl Strategy<Value = (VideoPredictions, GtVideo)> {
    (1usize..5, 1usize..4, 1usize..4).prop_flat_map(|(frames, tracks, slots)| {
        let gt = prop::collection::vec((0u32..4, prop::collection::vec(arb_entry(), frames)), tracks).prop_map(|ts| GtVideo {
            video_id: "v".into(),
            fps: 1.0,
            tracks: ts
                .into_iter()
                .enumerate()
                .map(|(i, (class_id, entries))| GtTrack {
                    track_id: i as u32,
                    class_id,
                    entries,
                })
                .collect(),
        });
        let preds = prop::collection::vec((0..slots as u32).map(arb_slot).collect::<Vec<_>>(), frames).prop_map(|frames| VideoPredictions {
            video_id: "v".into(),
            frames,
        });
        (preds, gt)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn owta_is_bounded_and_ignores_slot_labels((preds, gt) in scored_video(), shift in 1u32..50) {
        let catalog = ClassCatalog::generate(2, 2, 8, 0).unwrap();
        let cfg = EvalConfig::default();
        prop_assume!(gt.tracks.iter().any(|t| !t.is_empty()));
        let report = owta(std::slice::from_ref(&preds), std::slice::from_ref(&gt), &catalog, &cfg).unwrap();
        for row in &report.rows {
            for v in [row.det_re, row.ass_acc, row.owta] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
        let mut relabeled = preds.clone();
        for s in relabeled.frames.iter_mut().flatten() {
            s.slot_id += shift;
        }
        let again = owta(&[relabeled], &[gt], &catalog, &cfg).unwrap();
        prop_assert_eq!(report.to_json(), again.to_json());
    }

    #[test]
    fn prediction_files_round_trip((preds, _) in scored_video()) {
        let file = PredictionFile::new(vec![preds]);
        prop_assert_eq!(PredictionFile::from_json(&file.to_json()).unwrap(), file);
    }
}
