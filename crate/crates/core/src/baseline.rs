//! Tracking-by-detection: per-frame proposals linked frame to frame by
//! embedding cosine similarity.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::assignment::{solve_assignment, CostMatrix};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::metrics::{PredSlot, VideoPredictions};
use crate::model::Model;
use crate::seed;
use crate::tape::Matrix;
use crate::video::Image;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    /// Proposals kept per frame.
    pub top_k: usize,
    pub sim_threshold: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            top_k: 16,
            sim_threshold: 0.5,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::Config("baseline.top_k must be positive".into()));
        }
        if !(-1.0..=1.0).contains(&self.sim_threshold) {
            return Err(Error::Config("baseline.sim_threshold must be in [-1, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Proposal {
    pub frame: usize,
    pub bbox: BBox,
    pub embedding: Vec<f64>,
    pub objectness: f64,
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Invalid(format!("vector lengths differ: {} vs {}", a.len(), b.len())));
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Invalid("cosine similarity of a zero vector".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Run every frame from the learned initial queries and keep the `top_k`
/// most object-like slots, best first.
pub fn proposals_from_model(model: &Model, frames: &[Image], prompts: &Matrix, top_k: usize) -> Result<Vec<Vec<Proposal>>> {
    let preds = model.rollout_independent(frames, prompts)?;
    Ok(preds
        .into_iter()
        .enumerate()
        .map(|(frame, slots)| {
            let mut props: Vec<Proposal> = slots
                .into_iter()
                .map(|s| Proposal {
                    frame,
                    bbox: s.bbox,
                    embedding: s.class_embedding,
                    objectness: s.objectness,
                })
                .collect();
            props.sort_by(|a, b| b.objectness.total_cmp(&a.objectness));
            props.truncate(top_k);
            props
        })
        .collect())
}

/// Track id of every proposal. Frame-0 proposals open tracks; later
/// proposals either continue a track seen in the previous frame or open a new
/// one. Tracks that miss a frame are never resumed.
pub fn tbd_link(proposals: &[Vec<Proposal>], sim_threshold: f64) -> Result<Vec<Vec<u32>>> {
    if proposals.is_empty() {
        return Err(Error::Invalid("tbd_link needs at least one frame".into()));
    }
    let mut next_id = 0u32;
    let mut fresh = || {
        next_id += 1;
        next_id - 1
    };
    let mut ids: Vec<Vec<u32>> = Vec::with_capacity(proposals.len());
    ids.push(proposals[0].iter().map(|_| fresh()).collect());
    for t in 1..proposals.len() {
        let (prev, cur) = (&proposals[t - 1], &proposals[t]);
        let mut sims = vec![vec![0.0; cur.len()]; prev.len()];
        for (i, p) in prev.iter().enumerate() {
            for (j, c) in cur.iter().enumerate() {
                sims[i][j] = cosine_similarity(&p.embedding, &c.embedding)?;
            }
        }
        let mut cost = CostMatrix::from_fn(prev.len(), cur.len(), |i, j| 1.0 - sims[i][j]);
        for (i, row) in sims.iter().enumerate() {
            for (j, &s) in row.iter().enumerate() {
                if s < sim_threshold {
                    cost.forbid(i, j);
                }
            }
        }
        let mut frame_ids: Vec<Option<u32>> = vec![None; cur.len()];
        for (i, j) in solve_assignment(&cost).pairs {
            frame_ids[j] = Some(ids[t - 1][i]);
        }
        ids.push(frame_ids.into_iter().map(|id| id.unwrap_or_else(&mut fresh)).collect());
    }
    Ok(ids)
}

/// Control linker: each frame's proposals take a random permutation of
/// `0..n` as their ids.
pub fn random_link(proposals: &[Vec<Proposal>], seed_value: u64) -> Vec<Vec<u32>> {
    proposals
        .iter()
        .enumerate()
        .map(|(t, frame)| {
            let mut ids: Vec<u32> = (0..frame.len() as u32).collect();
            ids.shuffle(&mut seed::rng(seed_value, "baseline.random_link", t as u64));
            ids
        })
        .collect()
}

pub fn linked_predictions(video_id: &str, proposals: &[Vec<Proposal>], ids: &[Vec<u32>]) -> VideoPredictions {
    VideoPredictions {
        video_id: video_id.to_string(),
        frames: proposals
            .iter()
            .zip(ids)
            .map(|(props, ids)| {
                props
                    .iter()
                    .zip(ids)
                    .map(|(p, &slot_id)| PredSlot {
                        slot_id,
                        bbox: p.bbox,
                        objectness: p.objectness,
                    })
                    .collect()
            })
            .collect(),
    }
}
