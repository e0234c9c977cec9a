//! Frames, ground-truth tracks and clips shared by the data, augmentation,
//! model and metric modules.

use serde::{Deserialize, Serialize};

use crate::geometry::BBox;

/// Row-major `height x width x 3` image with channel values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize) -> Self {
        Image {
            height,
            width,
            data: vec![0.0; height * width * 3],
        }
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Self {
        let mut img = Image::new(height, width);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        img
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> [f32; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, row: usize, col: usize, rgb: [f32; 3]) {
        let i = (row * self.width + col) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn hflip(&self) -> Image {
        let mut out = Image::new(self.height, self.width);
        for r in 0..self.height {
            for c in 0..self.width {
                out.set_pixel(r, c, self.pixel(r, self.width - 1 - c));
            }
        }
        out
    }

    /// Copy an integer-aligned window.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Image {
        assert!(top + height <= self.height && left + width <= self.width, "crop out of bounds");
        let mut out = Image::new(height, width);
        for r in 0..height {
            let src = ((top + r) * self.width + left) * 3;
            let dst = r * width * 3;
            out.data[dst..dst + width * 3].copy_from_slice(&self.data[src..src + width * 3]);
        }
        out
    }

    /// Bilinear resample of the normalized `window` to `height x width`.
    pub fn resample(&self, window: &BBox, height: usize, width: usize) -> Image {
        let (x0, y0, _, _) = window.to_corners();
        let mut out = Image::new(height, width);
        for r in 0..height {
            let sy = ((y0 + (r as f64 + 0.5) / height as f64 * window.h) * self.height as f64 - 0.5)
                .clamp(0.0, (self.height - 1) as f64);
            let r0 = sy.floor() as usize;
            let r1 = (r0 + 1).min(self.height - 1);
            let fy = (sy - r0 as f64) as f32;
            for c in 0..width {
                let sx = ((x0 + (c as f64 + 0.5) / width as f64 * window.w) * self.width as f64 - 0.5)
                    .clamp(0.0, (self.width - 1) as f64);
                let c0 = sx.floor() as usize;
                let c1 = (c0 + 1).min(self.width - 1);
                let fx = (sx - c0 as f64) as f32;
                let (a, b) = (self.pixel(r0, c0), self.pixel(r0, c1));
                let (d, e) = (self.pixel(r1, c0), self.pixel(r1, c1));
                let mut px = [0.0f32; 3];
                for k in 0..3 {
                    let top = a[k] * (1.0 - fx) + b[k] * fx;
                    let bot = d[k] * (1.0 - fx) + e[k] * fx;
                    px[k] = top * (1.0 - fy) + bot * fy;
                }
                out.set_pixel(r, c, px);
            }
        }
        out
    }
}

/// One frame of a ground-truth track.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackEntry {
    pub present: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox>,
}

impl TrackEntry {
    pub const ABSENT: TrackEntry = TrackEntry {
        present: false,
        bbox: None,
    };

    pub fn present(b: BBox) -> Self {
        TrackEntry {
            present: true,
            bbox: Some(b),
        }
    }

    pub fn get(&self) -> Option<BBox> {
        if self.present {
            self.bbox
        } else {
            None
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtTrack {
    pub track_id: u32,
    pub class_id: u32,
    pub entries: Vec<TrackEntry>,
}

impl GtTrack {
    pub fn present_count(&self) -> usize {
        self.entries.iter().filter(|e| e.present).count()
    }

    pub fn is_empty(&self) -> bool {
        self.present_count() == 0
    }

    /// Number of frames from first to last presence, inclusive.
    pub fn span(&self) -> usize {
        let first = self.entries.iter().position(|e| e.present);
        let last = self.entries.iter().rposition(|e| e.present);
        match (first, last) {
            (Some(a), Some(b)) => b - a + 1,
            _ => 0,
        }
    }
}

/// Frames plus aligned ground-truth tracks.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedClip {
    pub frames: Vec<Image>,
    pub tracks: Vec<GtTrack>,
    pub fps: f64,
}

impl AnnotatedClip {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Debug check that every track has one entry per frame.
    pub fn is_aligned(&self) -> bool {
        self.tracks.iter().all(|t| t.entries.len() == self.frames.len())
    }

    pub fn select_frames(&self, indices: &[usize]) -> AnnotatedClip {
        AnnotatedClip {
            frames: indices.iter().map(|&i| self.frames[i].clone()).collect(),
            tracks: self
                .tracks
                .iter()
                .map(|t| GtTrack {
                    track_id: t.track_id,
                    class_id: t.class_id,
                    entries: indices.iter().map(|&i| t.entries[i]).collect(),
                })
                .filter(|t| !t.is_empty())
                .collect(),
            fps: self.fps,
        }
    }
}
