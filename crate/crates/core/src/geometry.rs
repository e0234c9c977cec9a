//! Box algebra on normalized center/size boxes.
//!
//! All coordinates are fractions of the frame: `(0, 0)` is the top-left
//! corner and `(1, 1)` the bottom-right. Degenerate (zero-area) boxes are
//! legal values; every overlap measure returns 0 for them instead of dividing
//! by zero.

use serde::{Deserialize, Serialize};

/// Normalized box in center/size form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub const FULL: BBox = BBox {
        cx: 0.5,
        cy: 0.5,
        w: 1.0,
        h: 1.0,
    };

    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        debug_assert!(w >= 0.0 && h >= 0.0, "negative box extent");
        BBox { cx, cy, w, h }
    }

    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        BBox {
            cx: 0.5 * (x0 + x1),
            cy: 0.5 * (y0 + y1),
            w: (x1 - x0).max(0.0),
            h: (y1 - y0).max(0.0),
        }
    }

    pub fn to_corners(&self) -> (f64, f64, f64, f64) {
        to_corners(self)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn is_valid(&self) -> bool {
        self.cx.is_finite()
            && self.cy.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
            && self.w >= 0.0
            && self.h >= 0.0
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        BBox {
            cx: v[0],
            cy: v[1],
            w: v[2],
            h: v[3],
        }
    }

    /// Mirror about the vertical center line of the frame.
    pub fn hflip(&self) -> Self {
        BBox {
            cx: 1.0 - self.cx,
            ..*self
        }
    }

    /// Sum of absolute coordinate differences.
    pub fn l1(&self, other: &BBox) -> f64 {
        (self.cx - other.cx).abs()
            + (self.cy - other.cy).abs()
            + (self.w - other.w).abs()
            + (self.h - other.h).abs()
    }

    /// Map a box expressed in `window`-relative coordinates back to frame coordinates.
    pub fn unnormalize_from(&self, window: &BBox) -> BBox {
        let (wx0, wy0, _, _) = window.to_corners();
        BBox {
            cx: wx0 + self.cx * window.w,
            cy: wy0 + self.cy * window.h,
            w: self.w * window.w,
            h: self.h * window.h,
        }
    }
}

pub fn to_corners(b: &BBox) -> (f64, f64, f64, f64) {
    (
        b.cx - 0.5 * b.w,
        b.cy - 0.5 * b.h,
        b.cx + 0.5 * b.w,
        b.cy + 0.5 * b.h,
    )
}

fn intersection_area(a: &BBox, b: &BBox) -> f64 {
    let (ax0, ay0, ax1, ay1) = a.to_corners();
    let (bx0, by0, bx1, by1) = b.to_corners();
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    iw * ih
}

/// Intersection over union. Zero when the union has no area.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Intersection and union areas, used by the time-summed 3D IoU.
pub fn intersection_union(a: &BBox, b: &BBox) -> (f64, f64) {
    let inter = intersection_area(a, b);
    (inter, a.area() + b.area() - inter)
}

/// Generalized IoU: `iou - |C \ (A ∪ B)| / |C|` with `C` the smallest enclosing box.
pub fn giou(a: &BBox, b: &BBox) -> f64 {
    let (ax0, ay0, ax1, ay1) = a.to_corners();
    let (bx0, by0, bx1, by1) = b.to_corners();
    let enclosing = (ax1.max(bx1) - ax0.min(bx0)) * (ay1.max(by1) - ay0.min(by0));
    if enclosing <= 0.0 {
        return 0.0;
    }
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    let overlap = if union > 0.0 { inter / union } else { 0.0 };
    overlap - (enclosing - union) / enclosing
}

/// Clip `b` to `window` and express the remainder in window coordinates.
///
/// Returns the clipped box (or `None` when nothing of `b` survives) and the
/// fraction of the original area that is retained.
pub fn clip_to_window(b: &BBox, window: &BBox) -> (Option<BBox>, f64) {
    debug_assert!(window.area() > 0.0, "window must have positive area");
    let area = b.area();
    if area <= 0.0 {
        return (None, 0.0);
    }
    let (bx0, by0, bx1, by1) = b.to_corners();
    let (wx0, wy0, wx1, wy1) = window.to_corners();
    let x0 = bx0.max(wx0);
    let y0 = by0.max(wy0);
    let x1 = bx1.min(wx1);
    let y1 = by1.min(wy1);
    if x1 <= x0 || y1 <= y0 {
        return (None, 0.0);
    }
    let retained = ((x1 - x0) * (y1 - y0) / area).min(1.0);
    let clipped = BBox::from_corners(
        (x0 - wx0) / window.w,
        (y0 - wy0) / window.h,
        (x1 - wx0) / window.w,
        (y1 - wy0) / window.h,
    );
    (Some(clipped), retained)
}

/// Per-cell instance ownership on a regular grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelGrid {
    width: usize,
    height: usize,
    owner: Vec<Option<usize>>,
}

impl PixelGrid {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "grid dims must be positive");
        PixelGrid {
            width,
            height,
            owner: vec![None; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn owner(&self, row: usize, col: usize) -> Option<usize> {
        self.owner[row * self.width + col]
    }

    pub fn cells(&self) -> &[Option<usize>] {
        &self.owner
    }

    pub fn owned_count(&self, instance: usize) -> usize {
        self.owner.iter().filter(|o| **o == Some(instance)).count()
    }

    /// Area of one cell in normalized units.
    pub fn cell_area(&self) -> f64 {
        1.0 / (self.width * self.height) as f64
    }
}

/// Assign every cell whose center lies inside at least one box to the
/// covering instance with the highest rank. Ties go to the lower index.
pub fn rasterize(boxes: &[BBox], ranks: &[f64], width: usize, height: usize) -> PixelGrid {
    assert_eq!(boxes.len(), ranks.len(), "boxes and ranks differ in length");
    let mut grid = PixelGrid::new(width, height);
    let mut best = vec![f64::NEG_INFINITY; width * height];
    for (idx, (b, &rank)) in boxes.iter().zip(ranks).enumerate() {
        let (x0, y0, x1, y1) = b.to_corners();
        // Cell centers (c + 0.5) / n inside the half-open box [x0, x1); the lower
        // bounds start one cell early and the exact test below decides.
        let col_lo = ((x0 * width as f64 - 0.5).ceil() - 1.0).max(0.0) as usize;
        let row_lo = ((y0 * height as f64 - 0.5).ceil() - 1.0).max(0.0) as usize;
        for row in row_lo..height {
            let cy = (row as f64 + 0.5) / height as f64;
            if cy >= y1 {
                break;
            }
            if cy < y0 {
                continue;
            }
            for col in col_lo..width {
                let cx = (col as f64 + 0.5) / width as f64;
                if cx >= x1 {
                    break;
                }
                if cx < x0 {
                    continue;
                }
                let cell = row * width + col;
                if grid.owner[cell].is_none() || rank > best[cell] {
                    grid.owner[cell] = Some(idx);
                    best[cell] = rank;
                }
            }
        }
    }
    grid
}

/// Tight box around the cells owned by `instance`, or `None` if it owns none.
pub fn box_from_owned_cells(grid: &PixelGrid, instance: usize) -> Option<BBox> {
    let mut min_r = usize::MAX;
    let mut min_c = usize::MAX;
    let mut max_r = 0;
    let mut max_c = 0;
    let mut any = false;
    for row in 0..grid.height {
        for col in 0..grid.width {
            if grid.owner(row, col) == Some(instance) {
                any = true;
                min_r = min_r.min(row);
                max_r = max_r.max(row);
                min_c = min_c.min(col);
                max_c = max_c.max(col);
            }
        }
    }
    if !any {
        return None;
    }
    let w = grid.width as f64;
    let h = grid.height as f64;
    Some(BBox::from_corners(
        min_c as f64 / w,
        min_r as f64 / h,
        (max_c + 1) as f64 / w,
        (max_r + 1) as f64 / h,
    ))
}
