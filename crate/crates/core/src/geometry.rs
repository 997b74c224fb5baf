//! Axis-aligned boxes in normalized image coordinates and the geometric
//! quantities the IoU-family losses are built from.
//!
//! Boxes are stored in center form `(cx, cy, w, h)`. The corner view
//! `(x1, y1, x2, y2)` is derived on demand.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest extent a box may have along either axis.
pub const MIN_EXTENT: f64 = 1e-8;

/// Axis-aligned box in center form.
///
/// Extents are always at least [`MIN_EXTENT`]. Boxes built with [`BBox::new`]
/// additionally lie inside the unit square; [`BBox::unclamped`] skips that
/// step for intermediate optimizer states and for scale-free geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

impl BBox {
    /// Builds a box and clamps it into the unit square.
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        Ok(Self::unclamped(cx, cy, w, h)?.clamp_to_bounds())
    }

    /// Builds a box without enforcing the unit-square bounds.
    pub fn unclamped(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        if !(cx.is_finite() && cy.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::NonFiniteBox);
        }
        if w < MIN_EXTENT || h < MIN_EXTENT {
            return Err(Error::DegenerateBox {
                w,
                h,
                min: MIN_EXTENT,
            });
        }
        Ok(Self { cx, cy, w, h })
    }

    /// Builds an unclamped box from corner coordinates.
    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        Self::unclamped((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)
    }

    pub fn from_params(p: [f64; 4]) -> Result<Self> {
        Self::unclamped(p[0], p[1], p[2], p[3])
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// `[cx, cy, w, h]`, the parameter order used by every gradient in this crate.
    pub fn params(&self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }

    /// `[x1, y1, x2, y2]`.
    pub fn corners(&self) -> [f64; 4] {
        let (hw, hh) = (self.w / 2.0, self.h / 2.0);
        [self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh]
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Whether the box satisfies `0 < w < 1`, `0 < h < 1`,
    /// `w/2 <= cx <= 1 - w/2` and `h/2 <= cy <= 1 - h/2`.
    pub fn is_within_bounds(&self) -> bool {
        let axis_ok = |c: f64, e: f64| e > 0.0 && e < 1.0 && c >= e / 2.0 && c <= 1.0 - e / 2.0;
        axis_ok(self.cx, self.w) && axis_ok(self.cy, self.h)
    }

    /// Forces the box into the unit square. Extents are clamped to
    /// `[MIN_EXTENT, 1 - MIN_EXTENT]` first, then centers into
    /// `[e/2, 1 - e/2]` using the final extent `e`.
    pub fn clamp_to_bounds(&self) -> BBox {
        let w = self.w.clamp(MIN_EXTENT, 1.0 - MIN_EXTENT);
        let h = self.h.clamp(MIN_EXTENT, 1.0 - MIN_EXTENT);
        let cx = self.cx.clamp(w / 2.0, 1.0 - w / 2.0);
        let cy = self.cy.clamp(h / 2.0, 1.0 - h / 2.0);
        BBox { cx, cy, w, h }
    }
}

/// Intersection over union of two boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let [ax1, ay1, ax2, ay2] = a.corners();
    let [bx1, by1, bx2, by2] = b.corners();
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter;
    (inter / union).min(1.0)
}

/// Every geometric quantity consumed by the loss family, for one
/// `(pred, gt)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometrySummary {
    pub iou: f64,
    /// `|C \ (A ∪ B)| / |C|` for the smallest enclosing box `C`.
    pub enclosure_excess: f64,
    /// Squared distance between the two centers.
    pub center_dist_sq: f64,
    /// Squared diagonal of the smallest enclosing box.
    pub diag_sq: f64,
    /// Aspect-ratio consistency term, `(4/π²)(atan(w_gt/h_gt) − atan(w/h))²`.
    pub v: f64,
}

impl GeometrySummary {
    /// `center_dist_sq / diag_sq`, taken as zero when the diagonal vanishes.
    pub fn distance_ratio(&self) -> f64 {
        if self.diag_sq > 0.0 {
            self.center_dist_sq / self.diag_sq
        } else {
            0.0
        }
    }
}

/// Partial derivatives of each [`GeometrySummary`] field with respect to the
/// predicted box parameters `(cx, cy, w, h)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SummaryGrad {
    pub iou: [f64; 4],
    pub enclosure_excess: [f64; 4],
    pub center_dist_sq: [f64; 4],
    pub diag_sq: [f64; 4],
    pub v: [f64; 4],
}

pub fn summarize(pred: &BBox, gt: &BBox) -> GeometrySummary {
    summarize_with_grad(pred, gt).0
}

const V_SCALE: f64 = 4.0 / (PI * PI);

/// Computes the summary together with its gradient with respect to `pred`.
///
/// `max`/`min` compositions in the intersection and enclosing box are
/// differentiated with the predicted box's side winning ties. At `IoU = 1`
/// (the maximum) the IoU gradient is zero.
pub fn summarize_with_grad(pred: &BBox, gt: &BBox) -> (GeometrySummary, SummaryGrad) {
    let [px1, py1, px2, py2] = pred.corners();
    let [gx1, gy1, gx2, gy2] = gt.corners();

    // Corner-space gradients are accumulated as [x1, y1, x2, y2] and mapped to
    // center form at the end.
    let ix1 = px1.max(gx1);
    let iy1 = py1.max(gy1);
    let ix2 = px2.min(gx2);
    let iy2 = py2.min(gy2);
    let (iw, ih) = (ix2 - ix1, iy2 - iy1);

    let dix1 = if px1 >= gx1 { 1.0 } else { 0.0 };
    let diy1 = if py1 >= gy1 { 1.0 } else { 0.0 };
    let dix2 = if px2 <= gx2 { 1.0 } else { 0.0 };
    let diy2 = if py2 <= gy2 { 1.0 } else { 0.0 };

    let (inter, d_inter) = if iw > 0.0 && ih > 0.0 {
        (iw * ih, [-dix1 * ih, -diy1 * iw, dix2 * ih, diy2 * iw])
    } else {
        (0.0, [0.0; 4])
    };

    // Areas come from the corner view so that identical boxes give an
    // intersection, union and enclosure that agree bit for bit.
    let (pw, ph) = (px2 - px1, py2 - py1);
    let pred_area = pw * ph;
    let d_pred_area = [-ph, -pw, ph, pw];
    let union = pred_area + (gx2 - gx1) * (gy2 - gy1) - inter;
    let d_union = sub4(d_pred_area, d_inter);

    let iou = if inter > 0.0 {
        (inter / union).min(1.0)
    } else {
        0.0
    };
    let d_iou = if inter > 0.0 && iou < 1.0 {
        let u2 = union * union;
        std::array::from_fn(|k| (d_inter[k] * union - inter * d_union[k]) / u2)
    } else {
        [0.0; 4]
    };

    let cx1 = px1.min(gx1);
    let cy1 = py1.min(gy1);
    let cx2 = px2.max(gx2);
    let cy2 = py2.max(gy2);
    let (cw, ch) = (cx2 - cx1, cy2 - cy1);
    let dcx1 = if px1 <= gx1 { 1.0 } else { 0.0 };
    let dcy1 = if py1 <= gy1 { 1.0 } else { 0.0 };
    let dcx2 = if px2 >= gx2 { 1.0 } else { 0.0 };
    let dcy2 = if py2 >= gy2 { 1.0 } else { 0.0 };
    // d(cw)/d[x1,y1,x2,y2] and d(ch)/d[...]
    let d_cw = [-dcx1, 0.0, dcx2, 0.0];
    let d_ch = [0.0, -dcy1, 0.0, dcy2];

    let c_area = cw * ch;
    let d_c_area: [f64; 4] = std::array::from_fn(|k| d_cw[k] * ch + cw * d_ch[k]);
    let enclosure_excess = ((c_area - union) / c_area).clamp(0.0, 1.0);
    // excess = 1 - U/|C|
    let d_excess: [f64; 4] =
        std::array::from_fn(|k| -(d_union[k] * c_area - union * d_c_area[k]) / (c_area * c_area));

    let diag_sq = cw * cw + ch * ch;
    let d_diag_sq: [f64; 4] = std::array::from_fn(|k| 2.0 * cw * d_cw[k] + 2.0 * ch * d_ch[k]);

    let (dx, dy) = (pred.cx - gt.cx, pred.cy - gt.cy);
    let center_dist_sq = dx * dx + dy * dy;

    let (w, h) = (pred.w, pred.h);
    let angle_gap = (gt.w / gt.h).atan() - (w / h).atan();
    let v = V_SCALE * angle_gap * angle_gap;
    // d atan(w/h)/dw = h/(w²+h²), d atan(w/h)/dh = -w/(w²+h²)
    let norm = w * w + h * h;
    let dv_dw = -2.0 * V_SCALE * angle_gap * (h / norm);
    let dv_dh = 2.0 * V_SCALE * angle_gap * (w / norm);

    let summary = GeometrySummary {
        iou,
        enclosure_excess,
        center_dist_sq,
        diag_sq,
        v,
    };
    let grad = SummaryGrad {
        iou: corners_to_center(d_iou),
        enclosure_excess: corners_to_center(d_excess),
        center_dist_sq: [2.0 * dx, 2.0 * dy, 0.0, 0.0],
        diag_sq: corners_to_center(d_diag_sq),
        v: [0.0, 0.0, dv_dw, dv_dh],
    };
    (summary, grad)
}

/// Chain rule from `[x1, y1, x2, y2]` to `[cx, cy, w, h]`, with
/// `x1 = cx - w/2` and `x2 = cx + w/2`.
fn corners_to_center(g: [f64; 4]) -> [f64; 4] {
    [
        g[0] + g[2],
        g[1] + g[3],
        (g[2] - g[0]) / 2.0,
        (g[3] - g[1]) / 2.0,
    ]
}

fn sub4(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    std::array::from_fn(|k| a[k] - b[k])
}
