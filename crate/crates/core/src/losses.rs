//! The power IoU loss family.
//!
//! Every member has the shape `1 − IoU^α₁ + penalty^α₂`:
//!
//! | kind        | penalty                                  |
//! |-------------|------------------------------------------|
//! | `AlphaIoU`  | none                                     |
//! | `AlphaGIoU` | `|C \ (B ∪ Bgt)| / |C|`                  |
//! | `AlphaDIoU` | `ρ²(b, bgt) / c²`                        |
//! | `AlphaCIoU` | `ρ²/c²` and `β·v`, each raised to `α₂`   |
//!
//! `LogIoU` is `−ln(IoU)`, the `α → 0` limit of `(1 − IoU^α)/α`.
//!
//! Gradients are analytic. In `AlphaCIoU` the trade-off coefficient
//! `β = v / ((1 − IoU) + v)` is held constant when differentiating.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{summarize_with_grad, BBox, GeometrySummary};

/// IoU floor applied before taking the logarithm in [`LossKind::LogIoU`].
pub const LOG_IOU_FLOOR: f64 = 1e-7;

/// Tolerance around `α = 1` inside which [`turning_point`] returns `1/e`.
pub const TURNING_POINT_LIMIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "iou")]
    AlphaIoU,
    #[serde(rename = "giou")]
    AlphaGIoU,
    #[serde(rename = "diou")]
    AlphaDIoU,
    #[serde(rename = "ciou")]
    AlphaCIoU,
    #[serde(rename = "log-iou")]
    LogIoU,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::AlphaIoU,
        LossKind::AlphaGIoU,
        LossKind::AlphaDIoU,
        LossKind::AlphaCIoU,
        LossKind::LogIoU,
    ];

    pub const POWERED: [LossKind; 4] = [
        LossKind::AlphaIoU,
        LossKind::AlphaGIoU,
        LossKind::AlphaDIoU,
        LossKind::AlphaCIoU,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::AlphaIoU => "iou",
            LossKind::AlphaGIoU => "giou",
            LossKind::AlphaDIoU => "diou",
            LossKind::AlphaCIoU => "ciou",
            LossKind::LogIoU => "log-iou",
        }
    }

    pub fn has_penalty(&self) -> bool {
        matches!(
            self,
            LossKind::AlphaGIoU | LossKind::AlphaDIoU | LossKind::AlphaCIoU
        )
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "iou" | "alpha-iou" => Ok(LossKind::AlphaIoU),
            "giou" | "alpha-giou" => Ok(LossKind::AlphaGIoU),
            "diou" | "alpha-diou" => Ok(LossKind::AlphaDIoU),
            "ciou" | "alpha-ciou" => Ok(LossKind::AlphaCIoU),
            "log-iou" | "logiou" | "log" => Ok(LossKind::LogIoU),
            other => Err(Error::param(
                "kind",
                format!("unknown loss kind `{other}` (expected iou, giou, diou, ciou or log-iou)"),
            )),
        }
    }
}

/// A member of the loss family: base kind plus the powers on the IoU term
/// (`alpha1`) and on the penalty term (`alpha2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    kind: LossKind,
    alpha1: f64,
    alpha2: f64,
}

impl LossSpec {
    /// Uses the same power on the IoU and penalty terms.
    pub fn new(kind: LossKind, alpha: f64) -> Result<Self> {
        Self::with_powers(kind, alpha, alpha)
    }

    pub fn with_powers(kind: LossKind, alpha1: f64, alpha2: f64) -> Result<Self> {
        check_alpha("alpha1", alpha1)?;
        check_alpha("alpha2", alpha2)?;
        Ok(Self {
            kind,
            alpha1,
            alpha2,
        })
    }

    pub fn log_iou() -> Self {
        Self {
            kind: LossKind::LogIoU,
            alpha1: 1.0,
            alpha2: 1.0,
        }
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }

    pub fn alpha2(&self) -> f64 {
        self.alpha2
    }
}

fn check_alpha(name: &'static str, alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(Error::param(
            name,
            format!("must be a finite positive number, got {alpha}"),
        ))
    }
}

/// Loss value with its derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossEval {
    pub value: f64,
    /// Derivative of the explicit IoU term with respect to IoU.
    pub d_iou: f64,
    /// Gradient with respect to the predicted box `(cx, cy, w, h)`.
    pub grad_pred: [f64; 4],
}

impl LossEval {
    pub fn grad_norm(&self) -> f64 {
        self.grad_pred.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

pub fn loss_value(spec: &LossSpec, pred: &BBox, gt: &BBox) -> f64 {
    let (s, _) = summarize_with_grad(pred, gt);
    value_from_summary(spec, &s, ciou_beta(&s))
}

/// Value of the loss with the CIoU trade-off coefficient pinned to `beta`.
///
/// For every kind other than `AlphaCIoU` this is [`loss_value`]. The gradient
/// returned by [`loss_eval`] is the exact gradient of this function with
/// `beta` frozen at its value for the evaluation point.
pub fn loss_value_with_beta(spec: &LossSpec, pred: &BBox, gt: &BBox, beta: f64) -> f64 {
    let (s, _) = summarize_with_grad(pred, gt);
    value_from_summary(spec, &s, beta)
}

/// `β = v / ((1 − IoU) + v)`, zero when both terms vanish.
pub fn ciou_beta(s: &GeometrySummary) -> f64 {
    let denom = (1.0 - s.iou) + s.v;
    if denom > 0.0 {
        s.v / denom
    } else {
        0.0
    }
}

fn value_from_summary(spec: &LossSpec, s: &GeometrySummary, beta: f64) -> f64 {
    let (a1, a2) = (spec.alpha1, spec.alpha2);
    let iou_term = 1.0 - s.iou.powf(a1);
    match spec.kind {
        LossKind::AlphaIoU => iou_term,
        LossKind::AlphaGIoU => iou_term + s.enclosure_excess.powf(a2),
        LossKind::AlphaDIoU => iou_term + s.distance_ratio().powf(a2),
        LossKind::AlphaCIoU => iou_term + s.distance_ratio().powf(a2) + (beta * s.v).powf(a2),
        LossKind::LogIoU => -s.iou.max(LOG_IOU_FLOOR).ln(),
    }
}

/// Derivative of `x^p` scaled onto `dx`, with the convention that a zero base
/// contributes a zero gradient (every base here is non-negative and attains
/// its minimum at zero).
fn power_grad(x: f64, p: f64, dx: [f64; 4]) -> [f64; 4] {
    if x <= 0.0 {
        return [0.0; 4];
    }
    let scale = p * x.powf(p - 1.0);
    dx.map(|d| scale * d)
}

fn add_into(acc: &mut [f64; 4], g: [f64; 4]) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

pub fn loss_eval(spec: &LossSpec, pred: &BBox, gt: &BBox) -> LossEval {
    let (s, g) = summarize_with_grad(pred, gt);
    let beta = ciou_beta(&s);
    let value = value_from_summary(spec, &s, beta);
    let (a1, a2) = (spec.alpha1, spec.alpha2);

    if spec.kind == LossKind::LogIoU {
        let clamped = s.iou.max(LOG_IOU_FLOOR);
        let d_iou = -1.0 / clamped;
        let grad_pred = if s.iou > LOG_IOU_FLOOR {
            g.iou.map(|d| d_iou * d)
        } else {
            [0.0; 4]
        };
        return LossEval {
            value,
            d_iou,
            grad_pred,
        };
    }

    let d_iou = -relative_grad_weight(a1, s.iou);
    let mut grad_pred = if s.iou > 0.0 {
        g.iou.map(|d| d_iou * d)
    } else {
        [0.0; 4]
    };

    match spec.kind {
        LossKind::AlphaIoU | LossKind::LogIoU => {}
        LossKind::AlphaGIoU => {
            add_into(
                &mut grad_pred,
                power_grad(s.enclosure_excess, a2, g.enclosure_excess),
            );
        }
        LossKind::AlphaDIoU | LossKind::AlphaCIoU => {
            let ratio = s.distance_ratio();
            if s.diag_sq > 0.0 {
                let c4 = s.diag_sq * s.diag_sq;
                let d_ratio: [f64; 4] = std::array::from_fn(|k| {
                    (g.center_dist_sq[k] * s.diag_sq - s.center_dist_sq * g.diag_sq[k]) / c4
                });
                add_into(&mut grad_pred, power_grad(ratio, a2, d_ratio));
            }
            if spec.kind == LossKind::AlphaCIoU {
                let d_bv = g.v.map(|d| beta * d);
                add_into(&mut grad_pred, power_grad(beta * s.v, a2, d_bv));
            }
        }
    }

    LossEval {
        value,
        d_iou,
        grad_pred,
    }
}

/// `(1 − IoU^α)/α`, the un-normalized power loss whose `α → 0` limit is
/// `−ln(IoU)`.
pub fn box_cox_loss(alpha: f64, iou: f64) -> f64 {
    -(alpha * iou.ln()).exp_m1() / alpha
}

/// `w_Lr = (1 − IoU^α)/(1 − IoU)`; returns the limit `α` at `IoU = 1`.
pub fn relative_loss_weight(alpha: f64, iou: f64) -> f64 {
    if iou >= 1.0 {
        return alpha;
    }
    // ln(iou) via ln_1p keeps 1 − iou^α accurate as iou → 1.
    let log_iou = (iou - 1.0).ln_1p();
    -(alpha * log_iou).exp_m1() / (1.0 - iou)
}

/// `w_∇r = α·IoU^(α−1)`; `+∞` at `IoU = 0` when `α < 1`.
pub fn relative_grad_weight(alpha: f64, iou: f64) -> f64 {
    if iou <= 0.0 {
        return match alpha.partial_cmp(&1.0) {
            Some(std::cmp::Ordering::Less) => f64::INFINITY,
            Some(std::cmp::Ordering::Equal) => 1.0,
            _ => 0.0,
        };
    }
    alpha * iou.powf(alpha - 1.0)
}

/// `w_La = IoU − IoU^α`.
pub fn absolute_loss_weight(alpha: f64, iou: f64) -> f64 {
    iou - iou.powf(alpha)
}

/// `w_∇a = α·IoU^(α−1) − 1`.
pub fn absolute_grad_weight(alpha: f64, iou: f64) -> f64 {
    relative_grad_weight(alpha, iou) - 1.0
}

/// IoU at which the power loss's gradient magnitude equals the plain IoU
/// loss's, `α^(1/(1−α))`. Tends to `1/e` as `α → 1`.
pub fn turning_point(alpha: f64) -> f64 {
    let gap = alpha - 1.0;
    if gap.abs() <= TURNING_POINT_LIMIT_TOL {
        return (-1.0f64).exp();
    }
    (gap.ln_1p() / -gap).exp()
}

/// One sample of a loss-versus-IoU curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub iou: f64,
    pub alpha: f64,
    pub loss: f64,
    pub grad_mag: f64,
}

/// Loss value and `|∂L/∂IoU|` on a uniform IoU grid over `[0, 1]`, one block
/// of `n_points` rows per alpha.
///
/// Penalty kinds are sampled along concentric boxes of matching aspect ratio,
/// where every penalty term is zero, so the curve is the IoU term alone.
pub fn curve_samples(kind: LossKind, alphas: &[f64], n_points: usize) -> Result<Vec<CurveRow>> {
    if n_points < 2 {
        return Err(Error::param("n_points", "at least two points are required"));
    }
    let mut rows = Vec::with_capacity(alphas.len() * n_points);
    for &alpha in alphas {
        check_alpha("alpha", alpha)?;
        for i in 0..n_points {
            let iou = i as f64 / (n_points - 1) as f64;
            let (loss, grad_mag) = match kind {
                LossKind::LogIoU => {
                    let c = iou.max(LOG_IOU_FLOOR);
                    (-c.ln(), 1.0 / c)
                }
                _ => (1.0 - iou.powf(alpha), relative_grad_weight(alpha, iou)),
            };
            rows.push(CurveRow {
                iou,
                alpha,
                loss,
                grad_mag,
            });
        }
    }
    Ok(rows)
}

pub fn write_curve_csv<W: std::io::Write>(rows: &[CurveRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "iou,alpha,loss,grad_mag")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.iou, r.alpha, r.loss, r.grad_mag)?;
    }
    Ok(())
}
