//! Single-box gradient-descent simulator.
//!
//! A predicted box is stepped toward a fixed target with plain fixed-step
//! gradient descent on `(cx, cy, w, h)`, so the only thing that differs
//! between runs is how the loss reweights its gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox, MIN_EXTENT};
use crate::losses::{loss_eval, LossKind, LossSpec};

pub const DEFAULT_LR: f64 = 0.01;
pub const DEFAULT_STEPS: usize = 2000;
/// IoU at which a run counts as converged.
pub const CONVERGED_IOU: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub bbox: BBox,
    pub iou: f64,
    pub loss: f64,
    pub grad_norm: f64,
    /// `∂L/∂IoU` of the explicit IoU term at this point.
    pub d_iou: f64,
    /// Whether the box reaching this point had to be floored or clamped.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionRun {
    pub spec: LossSpec,
    pub lr: f64,
    pub steps: usize,
    pub trajectory: Vec<TrajectoryPoint>,
    pub converged_at: Option<usize>,
    pub final_box: BBox,
}

impl RegressionRun {
    /// First step whose IoU reaches `threshold`.
    pub fn first_step_reaching(&self, threshold: f64) -> Option<usize> {
        self.trajectory
            .iter()
            .find(|p| p.iou >= threshold)
            .map(|p| p.step)
    }

    pub fn clamp_events(&self) -> usize {
        self.trajectory.iter().filter(|p| p.clamped).count()
    }
}

/// Runs `steps` iterations of gradient descent from `init` toward `gt`.
///
/// After every step, extents are floored at [`MIN_EXTENT`] and the box is
/// clamped into the unit square; either adjustment marks the point as a
/// clamp event. Plain `AlphaIoU` from a disjoint start has a zero gradient
/// and stays put.
pub fn regress(
    spec: &LossSpec,
    init: &BBox,
    gt: &BBox,
    lr: f64,
    steps: usize,
) -> Result<RegressionRun> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::param("lr", format!("must be positive, got {lr}")));
    }
    let mut current = *init;
    let mut trajectory = Vec::with_capacity(steps + 1);
    let mut clamped = false;

    for step in 0..=steps {
        let eval = loss_eval(spec, &current, gt);
        trajectory.push(TrajectoryPoint {
            step,
            bbox: current,
            iou: iou(&current, gt),
            loss: eval.value,
            grad_norm: eval.grad_norm(),
            d_iou: eval.d_iou,
            clamped,
        });
        if step == steps {
            break;
        }
        let p = current.params();
        let mut next: [f64; 4] = std::array::from_fn(|k| p[k] - lr * eval.grad_pred[k]);
        clamped = false;
        for e in &mut next[2..] {
            if *e < MIN_EXTENT {
                *e = MIN_EXTENT;
                clamped = true;
            }
        }
        let stepped = BBox::from_params(next)?;
        current = stepped.clamp_to_bounds();
        clamped |= current != stepped;
    }

    let converged_at = trajectory
        .iter()
        .find(|p| p.iou >= CONVERGED_IOU)
        .map(|p| p.step);
    Ok(RegressionRun {
        spec: *spec,
        lr,
        steps,
        trajectory,
        converged_at,
        final_box: current,
    })
}

/// One run per alpha from a shared start, learning rate and budget.
/// `alpha2` follows `alpha1` unless `alpha2` is given.
pub fn compare_alphas(
    kind: LossKind,
    alphas: &[f64],
    alpha2: Option<f64>,
    init: &BBox,
    gt: &BBox,
    lr: f64,
    steps: usize,
) -> Result<Vec<RegressionRun>> {
    alphas
        .iter()
        .map(|&alpha| {
            let spec = match kind {
                LossKind::LogIoU => LossSpec::log_iou(),
                _ => LossSpec::with_powers(kind, alpha, alpha2.unwrap_or(alpha))?,
            };
            regress(&spec, init, gt, lr, steps)
        })
        .collect()
}

/// CSV with header `step,alpha,iou,loss,grad_norm`, runs concatenated.
pub fn write_trajectories_csv<W: std::io::Write>(
    runs: &[RegressionRun],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "step,alpha,iou,loss,grad_norm")?;
    for run in runs {
        let alpha = run.spec.alpha1();
        for p in &run.trajectory {
            writeln!(
                out,
                "{},{},{},{},{}",
                p.step, alpha, p.iou, p.loss, p.grad_norm
            )?;
        }
    }
    Ok(())
}
