//! Central finite-difference oracle for the analytic loss gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{summarize, BBox};
use crate::losses::{ciou_beta, loss_eval, loss_value_with_beta, LossKind, LossSpec};

pub const DEFAULT_STEP: f64 = 1e-6;

/// Floor on the relative-error denominator.
pub const REL_ERR_FLOOR: f64 = 1e-8;

/// Minimum distance between any pair of compared box edges in sampled pairs.
pub const TIE_MARGIN: f64 = 1e-4;

/// Minimum IoU of a sampled overlapping pair. Below this, `α·IoU^(α−1)` at
/// large `α` drives gradients under what central differences of an O(1) loss
/// can resolve at the default step.
pub const MIN_OVERLAP_IOU: f64 = 0.05;

/// Minimum value of any penalty base in sampled pairs;
/// `x^α` with `α < 1` has unbounded curvature at zero.
pub const BASE_MARGIN: f64 = 1e-3;

/// Central differences of the loss along each of `(cx, cy, w, h)`.
///
/// For `AlphaCIoU` the trade-off coefficient is frozen at its value for
/// `pred`, matching the convention of the analytic gradient. If a perturbed
/// box would be degenerate the step is shrunk tenfold once.
pub fn fd_gradient(spec: &LossSpec, pred: &BBox, gt: &BBox, step: f64) -> Result<[f64; 4]> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::param(
            "step",
            format!("must be positive, got {step}"),
        ));
    }
    match fd_with_step(spec, pred, gt, step) {
        Ok(g) => Ok(g),
        Err(_) => {
            fd_with_step(spec, pred, gt, step / 10.0).map_err(|_| Error::StepTooLarge { step })
        }
    }
}

fn fd_with_step(spec: &LossSpec, pred: &BBox, gt: &BBox, step: f64) -> Result<[f64; 4]> {
    let beta = ciou_beta(&summarize(pred, gt));
    let base = pred.params();
    let mut grad = [0.0; 4];
    for (k, g) in grad.iter_mut().enumerate() {
        let mut plus = base;
        let mut minus = base;
        plus[k] += step;
        minus[k] -= step;
        let lp = loss_value_with_beta(spec, &BBox::from_params(plus)?, gt, beta);
        let lm = loss_value_with_beta(spec, &BBox::from_params(minus)?, gt, beta);
        *g = (lp - lm) / (2.0 * step);
    }
    Ok(grad)
}

/// Absolute and relative discrepancy between two gradient vectors.
///
/// Relative error is `‖a − f‖ / max(‖a‖, ‖f‖, REL_ERR_FLOOR)`.
pub fn gradient_error(analytic: &[f64; 4], fd: &[f64; 4]) -> (f64, f64) {
    let norm = |v: &[f64; 4]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: [f64; 4] = std::array::from_fn(|k| analytic[k] - fd[k]);
    let abs = norm(&diff);
    let rel = abs / norm(analytic).max(norm(fd)).max(REL_ERR_FLOOR);
    (abs, rel)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub spec: LossSpec,
    pub pred: BBox,
    pub gt: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradReport {
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub worst_case: Option<WorstCase>,
    pub n_checked: usize,
    /// Smallest analytic gradient norm seen; shows whether a sweep produced
    /// any signal at all.
    pub min_grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairLayout {
    Overlapping,
    Disjoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub n_random: usize,
    pub seed: u64,
    pub kinds: Vec<LossKind>,
    pub alpha_range: (f64, f64),
    pub layout: PairLayout,
    pub step: f64,
}

impl SweepConfig {
    pub fn new(n_random: usize, seed: u64) -> Self {
        Self {
            n_random,
            seed,
            kinds: LossKind::ALL.to_vec(),
            alpha_range: (0.5, 5.0),
            layout: PairLayout::Overlapping,
            step: DEFAULT_STEP,
        }
    }
}

/// Checks analytic gradients against [`fd_gradient`] on `n_random` random
/// specs and overlapping box pairs. Deterministic in `seed`.
pub fn sweep_check(n_random: usize, seed: u64) -> Result<GradReport> {
    sweep_check_with(&SweepConfig::new(n_random, seed))
}

pub fn sweep_check_with(cfg: &SweepConfig) -> Result<GradReport> {
    if cfg.n_random == 0 {
        return Err(Error::param("n_random", "must be at least 1"));
    }
    if cfg.kinds.is_empty() {
        return Err(Error::param("kinds", "at least one loss kind is required"));
    }
    let (lo, hi) = cfg.alpha_range;
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::param(
            "alpha_range",
            format!("invalid range {lo}..{hi}"),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradReport {
        max_abs_err: 0.0,
        max_rel_err: 0.0,
        worst_case: None,
        n_checked: 0,
        min_grad_norm: f64::INFINITY,
    };

    for _ in 0..cfg.n_random {
        let kind = cfg.kinds[rng.random_range(0..cfg.kinds.len())];
        let spec = if kind == LossKind::LogIoU {
            LossSpec::log_iou()
        } else {
            let a1 = rng.random_range(lo..=hi);
            let a2 = if rng.random_bool(0.5) {
                a1
            } else {
                rng.random_range(lo..=hi)
            };
            LossSpec::with_powers(kind, a1, a2)?
        };
        let (pred, gt) = sample_pair(&mut rng, cfg.layout);

        let eval = loss_eval(&spec, &pred, &gt);
        let fd = fd_gradient(&spec, &pred, &gt, cfg.step)?;
        let (abs, rel) = gradient_error(&eval.grad_pred, &fd);

        report.n_checked += 1;
        report.min_grad_norm = report.min_grad_norm.min(eval.grad_norm());
        report.max_abs_err = report.max_abs_err.max(abs);
        if rel > report.max_rel_err || report.worst_case.is_none() {
            report.max_rel_err = report.max_rel_err.max(rel);
            report.worst_case = Some(WorstCase { spec, pred, gt });
        }
    }
    Ok(report)
}

fn random_box<R: Rng>(rng: &mut R) -> BBox {
    let w = rng.random_range(0.05..0.6);
    let h = rng.random_range(0.05..0.6);
    let cx = rng.random_range(w / 2.0..=1.0 - w / 2.0);
    let cy = rng.random_range(h / 2.0..=1.0 - h / 2.0);
    BBox::unclamped(cx, cy, w, h).expect("sampled extents are positive")
}

/// Draws box pairs until one has the requested layout and sits away from
/// every non-differentiable configuration.
pub fn sample_pair<R: Rng>(rng: &mut R, layout: PairLayout) -> (BBox, BBox) {
    loop {
        let pred = random_box(rng);
        let gt = random_box(rng);
        if pair_is_smooth(&pred, &gt, layout) {
            return (pred, gt);
        }
    }
}

/// Whether `(pred, gt)` has the given layout with every edge comparison at
/// least [`TIE_MARGIN`] from a tie and every penalty base at least
/// [`BASE_MARGIN`] from zero. Overlapping pairs also need an IoU of at least
/// [`MIN_OVERLAP_IOU`].
pub fn pair_is_smooth(pred: &BBox, gt: &BBox, layout: PairLayout) -> bool {
    let p = pred.corners();
    let g = gt.corners();
    // same-side edges: drive the max/min in intersection and enclosure
    let same_side = (0..4).all(|k| (p[k] - g[k]).abs() >= TIE_MARGIN);
    // opposite edges: the overlap / no-overlap boundary
    let opposite = [p[2] - g[0], g[2] - p[0], p[3] - g[1], g[3] - p[1]]
        .iter()
        .all(|d| d.abs() >= TIE_MARGIN);
    if !(same_side && opposite) {
        return false;
    }
    let s = summarize(pred, gt);
    let layout_ok = match layout {
        PairLayout::Overlapping => s.iou >= MIN_OVERLAP_IOU,
        PairLayout::Disjoint => s.iou == 0.0,
    };
    layout_ok
        && s.enclosure_excess >= BASE_MARGIN
        && s.distance_ratio() >= BASE_MARGIN
        && ciou_beta(&s) * s.v >= BASE_MARGIN
}
