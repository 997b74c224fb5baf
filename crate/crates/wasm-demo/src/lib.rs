//! Browser bindings for the interactive demo page in `www/`.
//!
//! Every export returns a JSON string; the page parses it and draws on a
//! canvas. The `*_json` functions hold the logic and are plain Rust so they
//! can be tested natively.

use alpha_iou::eval::GroundTruth;
use alpha_iou::geometry::{iou, BBox};
use alpha_iou::losses::{curve_samples, LossKind, LossSpec};
use alpha_iou::noise::{degrade_dataset, NoiseConfig};
use alpha_iou::regression::regress;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest number of boxes the noise view will synthesize.
const MAX_NOISE_BOXES: usize = 5000;
const MAX_STEPS: usize = 50_000;

fn parse_kind(kind: &str) -> Result<LossKind, String> {
    kind.parse::<LossKind>().map_err(|e| e.to_string())
}

fn to_box(v: &[f64]) -> Result<BBox, String> {
    match v {
        [cx, cy, w, h] => BBox::new(*cx, *cy, *w, *h).map_err(|e| e.to_string()),
        _ => Err(format!("expected 4 box parameters, got {}", v.len())),
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Curve {
    alpha: f64,
    iou: Vec<f64>,
    loss: Vec<f64>,
    grad_mag: Vec<f64>,
}

pub fn loss_curves_json(kind: &str, alphas: &[f64], points: usize) -> Result<String, String> {
    let kind = parse_kind(kind)?;
    let rows = curve_samples(kind, alphas, points).map_err(|e| e.to_string())?;
    let curves: Vec<Curve> = rows
        .chunks(points)
        .map(|chunk| Curve {
            alpha: chunk[0].alpha,
            iou: chunk.iter().map(|r| r.iou).collect(),
            loss: chunk.iter().map(|r| r.loss).collect(),
            grad_mag: chunk.iter().map(|r| r.grad_mag).collect(),
        })
        .collect();
    to_json(&curves)
}

#[derive(Serialize)]
struct Trajectory {
    iou: Vec<f64>,
    loss: Vec<f64>,
    /// `[cx, cy, w, h]` at each step.
    boxes: Vec<[f64; 4]>,
    converged_at: Option<usize>,
}

pub fn trajectory_json(
    kind: &str,
    alpha: f64,
    init: &[f64],
    gt: &[f64],
    lr: f64,
    steps: usize,
) -> Result<String, String> {
    if steps > MAX_STEPS {
        return Err(format!("at most {MAX_STEPS} steps"));
    }
    let spec = match parse_kind(kind)? {
        LossKind::LogIoU => LossSpec::log_iou(),
        k => LossSpec::new(k, alpha).map_err(|e| e.to_string())?,
    };
    let run = regress(&spec, &to_box(init)?, &to_box(gt)?, lr, steps).map_err(|e| e.to_string())?;
    to_json(&Trajectory {
        iou: run.trajectory.iter().map(|p| p.iou).collect(),
        loss: run.trajectory.iter().map(|p| p.loss).collect(),
        boxes: run.trajectory.iter().map(|p| p.bbox.params()).collect(),
        converged_at: run.converged_at,
    })
}

#[derive(Serialize)]
struct NoiseSample {
    clean: Vec<[f64; 4]>,
    noisy: Vec<[f64; 4]>,
    ious: Vec<f64>,
    mean_iou: f64,
}

/// Random boxes (from `seed`) and their noisy copies at rate `eta`.
pub fn noise_sample_json(eta: f64, seed: u64, n: usize) -> Result<String, String> {
    if n == 0 || n > MAX_NOISE_BOXES {
        return Err(format!("box count must be in 1..={MAX_NOISE_BOXES}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let clean: Vec<GroundTruth> = (0..n)
        .map(|i| {
            let w = rng.random_range(0.05..0.4);
            let h = rng.random_range(0.05..0.4);
            let cx = rng.random_range(w / 2.0..=1.0 - w / 2.0);
            let cy = rng.random_range(h / 2.0..=1.0 - h / 2.0);
            let bbox = BBox::new(cx, cy, w, h).expect("sampled inside the unit square");
            GroundTruth {
                image_id: i as u64,
                category: 0,
                bbox,
            }
        })
        .collect();
    let cfg = NoiseConfig::new(eta, seed).map_err(|e| e.to_string())?;
    let (noisy, mean_iou) = degrade_dataset(&clean, &cfg).map_err(|e| e.to_string())?;
    to_json(&NoiseSample {
        ious: clean
            .iter()
            .zip(&noisy)
            .map(|(c, n)| iou(&c.bbox, &n.bbox))
            .collect(),
        clean: clean.iter().map(|g| g.bbox.params()).collect(),
        noisy: noisy.iter().map(|g| g.bbox.params()).collect(),
        mean_iou,
    })
}

#[wasm_bindgen]
pub fn loss_curves(kind: &str, alphas: &[f64], points: usize) -> Result<String, JsError> {
    loss_curves_json(kind, alphas, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn trajectory(
    kind: &str,
    alpha: f64,
    init: &[f64],
    gt: &[f64],
    lr: f64,
    steps: usize,
) -> Result<String, JsError> {
    trajectory_json(kind, alpha, init, gt, lr, steps).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn noise_sample(eta: f64, seed: u32, n: usize) -> Result<String, JsError> {
    noise_sample_json(eta, seed as u64, n).map_err(|e| JsError::new(&e))
}
