//! Synthetic annotation noise.
//!
//! Each normalized box is perturbed with uniform noise in `[−ηw, ηw]` on the
//! horizontal coordinates (`cx`, `w`) and `[−ηh, ηh]` on the vertical ones
//! (`cy`, `h`), then clamped back into the unit square.
//!
//! Draws come from a single ChaCha8 stream seeded with `NoiseConfig::seed`,
//! consumed four per box in annotation order (`cx`, `cy`, `w`, `h`), so the
//! output is reproducible across runs and platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::GroundTruth;
use crate::geometry::{iou, BBox, MIN_EXTENT};

pub const MAX_ETA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    eta: f64,
    seed: u64,
}

impl NoiseConfig {
    pub fn new(eta: f64, seed: u64) -> Result<Self> {
        if !(0.0..=MAX_ETA).contains(&eta) {
            return Err(Error::param(
                "eta",
                format!("must lie in [0, {MAX_ETA}], got {eta}"),
            ));
        }
        Ok(Self { eta, seed })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Perturbs one box with explicit draws `[u_cx, u_cy, u_w, u_h]`, each in
/// `[−1, 1]`.
pub fn perturb(b: &BBox, cfg: &NoiseConfig, draws: [f64; 4]) -> BBox {
    let eta = cfg.eta;
    let (w, h) = (b.w(), b.h());
    let cx = b.cx() + draws[0] * eta * w;
    let cy = b.cy() + draws[1] * eta * h;
    let nw = (w + draws[2] * eta * w).max(MIN_EXTENT);
    let nh = (h + draws[3] * eta * h).max(MIN_EXTENT);
    BBox::unclamped(cx, cy, nw, nh)
        .expect("perturbed extents are floored at MIN_EXTENT")
        .clamp_to_bounds()
}

/// Perturbs every box and returns the noisy copy together with the mean IoU
/// between each noisy box and its clean original.
pub fn degrade_dataset(
    annotations: &[GroundTruth],
    cfg: &NoiseConfig,
) -> Result<(Vec<GroundTruth>, f64)> {
    if annotations.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut total = 0.0;
    let noisy: Vec<GroundTruth> = annotations
        .iter()
        .map(|gt| {
            let draws: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
            let bbox = perturb(&gt.bbox, cfg, draws);
            total += iou(&bbox, &gt.bbox);
            GroundTruth { bbox, ..*gt }
        })
        .collect();
    let mean_iou = total / annotations.len() as f64;
    Ok((noisy, mean_iou))
}
