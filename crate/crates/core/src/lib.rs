//! Power IoU losses for bounding-box regression.
//!
//! The crate covers the loss family itself (values, analytic gradients and
//! the reweighting weights that characterize it), a finite-difference
//! gradient oracle, a single-box gradient-descent simulator, synthetic
//! annotation noise, and a COCO-style detection evaluator.

pub mod cli;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod grad_check;
pub mod io;
pub mod losses;
pub mod noise;
pub mod regression;

pub use error::{Error, Result};
pub use eval::{Detection, EvalReport, GroundTruth};
pub use geometry::{iou, summarize, BBox, GeometrySummary};
pub use losses::{loss_eval, loss_value, LossEval, LossKind, LossSpec};
