//! COCO-style annotation and detection files.
//!
//! Annotations:
//!
//! ```json
//! {
//!   "images": [{"id": 1, "width": 640, "height": 480}],
//!   "annotations": [{"image_id": 1, "category_id": 3, "bbox": [x, y, w, h]}]
//! }
//! ```
//!
//! Detections are a bare array of `{"image_id", "category_id", "bbox",
//! "score"}` objects. `bbox` is `[x_min, y_min, width, height]` in pixels in
//! both files; boxes are normalized by their image's size on load.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{Detection, GroundTruth};
use crate::geometry::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetBundle {
    pub images: BTreeMap<u64, ImageSize>,
    pub gts: Vec<GroundTruth>,
    pub dets: Option<Vec<Detection>>,
}

/// A loaded value plus the number of boxes that had to be clamped into their
/// image.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded<T> {
    pub value: T,
    pub clamped: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ImageRecord {
    id: u64,
    width: u32,
    height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    file_name: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AnnotationRecord {
    image_id: u64,
    category_id: u64,
    bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AnnotationFile {
    images: Vec<ImageRecord>,
    annotations: Vec<AnnotationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    categories: Option<serde_json::Value>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DetectionRecord {
    image_id: u64,
    category_id: u64,
    bbox: [f64; 4],
    score: f64,
}

/// Converts a pixel `[x, y, w, h]` box to normalized center form. Returns the
/// box and whether it had to be clamped.
pub fn normalize_bbox(bbox: [f64; 4], size: ImageSize) -> Result<(BBox, bool)> {
    let (iw, ih) = (f64::from(size.width), f64::from(size.height));
    let [x, y, w, h] = bbox;
    let raw = BBox::unclamped((x + w / 2.0) / iw, (y + h / 2.0) / ih, w / iw, h / ih)?;
    let clamped = raw.clamp_to_bounds();
    Ok((clamped, clamped != raw))
}

pub fn denormalize_bbox(b: &BBox, size: ImageSize) -> [f64; 4] {
    let (iw, ih) = (f64::from(size.width), f64::from(size.height));
    let [x1, y1, _, _] = b.corners();
    [x1 * iw, y1 * ih, b.w() * iw, b.h() * ih]
}

fn check_images(images: &[ImageRecord]) -> Result<BTreeMap<u64, ImageSize>> {
    images
        .iter()
        .map(|im| {
            if im.width == 0 || im.height == 0 {
                Err(Error::param(
                    "images",
                    format!("image {} has zero size", im.id),
                ))
            } else {
                Ok((
                    im.id,
                    ImageSize {
                        width: im.width,
                        height: im.height,
                    },
                ))
            }
        })
        .collect()
}

fn unknown_ids<'a>(
    ids: impl Iterator<Item = &'a u64>,
    images: &BTreeMap<u64, ImageSize>,
) -> Result<()> {
    let missing: BTreeSet<u64> = ids.filter(|id| !images.contains_key(id)).copied().collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::UnknownImages(missing.into_iter().collect()))
    }
}

pub fn parse_annotations(text: &str) -> Result<Loaded<DatasetBundle>> {
    let file: AnnotationFile = serde_json::from_str(text)?;
    let images = check_images(&file.images)?;
    unknown_ids(file.annotations.iter().map(|a| &a.image_id), &images)?;

    let mut clamped = 0;
    let mut gts = Vec::with_capacity(file.annotations.len());
    for (index, a) in file.annotations.iter().enumerate() {
        let (bbox, was_clamped) =
            normalize_bbox(a.bbox, images[&a.image_id]).map_err(|e| Error::BadAnnotation {
                index,
                source: Box::new(e),
            })?;
        clamped += usize::from(was_clamped);
        gts.push(GroundTruth {
            image_id: a.image_id,
            category: a.category_id,
            bbox,
        });
    }
    if clamped > 0 {
        log::warn!("clamped {clamped} annotation boxes that extended past their image");
    }
    Ok(Loaded {
        value: DatasetBundle {
            images,
            gts,
            dets: None,
        },
        clamped,
    })
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Loaded<DatasetBundle>> {
    parse_annotations(&fs::read_to_string(path)?)
}

/// Attaches detections to `bundle`, normalizing them with its image sizes.
pub fn parse_detections(text: &str, bundle: DatasetBundle) -> Result<Loaded<DatasetBundle>> {
    let records: Vec<DetectionRecord> = serde_json::from_str(text)?;
    unknown_ids(records.iter().map(|r| &r.image_id), &bundle.images)?;

    let mut clamped = 0;
    let mut dets = Vec::with_capacity(records.len());
    for (index, r) in records.iter().enumerate() {
        if !(0.0..=1.0).contains(&r.score) {
            return Err(Error::BadAnnotation {
                index,
                source: Box::new(Error::param(
                    "score",
                    format!("{} is outside [0, 1]", r.score),
                )),
            });
        }
        let (bbox, was_clamped) =
            normalize_bbox(r.bbox, bundle.images[&r.image_id]).map_err(|e| {
                Error::BadAnnotation {
                    index,
                    source: Box::new(e),
                }
            })?;
        clamped += usize::from(was_clamped);
        dets.push(Detection {
            image_id: r.image_id,
            category: r.category_id,
            bbox,
            score: r.score,
        });
    }
    if clamped > 0 {
        log::warn!("clamped {clamped} detection boxes that extended past their image");
    }
    Ok(Loaded {
        value: DatasetBundle {
            dets: Some(dets),
            ..bundle
        },
        clamped,
    })
}

pub fn load_detections(
    path: impl AsRef<Path>,
    bundle: DatasetBundle,
) -> Result<Loaded<DatasetBundle>> {
    parse_detections(&fs::read_to_string(path)?, bundle)
}

/// Serializes the images and ground truths of `bundle` as an annotation file.
pub fn annotations_to_string(bundle: &DatasetBundle) -> Result<String> {
    let file = AnnotationFile {
        images: bundle
            .images
            .iter()
            .map(|(&id, s)| ImageRecord {
                id,
                width: s.width,
                height: s.height,
                file_name: None,
            })
            .collect(),
        annotations: bundle
            .gts
            .iter()
            .enumerate()
            .map(|(i, g)| AnnotationRecord {
                image_id: g.image_id,
                category_id: g.category,
                bbox: denormalize_bbox(&g.bbox, bundle.images[&g.image_id]),
                id: Some(i as u64 + 1),
            })
            .collect(),
        categories: None,
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn save_annotations(bundle: &DatasetBundle, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, annotations_to_string(bundle)?)?;
    Ok(())
}

/// Serializes detections as a COCO results array.
pub fn detections_to_string(
    dets: &[Detection],
    images: &BTreeMap<u64, ImageSize>,
) -> Result<String> {
    let records: Vec<DetectionRecord> = dets
        .iter()
        .map(|d| {
            let size = images
                .get(&d.image_id)
                .copied()
                .ok_or_else(|| Error::UnknownImages(vec![d.image_id]))?;
            Ok(DetectionRecord {
                image_id: d.image_id,
                category_id: d.category,
                bbox: denormalize_bbox(&d.bbox, size),
                score: d.score,
            })
        })
        .collect::<Result<_>>()?;
    Ok(serde_json::to_string_pretty(&records)?)
}
