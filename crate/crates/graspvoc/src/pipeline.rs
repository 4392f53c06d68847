//! End-to-end segmentation: render the cloud, segment the image, label the
//! masks, resolve overlaps, back-project to 3D, and propagate labels to
//! occluded points until the subparts partition the cloud.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::GeometryError;
use crate::object_model::{
    propagate_labels, ObjectModel, VocabError, Vocabulary, BACKGROUND_LABEL,
};
use crate::providers::{
    AssignmentRequest, CandidateLabelRequest, ProviderError, ProviderSet, SegmentRequest,
};
use crate::viewrender::{
    compute_view, encode_masks, render, Mask2D, Pixel, RenderResult, ViewError, ViewFrame,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("segmentation produced no usable non-background region")]
    SegmentationEmpty,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    View(#[from] ViewError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn default_resolution() -> (u32, u32) {
    (512, 512)
}
fn default_margin() -> f64 {
    0.05
}
fn default_splat_radius() -> u32 {
    2
}
fn default_depth_quantile() -> f64 {
    0.6
}
fn default_min_subpart_points() -> usize {
    5
}

/// Tunables of the segmentation pipeline. Overlaps always resolve
/// smallest-mask-wins; subparts smaller than `min_subpart_points` dissolve
/// into propagation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct SegmentationParams {
    #[serde(default = "default_resolution")]
    pub resolution: (u32, u32),
    #[serde(default = "default_margin")]
    pub margin_fraction: f64,
    #[serde(default = "default_splat_radius")]
    pub splat_radius_px: u32,
    #[serde(default = "default_depth_quantile")]
    pub depth_quantile: f64,
    #[serde(default = "default_min_subpart_points")]
    pub min_subpart_points: usize,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self {
            resolution: default_resolution(),
            margin_fraction: default_margin(),
            splat_radius_px: default_splat_radius(),
            depth_quantile: default_depth_quantile(),
            min_subpart_points: default_min_subpart_points(),
        }
    }
}

/// Everything a segmentation run produces; the render and masks are kept
/// for debug artifacts.
pub struct SegmentationOutput {
    pub vocabulary: Vocabulary,
    pub view: ViewFrame,
    pub render: RenderResult,
    pub masks: Vec<Mask2D>,
}

/// Resolves a stack of labeled masks into one label per covered pixel.
///
/// Masks sharing a label merge by union. A pixel claimed by masks with
/// different labels goes to the smallest-area mask (ties: lowest mask id) —
/// small masks are typically the fine-grained parts nested inside a larger
/// silhouette. Background-assigned and unassigned masks are dropped.
pub fn merge_and_resolve(
    masks: &[Mask2D],
    assignment: &BTreeMap<u32, String>,
) -> BTreeMap<Pixel, String> {
    let mut order: Vec<&Mask2D> = masks
        .iter()
        .filter(|m| {
            assignment
                .get(&m.id())
                .is_some_and(|label| label != BACKGROUND_LABEL)
        })
        .collect();
    order.sort_by_key(|m| (m.area(), m.id()));

    let mut out: BTreeMap<Pixel, String> = BTreeMap::new();
    for mask in order {
        let label = &assignment[&mask.id()];
        for &px in mask.pixels() {
            out.entry(px).or_insert_with(|| label.clone());
        }
    }
    out
}

/// Runs the four segmentation steps and returns a vocabulary that
/// partitions the cloud. Subparts with fewer than
/// `params.min_subpart_points` back-projected points are dissolved and
/// their points re-labeled by propagation.
pub fn segment_object(
    object: &ObjectModel,
    providers: &ProviderSet,
    params: &SegmentationParams,
) -> Result<SegmentationOutput, PipelineError> {
    let cloud = object.cloud();
    let view = compute_view(cloud, params.resolution, params.margin_fraction)?;
    let rendered = render(cloud, &view, params.splat_radius_px, params.depth_quantile)?;
    let image_pgm = rendered.to_pgm();

    let masks = providers.segment(&SegmentRequest {
        image_pgm: image_pgm.clone(),
        width: rendered.width,
        height: rendered.height,
    })?;
    if masks.is_empty() {
        return Err(PipelineError::SegmentationEmpty);
    }

    let candidates = providers.candidate_labels(&CandidateLabelRequest {
        object_label: object.label().to_string(),
        image_pgm: image_pgm.clone(),
    })?;

    let assignment = providers.assign_labels(&AssignmentRequest {
        image_pgm,
        masks: encode_masks(&masks, (rendered.width, rendered.height)).masks,
        candidate_labels: candidates,
    })?;

    let pixel_labels = merge_and_resolve(&masks, &assignment);
    if pixel_labels.is_empty() {
        return Err(PipelineError::SegmentationEmpty);
    }

    // back-project pixel labels onto the visible points
    let mut partial: BTreeMap<usize, String> = BTreeMap::new();
    for (px, label) in &pixel_labels {
        if let Some(points) = rendered.pixel_points.get(px) {
            for &i in points {
                partial.insert(i, label.clone());
            }
        }
    }

    // dissolve speck subparts into propagation
    let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for label in partial.values() {
        *sizes.entry(label).or_default() += 1;
    }
    let dissolved: Vec<String> = sizes
        .iter()
        .filter(|&(_, &n)| n < params.min_subpart_points)
        .map(|(label, _)| label.to_string())
        .collect();
    if !dissolved.is_empty() {
        partial.retain(|_, label| !dissolved.contains(label));
    }
    if partial.is_empty() {
        return Err(PipelineError::SegmentationEmpty);
    }

    let total = propagate_labels(cloud, &partial)?;
    let vocabulary = Vocabulary::from_label_map(object.clone(), &total)?;
    debug_assert!(vocabulary.validate_partition().is_ok());

    Ok(SegmentationOutput {
        vocabulary,
        view,
        render: rendered,
        masks,
    })
}
