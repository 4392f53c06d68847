//! Bundled synthetic demo objects with recorded provider transcripts.
//!
//! The knife and mug are deterministic point clouds with known part
//! structure. [`record_transcripts`] renders them exactly as the pipeline
//! will and records fixture responses keyed by the resulting request
//! digests, so a fixture-backed pipeline replays end-to-end without any
//! live model. The knife is built from axis-aligned grids (no
//! trigonometry), keeping its rendering byte-stable across platforms.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::evaluation::GroundTruthFile;
use crate::geometry::{Point3, PointCloud};
use crate::object_model::ObjectModel;
use crate::pipeline::SegmentationParams;
use crate::providers::fixture::FixtureStore;
use crate::providers::{
    parse_candidate_response, AssignmentRequest, CandidateLabelRequest, ConditioningRequest,
    ProviderError, SegmentRequest,
};
use crate::scoring::{GraspArchive, GraspRecord};
use crate::viewrender::{compute_view, encode_masks, render, Mask2D, Pixel, ViewError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    View(#[from] ViewError),
    #[error("synthetic object is internally inconsistent: {0}")]
    Inconsistent(String),
}

/// A synthetic object with its authored part structure and per-task
/// conditioning answers.
pub struct SynthObject {
    pub object: ObjectModel,
    /// Authored part → point indices (partition of the cloud).
    pub parts: BTreeMap<String, BTreeSet<usize>>,
    /// task → (grasp_label, task_label), the recorded conditioning answers.
    pub conditions: BTreeMap<String, (String, String)>,
}

impl SynthObject {
    /// Part labels, sorted — the vocabulary the pipeline will produce.
    pub fn labels(&self) -> Vec<String> {
        self.parts.keys().cloned().collect()
    }
}

/// Inclusive regular grid over an axis-aligned box.
fn grid_box(lo: [f64; 3], hi: [f64; 3], counts: [usize; 3]) -> Vec<Point3> {
    let mut pts = Vec::with_capacity(counts[0] * counts[1] * counts[2]);
    let step = |axis: usize, i: usize| -> f64 {
        if counts[axis] == 1 {
            (lo[axis] + hi[axis]) / 2.0
        } else {
            lo[axis] + (hi[axis] - lo[axis]) * i as f64 / (counts[axis] - 1) as f64
        }
    };
    for ix in 0..counts[0] {
        for iy in 0..counts[1] {
            for iz in 0..counts[2] {
                pts.push(Point3::new(step(0, ix), step(1, iy), step(2, iz)));
            }
        }
    }
    pts
}

/// Demo knife: a thick handle grid and a thin blade grid separated by a
/// 10 mm gap along x, so rendered pixels never mix the two parts. Handle
/// points come first; their count marks the part split.
pub fn knife() -> SynthObject {
    let handle = grid_box(
        [-0.110, -0.011, -0.008],
        [-0.015, 0.011, 0.008],
        [25, 7, 5],
    );
    let blade = grid_box([-0.005, -0.014, -0.002], [0.120, 0.014, 0.002], [33, 9, 3]);
    let n_handle = handle.len();
    let mut pts = handle;
    pts.extend(blade);
    let n = pts.len();
    let cloud = PointCloud::new(pts, "knife").expect("knife cloud");
    let object = ObjectModel::new("knife", cloud).expect("knife object");

    let mut parts = BTreeMap::new();
    parts.insert("handle".to_string(), (0..n_handle).collect());
    parts.insert("blade".to_string(), (n_handle..n).collect());

    let mut conditions = BTreeMap::new();
    conditions.insert("cut".to_string(), ("handle".to_string(), "blade".to_string()));
    // handing over: grasp the blade so the receiver can take the handle
    conditions.insert(
        "hand over".to_string(),
        ("blade".to_string(), "handle".to_string()),
    );
    SynthObject {
        object,
        parts,
        conditions,
    }
}

/// Demo mug: a cylindrical body shell plus a side handle arc. The handle
/// clears the body by 2 mm in x, enough to keep rendered pixels pure.
pub fn mug() -> SynthObject {
    let mut pts = Vec::new();
    let body_radius = 0.041;
    let half_height = 0.06;
    for iz in 0..22 {
        let z = -half_height + 2.0 * half_height * iz as f64 / 21.0;
        for ia in 0..40 {
            let a = std::f64::consts::TAU * ia as f64 / 40.0;
            pts.push(Point3::new(body_radius * a.cos(), body_radius * a.sin(), z));
        }
    }
    let n_body = pts.len();
    // handle: arc in the x-z plane around (body_radius, 0, 0)
    let arc_radius = 0.028;
    let tube_radius = 0.005;
    for ik in 0..13 {
        let phi = (-75.0 + 150.0 * ik as f64 / 12.0).to_radians();
        let cx = body_radius + 0.006 + arc_radius * phi.cos();
        let cz = arc_radius * phi.sin();
        for it in 0..8 {
            let t = std::f64::consts::TAU * it as f64 / 8.0;
            // tube cross-section in the plane spanned by y and the arc normal
            pts.push(Point3::new(
                cx + tube_radius * t.cos() * phi.cos(),
                tube_radius * t.sin(),
                cz + tube_radius * t.cos() * phi.sin(),
            ));
        }
    }
    let n = pts.len();
    let cloud = PointCloud::new(pts, "mug").expect("mug cloud");
    let object = ObjectModel::new("mug", cloud).expect("mug object");

    let mut parts = BTreeMap::new();
    parts.insert("body".to_string(), (0..n_body).collect());
    parts.insert("handle".to_string(), (n_body..n).collect());

    let mut conditions = BTreeMap::new();
    conditions.insert("fill".to_string(), ("handle".to_string(), "body".to_string()));
    SynthObject {
        object,
        parts,
        conditions,
    }
}

fn grasp(id: &str, position: [f64; 3], contacts: &[[f64; 3]], force: f64) -> GraspRecord {
    GraspRecord {
        id: id.to_string(),
        position: Point3::from(position),
        quaternion_wxyz: [1.0, 0.0, 0.0, 0.0],
        contact_points: contacts.iter().map(|&c| Point3::from(c)).collect(),
        force,
    }
}

/// Six knife grasps: three pinching the handle, three pinching the blade.
pub fn knife_archive() -> GraspArchive {
    GraspArchive {
        object_label: "knife".to_string(),
        grasps: vec![
            grasp(
                "k-handle-0",
                [-0.09, 0.0, 0.03],
                &[[-0.09, 0.011, 0.0], [-0.09, -0.011, 0.0]],
                1.2,
            ),
            grasp(
                "k-handle-1",
                [-0.06, 0.0, 0.03],
                &[[-0.06, 0.011, 0.0], [-0.06, -0.011, 0.0]],
                2.4,
            ),
            grasp(
                "k-handle-2",
                [-0.03, 0.0, 0.03],
                &[[-0.03, 0.011, 0.0], [-0.03, -0.011, 0.0]],
                1.8,
            ),
            grasp(
                "k-blade-0",
                [0.02, 0.0, 0.03],
                &[[0.02, 0.0, 0.002], [0.02, 0.0, -0.002]],
                0.9,
            ),
            grasp(
                "k-blade-1",
                [0.06, 0.0, 0.03],
                &[[0.06, 0.0, 0.002], [0.06, 0.0, -0.002]],
                2.1,
            ),
            grasp(
                "k-blade-2",
                [0.10, 0.0, 0.03],
                &[[0.10, 0.0, 0.002], [0.10, 0.0, -0.002]],
                1.5,
            ),
        ],
    }
}

/// Six mug grasps: three on the handle arc, three on the body wall.
pub fn mug_archive() -> GraspArchive {
    GraspArchive {
        object_label: "mug".to_string(),
        grasps: vec![
            grasp(
                "m-handle-0",
                [0.075, 0.0, 0.0],
                &[[0.075, 0.005, 0.0], [0.075, -0.005, 0.0]],
                2.0,
            ),
            grasp(
                "m-handle-1",
                [0.062, 0.0, 0.024],
                &[[0.062, 0.005, 0.024], [0.062, -0.005, 0.024]],
                2.6,
            ),
            grasp(
                "m-handle-2",
                [0.062, 0.0, -0.024],
                &[[0.062, 0.005, -0.024], [0.062, -0.005, -0.024]],
                1.4,
            ),
            grasp(
                "m-body-0",
                [0.0, 0.0, 0.05],
                &[[0.041, 0.0, 0.05], [-0.041, 0.0, 0.05]],
                2.3,
            ),
            grasp(
                "m-body-1",
                [0.0, 0.0, 0.0],
                &[[0.0, 0.041, 0.0], [0.0, -0.041, 0.0]],
                1.1,
            ),
            grasp(
                "m-body-2",
                [0.0, 0.0, -0.05],
                &[[0.0, 0.041, -0.05], [0.0, -0.041, -0.05]],
                1.7,
            ),
        ],
    }
}

/// Six-participant survey over the grasp part of a task: nested selections
/// of the part's points, so agreement counts range over 1..=6.
pub fn ground_truth_for(synth: &SynthObject, task: &str) -> Option<GroundTruthFile> {
    let (grasp_label, _) = synth.conditions.get(task)?;
    let part: Vec<usize> = synth.parts[grasp_label].iter().copied().collect();
    let selections: Vec<Vec<usize>> = (0..6u64)
        .map(|participant| {
            // participant p skips a deterministic tail of the part
            let keep = part.len() - (part.len() * participant as usize) / 12;
            part[..keep].to_vec()
        })
        .collect();
    Some(GroundTruthFile {
        object_label: synth.object.label().to_string(),
        task: task.to_string(),
        n_points: synth.object.cloud().len(),
        selections,
    })
}

/// The masks the recorded segmenter returns: one mask per part, built from
/// the pixels whose visible points belong to that part. Mask ids follow
/// sorted part order starting at 1.
fn part_masks(
    synth: &SynthObject,
    rr: &crate::viewrender::RenderResult,
) -> Result<Vec<Mask2D>, SynthError> {
    let mut part_of_point: BTreeMap<usize, &str> = BTreeMap::new();
    for (label, indices) in &synth.parts {
        for &i in indices {
            part_of_point.insert(i, label);
        }
    }
    let mut pixels_per_part: BTreeMap<&str, BTreeSet<Pixel>> = BTreeMap::new();
    for (px, points) in &rr.pixel_points {
        let first = points[0];
        let label = part_of_point
            .get(&first)
            .ok_or_else(|| SynthError::Inconsistent(format!("point {first} has no part")))?;
        // the demo geometry guarantees pixel purity; verify it
        for &p in points {
            if part_of_point.get(&p) != Some(label) {
                return Err(SynthError::Inconsistent(format!(
                    "pixel ({}, {}) mixes parts",
                    px.x, px.y
                )));
            }
        }
        pixels_per_part.entry(label).or_default().insert(*px);
    }
    let resolution = (rr.width, rr.height);
    pixels_per_part
        .into_iter()
        .enumerate()
        .map(|(k, (_, pixels))| {
            Mask2D::new(k as u32 + 1, pixels, resolution)
                .map_err(|e| SynthError::Inconsistent(e.to_string()))
        })
        .collect()
}

/// Renders the object exactly as the pipeline will and records the full
/// provider transcript (masks, candidate labels, assignments, and one
/// conditioning answer per task) into `store`.
pub fn record_transcripts(
    store: &FixtureStore,
    synth: &SynthObject,
    params: &SegmentationParams,
) -> Result<(), SynthError> {
    let cloud = synth.object.cloud();
    let view = compute_view(cloud, params.resolution, params.margin_fraction)?;
    let rr = render(cloud, &view, params.splat_radius_px, params.depth_quantile)?;
    let image_pgm = rr.to_pgm();

    // segmentation answer
    let masks = part_masks(synth, &rr)?;
    let mask_file = encode_masks(&masks, (rr.width, rr.height));
    store.record_segment(
        &SegmentRequest {
            image_pgm: image_pgm.clone(),
            width: rr.width,
            height: rr.height,
        },
        &mask_file,
    )?;

    // candidate labels answer: the parts plus one distractor nobody uses
    let labels = synth.labels();
    let candidate_content = format!(
        "{{\"labels\": [{}, \"engraving\"]}}",
        labels
            .iter()
            .map(|l| format!("{l:?}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    store.record_candidate_labels(
        &CandidateLabelRequest {
            object_label: synth.object.label().to_string(),
            image_pgm: image_pgm.clone(),
        },
        &candidate_content,
    )?;
    let candidates = parse_candidate_response(&candidate_content)?;

    // assignment answer: mask k+1 → k-th sorted part label
    let assignments: Vec<String> = labels
        .iter()
        .enumerate()
        .map(|(k, l)| format!("\"{}\": {l:?}", k + 1))
        .collect();
    store.record_assignment(
        &AssignmentRequest {
            image_pgm,
            masks: mask_file.masks.clone(),
            candidate_labels: candidates,
        },
        &format!("{{\"assignments\": {{{}}}}}", assignments.join(", ")),
    )?;

    // conditioning answers, one per task, phrased like a live transcript
    for (task, (grasp_label, task_label)) in &synth.conditions {
        let content = format!(
            "The best choice is clear.\n```json\n{{\"grasp_label\": {grasp_label:?}, \
             \"task_label\": {task_label:?}}}\n```\n"
        );
        store.record_condition(
            &ConditioningRequest {
                task: task.clone(),
                labels: labels.clone(),
            },
            &content,
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knife_parts_partition_the_cloud() {
        let k = knife();
        let n = k.object.cloud().len();
        let mut seen = vec![0u8; n];
        for indices in k.parts.values() {
            for &i in indices {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        // the 10 mm gap means parts split exactly at x = -0.01
        for &i in &k.parts["handle"] {
            assert!(k.object.cloud().get(i).unwrap().x < -0.01);
        }
        for &i in &k.parts["blade"] {
            assert!(k.object.cloud().get(i).unwrap().x > -0.01);
        }
    }

    #[test]
    fn mug_parts_partition_the_cloud() {
        let m = mug();
        let n = m.object.cloud().len();
        let total: usize = m.parts.values().map(BTreeSet::len).sum();
        assert_eq!(total, n);
        for &i in &m.parts["handle"] {
            assert!(m.object.cloud().get(i).unwrap().x > 0.042);
        }
    }

    #[test]
    fn archives_validate_and_sit_on_their_parts() {
        for (synth, archive) in [(knife(), knife_archive()), (mug(), mug_archive())] {
            archive.validate().unwrap();
            let cloud = synth.object.cloud();
            for g in &archive.grasps {
                // every contact is within 6 mm of the cloud
                for &c in &g.contact_points {
                    let (_, d) = cloud.nearest(c);
                    assert!(d < 0.006, "{} contact {d} m off-surface", g.id);
                }
            }
        }
    }

    #[test]
    fn ground_truth_files_are_consistent() {
        let k = knife();
        let gt = ground_truth_for(&k, "cut").unwrap();
        assert_eq!(gt.n_points, k.object.cloud().len());
        assert_eq!(gt.selections.len(), 6);
        let consolidated = gt.consolidate().unwrap();
        assert_eq!(consolidated.n_participants(), 6);
        // every selected point belongs to the grasp part (handle)
        let handle = &k.parts["handle"];
        for i in consolidated.selected_points() {
            assert!(handle.contains(&i));
        }
        assert!(ground_truth_for(&k, "juggle").is_none());
    }

    #[test]
    fn transcripts_replay_through_fixture_provider() {
        use crate::providers::{ProviderConfig, ProviderSet};

        let tmp = tempfile::tempdir().unwrap();
        let store = FixtureStore::create(tmp.path()).unwrap();
        let k = knife();
        let params = SegmentationParams::default();
        record_transcripts(&store, &k, &params).unwrap();

        let providers =
            ProviderSet::from_config(&ProviderConfig::fixture(tmp.path())).unwrap();
        let out = crate::pipeline::segment_object(&k.object, &providers, &params).unwrap();
        assert_eq!(out.vocabulary.labels(), vec!["blade", "handle"]);
        assert!(out.vocabulary.validate_partition().is_ok());
    }
}
