//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the checked tolerance.
//!
//! The published task-aware-grasping percentages (73.6% weighted IoU,
//! 91.1% precision, 88% preference) depend on unpublished survey
//! annotations and live model behavior, so they are not reproducible at
//! desk scale; these property-based criteria gate the implementation
//! instead.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use graspvoc::evaluation::{
    binomial_preference_test, binomial_upper_tail, consolidate, region_metrics, PreferenceTally,
};
use graspvoc::geometry::{pca_frame, Point3, PointCloud};
use graspvoc::object_model::{propagate_labels, ObjectModel, Subpart, Vocabulary};
use graspvoc::pipeline::{segment_object, SegmentationParams};
use graspvoc::providers::fixture::FixtureStore;
use graspvoc::providers::{
    AssignmentRequest, CandidateLabelRequest, ProviderConfig, ProviderSet, SegmentRequest,
};
use graspvoc::scoring::{
    rank_archive, sample_controls, select_optimal, GraspArchive, GraspRecord, ScoreParams,
    Scorer, TaskCondition,
};
use graspvoc::synth;
use graspvoc::viewrender::{
    backproject, compute_view, encode_masks, render, Mask2D, MaskFile, Pixel,
};

fn pass(name: &str, detail: &str) {
    println!("[ACCEPTANCE] {name}: PASS ({detail})");
}

// ---------------------------------------------------------------------
// random scenario generation shared by the scoring criteria
// ---------------------------------------------------------------------

struct Scenario {
    vocab: Vocabulary,
    archive: GraspArchive,
    condition: TaskCondition,
    point_label: Vec<String>,
}

fn random_point(rng: &mut ChaCha8Rng, spread: f64) -> Point3 {
    Point3::new(
        rng.gen_range(-spread..spread),
        rng.gen_range(-spread..spread),
        rng.gen_range(-spread..spread),
    )
}

fn random_scenario(rng: &mut ChaCha8Rng) -> Scenario {
    let n = rng.gen_range(30..=120usize);
    let n_parts = rng.gen_range(1..=5usize);
    let cloud = PointCloud::new(
        (0..n).map(|_| random_point(rng, 0.2)).collect(),
        "random",
    )
    .unwrap();

    // every part non-empty: point i < n_parts pins part i
    let mut assignment: Vec<usize> = (0..n)
        .map(|i| {
            if i < n_parts {
                i
            } else {
                rng.gen_range(0..n_parts)
            }
        })
        .collect();
    // the label strings are deliberately unordered relative to part index
    let names = ["stem", "cap", "shaft", "rim", "grip"];
    let mut sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_parts];
    for (i, &p) in assignment.iter().enumerate() {
        sets[p].insert(i);
    }
    let object = ObjectModel::new("random-object", cloud).unwrap();
    let vocab = Vocabulary::new(
        object,
        sets.iter()
            .enumerate()
            .map(|(p, s)| Subpart::new(names[p], s.clone()).unwrap())
            .collect(),
    )
    .unwrap();
    let point_label: Vec<String> = {
        let mut v = vec![String::new(); n];
        for (i, &p) in assignment.iter().enumerate() {
            v[i] = names[p].to_string();
        }
        assignment.clear();
        v
    };

    let n_grasps = rng.gen_range(1..=200usize);
    let grasps: Vec<GraspRecord> = (0..n_grasps)
        .map(|k| {
            let n_contacts = rng.gen_range(1..=3usize);
            GraspRecord {
                id: format!("g{k:03}"),
                position: random_point(rng, 0.3),
                quaternion_wxyz: [1.0, 0.0, 0.0, 0.0],
                contact_points: (0..n_contacts).map(|_| random_point(rng, 0.3)).collect(),
                force: rng.gen_range(0.0..5.0),
            }
        })
        .collect();
    let archive = GraspArchive {
        object_label: "random-object".to_string(),
        grasps,
    };
    let condition = TaskCondition {
        task: "handle it".to_string(),
        grasp_label: names[rng.gen_range(0..n_parts)].to_string(),
        task_label: names[rng.gen_range(0..n_parts)].to_string(),
    };
    Scenario {
        vocab,
        archive,
        condition,
        point_label,
    }
}

/// Fully independent score: double loops, no library nearest-neighbor or
/// scorer code.
fn oracle_score(sc: &Scenario, g: &GraspRecord, params: ScoreParams) -> (f64, String, f64) {
    let cloud = sc.vocab.object().cloud();
    let nc = g.contact_points.len() as f64;
    let rep = Point3::new(
        g.contact_points.iter().map(|p| p.x).sum::<f64>() / nc,
        g.contact_points.iter().map(|p| p.y).sum::<f64>() / nc,
        g.contact_points.iter().map(|p| p.z).sum::<f64>() / nc,
    );
    let mut best_idx = 0usize;
    let mut best_d2 = f64::INFINITY;
    for (i, p) in cloud.points().iter().enumerate() {
        let dx = rep.x - p.x;
        let dy = rep.y - p.y;
        let dz = rep.z - p.z;
        let d2 = dx * dx + dy * dy + dz * dz;
        if d2 < best_d2 {
            best_d2 = d2;
            best_idx = i;
        }
    }
    let grasped = sc.point_label[best_idx].clone();

    let mut d_task = f64::INFINITY;
    for c in &g.contact_points {
        for (i, p) in cloud.points().iter().enumerate() {
            if sc.point_label[i] != sc.condition.task_label {
                continue;
            }
            let dx = c.x - p.x;
            let dy = c.y - p.y;
            let dz = c.z - p.z;
            d_task = d_task.min((dx * dx + dy * dy + dz * dz).sqrt());
        }
    }
    let score = if grasped == sc.condition.grasp_label {
        params.k_force * g.force + params.k_dist * d_task
    } else {
        0.0
    };
    (score, grasped, d_task)
}

#[test]
fn acceptance_scoring_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let params = ScoreParams::default();
    let mut archives = 0;
    while archives < 100 {
        let sc = random_scenario(&mut rng);
        // oracle winner: full scan with the (score, force, id) tie rules
        let mut best: Option<(f64, f64, String)> = None;
        let mut any_nonzero = false;
        for g in &sc.archive.grasps {
            let (score, _, _) = oracle_score(&sc, g, params);
            any_nonzero |= score != 0.0;
            let candidate = (score, g.force, g.id.clone());
            let better = match &best {
                None => true,
                Some((bs, bf, bid)) => {
                    candidate.0 > *bs
                        || (candidate.0 == *bs && candidate.1 > *bf)
                        || (candidate.0 == *bs && candidate.1 == *bf && candidate.2 < *bid)
                }
            };
            if better {
                best = Some(candidate);
            }
        }
        let library = select_optimal(&sc.archive, &sc.condition, &sc.vocab, params);
        if !any_nonzero {
            assert!(library.is_err(), "all-zero archive must not select");
            continue; // does not count toward the 100 scored archives
        }
        let library = library.unwrap();
        let (oracle_best_score, _, oracle_best_id) = {
            let b = best.unwrap();
            (b.0, b.1, b.2)
        };
        assert_eq!(
            library.score.to_bits(),
            oracle_best_score.to_bits(),
            "winner score must be bit-equal"
        );
        assert_eq!(library.grasp.id, oracle_best_id, "winner id must match");

        // the ranked head agrees with the selected optimum
        let ranked = rank_archive(&sc.archive, &sc.condition, &sc.vocab, params).unwrap();
        assert_eq!(ranked[0].grasp.id, library.grasp.id);
        archives += 1;
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 10.0,
        "oracle equivalence took {elapsed:?}, budget 10 s"
    );
    pass(
        "scoring oracle equivalence",
        &format!("100 random archives bit-equal in {elapsed:.2?}"),
    );
}

#[test]
fn acceptance_boxed_equation_filter_property() {
    let mut rng = ChaCha8Rng::seed_from_u64(2002);
    let params = ScoreParams::default();
    let mut compatible = 0usize;
    let mut filtered = 0usize;
    for _ in 0..100 {
        let sc = random_scenario(&mut rng);
        let scorer = Scorer::new(&sc.vocab, &sc.condition, params).unwrap();
        for g in &sc.archive.grasps {
            let scored = scorer.score(g).unwrap();
            let (oracle, grasped, d_task) = oracle_score(&sc, g, params);
            assert_eq!(scored.grasped_label, grasped);
            if grasped != sc.condition.grasp_label {
                assert_eq!(scored.score, 0.0, "off-part grasp must score exactly 0");
                filtered += 1;
            } else {
                let expected = params.k_force * g.force + params.k_dist * d_task;
                let rel = (scored.score - expected).abs() / expected.abs().max(f64::MIN_POSITIVE);
                assert!(
                    rel <= 1e-12,
                    "compatible score {} vs K_force·F + K_dist·d_task {}",
                    scored.score,
                    expected
                );
                assert_eq!(scored.score.to_bits(), oracle.to_bits());
                compatible += 1;
            }
        }
    }
    pass(
        "boxed-equation filter property",
        &format!("{filtered} off-part grasps scored 0, {compatible} compatible within 1e-12 relative"),
    );
}

#[test]
fn acceptance_task_distance_brute_force_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(3003);
    for _ in 0..1000 {
        let n = rng.gen_range(20..=400usize);
        let cloud = PointCloud::new(
            (0..n).map(|_| random_point(&mut rng, 0.25)).collect(),
            "task",
        )
        .unwrap();
        let n_contacts = rng.gen_range(1..=4usize);
        let g = GraspRecord {
            id: "g".to_string(),
            position: Point3::new(0.0, 0.0, 0.0),
            quaternion_wxyz: [1.0, 0.0, 0.0, 0.0],
            contact_points: (0..n_contacts)
                .map(|_| random_point(&mut rng, 0.4))
                .collect(),
            force: 1.0,
        };
        // spatial-index path
        let indexed = graspvoc::scoring::task_distance(&g, &cloud).unwrap();
        // independent double loop
        let mut brute = f64::INFINITY;
        for c in &g.contact_points {
            for p in cloud.points() {
                let dx = c.x - p.x;
                let dy = c.y - p.y;
                let dz = c.z - p.z;
                brute = brute.min((dx * dx + dy * dy + dz * dz).sqrt());
            }
        }
        assert_eq!(
            indexed.to_bits(),
            brute.to_bits(),
            "spatial index must equal the double loop exactly"
        );
    }
    pass(
        "d_task brute-force equivalence",
        "1000 random contact/cloud pairs, difference exactly 0.0",
    );
}

// ---------------------------------------------------------------------
// segmentation partition criteria
// ---------------------------------------------------------------------

/// Records a randomized mask stack over a fixed cloud and returns a
/// fixture-backed provider set for it.
fn random_mask_stack(
    rng: &mut ChaCha8Rng,
    dir: &std::path::Path,
    object: &ObjectModel,
    params: &SegmentationParams,
) -> ProviderSet {
    let store = FixtureStore::create(dir).unwrap();
    let cloud = object.cloud();
    let view = compute_view(cloud, params.resolution, params.margin_fraction).unwrap();
    let rr = render(cloud, &view, params.splat_radius_px, params.depth_quantile).unwrap();
    let image_pgm = rr.to_pgm();
    let (w, h) = (rr.width, rr.height);

    // first mask covers the whole image so at least one subpart survives
    let mut masks = vec![Mask2D::new(
        1,
        (0..h)
            .flat_map(|y| (0..w).map(move |x| Pixel::new(x, y)))
            .collect(),
        (w, h),
    )
    .unwrap()];
    let extra = rng.gen_range(0..=5usize);
    for k in 0..extra {
        let x0 = rng.gen_range(0..w - 1);
        let y0 = rng.gen_range(0..h - 1);
        let x1 = rng.gen_range(x0 + 1..=w);
        let y1 = rng.gen_range(y0 + 1..=h);
        let pixels: BTreeSet<Pixel> = (y0..y1)
            .flat_map(|y| (x0..x1).map(move |x| Pixel::new(x, y)))
            .collect();
        masks.push(Mask2D::new(k as u32 + 2, pixels, (w, h)).unwrap());
    }
    let mask_file: MaskFile = encode_masks(&masks, (w, h));
    store
        .record_segment(
            &SegmentRequest {
                image_pgm: image_pgm.clone(),
                width: w,
                height: h,
            },
            &mask_file,
        )
        .unwrap();

    let candidate_content = r#"{"labels": ["part0", "part1", "part2", "part3"]}"#;
    store
        .record_candidate_labels(
            &CandidateLabelRequest {
                object_label: object.label().to_string(),
                image_pgm: image_pgm.clone(),
            },
            candidate_content,
        )
        .unwrap();

    let mut entries = vec!["\"1\": \"part0\"".to_string()];
    for m in &masks[1..] {
        let choice = rng.gen_range(0..5);
        let label = if choice == 4 {
            "background".to_string()
        } else {
            format!("part{choice}")
        };
        entries.push(format!("\"{}\": \"{label}\"", m.id()));
    }
    store
        .record_assignment(
            &AssignmentRequest {
                image_pgm,
                masks: mask_file.masks.clone(),
                candidate_labels: vec![
                    "part0".into(),
                    "part1".into(),
                    "part2".into(),
                    "part3".into(),
                ],
            },
            &format!("{{\"assignments\": {{{}}}}}", entries.join(", ")),
        )
        .unwrap();

    ProviderSet::from_config(&ProviderConfig::fixture(dir)).unwrap()
}

#[test]
fn acceptance_partition_invariant() {
    // bundled fixtures
    let params = SegmentationParams::default();
    for synth_obj in [synth::knife(), synth::mug()] {
        let tmp = tempfile::tempdir().unwrap();
        let store = FixtureStore::create(tmp.path()).unwrap();
        synth::record_transcripts(&store, &synth_obj, &params).unwrap();
        let providers = ProviderSet::from_config(&ProviderConfig::fixture(tmp.path())).unwrap();
        let out = segment_object(&synth_obj.object, &providers, &params).unwrap();
        let report = out.vocabulary.validate_partition();
        assert!(report.is_ok(), "bundled fixture must partition");
        let map = out.vocabulary.label_map();
        let again = propagate_labels(synth_obj.object.cloud(), &map).unwrap();
        assert_eq!(map, again, "propagate_labels must be idempotent");
    }

    // 50 randomized mask stacks over a fixed random cloud
    let mut rng = ChaCha8Rng::seed_from_u64(4004);
    let cloud = PointCloud::new(
        (0..220).map(|_| random_point(&mut rng, 0.15)).collect(),
        "stack",
    )
    .unwrap();
    let object = ObjectModel::new("stack-object", cloud).unwrap();
    let params = SegmentationParams {
        resolution: (96, 96),
        ..SegmentationParams::default()
    };
    for stack in 0..50 {
        let tmp = tempfile::tempdir().unwrap();
        let providers = random_mask_stack(&mut rng, tmp.path(), &object, &params);
        let out = segment_object(&object, &providers, &params)
            .unwrap_or_else(|e| panic!("stack {stack}: {e}"));
        let report = out.vocabulary.validate_partition();
        assert!(
            report.is_ok(),
            "stack {stack}: {} duplicates, {} uncovered",
            report.duplicate_indices.len(),
            report.uncovered_indices.len()
        );
        for sp in out.vocabulary.subparts() {
            assert!(sp.len() >= params.min_subpart_points);
        }
        let map = out.vocabulary.label_map();
        let again = propagate_labels(object.cloud(), &map).unwrap();
        assert_eq!(map, again);
    }
    pass(
        "partition invariant",
        "knife/mug fixtures + 50 random mask stacks all partition; propagation idempotent",
    );
}

// ---------------------------------------------------------------------
// PCA criteria (independent oracle: nalgebra SymmetricEigen)
// ---------------------------------------------------------------------

fn random_rotation(rng: &mut ChaCha8Rng) -> nalgebra::Rotation3<f64> {
    let axis = nalgebra::Unit::new_normalize(nalgebra::Vector3::new(
        rng.gen_range(-1.0..1.0f64),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    ));
    nalgebra::Rotation3::from_axis_angle(&axis, rng.gen_range(0.0..std::f64::consts::TAU))
}

/// Anisotropic random cloud with well-separated principal variances.
fn anisotropic_cloud(rng: &mut ChaCha8Rng) -> PointCloud {
    let n = rng.gen_range(60..200usize);
    let rot = random_rotation(rng);
    let pts: Vec<Point3> = (0..n)
        .map(|_| {
            let local = nalgebra::Vector3::new(
                rng.gen_range(-1.0..1.0f64),
                rng.gen_range(-0.55..0.55),
                rng.gen_range(-0.3..0.3),
            );
            let world = rot * local;
            Point3::new(world.x + 0.4, world.y - 0.2, world.z + 0.1)
        })
        .collect();
    PointCloud::new(pts, "aniso").unwrap()
}

fn sign_normalized_diff(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let s = if dot < 0.0 { -1.0 } else { 1.0 };
    (0..3)
        .map(|i| (a[i] - s * b[i]).abs())
        .fold(0.0, f64::max)
}

#[test]
fn acceptance_pca_checks() {
    let mut rng = ChaCha8Rng::seed_from_u64(5005);

    // axis-aligned box fixture: frame is exactly axis-aligned
    let mut corners = Vec::new();
    for &sx in &[-2.0, 2.0] {
        for &sy in &[-1.0, 1.0] {
            for &sz in &[-0.5, 0.5] {
                corners.push(Point3::new(sx, sy, sz));
            }
        }
    }
    let box_cloud = PointCloud::new(corners, "box").unwrap();
    let frame = pca_frame(&box_cloud).unwrap();
    assert_eq!(frame.axes[0], [1.0, 0.0, 0.0]);
    assert_eq!(frame.axes[1], [0.0, 1.0, 0.0]);
    assert_eq!(frame.axes[2], [0.0, 0.0, 1.0]);

    for _ in 0..20 {
        let cloud = anisotropic_cloud(&mut rng);
        let frame = pca_frame(&cloud).unwrap();

        // translation invariance within 1e-9
        let shift = [
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
        ];
        let shifted = PointCloud::new(
            cloud.iter().map(|p| p.translate(shift)).collect(),
            "shifted",
        )
        .unwrap();
        let shifted_frame = pca_frame(&shifted).unwrap();
        for i in 0..3 {
            assert!((frame.variances[i] - shifted_frame.variances[i]).abs() <= 1e-9);
            for c in 0..3 {
                assert!((frame.axes[i][c] - shifted_frame.axes[i][c]).abs() <= 1e-9);
            }
        }

        // independent eigen oracle on the same covariance
        let centroid = cloud.centroid();
        let mut cov = nalgebra::Matrix3::<f64>::zeros();
        for p in cloud.iter() {
            let d = nalgebra::Vector3::new(p.x - centroid.x, p.y - centroid.y, p.z - centroid.z);
            cov += d * d.transpose();
        }
        cov /= cloud.len() as f64;
        let eigen = nalgebra::SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]));
        for (slot, &src) in order.iter().enumerate() {
            assert!((frame.variances[slot] - eigen.eigenvalues[src]).abs() <= 1e-9);
            let oracle_axis = [
                eigen.eigenvectors[(0, src)],
                eigen.eigenvectors[(1, src)],
                eigen.eigenvectors[(2, src)],
            ];
            assert!(
                sign_normalized_diff(frame.axes[slot], oracle_axis) <= 1e-9,
                "axis {slot} disagrees with the eigen oracle"
            );
        }

        // rotation equivariance (sign-normalized) within 1e-9
        let q = random_rotation(&mut rng);
        let rotated = PointCloud::new(
            cloud
                .iter()
                .map(|p| {
                    let v = q * nalgebra::Vector3::new(p.x, p.y, p.z);
                    Point3::new(v.x, v.y, v.z)
                })
                .collect(),
            "rotated",
        )
        .unwrap();
        let rotated_frame = pca_frame(&rotated).unwrap();
        for i in 0..3 {
            assert!((frame.variances[i] - rotated_frame.variances[i]).abs() <= 1e-9);
            let v = q * nalgebra::Vector3::new(frame.axes[i][0], frame.axes[i][1], frame.axes[i][2]);
            assert!(
                sign_normalized_diff(rotated_frame.axes[i], [v.x, v.y, v.z]) <= 1e-9,
                "axis {i} not rotation-equivariant"
            );
        }
    }
    pass(
        "PCA checks",
        "translation ≤1e-9, eigen-oracle and rotation equivariance ≤1e-9 on 20 clouds, box exact",
    );
}

#[test]
fn acceptance_render_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(6006);
    let cloud = PointCloud::new(
        (0..500)
            .map(|_| {
                Point3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-0.6..0.6),
                    rng.gen_range(-0.2..0.2),
                )
            })
            .collect(),
        "rt",
    )
    .unwrap();
    let view = compute_view(&cloud, (128, 128), 0.05).unwrap();
    let rr = render(&cloud, &view, 2, 0.6).unwrap();

    // whole-image mask recovers exactly the visible set
    let whole: BTreeSet<Pixel> = (0..128u32)
        .flat_map(|y| (0..128u32).map(move |x| Pixel::new(x, y)))
        .collect();
    let mask = Mask2D::new(1, whole, (128, 128)).unwrap();
    assert_eq!(backproject(&mask, &rr), rr.visible_points());

    // union homomorphism over 50 random mask pairs
    for _ in 0..50 {
        let rect = |rng: &mut ChaCha8Rng| -> BTreeSet<Pixel> {
            let x0 = rng.gen_range(0..120u32);
            let y0 = rng.gen_range(0..120u32);
            let x1 = rng.gen_range(x0 + 1..=127u32);
            let y1 = rng.gen_range(y0 + 1..=127u32);
            (y0..y1)
                .flat_map(|y| (x0..x1).map(move |x| Pixel::new(x, y)))
                .collect()
        };
        let a = rect(&mut rng);
        let b = rect(&mut rng);
        let mu = Mask2D::new(3, a.union(&b).copied().collect(), (128, 128)).unwrap();
        let ma = Mask2D::new(1, a, (128, 128)).unwrap();
        let mb = Mask2D::new(2, b, (128, 128)).unwrap();
        let union_points: BTreeSet<usize> = backproject(&ma, &rr)
            .union(&backproject(&mb, &rr))
            .copied()
            .collect();
        assert_eq!(backproject(&mu, &rr), union_points);
    }
    pass(
        "render round-trip",
        "visible set recovered; union homomorphism on 50 random mask pairs",
    );
}

#[test]
fn acceptance_evaluation_hand_case_and_ordering() {
    // the worked 4-point example: counts (2,1,0,0), K = 2, pred = {0, 2}
    let gt = consolidate(
        &[
            [0usize, 1].iter().copied().collect(),
            [0usize].iter().copied().collect(),
        ],
        4,
    )
    .unwrap();
    let pred: BTreeSet<usize> = [0usize, 2].iter().copied().collect();
    let m = region_metrics(&pred, &gt).unwrap();
    assert_eq!(m.weighted_iou, 0.5);
    assert!((m.precision - 2.0 / 3.0).abs() <= 1e-9);
    assert!((m.recall - 2.0 / 3.0).abs() <= 1e-9);

    // ordering over 500 random (pred, gt) pairs
    let mut rng = ChaCha8Rng::seed_from_u64(7007);
    let mut checked = 0;
    while checked < 500 {
        let n = rng.gen_range(4..60usize);
        let k = rng.gen_range(1..7usize);
        let selections: Vec<BTreeSet<usize>> = (0..k)
            .map(|_| (0..n).filter(|_| rng.gen_bool(0.35)).collect())
            .collect();
        if selections.iter().all(BTreeSet::is_empty) {
            continue;
        }
        let gt = consolidate(&selections, n).unwrap();
        let pred: BTreeSet<usize> = (0..n).filter(|_| rng.gen_bool(0.4)).collect();
        let m = region_metrics(&pred, &gt).unwrap();
        assert!(m.weighted_iou <= m.precision.min(m.recall) + 1e-12);
        assert!((0.0..=1.0).contains(&m.weighted_iou));
        checked += 1;
    }
    pass(
        "evaluation hand case",
        "wIoU 0.5, precision/recall 2/3 ± 1e-9; ordering held on 500 random pairs",
    );
}

#[test]
fn acceptance_binomial_test() {
    // closed form, bit-exact
    let tally = PreferenceTally {
        n_responses: 4,
        chosen_optimal: 1,
        chosen_controls: [3, 0, 0],
        chosen_none: 0,
    };
    let p = binomial_preference_test(&tally, 0.25).unwrap();
    assert_eq!(p, 0.68359375);

    // the reported preference direction: 88 of 100 is significant
    let strong = PreferenceTally {
        n_responses: 100,
        chosen_optimal: 88,
        chosen_controls: [6, 4, 2],
        chosen_none: 0,
    };
    let p = binomial_preference_test(&strong, 0.25).unwrap();
    assert!(p < 1e-3, "p = {p}");

    // monotone non-increasing in k at n = 55
    let mut last = f64::INFINITY;
    for k in 0..=55u64 {
        let p = binomial_upper_tail(55, k, 0.25);
        assert!(p <= last, "k={k}");
        last = p;
    }
    pass(
        "binomial test",
        "n=4,k=1 exactly 0.68359375; n=100,k=88 p<1e-3; monotone over n=55",
    );
}

#[test]
fn acceptance_end_to_end_fixture_replay() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let ws = graspvoc_cli::demo::write_demo_workspace(tmp.path()).unwrap();

    let run = |run_id: &str| {
        graspvoc_cli::run_pipeline(&graspvoc_cli::PipelineArgs {
            manifest: ws.manifest.clone(),
            out: tmp.path().join("runs"),
            run_id: Some(run_id.to_string()),
            jobs: 1,
            ..Default::default()
        })
        .unwrap()
    };
    let dir1 = run("first");
    let dir2 = run("second");

    // byte-identical payloads across the two runs
    let mut files1: Vec<_> = walk(&dir1);
    files1.sort();
    let mut files2: Vec<_> = walk(&dir2);
    files2.sort();
    let rel = |base: &std::path::Path, files: &[std::path::PathBuf]| -> Vec<String> {
        files
            .iter()
            .map(|f| f.strip_prefix(base).unwrap().to_string_lossy().into_owned())
            .collect()
    };
    assert_eq!(rel(&dir1, &files1), rel(&dir2, &files2));
    for (a, b) in files1.iter().zip(files2.iter()) {
        assert_eq!(
            std::fs::read(a).unwrap(),
            std::fs::read(b).unwrap(),
            "{} differs between runs",
            a.display()
        );
    }

    // knife/cut condition is (handle, blade)
    let condition: TaskCondition = serde_json::from_str(
        &std::fs::read_to_string(dir1.join("entries/knife/cut/condition.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(condition.grasp_label, "handle");
    assert_eq!(condition.task_label, "blade");

    // knife vocabulary matches the repository golden file
    let golden = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../graspvoc/tests/golden/knife_vocabulary.json");
    let golden_vocab: graspvoc::object_model::VocabularyFile =
        serde_json::from_str(&std::fs::read_to_string(golden).unwrap()).unwrap();
    let run_vocab = graspvoc::object_model::VocabularyFile::read(
        dir1.join("entries/knife/vocabulary.json"),
    )
    .unwrap();
    assert_eq!(run_vocab.n_points, golden_vocab.n_points);
    assert_eq!(run_vocab.subparts, golden_vocab.subparts);

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 5.0,
        "fixture replay took {elapsed:?}, budget 5 s"
    );
    pass(
        "end-to-end fixture replay",
        &format!("two byte-identical runs, condition handle/blade, in {elapsed:.2?}"),
    );
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else {
            out.push(path);
        }
    }
    out
}

#[test]
fn acceptance_control_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(8008);
    let params = ScoreParams::default();
    // a scenario with plenty of zero-score grasps so the draw is a real
    // subset, not the whole candidate set
    let sc = loop {
        let sc = random_scenario(&mut rng);
        let zeros = {
            let scorer = Scorer::new(&sc.vocab, &sc.condition, params).unwrap();
            sc.archive
                .grasps
                .iter()
                .filter(|g| scorer.score(g).unwrap().score == 0.0)
                .count()
        };
        if zeros >= 10 {
            break sc;
        }
    };
    let scorer = Scorer::new(&sc.vocab, &sc.condition, params).unwrap();
    let a = sample_controls(&sc.archive, &sc.condition, &sc.vocab, params, 3, 77).unwrap();
    let b = sample_controls(&sc.archive, &sc.condition, &sc.vocab, params, 3, 77).unwrap();
    assert_eq!(a, b, "same seed must reproduce the sample");
    assert_eq!(a.grasps.len(), 3);
    assert!(!a.shortfall);
    let ids: BTreeSet<&str> = a.grasps.iter().map(|g| g.id.as_str()).collect();
    assert_eq!(ids.len(), 3, "controls must be distinct");
    for g in &a.grasps {
        assert_eq!(scorer.score(g).unwrap().score, 0.0, "controls must score 0");
    }
    // file-order independence: shuffling the archive leaves the draw intact
    let mut shuffled = sc.archive.clone();
    shuffled.grasps.reverse();
    let c = sample_controls(&shuffled, &sc.condition, &sc.vocab, params, 3, 77).unwrap();
    assert_eq!(a, c);
    pass(
        "control sampling",
        "seeded draw of 3 distinct zero-score grasps, rerun- and order-stable",
    );
}
