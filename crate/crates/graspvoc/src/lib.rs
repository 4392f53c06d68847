//! Task-aware grasp selection over precomputed grasp archives.
//!
//! The library covers the full offline pipeline:
//!
//! 1. [`geometry`] — point clouds, PCA frames, exact nearest-neighbor queries.
//! 2. [`viewrender`] — orthographic rasterization of a cloud along its PCA
//!    axes, with an exact pixel ↔ point correspondence and 2D mask
//!    back-projection.
//! 3. [`providers`] — pluggable segmentation / vision / language providers
//!    (deterministic file-backed fixtures or generic HTTP endpoints).
//! 4. [`pipeline`] — render → segment → label → back-project → propagate,
//!    producing a [`object_model::Vocabulary`] of labeled subparts.
//! 5. [`scoring`] — task-compatibility scoring of a grasp archive and
//!    selection of the optimal grasp, plus seeded control sampling.
//! 6. [`evaluation`] — weighted-IoU region metrics against multi-annotator
//!    ground truth and the exact binomial preference test.
//!
//! Everything is deterministic: with fixture providers and a fixed seed,
//! two runs over the same inputs produce byte-identical artifacts.

pub mod evaluation;
pub mod geometry;
pub mod object_model;
pub mod pipeline;
pub mod providers;
pub mod scoring;
pub mod synth;
pub mod viewrender;

pub use geometry::{Point3, PointCloud};
pub use object_model::{ObjectModel, Subpart, Vocabulary};
pub use scoring::{GraspArchive, GraspRecord, ScoreParams, ScoredGrasp, TaskCondition};
