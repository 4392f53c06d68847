//! Task-compatibility scoring of a grasp archive.
//!
//! A grasp scores `k_force · F + k_dist · d_task` when its grasped subpart
//! matches the conditioned grasp label, and exactly 0 otherwise. The
//! optimal grasp is the archive-wide argmax; ties go to the higher contact
//! force, then to the lexicographically smallest id, so parallel and
//! sequential scans agree.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, NearestIndex, Point3, PointCloud};
use crate::object_model::Vocabulary;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("grasp {0:?} has no contact points")]
    NoContacts(String),
    #[error("task subpart cloud is empty")]
    EmptyTaskCloud,
    #[error("unknown subpart label {0:?}")]
    UnknownLabel(String),
    #[error("no grasp is compatible with the task (all scores are 0)")]
    NoCompatibleGrasp,
    #[error("no zero-score grasps available for the control group")]
    NoControls,
    #[error("invalid archive: {0}")]
    InvalidArchive(String),
    #[error("invalid score params: {0}")]
    InvalidParams(String),
    #[error("vocabulary does not partition the cloud: {0} duplicate, {1} uncovered")]
    BrokenPartition(usize, usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad archive file: {0}")]
    BadFile(#[from] serde_json::Error),
}

/// One 6-DoF grasp from the archive: pose, contact points, contact force.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GraspRecord {
    pub id: String,
    pub position: Point3,
    /// Unit quaternion (w, x, y, z). Stored and emitted but never scored.
    pub quaternion_wxyz: [f64; 4],
    pub contact_points: Vec<Point3>,
    /// Contact force in Newtons, read from the archive.
    pub force: f64,
}

impl GraspRecord {
    fn validate(&self) -> Result<(), ScoringError> {
        if self.id.is_empty() {
            return Err(ScoringError::InvalidArchive("grasp with empty id".into()));
        }
        if self.contact_points.is_empty() {
            return Err(ScoringError::NoContacts(self.id.clone()));
        }
        if self.contact_points.iter().any(|p| !p.is_finite()) || !self.position.is_finite() {
            return Err(ScoringError::InvalidArchive(format!(
                "grasp {:?} has non-finite geometry",
                self.id
            )));
        }
        let norm = self
            .quaternion_wxyz
            .iter()
            .map(|c| c * c)
            .sum::<f64>()
            .sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(ScoringError::InvalidArchive(format!(
                "grasp {:?} quaternion norm {norm} not within 1e-6 of 1",
                self.id
            )));
        }
        if !(self.force >= 0.0 && self.force.is_finite()) {
            return Err(ScoringError::InvalidArchive(format!(
                "grasp {:?} force {} must be finite and >= 0",
                self.id, self.force
            )));
        }
        Ok(())
    }
}

/// A precomputed grasp archive for one object.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GraspArchive {
    pub object_label: String,
    pub grasps: Vec<GraspRecord>,
}

impl GraspArchive {
    /// Checks the archive invariants: non-empty, unique ids, valid records.
    pub fn validate(&self) -> Result<(), ScoringError> {
        if self.grasps.is_empty() {
            return Err(ScoringError::InvalidArchive("archive has no grasps".into()));
        }
        let mut seen = BTreeSet::new();
        for g in &self.grasps {
            g.validate()?;
            if !seen.insert(g.id.as_str()) {
                return Err(ScoringError::InvalidArchive(format!(
                    "duplicate grasp id {:?}",
                    g.id
                )));
            }
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("archive serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), ScoringError> {
        fs::write(path, self.to_json_string())?;
        Ok(())
    }
}

/// Hook for external archive formats. Only the canonical JSON schema ships;
/// adapters for other grasp-archive layouts can implement this trait.
pub trait ArchiveImporter {
    fn import(&self, path: &Path) -> Result<GraspArchive, ScoringError>;
}

/// Importer for the canonical archive JSON schema.
pub struct CanonicalJsonImporter;

impl ArchiveImporter for CanonicalJsonImporter {
    fn import(&self, path: &Path) -> Result<GraspArchive, ScoringError> {
        let text = fs::read_to_string(path)?;
        let archive: GraspArchive = serde_json::from_str(&text)?;
        archive.validate()?;
        Ok(archive)
    }
}

/// Loads and validates an archive in the canonical schema.
pub fn read_archive(path: impl AsRef<Path>) -> Result<GraspArchive, ScoringError> {
    CanonicalJsonImporter.import(path.as_ref())
}

/// The task and the two conditioned subpart labels.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct TaskCondition {
    pub task: String,
    pub grasp_label: String,
    pub task_label: String,
}

/// Gains of the score function.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ScoreParams {
    pub k_force: f64,
    pub k_dist: f64,
}

impl Default for ScoreParams {
    fn default() -> Self {
        Self {
            k_force: 10.0,
            k_dist: 1.0,
        }
    }
}

impl ScoreParams {
    pub fn validate(&self) -> Result<(), ScoringError> {
        if !(self.k_force >= 0.0 && self.k_dist >= 0.0) {
            return Err(ScoringError::InvalidParams(
                "gains must be non-negative".into(),
            ));
        }
        if self.k_force == 0.0 && self.k_dist == 0.0 {
            return Err(ScoringError::InvalidParams("gains must not both be 0".into()));
        }
        Ok(())
    }
}

/// A grasp with its score and the quantities that produced it.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScoredGrasp {
    pub grasp: GraspRecord,
    pub score: f64,
    pub grasped_label: String,
    pub d_task: f64,
}

/// Mean of the contact points; equals the single point when only one exists.
pub fn representative_contact(g: &GraspRecord) -> Result<Point3, ScoringError> {
    if g.contact_points.is_empty() {
        return Err(ScoringError::NoContacts(g.id.clone()));
    }
    let n = g.contact_points.len() as f64;
    let mut s = [0.0f64; 3];
    for p in &g.contact_points {
        s[0] += p.x;
        s[1] += p.y;
        s[2] += p.z;
    }
    Ok(Point3::new(s[0] / n, s[1] / n, s[2] / n))
}

/// Minimum distance from any contact point to the task subpart cloud —
/// the conservative multi-contact extension of the single-point clearance.
pub fn task_distance(g: &GraspRecord, task_cloud: &PointCloud) -> Result<f64, ScoringError> {
    let index = NearestIndex::build(task_cloud)?;
    task_distance_indexed(g, &index)
}

fn task_distance_indexed(g: &GraspRecord, index: &NearestIndex) -> Result<f64, ScoringError> {
    if g.contact_points.is_empty() {
        return Err(ScoringError::NoContacts(g.id.clone()));
    }
    let mut best = f64::INFINITY;
    for &c in &g.contact_points {
        best = best.min(index.nearest_distance(c));
    }
    Ok(best)
}

/// Label of the subpart owning the cloud point nearest to the grasp's
/// representative contact; distance ties go to the lowest point index.
pub fn grasped_label(g: &GraspRecord, vocab: &Vocabulary) -> Result<String, ScoringError> {
    let scorer = Scorer::for_labeling(vocab)?;
    scorer.grasped_label(g)
}

/// Precomputed state for scoring many grasps against one (vocabulary,
/// condition, params) triple.
pub struct Scorer<'a> {
    vocab: &'a Vocabulary,
    condition: Option<&'a TaskCondition>,
    params: ScoreParams,
    whole_index: NearestIndex,
    task_index: Option<NearestIndex>,
    point_label: Vec<u16>,
}

impl<'a> Scorer<'a> {
    /// Builds the full scoring state. Validates the condition labels and
    /// the vocabulary partition.
    pub fn new(
        vocab: &'a Vocabulary,
        condition: &'a TaskCondition,
        params: ScoreParams,
    ) -> Result<Self, ScoringError> {
        params.validate()?;
        for label in [&condition.grasp_label, &condition.task_label] {
            if vocab.subpart(label).is_none() {
                return Err(ScoringError::UnknownLabel(label.clone()));
            }
        }
        let mut scorer = Self::for_labeling(vocab)?;
        let task_cloud = vocab
            .subpart_cloud(&condition.task_label)
            .map_err(|_| ScoringError::UnknownLabel(condition.task_label.clone()))?;
        scorer.task_index = Some(NearestIndex::build(&task_cloud)?);
        scorer.condition = Some(condition);
        scorer.params = params;
        Ok(scorer)
    }

    /// Builds only the grasped-label state (no condition needed).
    fn for_labeling(vocab: &'a Vocabulary) -> Result<Self, ScoringError> {
        let report = vocab.validate_partition();
        if !report.is_ok() {
            return Err(ScoringError::BrokenPartition(
                report.duplicate_indices.len(),
                report.uncovered_indices.len(),
            ));
        }
        let whole_index = NearestIndex::build(vocab.object().cloud())?;
        let mut point_label = vec![u16::MAX; vocab.n_points()];
        for (k, sp) in vocab.subparts().iter().enumerate() {
            for &i in sp.point_indices() {
                point_label[i] = k as u16;
            }
        }
        Ok(Self {
            vocab,
            condition: None,
            params: ScoreParams::default(),
            whole_index,
            task_index: None,
            point_label,
        })
    }

    pub fn grasped_label(&self, g: &GraspRecord) -> Result<String, ScoringError> {
        let contact = representative_contact(g)?;
        let (idx, _) = self.whole_index.nearest(contact);
        let slot = self.point_label[idx] as usize;
        Ok(self.vocab.subparts()[slot].label().to_string())
    }

    pub fn task_distance(&self, g: &GraspRecord) -> Result<f64, ScoringError> {
        let index = self.task_index.as_ref().ok_or(ScoringError::EmptyTaskCloud)?;
        task_distance_indexed(g, index)
    }

    /// Applies the score function to one grasp.
    pub fn score(&self, g: &GraspRecord) -> Result<ScoredGrasp, ScoringError> {
        let condition = self.condition.expect("scorer built with a condition");
        let grasped = self.grasped_label(g)?;
        let d_task = self.task_distance(g)?;
        let score = if grasped == condition.grasp_label {
            self.params.k_force * g.force + self.params.k_dist * d_task
        } else {
            0.0
        };
        Ok(ScoredGrasp {
            grasp: g.clone(),
            score,
            grasped_label: grasped,
            d_task,
        })
    }
}

/// Scores one grasp. Convenience wrapper over [`Scorer`].
pub fn score(
    g: &GraspRecord,
    condition: &TaskCondition,
    vocab: &Vocabulary,
    params: ScoreParams,
) -> Result<ScoredGrasp, ScoringError> {
    Scorer::new(vocab, condition, params)?.score(g)
}

/// True when `a` beats `b` under the (score, force, id) ordering.
fn beats(a: &ScoredGrasp, b: &ScoredGrasp) -> bool {
    if a.score != b.score {
        return a.score > b.score;
    }
    if a.grasp.force != b.grasp.force {
        return a.grasp.force > b.grasp.force;
    }
    a.grasp.id < b.grasp.id
}

/// Scores every grasp, sorted by descending (score, force, ascending id).
pub fn rank_archive(
    archive: &GraspArchive,
    condition: &TaskCondition,
    vocab: &Vocabulary,
    params: ScoreParams,
) -> Result<Vec<ScoredGrasp>, ScoringError> {
    archive.validate()?;
    let scorer = Scorer::new(vocab, condition, params)?;
    let mut scored = archive
        .grasps
        .iter()
        .map(|g| scorer.score(g))
        .collect::<Result<Vec<_>, _>>()?;
    scored.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(b.grasp.force.total_cmp(&a.grasp.force))
            .then(a.grasp.id.cmp(&b.grasp.id))
    });
    Ok(scored)
}

/// The argmax grasp. Errors with [`ScoringError::NoCompatibleGrasp`] when
/// every grasp scores 0 — falling back silently would put the gripper on
/// the wrong subpart; use [`max_force_grasp`] for the opt-in fallback.
pub fn select_optimal(
    archive: &GraspArchive,
    condition: &TaskCondition,
    vocab: &Vocabulary,
    params: ScoreParams,
) -> Result<ScoredGrasp, ScoringError> {
    archive.validate()?;
    let scorer = Scorer::new(vocab, condition, params)?;
    let mut best: Option<ScoredGrasp> = None;
    for g in &archive.grasps {
        let s = scorer.score(g)?;
        if best.as_ref().map_or(true, |b| beats(&s, b)) {
            best = Some(s);
        }
    }
    let best = best.expect("archive validated non-empty");
    if best.score == 0.0 {
        return Err(ScoringError::NoCompatibleGrasp);
    }
    Ok(best)
}

/// Fallback for `NoCompatibleGrasp`: the archive-wide maximum-force grasp
/// (ties by smallest id), scored for reporting.
pub fn max_force_grasp(
    archive: &GraspArchive,
    condition: &TaskCondition,
    vocab: &Vocabulary,
    params: ScoreParams,
) -> Result<ScoredGrasp, ScoringError> {
    archive.validate()?;
    let scorer = Scorer::new(vocab, condition, params)?;
    let g = archive
        .grasps
        .iter()
        .max_by(|a, b| a.force.total_cmp(&b.force).then(b.id.cmp(&a.id)))
        .expect("archive validated non-empty");
    scorer.score(g)
}

/// Seeded control sample: distinct zero-score grasps for the control group.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ControlSample {
    pub grasps: Vec<GraspRecord>,
    /// True when fewer than the requested `k` zero-score grasps exist.
    pub shortfall: bool,
}

/// Draws `k` distinct zero-score grasps uniformly with a seeded generator.
/// Candidates are sorted by id first, so the sample does not depend on
/// archive file order. Fewer than `k` candidates are all returned with the
/// shortfall flag set.
pub fn sample_controls(
    archive: &GraspArchive,
    condition: &TaskCondition,
    vocab: &Vocabulary,
    params: ScoreParams,
    k: usize,
    seed: u64,
) -> Result<ControlSample, ScoringError> {
    if k == 0 {
        return Err(ScoringError::InvalidParams("control count k must be >= 1".into()));
    }
    archive.validate()?;
    let scorer = Scorer::new(vocab, condition, params)?;
    let mut zero: Vec<&GraspRecord> = Vec::new();
    for g in &archive.grasps {
        if scorer.score(g)?.score == 0.0 {
            zero.push(g);
        }
    }
    if zero.is_empty() {
        return Err(ScoringError::NoControls);
    }
    zero.sort_by(|a, b| a.id.cmp(&b.id));
    if zero.len() <= k {
        let shortfall = zero.len() < k;
        return Ok(ControlSample {
            grasps: zero.into_iter().cloned().collect(),
            shortfall,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, zero.len(), k);
    let mut indices: Vec<usize> = picked.into_iter().collect();
    indices.sort_unstable();
    Ok(ControlSample {
        grasps: indices.into_iter().map(|i| zero[i].clone()).collect(),
        shortfall: false,
    })
}
