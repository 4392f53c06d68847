//! Objects, labeled subparts, and the vocabulary partition.
//!
//! A [`Vocabulary`] is the set of labeled subparts of one object. Its
//! subparts must partition the object's point indices — disjoint sets whose
//! union covers every point. Construction checks structure (labels,
//! ranges); [`Vocabulary::validate_partition`] checks the partition itself
//! and reports any duplicate or uncovered indices.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, NearestIndex, Point3, PointCloud};

/// Reserved label for unassignable regions; never a vocabulary subpart.
pub const BACKGROUND_LABEL: &str = "background";

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("object label must be non-empty")]
    EmptyObjectLabel,
    #[error("subpart label must be non-empty")]
    EmptySubpartLabel,
    #[error("label {0:?} is reserved")]
    ReservedLabel(String),
    #[error("duplicate subpart label {0:?}")]
    DuplicateLabel(String),
    #[error("vocabulary has no subparts")]
    NoSubparts,
    #[error("subpart {label:?} references point {index} outside [0, {n_points})")]
    IndexOutOfRange {
        label: String,
        index: usize,
        n_points: usize,
    },
    #[error("unknown subpart label {0:?}")]
    UnknownLabel(String),
    #[error("label assignment is empty")]
    EmptyAssignment,
    #[error("cloud has {cloud} points but vocabulary expects {expected}")]
    PointCountMismatch { cloud: usize, expected: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad vocabulary file: {0}")]
    BadFile(#[from] serde_json::Error),
}

/// An object: a semantic label plus its point cloud.
#[derive(Debug, Clone)]
pub struct ObjectModel {
    label: String,
    cloud: PointCloud,
}

impl ObjectModel {
    pub fn new(label: impl Into<String>, cloud: PointCloud) -> Result<Self, VocabError> {
        let label = label.into();
        if label.trim().is_empty() {
            return Err(VocabError::EmptyObjectLabel);
        }
        Ok(Self { label, cloud })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }
}

/// A labeled subpart: a semantic label plus the point indices it owns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subpart {
    label: String,
    point_indices: BTreeSet<usize>,
}

impl Subpart {
    pub fn new(
        label: impl Into<String>,
        point_indices: BTreeSet<usize>,
    ) -> Result<Self, VocabError> {
        let label = label.into();
        if label.trim().is_empty() {
            return Err(VocabError::EmptySubpartLabel);
        }
        Ok(Self {
            label,
            point_indices,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn point_indices(&self) -> &BTreeSet<usize> {
        &self.point_indices
    }

    pub fn len(&self) -> usize {
        self.point_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_indices.is_empty()
    }
}

/// Partition check result: empty report means the partition holds.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PartitionReport {
    /// Indices claimed by more than one subpart.
    pub duplicate_indices: Vec<usize>,
    /// Indices claimed by no subpart.
    pub uncovered_indices: Vec<usize>,
}

impl PartitionReport {
    pub fn is_ok(&self) -> bool {
        self.duplicate_indices.is_empty() && self.uncovered_indices.is_empty()
    }
}

/// The labeled subparts of one object. Subparts are stored sorted by label.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    object: ObjectModel,
    subparts: Vec<Subpart>,
}

impl Vocabulary {
    /// Builds a vocabulary. Empty subparts are dropped; at least one
    /// non-empty subpart must remain. Labels must be unique, non-empty and
    /// not the reserved background label; indices must be in range.
    /// The partition property itself is *not* enforced here — use
    /// [`Vocabulary::validate_partition`].
    pub fn new(object: ObjectModel, subparts: Vec<Subpart>) -> Result<Self, VocabError> {
        let n_points = object.cloud().len();
        let mut kept: Vec<Subpart> = Vec::with_capacity(subparts.len());
        let mut seen = BTreeSet::new();
        for sp in subparts {
            if sp.is_empty() {
                continue;
            }
            if sp.label == BACKGROUND_LABEL {
                return Err(VocabError::ReservedLabel(sp.label));
            }
            if !seen.insert(sp.label.clone()) {
                return Err(VocabError::DuplicateLabel(sp.label));
            }
            if let Some(&bad) = sp.point_indices.iter().find(|&&i| i >= n_points) {
                return Err(VocabError::IndexOutOfRange {
                    label: sp.label,
                    index: bad,
                    n_points,
                });
            }
            kept.push(sp);
        }
        if kept.is_empty() {
            return Err(VocabError::NoSubparts);
        }
        kept.sort_by(|a, b| a.label.cmp(&b.label));
        Ok(Self {
            object,
            subparts: kept,
        })
    }

    /// Builds a vocabulary from a total point → label map.
    pub fn from_label_map(
        object: ObjectModel,
        labels: &BTreeMap<usize, String>,
    ) -> Result<Self, VocabError> {
        let mut groups: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
        for (&idx, label) in labels {
            groups.entry(label.as_str()).or_default().insert(idx);
        }
        let subparts = groups
            .into_iter()
            .map(|(label, set)| Subpart::new(label, set))
            .collect::<Result<Vec<_>, _>>()?;
        Vocabulary::new(object, subparts)
    }

    pub fn object(&self) -> &ObjectModel {
        &self.object
    }

    pub fn n_points(&self) -> usize {
        self.object.cloud().len()
    }

    /// Subparts sorted by label.
    pub fn subparts(&self) -> &[Subpart] {
        &self.subparts
    }

    /// Subpart labels, sorted.
    pub fn labels(&self) -> Vec<String> {
        self.subparts.iter().map(|s| s.label.clone()).collect()
    }

    pub fn subpart(&self, label: &str) -> Option<&Subpart> {
        self.subparts.iter().find(|s| s.label == label)
    }

    /// Checks disjointness and coverage of the subpart index sets.
    pub fn validate_partition(&self) -> PartitionReport {
        let n = self.n_points();
        let mut counts = vec![0u32; n];
        for sp in &self.subparts {
            for &i in &sp.point_indices {
                counts[i] += 1;
            }
        }
        PartitionReport {
            duplicate_indices: (0..n).filter(|&i| counts[i] > 1).collect(),
            uncovered_indices: (0..n).filter(|&i| counts[i] == 0).collect(),
        }
    }

    /// The cloud restricted to one subpart, original relative point order.
    pub fn subpart_cloud(&self, label: &str) -> Result<PointCloud, VocabError> {
        let sp = self
            .subpart(label)
            .ok_or_else(|| VocabError::UnknownLabel(label.to_string()))?;
        let indices: Vec<usize> = sp.point_indices.iter().copied().collect();
        Ok(self.object.cloud().select(&indices)?)
    }

    /// Total point → label map (only meaningful when the partition holds).
    pub fn label_map(&self) -> BTreeMap<usize, String> {
        let mut map = BTreeMap::new();
        for sp in &self.subparts {
            for &i in &sp.point_indices {
                map.insert(i, sp.label.clone());
            }
        }
        map
    }
}

/// Extends a partial point → label map to a total one: every unlabeled
/// point receives the label of its Euclidean-nearest labeled point, ties
/// going to the lowest labeled index. Labeled points are unchanged.
pub fn propagate_labels(
    cloud: &PointCloud,
    partial: &BTreeMap<usize, String>,
) -> Result<BTreeMap<usize, String>, VocabError> {
    if partial.is_empty() {
        return Err(VocabError::EmptyAssignment);
    }
    let n = cloud.len();
    if let Some((&bad, _)) = partial.iter().find(|(&i, _)| i >= n) {
        return Err(VocabError::IndexOutOfRange {
            label: partial[&bad].clone(),
            index: bad,
            n_points: n,
        });
    }

    // seed points in ascending index order, so the nearest-index tie rule
    // (lowest local index) matches the lowest-labeled-index rule
    let seed_indices: Vec<usize> = partial.keys().copied().collect();
    let seed_points: Vec<Point3> = seed_indices
        .iter()
        .map(|&i| cloud.get(i).expect("seed in range"))
        .collect();
    let seed_cloud = PointCloud::new(seed_points, cloud.frame_id())?;
    let index = NearestIndex::build(&seed_cloud)?;

    let mut total = BTreeMap::new();
    for i in 0..n {
        if let Some(label) = partial.get(&i) {
            total.insert(i, label.clone());
        } else {
            let (local, _) = index.nearest(cloud.get(i).expect("in range"));
            let seed = seed_indices[local];
            total.insert(i, partial[&seed].clone());
        }
    }
    Ok(total)
}

/// Serialized vocabulary: `{"object_label", "cloud_file", "n_points",
/// "subparts": [{"label", "point_indices"}]}` with indices ascending and
/// subparts sorted by label.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct VocabularyFile {
    pub object_label: String,
    pub cloud_file: String,
    pub n_points: usize,
    pub subparts: Vec<SubpartEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct SubpartEntry {
    pub label: String,
    pub point_indices: Vec<usize>,
}

impl VocabularyFile {
    pub fn from_vocabulary(vocab: &Vocabulary, cloud_file: impl Into<String>) -> Self {
        Self {
            object_label: vocab.object().label().to_string(),
            cloud_file: cloud_file.into(),
            n_points: vocab.n_points(),
            subparts: vocab
                .subparts()
                .iter()
                .map(|s| SubpartEntry {
                    label: s.label().to_string(),
                    point_indices: s.point_indices().iter().copied().collect(),
                })
                .collect(),
        }
    }

    /// Pretty JSON with a trailing newline, byte-stable for golden tests.
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("vocabulary serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), VocabError> {
        fs::write(path, self.to_json_string())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, VocabError> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn labels(&self) -> Vec<String> {
        self.subparts.iter().map(|s| s.label.clone()).collect()
    }

    /// Rebuilds the in-memory vocabulary against its cloud.
    pub fn into_vocabulary(self, cloud: PointCloud) -> Result<Vocabulary, VocabError> {
        if cloud.len() != self.n_points {
            return Err(VocabError::PointCountMismatch {
                cloud: cloud.len(),
                expected: self.n_points,
            });
        }
        let object = ObjectModel::new(self.object_label, cloud)?;
        let subparts = self
            .subparts
            .into_iter()
            .map(|e| Subpart::new(e.label, e.point_indices.into_iter().collect()))
            .collect::<Result<Vec<_>, _>>()?;
        Vocabulary::new(object, subparts)
    }

    /// Reads the file and loads its cloud; a relative `cloud_file` is
    /// resolved against the vocabulary file's directory.
    pub fn load_with_cloud(path: impl AsRef<Path>) -> Result<Vocabulary, VocabError> {
        let path = path.as_ref();
        let file = Self::read(path)?;
        let cloud_path = {
            let p = Path::new(&file.cloud_file);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                path.parent().unwrap_or(Path::new(".")).join(p)
            }
        };
        let cloud = crate::geometry::io::load_cloud(&cloud_path).map_err(|e| {
            VocabError::Io(std::io::Error::other(format!(
                "loading {}: {e}",
                cloud_path.display()
            )))
        })?;
        file.into_vocabulary(cloud)
    }
}
