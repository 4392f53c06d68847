//! Batch-run manifest: the task-object combinations to process, the
//! provider config, and the sampling seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use graspvoc::pipeline::SegmentationParams;
use graspvoc::scoring::ScoreParams;

use crate::CliError;

fn default_controls() -> usize {
    3
}

/// One object with the tasks to condition on. Paths are relative to the
/// manifest file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestEntry {
    pub object_label: String,
    pub cloud_file: String,
    pub archive_file: String,
    pub tasks: Vec<String>,
    /// task → ground-truth file for the optional eval stage.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub ground_truth: BTreeMap<String, String>,
}

/// The full batch description. The seed is mandatory so control sampling
/// is reproducible.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub provider_config: String,
    pub seed: u64,
    /// Control grasps sampled per task (0 disables the control stage).
    #[serde(default = "default_controls")]
    pub controls: usize,
    #[serde(default)]
    pub score_params: Option<ScoreParams>,
    #[serde(default)]
    pub segmentation: Option<SegmentationParams>,
    pub entries: Vec<ManifestEntry>,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let manifest: RunManifest = crate::read_json(path)?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.entries.is_empty() {
            return Err(CliError::Validation("manifest has no entries".into()));
        }
        for entry in &self.entries {
            if entry.tasks.is_empty() {
                return Err(CliError::Validation(format!(
                    "entry {:?} has no tasks",
                    entry.object_label
                )));
            }
            for task in entry.ground_truth.keys() {
                if !entry.tasks.contains(task) {
                    return Err(CliError::Validation(format!(
                        "entry {:?} has ground truth for unknown task {task:?}",
                        entry.object_label
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Resolves a manifest-relative path.
pub fn resolve(base_dir: &Path, file: &str) -> PathBuf {
    let p = Path::new(file);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

/// Directory-safe slug for a task name.
pub fn task_slug(task: &str) -> String {
    let slug: String = task
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    if slug.is_empty() {
        "task".to_string()
    } else {
        slug
    }
}
