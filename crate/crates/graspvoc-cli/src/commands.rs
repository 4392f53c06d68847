//! The five pipeline commands: segment, condition, rank, eval, pipeline.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use clap::Args;
use serde::{Deserialize, Serialize};

use graspvoc::evaluation::{
    average_runs, region_metrics, GroundTruthFile, MetricsReport, PairMetrics,
};
use graspvoc::geometry::io::load_cloud;
use graspvoc::object_model::{ObjectModel, VocabularyFile};
use graspvoc::pipeline::{segment_object, SegmentationParams};
use graspvoc::providers::{
    ConditioningRequest, ProviderConfig, ProviderSet,
};
use graspvoc::scoring::{
    max_force_grasp, rank_archive, read_archive, sample_controls, select_optimal, ControlSample,
    ScoreParams, ScoredGrasp, ScoringError, TaskCondition,
};
use graspvoc::viewrender::encode_masks;

use crate::manifest::{resolve, task_slug, RunManifest};
use crate::{read_json, write_json, CliError};

/// Ranked output: the condition and params used, the winner, the full
/// scored list (descending), and the optional control sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankedFile {
    pub object_label: String,
    pub condition: TaskCondition,
    pub params: ScoreParams,
    pub fallback_used: bool,
    pub optimal: ScoredGrasp,
    pub ranked: Vec<ScoredGrasp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controls: Option<ControlSample>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Point cloud file (.ply ascii or .xyz)
    #[arg(long)]
    pub cloud: PathBuf,
    /// Semantic label of the object, e.g. "mug"
    #[arg(long)]
    pub object_label: String,
    /// Provider config JSON
    #[arg(long)]
    pub provider_config: PathBuf,
    /// Output vocabulary JSON
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 512)]
    pub width: u32,
    #[arg(long, default_value_t = 512)]
    pub height: u32,
    #[arg(long, default_value_t = 0.05)]
    pub margin: f64,
    #[arg(long, default_value_t = 2)]
    pub splat_radius: u32,
    #[arg(long, default_value_t = 0.6)]
    pub depth_quantile: f64,
    #[arg(long, default_value_t = 5)]
    pub min_subpart_points: usize,
    /// Write the rendered depth image (binary PGM) here
    #[arg(long)]
    pub debug_render: Option<PathBuf>,
    /// Write the provider masks (RLE JSON) here
    #[arg(long)]
    pub debug_masks: Option<PathBuf>,
}

impl SegmentArgs {
    fn params(&self) -> SegmentationParams {
        SegmentationParams {
            resolution: (self.width, self.height),
            margin_fraction: self.margin,
            splat_radius_px: self.splat_radius,
            depth_quantile: self.depth_quantile,
            min_subpart_points: self.min_subpart_points,
        }
    }
}

pub fn run_segment(args: &SegmentArgs) -> Result<(), CliError> {
    let cloud = load_cloud(&args.cloud)?;
    let object = ObjectModel::new(args.object_label.clone(), cloud)?;
    let config = ProviderConfig::read(&args.provider_config)?;
    let providers = ProviderSet::from_config(&config)?;

    let output = segment_object(&object, &providers, &args.params())?;

    let vocab_file = VocabularyFile::from_vocabulary(
        &output.vocabulary,
        args.cloud.to_string_lossy().as_ref(),
    );
    vocab_file.write(&args.out)?;

    if let Some(path) = &args.debug_render {
        fs::write(path, output.render.to_pgm())
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    if let Some(path) = &args.debug_masks {
        let file = encode_masks(&output.masks, (output.render.width, output.render.height));
        write_json(path, &file)?;
    }
    eprintln!(
        "segmented {:?} into {} subparts: {}",
        object.label(),
        output.vocabulary.subparts().len(),
        output.vocabulary.labels().join(", ")
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct ConditionArgs {
    /// Vocabulary JSON from `segment`
    #[arg(long)]
    pub vocab: PathBuf,
    /// Task text, e.g. "cut"
    #[arg(long)]
    pub task: String,
    /// Provider config JSON
    #[arg(long)]
    pub provider_config: PathBuf,
    /// Output condition JSON
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_condition(args: &ConditionArgs) -> Result<(), CliError> {
    let vocab_file = VocabularyFile::read(&args.vocab)?;
    let labels = vocab_file.labels();
    if labels.is_empty() {
        return Err(CliError::Validation(format!(
            "{} has no subparts",
            args.vocab.display()
        )));
    }
    let config = ProviderConfig::read(&args.provider_config)?;
    let providers = ProviderSet::from_config(&config)?;

    let response = providers.condition(&ConditioningRequest {
        task: args.task.clone(),
        labels,
    })?;
    let condition = TaskCondition {
        task: args.task.clone(),
        grasp_label: response.grasp_label,
        task_label: response.task_label,
    };
    write_json(&args.out, &condition)?;
    eprintln!(
        "task {:?}: grasp {:?}, task part {:?}",
        condition.task, condition.grasp_label, condition.task_label
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// Grasp archive JSON
    #[arg(long)]
    pub archive: PathBuf,
    /// Vocabulary JSON (its cloud_file will be loaded)
    #[arg(long)]
    pub vocab: PathBuf,
    /// Condition JSON from `condition`
    #[arg(long)]
    pub condition: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    pub k_force: f64,
    #[arg(long, default_value_t = 1.0)]
    pub k_dist: f64,
    /// When no grasp is compatible, return the archive-wide max-force grasp
    /// instead of failing
    #[arg(long)]
    pub fallback_max_force: bool,
    /// Sample this many zero-score control grasps
    #[arg(long)]
    pub controls: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output ranked JSON
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_rank(args: &RankArgs) -> Result<(), CliError> {
    let archive = read_archive(&args.archive)?;
    let vocab = VocabularyFile::load_with_cloud(&args.vocab)?;
    let condition: TaskCondition = read_json(&args.condition)?;
    let params = ScoreParams {
        k_force: args.k_force,
        k_dist: args.k_dist,
    };

    let ranked = rank_archive(&archive, &condition, &vocab, params)?;
    let (optimal, fallback_used) = match select_optimal(&archive, &condition, &vocab, params) {
        Ok(best) => (best, false),
        Err(ScoringError::NoCompatibleGrasp) if args.fallback_max_force => {
            (max_force_grasp(&archive, &condition, &vocab, params)?, true)
        }
        Err(e) => return Err(e.into()),
    };
    let controls = match args.controls {
        None => None,
        Some(k) => Some(sample_controls(
            &archive, &condition, &vocab, params, k, args.seed,
        )?),
    };

    let out = RankedFile {
        object_label: archive.object_label.clone(),
        condition,
        params,
        fallback_used,
        optimal,
        ranked,
        controls,
    };
    write_json(&args.out, &out)?;
    eprintln!(
        "optimal grasp {:?} with score {}{}",
        out.optimal.grasp.id,
        out.optimal.score,
        if fallback_used { " (max-force fallback)" } else { "" }
    );
    Ok(())
}

/// One (vocabulary, condition, ground truth) triple for evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalPair {
    pub vocab_file: String,
    pub condition_file: String,
    pub gt_file: String,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSON list of {vocab_file, condition_file, gt_file}
    #[arg(long, conflicts_with_all = ["vocab", "condition", "gt"])]
    pub pairs: Option<PathBuf>,
    #[arg(long, requires_all = ["condition", "gt"])]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub condition: Option<PathBuf>,
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Recompute the metrics this many times and report the average
    #[arg(long, default_value_t = 1)]
    pub repeat: usize,
    #[arg(long)]
    pub out_json: PathBuf,
    #[arg(long)]
    pub out_csv: PathBuf,
}

/// Computes the predicted-region metrics for one triple.
fn eval_pair(
    vocab_path: &Path,
    condition_path: &Path,
    gt_path: &Path,
    repeat: usize,
) -> Result<PairMetrics, CliError> {
    let vocab = VocabularyFile::read(vocab_path)?;
    let condition: TaskCondition = read_json(condition_path)?;
    let gt_file = GroundTruthFile::read(gt_path)?;

    if gt_file.n_points != vocab.n_points {
        return Err(CliError::Validation(format!(
            "{}: ground truth has {} points but vocabulary has {}",
            gt_path.display(),
            gt_file.n_points,
            vocab.n_points
        )));
    }
    if gt_file.object_label != vocab.object_label {
        return Err(CliError::Validation(format!(
            "{}: ground truth object {:?} does not match vocabulary object {:?}",
            gt_path.display(),
            gt_file.object_label,
            vocab.object_label
        )));
    }
    if gt_file.task != condition.task {
        return Err(CliError::Validation(format!(
            "{}: ground truth task {:?} does not match condition task {:?}",
            gt_path.display(),
            gt_file.task,
            condition.task
        )));
    }

    let pred: BTreeSet<usize> = vocab
        .subparts
        .iter()
        .find(|s| s.label == condition.grasp_label)
        .ok_or_else(|| {
            CliError::Validation(format!(
                "condition grasp label {:?} not in vocabulary",
                condition.grasp_label
            ))
        })?
        .point_indices
        .iter()
        .copied()
        .collect();

    let gt = gt_file.consolidate()?;
    let repeat = repeat.max(1);
    let runs: Vec<_> = (0..repeat)
        .map(|_| region_metrics(&pred, &gt))
        .collect::<Result<_, _>>()?;
    Ok(PairMetrics {
        object_label: gt_file.object_label,
        task: gt_file.task,
        metrics: average_runs(&runs)?,
    })
}

pub fn run_eval(args: &EvalArgs) -> Result<(), CliError> {
    let triples: Vec<(PathBuf, PathBuf, PathBuf)> = if let Some(pairs_path) = &args.pairs {
        let base = pairs_path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let pairs: Vec<EvalPair> = read_json(pairs_path)?;
        pairs
            .into_iter()
            .map(|p| {
                (
                    resolve(&base, &p.vocab_file),
                    resolve(&base, &p.condition_file),
                    resolve(&base, &p.gt_file),
                )
            })
            .collect()
    } else {
        match (&args.vocab, &args.condition, &args.gt) {
            (Some(v), Some(c), Some(g)) => vec![(v.clone(), c.clone(), g.clone())],
            _ => {
                return Err(CliError::Validation(
                    "give either --pairs or all of --vocab/--condition/--gt".into(),
                ))
            }
        }
    };
    if triples.is_empty() {
        return Err(CliError::Validation("no evaluation pairs given".into()));
    }

    let mut rows = Vec::new();
    for (vocab, condition, gt) in &triples {
        rows.push(eval_pair(vocab, condition, gt, args.repeat)?);
    }
    let report = MetricsReport::new(rows)?;
    write_json(&args.out_json, &report)?;
    fs::write(&args.out_csv, report.to_csv_string())
        .map_err(|e| CliError::Io(format!("{}: {e}", args.out_csv.display())))?;
    eprintln!(
        "macro average over {} pairs: wIoU {:.4}, precision {:.4}, recall {:.4}",
        report.pairs.len(),
        report.macro_average.weighted_iou,
        report.macro_average.precision,
        report.macro_average.recall
    );
    Ok(())
}

#[derive(Debug, Args, Default)]
pub struct PipelineArgs {
    /// Run manifest JSON
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory receiving the run directory
    #[arg(long)]
    pub out: PathBuf,
    /// Run directory name (default: run-<UTC timestamp>)
    #[arg(long)]
    pub run_id: Option<String>,
    /// Concurrent manifest entries
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Write debug render/mask artifacts per entry
    #[arg(long)]
    pub debug: bool,
    /// Override the manifest's k_force gain
    #[arg(long)]
    pub k_force: Option<f64>,
    /// Override the manifest's k_dist gain
    #[arg(long)]
    pub k_dist: Option<f64>,
    /// Override the manifest's control sample size
    #[arg(long)]
    pub controls: Option<usize>,
    /// Override the manifest's seed
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
struct TaskRow {
    object_label: String,
    task: String,
    status: Result<(String, f64), (i32, String)>, // ok: (optimal id, score)
    metrics: Option<PairMetrics>,
}

/// Processes one manifest entry; failures are recorded per task.
fn run_entry(
    entry: &crate::manifest::ManifestEntry,
    manifest: &RunManifest,
    manifest_dir: &Path,
    providers: &ProviderSet,
    entry_dir: &Path,
    debug: bool,
) -> Vec<TaskRow> {
    let row_err = |task: &str, e: CliError| TaskRow {
        object_label: entry.object_label.clone(),
        task: task.to_string(),
        status: Err((e.exit_code(), e.to_string())),
        metrics: None,
    };

    let setup = || -> Result<_, CliError> {
        fs::create_dir_all(entry_dir)
            .map_err(|e| CliError::Io(format!("{}: {e}", entry_dir.display())))?;
        let cloud_path = resolve(manifest_dir, &entry.cloud_file);
        let archive_path = resolve(manifest_dir, &entry.archive_file);
        let cloud = load_cloud(&cloud_path)?;
        let archive = read_archive(&archive_path)?;
        let object = ObjectModel::new(entry.object_label.clone(), cloud)?;
        let params = manifest.segmentation.unwrap_or_default();
        let output = segment_object(&object, providers, &params)?;

        let vocab_file = VocabularyFile::from_vocabulary(
            &output.vocabulary,
            cloud_path.to_string_lossy().as_ref(),
        );
        vocab_file.write(entry_dir.join("vocabulary.json"))?;
        if debug {
            fs::write(entry_dir.join("render.pgm"), output.render.to_pgm())
                .map_err(|e| CliError::Io(e.to_string()))?;
            let masks = encode_masks(&output.masks, (output.render.width, output.render.height));
            write_json(&entry_dir.join("masks.json"), &masks)?;
        }
        Ok((archive, output.vocabulary))
    };

    let (archive, vocabulary) = match setup() {
        Ok(v) => v,
        Err(e) => {
            // the whole entry is down: report every task as failed
            return entry.tasks.iter().map(|t| row_err(t, clone_err(&e))).collect();
        }
    };

    let params = manifest.score_params.unwrap_or_default();
    let mut rows = Vec::new();
    for task in &entry.tasks {
        let task_dir = entry_dir.join(task_slug(task));
        let run_task = || -> Result<TaskRow, CliError> {
            fs::create_dir_all(&task_dir)
                .map_err(|e| CliError::Io(format!("{}: {e}", task_dir.display())))?;

            let response = providers.condition(&ConditioningRequest {
                task: task.clone(),
                labels: vocabulary.labels(),
            })?;
            let condition = TaskCondition {
                task: task.clone(),
                grasp_label: response.grasp_label,
                task_label: response.task_label,
            };
            write_json(&task_dir.join("condition.json"), &condition)?;

            let ranked = rank_archive(&archive, &condition, &vocabulary, params)?;
            let optimal = select_optimal(&archive, &condition, &vocabulary, params)?;
            let controls = if manifest.controls > 0 {
                Some(sample_controls(
                    &archive,
                    &condition,
                    &vocabulary,
                    params,
                    manifest.controls,
                    manifest.seed,
                )?)
            } else {
                None
            };
            let ranked_file = RankedFile {
                object_label: archive.object_label.clone(),
                condition: condition.clone(),
                params,
                fallback_used: false,
                optimal: optimal.clone(),
                ranked,
                controls,
            };
            write_json(&task_dir.join("ranked.json"), &ranked_file)?;

            let metrics = match entry.ground_truth.get(task) {
                None => None,
                Some(gt_file) => {
                    let gt_path = resolve(manifest_dir, gt_file);
                    let pair = eval_pair(
                        &entry_dir.join("vocabulary.json"),
                        &task_dir.join("condition.json"),
                        &gt_path,
                        1,
                    )?;
                    write_json(&task_dir.join("metrics.json"), &pair)?;
                    Some(pair)
                }
            };
            Ok(TaskRow {
                object_label: entry.object_label.clone(),
                task: task.clone(),
                status: Ok((optimal.grasp.id.clone(), optimal.score)),
                metrics,
            })
        };
        rows.push(run_task().unwrap_or_else(|e| row_err(task, e)));
    }
    rows
}

fn clone_err(e: &CliError) -> CliError {
    match e {
        CliError::Io(s) => CliError::Io(s.clone()),
        CliError::Provider(s) => CliError::Provider(s.clone()),
        CliError::Validation(s) => CliError::Validation(s.clone()),
        CliError::NoCompatibleGrasp => CliError::NoCompatibleGrasp,
        CliError::EntriesFailed {
            failed,
            total,
            first_code,
        } => CliError::EntriesFailed {
            failed: *failed,
            total: *total,
            first_code: *first_code,
        },
    }
}

pub fn run_pipeline(args: &PipelineArgs) -> Result<PathBuf, CliError> {
    let mut manifest = RunManifest::read(&args.manifest)?;
    // flag > manifest > built-in default
    if args.k_force.is_some() || args.k_dist.is_some() {
        let base = manifest.score_params.unwrap_or_default();
        manifest.score_params = Some(ScoreParams {
            k_force: args.k_force.unwrap_or(base.k_force),
            k_dist: args.k_dist.unwrap_or(base.k_dist),
        });
    }
    if let Some(controls) = args.controls {
        manifest.controls = controls;
    }
    if let Some(seed) = args.seed {
        manifest.seed = seed;
    }
    let manifest_dir = args
        .manifest
        .parent()
        .unwrap_or(Path::new("."))
        .to_path_buf();

    let config_path = resolve(&manifest_dir, &manifest.provider_config);
    let config = ProviderConfig::read(&config_path)?;
    let providers = ProviderSet::from_config(&config)?;

    let run_id = args
        .run_id
        .clone()
        .unwrap_or_else(|| format!("run-{}", chrono::Utc::now().format("%Y%m%d-%H%M%S")));
    let run_dir = args.out.join(run_id);
    fs::create_dir_all(&run_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", run_dir.display())))?;

    // run record: the manifest as given, the effective manifest after flag
    // overrides, and the effective provider config
    let manifest_copy = fs::read_to_string(&args.manifest)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.manifest.display())))?;
    fs::write(run_dir.join("manifest.json"), manifest_copy)
        .map_err(|e| CliError::Io(e.to_string()))?;
    write_json(&run_dir.join("manifest.effective.json"), &manifest)?;
    config.write(run_dir.join("provider_config.json"))?;

    let entries_dir = run_dir.join("entries");
    let n = manifest.entries.len();
    let mut slots: Vec<Option<Vec<TaskRow>>> = Vec::new();
    slots.resize_with(n, || None);
    let slots = Mutex::new(slots);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let jobs = args.jobs.clamp(1, n.max(1));

    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let entry = &manifest.entries[i];
                let entry_dir = entries_dir.join(&entry.object_label);
                let rows = run_entry(
                    entry,
                    &manifest,
                    &manifest_dir,
                    &providers,
                    &entry_dir,
                    args.debug,
                );
                slots.lock().expect("slots lock")[i] = Some(rows);
            });
        }
    });

    let rows: Vec<TaskRow> = slots
        .into_inner()
        .expect("slots lock")
        .into_iter()
        .flat_map(|r| r.expect("every entry processed"))
        .collect();

    // aggregate metrics over every evaluated pair
    let pairs: Vec<PairMetrics> = rows.iter().filter_map(|r| r.metrics.clone()).collect();
    if !pairs.is_empty() {
        let report = MetricsReport::new(pairs)?;
        write_json(&run_dir.join("metrics.json"), &report)?;
        fs::write(run_dir.join("metrics.csv"), report.to_csv_string())
            .map_err(|e| CliError::Io(e.to_string()))?;
    }

    // summary table, to file and stdout
    let mut summary = String::from("object_label\ttask\tstatus\toptimal_id\tscore\tdetail\n");
    for row in &rows {
        match &row.status {
            Ok((id, score)) => summary.push_str(&format!(
                "{}\t{}\tok\t{}\t{}\t\n",
                row.object_label, row.task, id, score
            )),
            Err((code, msg)) => summary.push_str(&format!(
                "{}\t{}\terror\t\t\texit {code}: {msg}\n",
                row.object_label, row.task
            )),
        }
    }
    fs::write(run_dir.join("summary.tsv"), &summary)
        .map_err(|e| CliError::Io(e.to_string()))?;
    print!("{summary}");

    let failures: Vec<&TaskRow> = rows.iter().filter(|r| r.status.is_err()).collect();
    if let Some(first) = failures.first() {
        let first_code = first.status.as_ref().err().map(|(c, _)| *c).unwrap_or(1);
        return Err(CliError::EntriesFailed {
            failed: failures.len(),
            total: rows.len(),
            first_code,
        });
    }
    Ok(run_dir)
}
