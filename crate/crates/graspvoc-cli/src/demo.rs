//! Materializes the bundled demo workspace: synthetic knife and mug
//! clouds, grasp archives, survey ground truth, recorded provider
//! transcripts, a fixture provider config, and a ready-to-run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;

use graspvoc::geometry::io::save_cloud;
use graspvoc::pipeline::SegmentationParams;
use graspvoc::providers::fixture::FixtureStore;
use graspvoc::providers::ProviderConfig;
use graspvoc::synth::{self, SynthObject};

use crate::manifest::{ManifestEntry, RunManifest};
use crate::{write_json, CliError};

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// Directory to create the demo workspace in
    #[arg(long)]
    pub out: PathBuf,
}

/// Paths of the generated workspace.
pub struct DemoWorkspace {
    pub root: PathBuf,
    pub manifest: PathBuf,
    pub provider_config: PathBuf,
}

pub fn run_demo(args: &DemoArgs) -> Result<(), CliError> {
    let ws = write_demo_workspace(&args.out)?;
    eprintln!("demo workspace written to {}", ws.root.display());
    eprintln!(
        "run it with:\n  graspvoc pipeline --manifest {} --out {}",
        ws.manifest.display(),
        ws.root.join("runs").display()
    );
    Ok(())
}

/// Builds the full demo workspace under `dir`.
pub fn write_demo_workspace(dir: &Path) -> Result<DemoWorkspace, CliError> {
    for sub in ["clouds", "archives", "gt"] {
        fs::create_dir_all(dir.join(sub))
            .map_err(|e| CliError::Io(format!("{}: {e}", dir.join(sub).display())))?;
    }
    let params = SegmentationParams::default();
    let store = FixtureStore::create(dir.join("fixtures"))?;

    let knife = synth::knife();
    let mug = synth::mug();
    // .xyz and .ply exercise both loaders
    save_cloud(knife.object.cloud(), dir.join("clouds/knife.xyz"))?;
    save_cloud(mug.object.cloud(), dir.join("clouds/mug.ply"))?;
    synth::knife_archive()
        .write(dir.join("archives/knife.json"))
        .map_err(CliError::from)?;
    synth::mug_archive()
        .write(dir.join("archives/mug.json"))
        .map_err(CliError::from)?;

    let mut gt_files: BTreeMap<(&str, String), String> = BTreeMap::new();
    for (synth_obj, task) in [(&knife, "cut"), (&mug, "fill")] {
        let gt = synth::ground_truth_for(synth_obj, task)
            .expect("demo tasks have conditions");
        let rel = format!(
            "gt/{}_{}.json",
            synth_obj.object.label(),
            crate::manifest::task_slug(task)
        );
        gt.write(dir.join(&rel)).map_err(CliError::from)?;
        gt_files.insert((synth_obj.object.label(), task.to_string()), rel);
    }
    // transcripts must be recorded against the exact render the pipeline
    // will produce, so this runs the same view/render code path
    synth::record_transcripts(&store, &knife, &params)?;
    synth::record_transcripts(&store, &mug, &params)?;

    let provider_config = dir.join("provider_config.json");
    ProviderConfig::fixture("fixtures").write(&provider_config)?;

    let entry = |synth_obj: &SynthObject, cloud_rel: &str| -> ManifestEntry {
        let label = synth_obj.object.label().to_string();
        ManifestEntry {
            object_label: label.clone(),
            cloud_file: cloud_rel.to_string(),
            archive_file: format!("archives/{label}.json"),
            tasks: synth_obj.conditions.keys().cloned().collect(),
            ground_truth: synth_obj
                .conditions
                .keys()
                .filter_map(|task| {
                    gt_files
                        .get(&(synth_obj.object.label(), task.clone()))
                        .map(|rel| (task.clone(), rel.clone()))
                })
                .collect(),
        }
    };
    let manifest = RunManifest {
        provider_config: "provider_config.json".to_string(),
        seed: 7,
        controls: 3,
        score_params: None,
        segmentation: None,
        entries: vec![
            entry(&knife, "clouds/knife.xyz"),
            entry(&mug, "clouds/mug.ply"),
        ],
    };
    let manifest_path = dir.join("manifest.json");
    write_json(&manifest_path, &manifest)?;

    Ok(DemoWorkspace {
        root: dir.to_path_buf(),
        manifest: manifest_path,
        provider_config,
    })
}
