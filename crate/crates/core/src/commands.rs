//! Experiment stages behind the `ovg` subcommands. Each stage reads the
//! previous stage's files from the output directory and writes its own.
//!
//! ```text
//! <out>/dataset/   scenes_*.jsonl, depth/*.bin, clouds/*.ply, manifest.json
//! <out>/grounding/ grounding.jsonl, grasp_boxes.jsonl, precision.{json,md}
//! <out>/grasp/     outcomes.jsonl, success.{json,md}
//! <out>/ablation/  ablation.jsonl, ablation.md
//! <out>/report.md, <out>/manifest.jsonl
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, DEFAULT_CONFIG_TOML};
use crate::error::{Error, Result};
use crate::eval::{
    ablation_markdown, ablation_table, ground_suite, precision_at_05, precision_markdown, split_builder,
    success_markdown, success_table, AblationRow, GroundingRecord, PrecisionReport, SuccessTable,
};
use crate::grasp::{attempt_protocol, GraspView, OutcomeRecord};
use crate::io::{
    self, hash_tree, read_json, read_jsonl, write_json, write_jsonl, write_matrix, write_ply, write_text,
    DatasetManifest, SceneRecord,
};
use crate::pipeline::{Grounder, ModuleFlags};
use crate::scene::{render_depth, SceneDescription, Split};

pub const SUITE_NAMES: [&str; 4] = ["base_test", "novel_test", "single_grasp", "multi_grasp"];

const GENERATE_HINT: &str = "run `ovg generate` first";
const GROUND_HINT: &str = "run `ovg ground` first";
const GRASP_HINT: &str = "run `ovg grasp` first";

fn dataset_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("dataset")
}

fn scenes_path(cfg: &RunConfig, suite: &str) -> PathBuf {
    dataset_dir(cfg).join(format!("scenes_{suite}.jsonl"))
}

fn require(path: &Path, hint: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingInput {
            path: path.to_path_buf(),
            hint,
        })
    }
}

fn load_suite(cfg: &RunConfig, suite: &str) -> Result<Vec<SceneDescription>> {
    let path = scenes_path(cfg, suite);
    require(&path, GENERATE_HINT)?;
    Ok(read_jsonl::<SceneRecord>(&path)?.into_iter().map(|r| r.scene).collect())
}

/// Writes the commented default configuration. Refuses to overwrite unless
/// `force` is set.
pub fn cmd_config_init(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::Config(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    write_text(path, DEFAULT_CONFIG_TOML)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateSummary {
    pub manifest: DatasetManifest,
    pub manifest_path: PathBuf,
}

/// Builds the scene suites and writes them with exported depth maps and
/// point clouds. Any previous dataset directory is replaced.
pub fn cmd_generate(cfg: &RunConfig) -> Result<GenerateSummary> {
    cfg.validate()?;
    let spec = cfg.split_spec()?;
    let suites = split_builder(&spec, &cfg.scene, cfg.seed)?;
    let dir = dataset_dir(cfg);
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    io::create_dir(&dir)?;

    let lists: [&[SceneDescription]; 4] = [
        &suites.base_test,
        &suites.novel_test,
        &suites.single_grasp,
        &suites.multi_grasp,
    ];
    let mut scene_counts = BTreeMap::new();
    for (name, scenes) in SUITE_NAMES.iter().zip(lists) {
        let records: Vec<SceneRecord> = scenes.iter().map(SceneRecord::from).collect();
        write_jsonl(&scenes_path(cfg, name), &records)?;
        scene_counts.insert(name.to_string(), scenes.len());
    }
    for scene in lists[2..]
        .iter()
        .flat_map(|s| s.iter().take(cfg.suites.exported_scenes))
    {
        let depth = render_depth(scene);
        write_matrix(&dir.join("depth").join(format!("{}.bin", scene.scene_id)), &depth)?;
        let view = GraspView::from_depth(
            &depth,
            &scene.ground_truth_box(),
            &scene.camera,
            cfg.grasp.crop_margin_px,
            cfg.grasp.wall_step_m,
            cfg.grasp.normal_neighbors,
        )?;
        write_ply(&dir.join("clouds").join(format!("{}.ply", scene.scene_id)), &view.cloud)?;
    }

    // the output location is not part of the dataset
    let hashed = RunConfig {
        output_dir: PathBuf::new(),
        ..cfg.clone()
    };
    let manifest_path = dir.join("manifest.json");
    let manifest = DatasetManifest {
        seed: cfg.seed,
        config_sha256: hex::encode(Sha256::digest(hashed.to_toml()?.as_bytes())),
        scene_counts,
        files: hash_tree(&dir, &[&manifest_path])?,
    };
    write_json(&manifest_path, &manifest)?;
    Ok(GenerateSummary {
        manifest,
        manifest_path,
    })
}

/// Grounds the test suites (precision report) and the grasp suites (boxes
/// for `grasp`) with both alignment modules on.
pub fn cmd_ground(cfg: &RunConfig) -> Result<PrecisionReport> {
    cfg.validate()?;
    let grounder = Grounder::new(cfg.grounding.clone())?;
    let mut tests = load_suite(cfg, "base_test")?;
    tests.extend(load_suite(cfg, "novel_test")?);
    let mut grasp = load_suite(cfg, "single_grasp")?;
    grasp.extend(load_suite(cfg, "multi_grasp")?);

    let dir = cfg.output_dir.join("grounding");
    let records = ground_suite(&grounder, ModuleFlags::FULL, &tests)?;
    write_jsonl(&dir.join("grounding.jsonl"), &records)?;
    let boxes = ground_suite(&grounder, ModuleFlags::FULL, &grasp)?;
    write_jsonl(&dir.join("grasp_boxes.jsonl"), &boxes)?;

    let report = precision_at_05(&records)?;
    write_json(&dir.join("precision.json"), &report)?;
    write_text(&dir.join("precision.md"), &precision_markdown(&report))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    pub base: SuccessTable,
    pub novel: SuccessTable,
    /// Successful scenes whose lifted object was the described target.
    pub target_hits: usize,
    pub scenes: usize,
}

/// Runs the attempt protocol on every grasp scene at its grounded box.
pub fn cmd_grasp(cfg: &RunConfig) -> Result<SuccessReport> {
    cfg.validate()?;
    let mut scenes = load_suite(cfg, "single_grasp")?;
    scenes.extend(load_suite(cfg, "multi_grasp")?);
    let boxes_path = cfg.output_dir.join("grounding").join("grasp_boxes.jsonl");
    require(&boxes_path, GROUND_HINT)?;
    let boxes: HashMap<String, GroundingRecord> = read_jsonl::<GroundingRecord>(&boxes_path)?
        .into_iter()
        .map(|r| (r.scene_id.clone(), r))
        .collect();

    let outcomes: Vec<OutcomeRecord> = scenes
        .par_iter()
        .map(|scene| {
            let grounded = boxes.get(&scene.scene_id).ok_or_else(|| {
                Error::Config(format!("no grounded box for scene {}; rerun `ovg ground`", scene.scene_id))
            })?;
            Ok(attempt_protocol(scene, &grounded.predicted, &cfg.grasp)?.record(scene))
        })
        .collect::<Result<_>>()?;

    let dir = cfg.output_dir.join("grasp");
    write_jsonl(&dir.join("outcomes.jsonl"), &outcomes)?;
    let of_split = |split: Split| -> Vec<OutcomeRecord> {
        outcomes.iter().filter(|o| o.split == split).cloned().collect()
    };
    let report = SuccessReport {
        base: success_table(&of_split(Split::Base), cfg.grasp.max_attempts),
        novel: success_table(&of_split(Split::Novel), cfg.grasp.max_attempts),
        target_hits: outcomes.iter().filter(|o| o.grasped_target).count(),
        scenes: outcomes.len(),
    };
    write_json(&dir.join("success.json"), &report)?;
    write_text(&dir.join("success.md"), &success_markdown(&report.base, &report.novel))?;
    check_success(&report)?;
    Ok(report)
}

fn check_success(report: &SuccessReport) -> Result<()> {
    for (name, t) in [("base", &report.base), ("novel", &report.novel)] {
        if !t.is_monotone() {
            return Err(Error::Invariant(format!("{name} success table is not monotone in attempts")));
        }
    }
    Ok(())
}

/// Grounds the test suites under all four module combinations.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<Vec<AblationRow>> {
    cfg.validate()?;
    let grounder = Grounder::new(cfg.grounding.clone())?;
    let mut tests = load_suite(cfg, "base_test")?;
    tests.extend(load_suite(cfg, "novel_test")?);
    let rows = ablation_table(&grounder, &tests)?;
    let dir = cfg.output_dir.join("ablation");
    write_jsonl(&dir.join("ablation.jsonl"), &rows)?;
    write_text(&dir.join("ablation.md"), &ablation_markdown(&rows))?;
    Ok(rows)
}

/// Assembles `report.md` from the stage outputs, checks report-level
/// invariants and writes `manifest.jsonl` hashing every output file.
pub fn cmd_report(cfg: &RunConfig) -> Result<String> {
    let out = &cfg.output_dir;
    let precision_path = out.join("grounding").join("precision.json");
    require(&precision_path, GROUND_HINT)?;
    let success_path = out.join("grasp").join("success.json");
    require(&success_path, GRASP_HINT)?;
    let precision: PrecisionReport = read_json(&precision_path)?;
    let success: SuccessReport = read_json(&success_path)?;

    let mut text = format!("# ovg report\n\nSeed {}.\n\n## Grounding precision@0.5\n\n", cfg.seed);
    text.push_str(&precision_markdown(&precision));
    let ablation_path = out.join("ablation").join("ablation.jsonl");
    if ablation_path.exists() {
        let rows: Vec<AblationRow> = read_jsonl(&ablation_path)?;
        if rows.len() != 4 {
            return Err(Error::Invariant(format!("ablation has {} rows, expected 4", rows.len())));
        }
        text.push_str("\n## Module ablation\n\n");
        text.push_str(&ablation_markdown(&rows));
    }
    text.push_str("\n## Grasp success by attempt budget\n\n");
    text.push_str(&success_markdown(&success.base, &success.novel));
    text.push_str(&format!(
        "\n{} of {} grasp scenes lifted the described target.\n",
        success.target_hits, success.scenes
    ));
    text.push_str("\nReference values come from pretrained models on real data and are shown for context only.\n");
    check_success(&success)?;

    write_text(&out.join("report.md"), &text)?;
    let manifest_path = out.join("manifest.jsonl");
    let entries = hash_tree(out, &[&manifest_path])?;
    write_jsonl(&manifest_path, &entries)?;
    Ok(text)
}
