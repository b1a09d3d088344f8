//! Metrics, scene suites and experiment drivers.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grasp::{GraspSetting, OutcomeRecord};
use crate::grounding::{hit_at_05, BBox, ScoredBox};
use crate::pipeline::{Grounder, ModuleFlags};
use crate::scene::{generate_scene, SceneDescription, SceneParams, Split, SplitSpec};

/// Published reference values, shown next to measured numbers in reports.
pub mod reference {
    /// Detection precision@0.5 of the full model, base and novel.
    pub const GROUNDING: (f64, f64) = (84.22, 66.26);
    /// Ablation rows as (igla, lgia, base, novel).
    pub const ABLATION: [(bool, bool, f64, f64); 4] = [
        (false, false, 81.90, 64.09),
        (true, false, 82.98, 65.08),
        (false, true, 83.03, 65.21),
        (true, true, 84.22, 66.26),
    ];
    /// Grasp success per attempt budget as (single, multi, total) rows.
    pub const SUCCESS_BASE: [[f64; 3]; 3] = [[50.3, 39.5, 44.9], [62.1, 53.2, 57.7], [73.1, 69.2, 71.2]];
    pub const SUCCESS_NOVEL: [[f64; 3]; 3] = [[36.3, 32.4, 34.4], [54.6, 44.5, 49.6], [63.6, 65.1, 64.4]];
    /// Grasp scenes: split tests plus per-object task scenes.
    pub const SPLIT_GRASP_SCENES: usize = 65;
    pub const TASK_OBJECTS: usize = 7;
    pub const SCENES_PER_TASK_OBJECT: usize = 10;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingRecord {
    pub scene_id: String,
    pub split: Split,
    pub description: String,
    #[serde(flatten)]
    pub predicted: ScoredBox,
    pub ground_truth: BBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitScore {
    pub hits: usize,
    pub total: usize,
}

impl SplitScore {
    pub fn precision(&self) -> f64 {
        self.hits as f64 / self.total as f64
    }
}

/// Per-split precision; a split without records is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionReport {
    pub base: Option<SplitScore>,
    pub novel: Option<SplitScore>,
}

impl PrecisionReport {
    pub fn get(&self, split: Split) -> Option<SplitScore> {
        match split {
            Split::Base => self.base,
            Split::Novel => self.novel,
        }
    }
}

/// Fraction of records per split whose IoU with the truth is above 0.5.
pub fn precision_at_05(records: &[GroundingRecord]) -> Result<PrecisionReport> {
    if records.is_empty() {
        return Err(Error::contract("precision_at_05", "no records"));
    }
    let mut report = PrecisionReport { base: None, novel: None };
    for r in records {
        let hit = hit_at_05(&r.predicted.bbox, &r.ground_truth)?;
        let slot = match r.split {
            Split::Base => &mut report.base,
            Split::Novel => &mut report.novel,
        };
        let s = slot.get_or_insert(SplitScore { hits: 0, total: 0 });
        s.total += 1;
        s.hits += usize::from(hit);
    }
    Ok(report)
}

/// Cumulative success rates by attempt budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessTable {
    /// `rows[k - 1]` holds the rates with a budget of `k` attempts as
    /// `[single, multi, total]`. A column without scenes is `None`.
    pub rows: Vec<[Option<f64>; 3]>,
    pub counts: [usize; 2],
}

impl SuccessTable {
    pub fn is_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| {
            (0..3).all(|c| match (w[0][c], w[1][c]) {
                (Some(a), Some(b)) => a <= b,
                (None, None) => true,
                _ => false,
            })
        })
    }
}

/// Builds the success table over `budgets` attempt budgets. The total
/// column is the mean of the single and multi rates when both exist, which
/// is how the reference table's totals relate to its other two columns.
pub fn success_table(outcomes: &[OutcomeRecord], budgets: usize) -> SuccessTable {
    let column = |setting: GraspSetting| -> Vec<&OutcomeRecord> {
        outcomes.iter().filter(|o| o.single_or_multi == setting).collect()
    };
    let single = column(GraspSetting::Single);
    let multi = column(GraspSetting::Multi);
    let rate = |group: &[&OutcomeRecord], k: usize| -> Option<f64> {
        (!group.is_empty()).then(|| {
            let ok = group.iter().filter(|o| o.success && o.attempts_used <= k).count();
            ok as f64 / group.len() as f64
        })
    };
    let rows = (1..=budgets)
        .map(|k| {
            let s = rate(&single, k);
            let m = rate(&multi, k);
            let total = match (s, m) {
                (Some(a), Some(b)) => Some((a + b) / 2.0),
                (a, b) => a.or(b),
            };
            [s, m, total]
        })
        .collect();
    SuccessTable {
        rows,
        counts: [single.len(), multi.len()],
    }
}

/// One row of the module ablation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub igla: bool,
    pub lgia: bool,
    pub base: Option<f64>,
    pub novel: Option<f64>,
}

/// Grounds every scene with the given flags.
pub fn ground_suite(
    grounder: &Grounder,
    flags: ModuleFlags,
    scenes: &[SceneDescription],
) -> Result<Vec<GroundingRecord>> {
    scenes
        .par_iter()
        .map(|s| {
            Ok(GroundingRecord {
                scene_id: s.scene_id.clone(),
                split: s.split,
                description: s.description.clone(),
                predicted: grounder.ground(s, flags)?,
                ground_truth: s.ground_truth_box(),
            })
        })
        .collect()
}

pub fn ablation_run(grounder: &Grounder, flags: ModuleFlags, suite: &[SceneDescription]) -> Result<AblationRow> {
    if suite.is_empty() {
        return Err(Error::contract("ablation_run", "empty suite"));
    }
    let report = precision_at_05(&ground_suite(grounder, flags, suite)?)?;
    Ok(AblationRow {
        igla: flags.igla,
        lgia: flags.lgia,
        base: report.base.map(|s| s.precision()),
        novel: report.novel.map(|s| s.precision()),
    })
}

/// The four flag combinations, baseline first.
pub fn ablation_table(grounder: &Grounder, suite: &[SceneDescription]) -> Result<Vec<AblationRow>> {
    ModuleFlags::all()
        .into_iter()
        .map(|f| ablation_run(grounder, f, suite))
        .collect()
}

/// Scene sets of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Suites {
    pub base_test: Vec<SceneDescription>,
    pub novel_test: Vec<SceneDescription>,
    /// Grasp scenes without identical objects, base then novel.
    pub single_grasp: Vec<SceneDescription>,
    /// Grasp scenes whose target has an identical twin, base then novel.
    pub multi_grasp: Vec<SceneDescription>,
}

impl Suites {
    pub fn grounding(&self) -> impl Iterator<Item = &SceneDescription> {
        self.base_test.iter().chain(&self.novel_test)
    }

    pub fn grasp(&self) -> impl Iterator<Item = &SceneDescription> {
        self.single_grasp.iter().chain(&self.multi_grasp)
    }

    pub fn len(&self) -> usize {
        self.base_test.len() + self.novel_test.len() + self.single_grasp.len() + self.multi_grasp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Scene seeds for one suite: a ChaCha stream per suite tag off the master
/// seed.
fn suite_seeds(master: u64, stream: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    (0..n).map(|_| rng.next_u64()).collect()
}

fn build(
    spec: &SplitSpec,
    params: &SceneParams,
    split: Split,
    twin: bool,
    seeds: Vec<u64>,
) -> Result<Vec<SceneDescription>> {
    seeds
        .into_par_iter()
        .map(|s| generate_scene(s, spec, split, twin, params))
        .collect()
}

/// Builds the grounding and grasp suites. Grounding scenes have no
/// identical objects; grasp suites hold `grasp_scenes_per_split` scenes per
/// split in each of the single and multi settings.
pub fn split_builder(spec: &SplitSpec, params: &SceneParams, seed: u64) -> Result<Suites> {
    spec.validate()?;
    let g = spec.grounding_scenes_per_split;
    let k = spec.grasp_scenes_per_split;
    let mut single = build(spec, params, Split::Base, false, suite_seeds(seed, 2, k))?;
    single.extend(build(spec, params, Split::Novel, false, suite_seeds(seed, 3, k))?);
    let mut multi = build(spec, params, Split::Base, true, suite_seeds(seed, 4, k))?;
    multi.extend(build(spec, params, Split::Novel, true, suite_seeds(seed, 5, k))?);
    let suites = Suites {
        base_test: build(spec, params, Split::Base, false, suite_seeds(seed, 0, g))?,
        novel_test: build(spec, params, Split::Novel, false, suite_seeds(seed, 1, g))?,
        single_grasp: single,
        multi_grasp: multi,
    };
    let ids: HashSet<&str> = suites
        .grounding()
        .chain(suites.grasp())
        .map(|s| s.scene_id.as_str())
        .collect();
    if ids.len() != suites.len() {
        return Err(Error::Config(format!("seed {seed} produced repeated scene ids")));
    }
    Ok(suites)
}

/// Grasp scenes laid out like the reference protocol: 65 split scenes
/// (base first, alternating single and multi) followed by 7 groups of 10
/// task scenes.
pub fn reference_grasp_suite(spec: &SplitSpec, params: &SceneParams, seed: u64) -> Result<Vec<SceneDescription>> {
    use reference::*;
    let n_base = SPLIT_GRASP_SCENES.div_ceil(2);
    let mut scenes = Vec::new();
    for (i, s) in suite_seeds(seed, 10, SPLIT_GRASP_SCENES).into_iter().enumerate() {
        let split = if i < n_base { Split::Base } else { Split::Novel };
        scenes.push(generate_scene(s, spec, split, i % 2 == 1, params)?);
    }
    for group in 0..TASK_OBJECTS {
        let split = if group % 2 == 0 { Split::Base } else { Split::Novel };
        for (i, s) in suite_seeds(seed, 11 + group as u64, SCENES_PER_TASK_OBJECT)
            .into_iter()
            .enumerate()
        {
            scenes.push(generate_scene(s, spec, split, i % 2 == 1, params)?);
        }
    }
    Ok(scenes)
}

fn pct(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{:.1}", 100.0 * v))
}

pub fn precision_markdown(report: &PrecisionReport) -> String {
    let mut out = String::from("| Split | Hits | Scenes | P@0.5 (%) | Reference (%) |\n|---|---|---|---|---|\n");
    for (split, refv) in [(Split::Base, reference::GROUNDING.0), (Split::Novel, reference::GROUNDING.1)] {
        match report.get(split) {
            Some(s) => writeln!(
                out,
                "| {} | {} | {} | {} | {refv:.2} |",
                split.name(),
                s.hits,
                s.total,
                pct(Some(s.precision()))
            ),
            None => writeln!(out, "| {} | - | 0 | - | {refv:.2} |", split.name()),
        }
        .unwrap();
    }
    out
}

pub fn ablation_markdown(rows: &[AblationRow]) -> String {
    let mark = |b: bool| if b { "yes" } else { "no" };
    let mut out = String::from("| IGLA | LGIA | Base (%) | Novel (%) | Reference base | Reference novel |\n|---|---|---|---|---|---|\n");
    for r in rows {
        let refs = reference::ABLATION
            .iter()
            .find(|(i, l, _, _)| *i == r.igla && *l == r.lgia)
            .map_or(("-".to_string(), "-".to_string()), |(_, _, b, n)| (format!("{b:.2}"), format!("{n:.2}")));
        writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} |",
            mark(r.igla),
            mark(r.lgia),
            pct(r.base),
            pct(r.novel),
            refs.0,
            refs.1
        )
        .unwrap();
    }
    out
}

pub fn success_markdown(base: &SuccessTable, novel: &SuccessTable) -> String {
    let mut out = String::from(
        "| Attempts | Base single | Base multi | Base total | Novel single | Novel multi | Novel total |\n|---|---|---|---|---|---|---|\n",
    );
    for k in 0..base.rows.len().max(novel.rows.len()) {
        let cells = |t: &SuccessTable| -> Vec<String> {
            (0..3).map(|c| pct(t.rows.get(k).and_then(|r| r[c]))).collect()
        };
        writeln!(out, "| {} | {} | {} |", k + 1, cells(base).join(" | "), cells(novel).join(" | ")).unwrap();
    }
    out.push_str("\nReference totals at 3 attempts: base ");
    writeln!(
        out,
        "{:.1}, novel {:.1}.",
        reference::SUCCESS_BASE[2][2],
        reference::SUCCESS_NOVEL[2][2]
    )
    .unwrap();
    out
}
