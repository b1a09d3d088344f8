use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::{
    closure_report, filter_poses, generate_candidates, select_pose_index, CandidateParams, GraspPose,
    GraspView, GripperModel, PointCloud,
};
use crate::error::{Error, Result};
use crate::grounding::ScoredBox;
use crate::scene::{render_depth, sample_point_cloud, DepthImage, SceneDescription, Split};

/// Everything the attempt protocol needs besides the scene and the box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspConfig {
    pub max_attempts: usize,
    pub num_candidates: usize,
    pub min_score: f64,
    pub max_tilt_deg: f64,
    /// Pixels added around the grounded box before cropping.
    pub crop_margin_px: f64,
    pub wall_step_m: f64,
    pub normal_neighbors: usize,
    /// Surface samples per object for the closure check.
    pub surface_samples: usize,
    pub candidates: CandidateParams,
    pub gripper: GripperModel,
}

impl Default for GraspConfig {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            num_candidates: 300,
            min_score: 0.3,
            max_tilt_deg: 45.0,
            crop_margin_px: 8.0,
            wall_step_m: 0.002,
            normal_neighbors: 10,
            surface_samples: 4000,
            candidates: CandidateParams::default(),
            gripper: GripperModel::default(),
        }
    }
}

impl GraspConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_attempts == 0 {
            return Err(Error::Config("max_attempts must be at least 1".into()));
        }
        if self.num_candidates == 0 {
            return Err(Error::Config("num_candidates must be at least 1".into()));
        }
        if !(self.wall_step_m > 0.0) || !(self.crop_margin_px >= 0.0) {
            return Err(Error::Config("wall_step_m must be positive and crop_margin_px nonnegative".into()));
        }
        if !self.min_score.is_finite() || !self.max_tilt_deg.is_finite() {
            return Err(Error::Config("grasp thresholds must be finite".into()));
        }
        self.gripper.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraspSetting {
    Single,
    Multi,
}

impl GraspSetting {
    /// Scenes where the target has an identical twin count as multi.
    pub fn of(scene: &SceneDescription) -> Self {
        if scene.twin_of_target().is_some() {
            GraspSetting::Multi
        } else {
            GraspSetting::Single
        }
    }
}

/// One grasp attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct AttemptResult {
    pub pose: Option<GraspPose>,
    pub success: bool,
    /// Index of the object lifted, when the closure held.
    pub grasped_object: Option<usize>,
    /// Why no pose could be tried.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolOutcome {
    pub attempts: Vec<AttemptResult>,
    pub success: bool,
    pub grasped_target: bool,
}

impl ProtocolOutcome {
    pub fn attempts_used(&self) -> usize {
        self.attempts.len()
    }

    pub fn record(&self, scene: &SceneDescription) -> OutcomeRecord {
        OutcomeRecord {
            scene_id: scene.scene_id.clone(),
            split: scene.split,
            single_or_multi: GraspSetting::of(scene),
            attempts_used: self.attempts_used(),
            success: self.success,
            grasped_target: self.grasped_target,
        }
    }
}

/// The persisted per-scene result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub scene_id: String,
    pub split: Split,
    pub single_or_multi: GraspSetting,
    pub attempts_used: usize,
    pub success: bool,
    pub grasped_target: bool,
}

/// Runs up to `cfg.max_attempts` grasps on the object inside `grounded`.
///
/// Candidates come from the cropped depth view; each attempt takes the
/// remaining pose nearest the lifted box center and checks closure against
/// the true surfaces of all scene objects. Any successful closure ends the
/// scene, whichever object it lifted. A failed pose is discarded before the
/// next attempt. When the crop is empty or yields no poses, every attempt
/// fails.
pub fn attempt_protocol(
    scene: &SceneDescription,
    grounded: &ScoredBox,
    cfg: &GraspConfig,
) -> Result<ProtocolOutcome> {
    cfg.validate()?;
    let depth = render_depth(scene);
    let (mut poses, view_center) = match propose(scene, &depth, grounded, cfg) {
        Ok(p) => p,
        Err(e @ (Error::EmptyCrop | Error::NoCandidates)) => {
            return Ok(failed_outcome(cfg.max_attempts, &e.to_string()));
        }
        Err(e) => return Err(e),
    };
    let (truth, owners) = true_surfaces(scene, cfg.surface_samples)?;

    let mut attempts = Vec::with_capacity(cfg.max_attempts);
    for _ in 0..cfg.max_attempts {
        let Ok(i) = select_pose_index(&poses, &view_center) else {
            attempts.push(AttemptResult {
                pose: None,
                success: false,
                grasped_object: None,
                failure: Some(Error::NoCandidates.to_string()),
            });
            continue;
        };
        let pose = poses.remove(i);
        let report = closure_report(&pose, &truth, &cfg.gripper);
        let grasped_object = report
            .success
            .then(|| majority_owner(&report.swept, &owners, scene.objects.len()));
        attempts.push(AttemptResult {
            pose: Some(pose),
            success: report.success,
            grasped_object,
            failure: None,
        });
        if report.success {
            return Ok(ProtocolOutcome {
                attempts,
                success: true,
                grasped_target: grasped_object == Some(scene.target_index),
            });
        }
    }
    Ok(ProtocolOutcome {
        attempts,
        success: false,
        grasped_target: false,
    })
}

fn propose(
    scene: &SceneDescription,
    depth: &DepthImage,
    grounded: &ScoredBox,
    cfg: &GraspConfig,
) -> Result<(Vec<GraspPose>, Point3<f64>)> {
    let view = GraspView::from_depth(
        depth,
        &grounded.bbox,
        &scene.camera,
        cfg.crop_margin_px,
        cfg.wall_step_m,
        cfg.normal_neighbors,
    )?;
    let raw = generate_candidates(&view.cloud, cfg.num_candidates, scene.seed, &cfg.candidates)?;
    Ok((filter_poses(&raw, cfg.min_score, cfg.max_tilt_deg), view.target_center))
}

fn failed_outcome(max_attempts: usize, reason: &str) -> ProtocolOutcome {
    let attempt = AttemptResult {
        pose: None,
        success: false,
        grasped_object: None,
        failure: Some(reason.to_string()),
    };
    ProtocolOutcome {
        attempts: vec![attempt; max_attempts],
        success: false,
        grasped_target: false,
    }
}

/// Full-surface samples of every object, with the owning object index of
/// each point.
pub fn true_surfaces(scene: &SceneDescription, samples: usize) -> Result<(PointCloud, Vec<usize>)> {
    let mut parts = Vec::with_capacity(scene.objects.len());
    let mut owners = Vec::new();
    for (i, obj) in scene.objects.iter().enumerate() {
        let seed = scene.seed ^ (0x5eed_0000 + i as u64);
        let cloud = sample_point_cloud(obj, samples, seed)?;
        owners.extend(std::iter::repeat_n(i, cloud.len()));
        parts.push(cloud);
    }
    Ok((PointCloud::concat(&parts), owners))
}

fn majority_owner(swept: &[usize], owners: &[usize], n_objects: usize) -> usize {
    let mut counts = vec![0usize; n_objects];
    for &i in swept {
        counts[owners[i]] += 1;
    }
    // first maximum wins ties
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}
