//! Run configuration, read from and written to a single TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grasp::GraspConfig;
use crate::pipeline::GroundingConfig;
use crate::scene::{vocab, SceneParams, SplitSpec};

/// Environment variable that replaces `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "OVG_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub grounding_scenes_per_split: usize,
    pub grasp_scenes_per_split: usize,
    /// Number of leading vocabulary classes forming the base split; the
    /// rest are novel.
    pub base_class_count: usize,
    /// Depth maps and point clouds are exported for this many scenes of
    /// each grasp suite.
    pub exported_scenes: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            grounding_scenes_per_split: 500,
            grasp_scenes_per_split: 100,
            base_class_count: vocab::BASE_CLASS_COUNT,
            exported_scenes: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub suites: SuiteConfig,
    pub scene: SceneParams,
    pub grounding: GroundingConfig,
    pub grasp: GraspConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            output_dir: PathBuf::from("ovg-out"),
            suites: SuiteConfig::default(),
            scene: SceneParams::default(),
            grounding: GroundingConfig::default(),
            grasp: GraspConfig::default(),
        }
    }
}

/// The file written by `config init`. Parses to [`RunConfig::default`].
pub const DEFAULT_CONFIG_TOML: &str = r#"# ovg run configuration
seed = 2024
# Overridden by the OVG_OUTPUT_DIR environment variable.
output_dir = "ovg-out"

[suites]
grounding_scenes_per_split = 500
grasp_scenes_per_split = 100
# The first 68 of the 117 vocabulary classes are base, the other 49 novel,
# matching the published class partition.
base_class_count = 68
exported_scenes = 4

[scene]
# Published scenes hold 8 objects each.
objects_per_scene = 8
size_range_m = [0.03, 0.1]
# Empty means boxes, spheres and cylinders.
shapes = []
relation_probability = 0.5

# Looks straight down; 480 x 640 images.
[scene.camera]
fx = 400.0
fy = 400.0
cx = 320.0
cy = 240.0
height_m = 1.5

[scene.grid]
rows = 12
cols = 16

[grounding]
noise_sigma = 0.05
model_dim = 32
# The published model leaves the IGLA head count unstated.
num_heads = 1
# The published detector keeps 900 queries; 32 suits the 192-cell grid.
num_queries = 32

[grounding.alignment]
# IGLA residual weight, published value 0.5.
alpha = 0.5
# LGIA blend weight, published value 0.6.
lambda = 0.6
# Learnable in the published model; fixed here.
beta = 1.0
theta = 0.5
proj_dim = 32
projection_seed = 17

[grasp]
# Published protocol: at most 3 attempts per scene.
max_attempts = 3
num_candidates = 300
# Threshold values are unpublished; these are calibrated defaults.
min_score = 0.3
max_tilt_deg = 45.0
crop_margin_px = 8.0
wall_step_m = 0.002
normal_neighbors = 10
surface_samples = 4000

[grasp.candidates]
friction = 0.4
ray_tolerance_m = 0.002
min_separation_m = 0.005
clearance_m = 0.005
# ROBOTIQ-85 jaw span.
max_width_m = 0.085
finger_depth_m = 0.03
pad_width_m = 0.02
normal_neighbors = 10

[grasp.gripper]
max_width_m = 0.085
finger_depth_m = 0.03
pad_width_m = 0.02
friction_coefficient = 0.4
contact_tolerance_m = 0.003
min_sweep_points = 20
"#;

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Replaces `output_dir` with `value` when it is set and nonempty.
    pub fn with_output_override(mut self, value: Option<&str>) -> Self {
        if let Some(dir) = value.filter(|v| !v.is_empty()) {
            self.output_dir = PathBuf::from(dir);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.split_spec()?.validate()?;
        self.grounding.validate()?;
        self.grasp.validate()?;
        if self.grounding.alignment.proj_dim == 0 {
            return Err(Error::Config("proj_dim must be positive".into()));
        }
        let (lo, hi) = self.scene.size_range_m;
        if !(lo <= hi && lo >= crate::scene::MIN_OBJECT_SIZE_M && hi <= crate::scene::MAX_OBJECT_SIZE_M) {
            return Err(Error::Config(format!("size_range_m [{lo}, {hi}] outside the object size limits")));
        }
        Ok(())
    }

    pub fn split_spec(&self) -> Result<SplitSpec> {
        let n = self.suites.base_class_count;
        if n == 0 || n >= vocab::CLASS_NAMES.len() {
            return Err(Error::Config(format!(
                "base_class_count must be between 1 and {}",
                vocab::CLASS_NAMES.len() - 1
            )));
        }
        let names: Vec<String> = vocab::CLASS_NAMES.iter().map(|s| s.to_string()).collect();
        Ok(SplitSpec {
            base_classes: names[..n].to_vec(),
            novel_classes: names[n..].to_vec(),
            grounding_scenes_per_split: self.suites.grounding_scenes_per_split,
            grasp_scenes_per_split: self.suites.grasp_scenes_per_split,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_matches_defaults() {
        assert_eq!(RunConfig::from_toml(DEFAULT_CONFIG_TOML).unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::default();
        cfg.grounding.alignment.theta = 0.123456789012345;
        cfg.grasp.min_score = 0.1 + 0.2;
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_key_rejected() {
        let text = DEFAULT_CONFIG_TOML.replace("seed = 2024", "seed = 2024\nsed = 1");
        assert!(RunConfig::from_toml(&text).is_err());
    }

    #[test]
    fn out_of_range_values_rejected() {
        for (from, to) in [
            ("alpha = 0.5", "alpha = 1.5"),
            ("max_attempts = 3", "max_attempts = 0"),
            ("base_class_count = 68", "base_class_count = 117"),
            ("size_range_m = [0.03, 0.1]", "size_range_m = [0.03, 0.2]"),
        ] {
            let text = DEFAULT_CONFIG_TOML.replace(from, to);
            assert!(RunConfig::from_toml(&text).is_err(), "{to}");
        }
    }

    #[test]
    fn output_override() {
        let cfg = RunConfig::default().with_output_override(Some("/tmp/x"));
        assert_eq!(cfg.output_dir, PathBuf::from("/tmp/x"));
        let cfg = RunConfig::default().with_output_override(Some(""));
        assert_eq!(cfg.output_dir, PathBuf::from("ovg-out"));
    }
}
