//! Grounding pipeline: features, optional IGLA and LGIA, query selection,
//! box head, argmax.

use serde::{Deserialize, Serialize};

use crate::alignment::{igla, lgia, AlignmentParams, LgiaProjection};
use crate::error::{Error, Result};
use crate::grounding::{argmax_box, decode, select_queries, ScoredBox, DESK_QUERY_COUNT};
use crate::scene::{embed_text, render_features, SceneDescription};
use crate::tensor::AttentionConfig;

/// Which alignment modules run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModuleFlags {
    pub igla: bool,
    pub lgia: bool,
}

impl ModuleFlags {
    pub const FULL: ModuleFlags = ModuleFlags { igla: true, lgia: true };
    pub const BASELINE: ModuleFlags = ModuleFlags {
        igla: false,
        lgia: false,
    };

    /// Baseline, IGLA only, LGIA only, both.
    pub fn all() -> [ModuleFlags; 4] {
        [
            Self::BASELINE,
            ModuleFlags { igla: true, lgia: false },
            ModuleFlags { igla: false, lgia: true },
            Self::FULL,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingConfig {
    pub noise_sigma: f64,
    pub model_dim: usize,
    pub num_heads: usize,
    pub num_queries: usize,
    pub alignment: AlignmentParams,
}

impl Default for GroundingConfig {
    fn default() -> Self {
        Self {
            noise_sigma: 0.05,
            model_dim: 32,
            num_heads: 1,
            num_queries: DESK_QUERY_COUNT,
            alignment: AlignmentParams::default(),
        }
    }
}

impl GroundingConfig {
    pub fn validate(&self) -> Result<()> {
        self.alignment.validate()?;
        AttentionConfig::new(self.num_heads, self.model_dim)?;
        if self.num_queries == 0 {
            return Err(Error::Config("num_queries must be at least 1".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config("noise_sigma must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

/// Reusable state for grounding many scenes under one configuration.
#[derive(Debug, Clone)]
pub struct Grounder {
    config: GroundingConfig,
    attention: AttentionConfig,
    projection: LgiaProjection,
}

impl Grounder {
    pub fn new(config: GroundingConfig) -> Result<Self> {
        config.validate()?;
        let attention = AttentionConfig::new(config.num_heads, config.model_dim)?;
        let projection = LgiaProjection::seeded(
            config.model_dim,
            config.alignment.proj_dim,
            config.alignment.projection_seed,
        )?;
        Ok(Self {
            config,
            attention,
            projection,
        })
    }

    pub fn config(&self) -> &GroundingConfig {
        &self.config
    }

    /// Every decoded box, best query first.
    pub fn candidates(&self, scene: &SceneDescription, flags: ModuleFlags) -> Result<Vec<ScoredBox>> {
        let cfg = &self.config;
        let image = render_features(scene, cfg.noise_sigma, feature_seed(scene.seed), cfg.model_dim)?;
        let text = embed_text(&scene.description, cfg.model_dim)?;
        let text = if flags.igla {
            igla(&image, &text, &cfg.alignment, &self.attention)?
        } else {
            text
        };
        let image = if flags.lgia {
            lgia(&image, &text, &cfg.alignment, &self.projection)?.0
        } else {
            image
        };
        let queries = select_queries(&image, &text, cfg.num_queries)?;
        decode(&queries, &image, &text)
    }

    /// The single box the description refers to.
    pub fn ground(&self, scene: &SceneDescription, flags: ModuleFlags) -> Result<ScoredBox> {
        argmax_box(&self.candidates(scene, flags)?)
    }
}

/// Feature noise is seeded apart from the layout so the two streams never
/// share draws.
fn feature_seed(scene_seed: u64) -> u64 {
    scene_seed ^ 0x9e37_79b9_7f4a_7c15
}
