//! Synthetic stand-ins for the image and text encoders.
//!
//! Each attribute tuple `(class, color, shape)` hashes to a fixed unit
//! vector. An object's grid cell carries that vector plus isotropic noise;
//! the target token of a description carries the same vector, so a
//! correctly wired pipeline can find the target by similarity alone.
//! Template, relation and reference tokens hash under their own role
//! prefixes and are therefore unrelated to any cell embedding.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::annotation::{parse_annotation, ObjectPhrase};
use super::{Color, Grid, SceneDescription, Shape};
use crate::error::{Error, Result};
use crate::tensor::{norm, Matrix};

/// Per-location image features on the placement grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    /// One row per grid cell, row-major over the grid.
    pub features: Matrix,
    pub grid: Grid,
    /// Box side, in pixels, the box head assigns to each location.
    pub extents: Vec<(f64, f64)>,
}

impl FeatureMap {
    pub fn locations(&self) -> usize {
        self.features.rows()
    }

    pub fn cell_of(&self, location: usize) -> (usize, usize) {
        (location / self.grid.cols, location % self.grid.cols)
    }

    pub fn with_features(&self, features: Matrix) -> FeatureMap {
        FeatureMap {
            features,
            grid: self.grid,
            extents: self.extents.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenRole {
    Template,
    Target,
    Position,
    Relative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextSequence {
    pub tokens: Matrix,
    pub roles: Vec<TokenRole>,
    pub description: String,
}

impl TextSequence {
    pub fn with_tokens(&self, tokens: Matrix) -> TextSequence {
        TextSequence {
            tokens,
            roles: self.roles.clone(),
            description: self.description.clone(),
        }
    }
}

/// Unit vector derived from a string key.
pub fn hashed_embedding(key: &str, dim: usize) -> Vec<f64> {
    let digest = Sha256::digest(key.as_bytes());
    let seed = u64::from_le_bytes(digest[..8].try_into().unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

pub fn attribute_key(class_name: &str, color: Color, shape: Shape) -> String {
    format!("object|{class_name}|{}|{}", color.word(), shape.name())
}

pub fn attribute_embedding(class_name: &str, color: Color, shape: Shape, dim: usize) -> Vec<f64> {
    hashed_embedding(&attribute_key(class_name, color, shape), dim)
}

fn phrase_embedding(p: &ObjectPhrase, dim: usize) -> Vec<f64> {
    attribute_embedding(&p.class_name, p.color, p.shape, dim)
}

/// Extent assigned to cells without an object.
fn empty_extent(grid: &Grid) -> (f64, f64) {
    (grid.cell_width() / 2.0, grid.cell_height() / 2.0)
}

/// Renders the grid feature map of `scene`.
pub fn render_features(
    scene: &SceneDescription,
    noise_sigma: f64,
    seed: u64,
    dim: usize,
) -> Result<FeatureMap> {
    if !(noise_sigma >= 0.0) {
        return Err(Error::Parameter {
            name: "noise_sigma",
            value: noise_sigma,
            reason: "must be nonnegative",
        });
    }
    let grid = scene.grid;
    let n = grid.cells();
    let mut data = vec![0.0; n * dim];
    let mut extents = vec![empty_extent(&grid); n];
    for obj in &scene.objects {
        let loc = obj.grid_cell.0 * grid.cols + obj.grid_cell.1;
        let e = attribute_embedding(&obj.class_name, obj.color, obj.shape, dim);
        data[loc * dim..(loc + 1) * dim].copy_from_slice(&e);
        extents[loc] = scene.camera.footprint_px(obj.size_m);
    }
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).expect("sigma is finite and positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for x in &mut data {
            *x += normal.sample(&mut rng);
        }
    }
    Ok(FeatureMap {
        features: Matrix::new(n, dim, data)?,
        grid,
        extents,
    })
}

/// Encodes a description as one token per populated grammar slot.
pub fn embed_text(description: &str, dim: usize) -> Result<TextSequence> {
    let slots = parse_annotation(description)?;
    let mut rows = vec![
        hashed_embedding(&format!("template|{}", slots.template_id), dim),
        phrase_embedding(&slots.target, dim),
    ];
    let mut roles = vec![TokenRole::Template, TokenRole::Target];
    if let Some(rel) = slots.relation {
        rows.push(hashed_embedding(&format!("relation|{}", rel.key()), dim));
        roles.push(TokenRole::Position);
    }
    if let Some(reference) = &slots.reference {
        let key = format!(
            "reference|{}|{}|{}",
            reference.class_name,
            reference.color.word(),
            reference.shape.name()
        );
        rows.push(hashed_embedding(&key, dim));
        roles.push(TokenRole::Relative);
    }
    Ok(TextSequence {
        tokens: Matrix::from_rows(&rows)?,
        roles,
        description: description.to_string(),
    })
}
