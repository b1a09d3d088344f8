//! Image-guided language attention (IGLA) and language-guided image
//! attention (LGIA).
//!
//! IGLA lets every text token attend over the image locations and adds the
//! result back to the token. LGIA projects both modalities into a shared
//! unit-norm space, pools the sentence into one vector, turns each
//! location's similarity into a Gaussian gain `S_c` and blends the gain into
//! the image features.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{FeatureMap, TextSequence};
use crate::tensor::{dot, l2_normalize_rows, linear, multi_head_attention, norm, AttentionConfig, Matrix};

pub const DEFAULT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentParams {
    /// IGLA residual weight.
    pub alpha: f64,
    /// LGIA blend weight.
    pub lambda: f64,
    /// Peak of the constraint score.
    pub beta: f64,
    /// Bandwidth of the constraint score.
    pub theta: f64,
    pub proj_dim: usize,
    /// Seed of the shared LGIA projection.
    pub projection_seed: u64,
}

impl Default for AlignmentParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            lambda: 0.6,
            beta: 1.0,
            theta: 0.5,
            proj_dim: 32,
            projection_seed: 17,
        }
    }
}

impl AlignmentParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |name, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(Error::Parameter {
                    name,
                    value,
                    reason: "must lie in [0, 1]",
                })
            }
        };
        unit("alpha", self.alpha)?;
        unit("lambda", self.lambda)?;
        check_positive("beta", self.beta)?;
        check_positive("theta", self.theta)?;
        if self.proj_dim == 0 {
            return Err(Error::Config("proj_dim must be positive".into()));
        }
        Ok(())
    }
}

fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter {
            name,
            value,
            reason: "must be positive and finite",
        })
    }
}

/// Per-location constraint scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintField {
    pub scores: Vec<f64>,
    pub beta_used: f64,
    pub theta_used: f64,
}

/// Text tokens attend over image locations:
/// `v_l' = alpha * MHA(q = v_l, k = v = v_i) + v_l`.
pub fn igla(
    image: &FeatureMap,
    text: &TextSequence,
    params: &AlignmentParams,
    cfg: &AttentionConfig,
) -> Result<TextSequence> {
    if image.features.cols() != text.tokens.cols() {
        return Err(Error::contract(
            "igla",
            format!("image dim {} vs text dim {}", image.features.cols(), text.tokens.cols()),
        ));
    }
    if params.alpha == 0.0 {
        return Ok(text.clone());
    }
    let attended = multi_head_attention(&text.tokens, &image.features, &image.features, cfg, None)?;
    Ok(text.with_tokens(attended.scaled(params.alpha).add(&text.tokens)?))
}

/// Fully connected layer followed by row-wise L2 normalization.
pub fn lgia_project(v: &Matrix, weights: &Matrix, bias: &[f64], eps: f64) -> Result<Matrix> {
    l2_normalize_rows(&linear(v, weights, bias)?, eps)
}

/// Shared projection into the LGIA comparison space. Image and text go
/// through the same weights so their dot products stay meaningful.
#[derive(Debug, Clone, PartialEq)]
pub struct LgiaProjection {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl LgiaProjection {
    /// Weights and bias uniform in `±1/sqrt(in_dim)`.
    pub fn seeded(in_dim: usize, out_dim: usize, seed: u64) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Config("projection dimensions must be positive".into()));
        }
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights: Vec<f64> = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let bias = (0..out_dim).map(|_| rng.random_range(-bound..bound)).collect();
        Ok(Self {
            weights: Matrix::new(in_dim, out_dim, weights)?,
            bias,
        })
    }

    pub fn apply(&self, v: &Matrix) -> Result<Matrix> {
        lgia_project(v, &self.weights, &self.bias, DEFAULT_EPS)
    }
}

/// Mean token, renormalized to unit length.
pub fn pool_text(tokens: &Matrix) -> Result<Vec<f64>> {
    if tokens.rows() == 0 {
        return Err(Error::EmptyText);
    }
    let mut mean = vec![0.0; tokens.cols()];
    for row in tokens.row_iter() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    let n = tokens.rows() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    let len = norm(&mean);
    if len < DEFAULT_EPS {
        return Err(Error::RowDegenerate {
            row: 0,
            norm: len,
            eps: DEFAULT_EPS,
        });
    }
    Ok(mean.into_iter().map(|m| m / len).collect())
}

fn location_dots(image: &Matrix, t: &[f64], op: &'static str) -> Result<Vec<f64>> {
    if image.cols() != t.len() {
        return Err(Error::contract(op, format!("image dim {} vs text dim {}", image.cols(), t.len())));
    }
    Ok(image.row_iter().map(|r| dot(r, t)).collect())
}

fn gaussian(dot: f64, beta: f64, theta: f64) -> f64 {
    let gap = 1.0 - dot;
    beta * (-(gap * gap) / (2.0 * theta * theta)).exp()
}

/// `S_c(x) = beta * exp(-(1 - v_id(x) . t)^2 / (2 theta^2))`.
pub fn constraint_score(image: &Matrix, t: &[f64], beta: f64, theta: f64) -> Result<ConstraintField> {
    check_positive("beta", beta)?;
    check_positive("theta", theta)?;
    let scores = location_dots(image, t, "constraint_score")?
        .into_iter()
        .map(|d| gaussian(d, beta, theta))
        .collect();
    Ok(ConstraintField {
        scores,
        beta_used: beta,
        theta_used: theta,
    })
}

/// Analytic `(dS/dbeta, dS/dtheta)` per location.
pub fn constraint_score_grad(
    image: &Matrix,
    t: &[f64],
    beta: f64,
    theta: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_positive("beta", beta)?;
    check_positive("theta", theta)?;
    let dots = location_dots(image, t, "constraint_score_grad")?;
    let d_beta = dots.iter().map(|&d| gaussian(d, 1.0, theta)).collect();
    let d_theta = dots
        .iter()
        .map(|&d| {
            let gap = 1.0 - d;
            gaussian(d, beta, theta) * gap * gap / theta.powi(3)
        })
        .collect();
    Ok((d_beta, d_theta))
}

/// `v_i'(x) = (lambda * S_c(x) + 1 - lambda) * v_i(x)`.
pub fn lgia_blend(image: &FeatureMap, field: &ConstraintField, lambda: f64) -> Result<FeatureMap> {
    if field.scores.len() != image.locations() {
        return Err(Error::contract(
            "lgia_blend",
            format!("{} scores for {} locations", field.scores.len(), image.locations()),
        ));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Parameter {
            name: "lambda",
            value: lambda,
            reason: "must lie in [0, 1]",
        });
    }
    if lambda == 0.0 {
        return Ok(image.clone());
    }
    let cols = image.features.cols();
    let mut data = image.features.data().to_vec();
    for (row, s) in data.chunks_exact_mut(cols).zip(&field.scores) {
        let gain = lambda * s + 1.0 - lambda;
        row.iter_mut().for_each(|x| *x *= gain);
    }
    Ok(image.with_features(Matrix::new(image.locations(), cols, data)?))
}

/// Whole LGIA stage: shared projection, pooled sentence, constraint field,
/// blend.
pub fn lgia(
    image: &FeatureMap,
    text: &TextSequence,
    params: &AlignmentParams,
    projection: &LgiaProjection,
) -> Result<(FeatureMap, ConstraintField)> {
    let v_id = projection.apply(&image.features)?;
    let v_ld = projection.apply(&text.tokens)?;
    let pooled = pool_text(&v_ld)?;
    let field = constraint_score(&v_id, &pooled, params.beta, params.theta)?;
    let blended = lgia_blend(image, &field, params.lambda)?;
    Ok((blended, field))
}
