//! Language-guided query selection, the similarity box head, and IoU.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{FeatureMap, TextSequence};
use crate::tensor::{dot, Matrix};

/// Query count used by the full-size detector.
pub const PUBLISHED_QUERY_COUNT: usize = 900;
/// Query count for the 192-cell synthetic grid.
pub const DESK_QUERY_COUNT: usize = 32;

/// Axis-aligned pixel box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 4]", from = "[f64; 4]")]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

impl From<[f64; 4]> for BBox {
    fn from(a: [f64; 4]) -> Self {
        BBox::new(a[0], a[1], a[2], a[3])
    }
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    /// Finite with positive width and height.
    pub fn is_valid(&self) -> bool {
        [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite())
            && self.x_min < self.x_max
            && self.y_min < self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    pub fn expanded(&self, margin: f64) -> BBox {
        BBox::new(
            self.x_min - margin,
            self.y_min - margin,
            self.x_max + margin,
            self.y_max + margin,
        )
    }

    /// Intersection with `[0, width] x [0, height]`.
    pub fn clamped(&self, width: f64, height: f64) -> BBox {
        BBox::new(
            self.x_min.clamp(0.0, width),
            self.y_min.clamp(0.0, height),
            self.x_max.clamp(0.0, width),
            self.y_max.clamp(0.0, height),
        )
    }

    pub fn translated(&self, dx: f64, dy: f64) -> BBox {
        BBox::new(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub score: f64,
}

/// Image locations chosen as decoder queries.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySet {
    /// Location indices, best first.
    pub indices: Vec<usize>,
    /// Selection score of each index, aligned with `indices`.
    pub scores: Vec<f64>,
    pub features: Matrix,
    pub k: usize,
}

/// Highest dot product between `row` and any text token.
fn text_affinity(row: &[f64], text: &TextSequence) -> f64 {
    text.tokens
        .row_iter()
        .map(|t| dot(row, t))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Top-`k` locations by their best token similarity. Ties go to the lower
/// location index.
pub fn select_queries(image: &FeatureMap, text: &TextSequence, k: usize) -> Result<QuerySet> {
    if k == 0 {
        return Err(Error::contract("select_queries", "k must be at least 1"));
    }
    if image.locations() == 0 {
        return Err(Error::EmptyScene);
    }
    if text.tokens.rows() == 0 {
        return Err(Error::EmptyText);
    }
    if image.features.cols() != text.tokens.cols() {
        return Err(Error::contract(
            "select_queries",
            format!("image dim {} vs text dim {}", image.features.cols(), text.tokens.cols()),
        ));
    }
    let mut scored: Vec<(usize, f64)> = image
        .features
        .row_iter()
        .map(|r| text_affinity(r, text))
        .enumerate()
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    let indices: Vec<usize> = scored.iter().map(|s| s.0).collect();
    Ok(QuerySet {
        features: image.features.select_rows(&indices),
        scores: scored.iter().map(|s| s.1).collect(),
        indices,
        k,
    })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Similarity box head: each query becomes its cell's window, sized by the
/// footprint the feature map carries for that cell, and scored by the
/// sigmoid of its best token similarity. Boxes are clipped to the image.
pub fn decode(queries: &QuerySet, image: &FeatureMap, text: &TextSequence) -> Result<Vec<ScoredBox>> {
    if queries.indices.is_empty() {
        return Err(Error::contract("decode", "empty query set"));
    }
    let (w, h) = (
        image.grid.cols as f64 * image.grid.cell_width(),
        image.grid.rows as f64 * image.grid.cell_height(),
    );
    queries
        .indices
        .iter()
        .zip(queries.features.row_iter())
        .map(|(&loc, row)| {
            let (u, v) = image.grid.cell_center(image.cell_of(loc));
            let (ew, eh) = image.extents[loc];
            let bbox = BBox::new(u - ew / 2.0, v - eh / 2.0, u + ew / 2.0, v + eh / 2.0).clamped(w, h);
            if !bbox.is_valid() {
                return Err(Error::contract("decode", format!("degenerate box at location {loc}")));
            }
            Ok(ScoredBox {
                bbox,
                score: sigmoid(text_affinity(row, text)),
            })
        })
        .collect()
}

/// The highest-scoring box; the first one wins ties.
pub fn argmax_box(boxes: &[ScoredBox]) -> Result<ScoredBox> {
    let mut best: Option<&ScoredBox> = None;
    for b in boxes {
        if best.is_none_or(|cur| b.score > cur.score) {
            best = Some(b);
        }
    }
    best.copied().ok_or(Error::EmptyCandidates)
}

pub fn iou(a: &BBox, b: &BBox) -> Result<f64> {
    if !a.is_valid() || !b.is_valid() {
        return Err(Error::contract("iou", format!("degenerate box {a:?} or {b:?}")));
    }
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    Ok(inter / (a.area() + b.area() - inter))
}

/// A prediction counts as correct only when IoU is strictly above one half.
pub fn hit_at_05(predicted: &BBox, truth: &BBox) -> Result<bool> {
    Ok(iou(predicted, truth)? > 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::features::TokenRole;
    use crate::scene::Grid;

    fn feature_map(rows: &[Vec<f64>]) -> FeatureMap {
        let grid = Grid { rows: 1, cols: rows.len() };
        FeatureMap {
            features: Matrix::from_rows(rows).unwrap(),
            grid,
            extents: vec![(20.0, 10.0); rows.len()],
        }
    }

    fn text(rows: &[Vec<f64>]) -> TextSequence {
        TextSequence {
            tokens: Matrix::from_rows(rows).unwrap(),
            roles: vec![TokenRole::Target; rows.len()],
            description: "x".into(),
        }
    }

    #[test]
    fn iou_fixtures() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &BBox::new(5.0, 5.0, 6.0, 6.0)).unwrap(), 0.0);
        let third = iou(&a, &BBox::new(1.0, 0.0, 3.0, 2.0)).unwrap();
        assert!((third - 1.0 / 3.0).abs() < 1e-15);
        assert!(iou(&a, &BBox::new(1.0, 1.0, 1.0, 2.0)).is_err());
    }

    #[test]
    fn half_overlap_is_not_a_hit() {
        let a = BBox::new(0.0, 0.0, 2.0, 1.0);
        let b = BBox::new(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &b).unwrap(), 0.5);
        assert!(!hit_at_05(&a, &b).unwrap());
        assert!(hit_at_05(&a, &a).unwrap());
    }

    #[test]
    fn argmax_tie_goes_first() {
        let mk = |s| ScoredBox {
            bbox: BBox::new(0.0, 0.0, 1.0, 1.0),
            score: s,
        };
        let mut last = mk(0.9);
        last.bbox = BBox::new(1.0, 1.0, 2.0, 2.0);
        let boxes = [mk(0.2), mk(0.9), last];
        assert_eq!(argmax_box(&boxes).unwrap(), boxes[1]);
        assert!(matches!(argmax_box(&[]), Err(Error::EmptyCandidates)));
    }

    #[test]
    fn matching_location_ranked_first() {
        let image = feature_map(&[vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, -1.0]]);
        let q = select_queries(&image, &text(&[vec![1.0, 0.0]]), 2).unwrap();
        assert_eq!(q.indices, vec![1, 0]);
        assert_eq!(q.features.row(0), &[1.0, 0.0]);
        let all = select_queries(&image, &text(&[vec![1.0, 0.0]]), 10).unwrap();
        assert_eq!(all.indices.len(), 3);
    }

    #[test]
    fn query_ties_prefer_lower_index() {
        let image = feature_map(&[vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0, 1.0]]);
        let q = select_queries(&image, &text(&[vec![0.0, 1.0]]), 2).unwrap();
        assert_eq!(q.indices, vec![0, 1]);
    }

    #[test]
    fn decoded_box_sits_on_its_cell() {
        let image = feature_map(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let t = text(&[vec![1.0, 0.0]]);
        let q = select_queries(&image, &t, 1).unwrap();
        let boxes = decode(&q, &image, &t).unwrap();
        let (u, v) = image.grid.cell_center((0, 1));
        assert_eq!(boxes[0].bbox, BBox::new(u - 10.0, v - 5.0, u + 10.0, v + 5.0));
        assert!((boxes[0].score - sigmoid(1.0)).abs() < 1e-15);
    }

    #[test]
    fn bbox_json_is_an_array() {
        let s = ScoredBox {
            bbox: BBox::new(1.0, 2.0, 3.0, 4.0),
            score: 0.5,
        };
        assert_eq!(serde_json::to_string(&s).unwrap(), r#"{"box":[1.0,2.0,3.0,4.0],"score":0.5}"#);
    }
}
