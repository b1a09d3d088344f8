//! Deterministic synthetic tabletop world.
//!
//! Scenes are laid out on a 12 x 16 grid over a 480 x 640 image taken by a
//! camera looking straight down at the table. All 3D quantities live in the
//! camera frame: `x` to the image right, `y` to the image bottom, `z` along
//! the optical axis into the table. The table is the plane `z = height`.
//!
//! Every generator here is a pure function of its seed.

pub mod annotation;
pub mod camera;
pub mod features;
pub mod sampling;
pub mod vocab;

use std::collections::HashSet;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grounding::BBox;

pub use annotation::{annotate, parse_annotation, resolve_target, AnnotationSlots, ObjectPhrase};
pub use camera::{render_depth, Camera, DepthImage};
pub use features::{embed_text, render_features, FeatureMap, TextSequence};
pub use sampling::sample_point_cloud;
pub use vocab::{Color, Relation, Shape};

pub const IMAGE_HEIGHT: usize = 480;
pub const IMAGE_WIDTH: usize = 640;
pub const MIN_OBJECT_SIZE_M: f64 = 0.02;
pub const MAX_OBJECT_SIZE_M: f64 = 0.12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Base,
    Novel,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Base => "base",
            Split::Novel => "novel",
        }
    }
}

/// Placement grid over the image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Self { rows: 12, cols: 16 }
    }
}

impl Grid {
    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn cell_width(&self) -> f64 {
        IMAGE_WIDTH as f64 / self.cols as f64
    }

    pub fn cell_height(&self) -> f64 {
        IMAGE_HEIGHT as f64 / self.rows as f64
    }

    /// Pixel-space center `(u, v)` of a cell.
    pub fn cell_center(&self, cell: (usize, usize)) -> (f64, f64) {
        (
            (cell.1 as f64 + 0.5) * self.cell_width(),
            (cell.0 as f64 + 0.5) * self.cell_height(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub class_name: String,
    pub color: Color,
    pub shape: Shape,
    /// Edge length of a box, diameter of a sphere, diameter and height of a
    /// cylinder.
    pub size_m: f64,
    /// `(row, col)` on the placement grid.
    pub grid_cell: (usize, usize),
    /// Geometric center in the camera frame, meters.
    pub world_pose: [f64; 3],
    pub is_novel: bool,
}

impl SceneObject {
    pub fn phrase(&self) -> ObjectPhrase {
        ObjectPhrase {
            color: self.color,
            shape: self.shape,
            class_name: self.class_name.clone(),
        }
    }

    /// Objects that would be described identically.
    pub fn same_attributes(&self, other: &SceneObject) -> bool {
        self.class_name == other.class_name
            && self.color == other.color
            && self.shape == other.shape
            && self.size_m == other.size_m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDescription {
    pub scene_id: String,
    pub seed: u64,
    pub split: Split,
    pub objects: Vec<SceneObject>,
    pub target_index: usize,
    pub relative_index: Option<usize>,
    pub relation: Option<Relation>,
    pub template_id: usize,
    pub description: String,
    /// `(height, width)` in pixels.
    pub image_size: (usize, usize),
    pub camera: Camera,
    pub grid: Grid,
}

impl SceneDescription {
    pub fn target(&self) -> &SceneObject {
        &self.objects[self.target_index]
    }

    /// Index of another object indistinguishable from the target, if any.
    pub fn twin_of_target(&self) -> Option<usize> {
        let target = self.target();
        self.objects
            .iter()
            .enumerate()
            .find(|(i, o)| *i != self.target_index && o.same_attributes(target))
            .map(|(i, _)| i)
    }

    /// Ground-truth box of object `index`: its cell center plus or minus half
    /// of its top-face footprint.
    pub fn object_box(&self, index: usize) -> BBox {
        let obj = &self.objects[index];
        let (u, v) = self.grid.cell_center(obj.grid_cell);
        let (fw, fh) = self.camera.footprint_px(obj.size_m);
        BBox::new(u - fw / 2.0, v - fh / 2.0, u + fw / 2.0, v + fh / 2.0)
    }

    pub fn ground_truth_box(&self) -> BBox {
        self.object_box(self.target_index)
    }
}

/// Base/novel class partition with the number of scenes drawn per split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub base_classes: Vec<String>,
    pub novel_classes: Vec<String>,
    pub grounding_scenes_per_split: usize,
    pub grasp_scenes_per_split: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            base_classes: vocab::base_classes().iter().map(|s| s.to_string()).collect(),
            novel_classes: vocab::novel_classes().iter().map(|s| s.to_string()).collect(),
            grounding_scenes_per_split: 500,
            grasp_scenes_per_split: 100,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.base_classes.is_empty() || self.novel_classes.is_empty() {
            return Err(Error::Config("base and novel class sets must be nonempty".into()));
        }
        let base: HashSet<&String> = self.base_classes.iter().collect();
        if let Some(c) = self.novel_classes.iter().find(|c| base.contains(c)) {
            return Err(Error::Config(format!("class `{c}` is in both base and novel")));
        }
        let known: HashSet<&str> = vocab::CLASS_NAMES.iter().copied().collect();
        if let Some(c) = self
            .base_classes
            .iter()
            .chain(&self.novel_classes)
            .find(|c| !known.contains(c.as_str()))
        {
            return Err(Error::Config(format!("unknown class `{c}`")));
        }
        Ok(())
    }

    pub fn classes(&self, split: Split) -> &[String] {
        match split {
            Split::Base => &self.base_classes,
            Split::Novel => &self.novel_classes,
        }
    }
}

/// Layout knobs for [`generate_scene`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub objects_per_scene: usize,
    pub size_range_m: (f64, f64),
    /// Restricts every object to these shapes. Empty means all shapes.
    pub shapes: Vec<Shape>,
    /// Probability that a scene without twins still carries a relation clause.
    pub relation_probability: f64,
    pub camera: Camera,
    pub grid: Grid,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            objects_per_scene: 8,
            size_range_m: (0.03, 0.10),
            shapes: Vec::new(),
            relation_probability: 0.5,
            camera: Camera::default(),
            grid: Grid::default(),
        }
    }
}

const MAX_LAYOUT_TRIES: usize = 64;

/// Generates one scene with targets drawn from `split`.
///
/// With `identical_pair`, two objects share every attribute and the target
/// is one of them; the description then carries a relation that singles the
/// target out.
pub fn generate_scene(
    seed: u64,
    spec: &SplitSpec,
    split: Split,
    identical_pair: bool,
    params: &SceneParams,
) -> Result<SceneDescription> {
    spec.validate()?;
    let n = params.objects_per_scene;
    if n == 0 {
        return Err(Error::Config("objects_per_scene must be positive".into()));
    }
    if params.grid.cells() < n {
        return Err(Error::Config(format!(
            "{} grid cells cannot hold {n} objects",
            params.grid.cells()
        )));
    }
    if identical_pair && n < 3 {
        return Err(Error::Config(
            "an identical pair needs at least one more object as a reference".into(),
        ));
    }
    let (lo, hi) = params.size_range_m;
    if !(MIN_OBJECT_SIZE_M..=MAX_OBJECT_SIZE_M).contains(&lo)
        || !(lo..=MAX_OBJECT_SIZE_M).contains(&hi)
    {
        return Err(Error::Config(format!(
            "size range {lo}..{hi} outside [{MIN_OBJECT_SIZE_M}, {MAX_OBJECT_SIZE_M}]"
        )));
    }
    let shapes: &[Shape] = if params.shapes.is_empty() {
        &Shape::ALL
    } else {
        &params.shapes
    };
    let classes = spec.classes(split);
    if classes.len() * Color::ALL.len() * shapes.len() < n {
        return Err(Error::Config("too few attribute combinations for a scene".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_LAYOUT_TRIES {
        if let Some(scene) = try_layout(&mut rng, seed, split, identical_pair, classes, shapes, params)? {
            return Ok(scene);
        }
    }
    Err(Error::Config(format!(
        "seed {seed}: no disambiguating layout found in {MAX_LAYOUT_TRIES} tries"
    )))
}

fn try_layout(
    rng: &mut ChaCha8Rng,
    seed: u64,
    split: Split,
    identical_pair: bool,
    classes: &[String],
    shapes: &[Shape],
    params: &SceneParams,
) -> Result<Option<SceneDescription>> {
    let n = params.objects_per_scene;
    let grid = params.grid;
    let camera = params.camera;
    let cells = index::sample(rng, grid.cells(), n).into_vec();

    let mut seen = HashSet::new();
    let mut objects = Vec::with_capacity(n);
    for (i, &flat) in cells.iter().enumerate() {
        let cell = (flat / grid.cols, flat % grid.cols);
        let (class_name, color, shape, size_m) = if identical_pair && i == 1 {
            let first: &SceneObject = &objects[0];
            (first.class_name.clone(), first.color, first.shape, first.size_m)
        } else {
            loop {
                let class_name = classes[rng.random_range(0..classes.len())].clone();
                let color = Color::ALL[rng.random_range(0..Color::ALL.len())];
                let shape = shapes[rng.random_range(0..shapes.len())];
                if seen.insert((class_name.clone(), color, shape)) {
                    let size = rng.random_range(params.size_range_m.0..=params.size_range_m.1);
                    break (class_name, color, shape, size);
                }
            }
        };
        let world_pose = camera.place_on_cell(&grid, cell, size_m);
        objects.push(SceneObject {
            class_name,
            color,
            shape,
            size_m,
            grid_cell: cell,
            world_pose,
            is_novel: split == Split::Novel,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let objects: Vec<SceneObject> = order.iter().map(|&i| objects[i].clone()).collect();
    let position = |orig: usize| order.iter().position(|&i| i == orig).unwrap();

    let (target_index, twin) = if identical_pair {
        let pick = rng.random_range(0..2usize);
        (position(pick), Some(position(1 - pick)))
    } else {
        (position(rng.random_range(0..n)), None)
    };
    let template_id = rng.random_range(0..vocab::TEMPLATES.len());

    let target_cell = objects[target_index].grid_cell;
    let mut refs: Vec<usize> = (0..n)
        .filter(|&i| i != target_index && Some(i) != twin)
        .collect();
    refs.shuffle(rng);

    let (relative_index, relation) = match twin {
        Some(twin) => {
            let twin_cell = objects[twin].grid_cell;
            let found = refs.iter().find_map(|&r| {
                let ref_cell = objects[r].grid_cell;
                preferred_relations(target_cell, ref_cell)
                    .into_iter()
                    .find(|rel| rel.holds(target_cell, ref_cell) && !rel.holds(twin_cell, ref_cell))
                    .map(|rel| (r, rel))
            });
            match found {
                Some((r, rel)) => (Some(r), Some(rel)),
                None => return Ok(None),
            }
        }
        None => {
            if !refs.is_empty() && rng.random_bool(params.relation_probability) {
                let r = refs[0];
                let ref_cell = objects[r].grid_cell;
                let rel = preferred_relations(target_cell, ref_cell)
                    .into_iter()
                    .find(|rel| rel.holds(target_cell, ref_cell))
                    .expect("distinct cells always satisfy some relation");
                (Some(r), Some(rel))
            } else {
                (None, None)
            }
        }
    };

    let mut scene = SceneDescription {
        scene_id: format!("{}-{seed:016x}", split.name()),
        seed,
        split,
        objects,
        target_index,
        relative_index,
        relation,
        template_id,
        description: String::new(),
        image_size: (IMAGE_HEIGHT, IMAGE_WIDTH),
        camera,
        grid,
    };
    scene.description = annotate(&scene)?;
    Ok(Some(scene))
}

/// Relations ordered by how pronounced they are: the axis with the larger
/// cell offset comes first.
fn preferred_relations(subject: (usize, usize), reference: (usize, usize)) -> [Relation; 4] {
    let dr = subject.0.abs_diff(reference.0);
    let dc = subject.1.abs_diff(reference.1);
    if dc >= dr {
        [Relation::LeftOf, Relation::RightOf, Relation::Behind, Relation::InFrontOf]
    } else {
        [Relation::Behind, Relation::InFrontOf, Relation::LeftOf, Relation::RightOf]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SplitSpec {
        SplitSpec::default()
    }

    #[test]
    fn same_seed_same_scene() {
        let p = SceneParams::default();
        let a = generate_scene(42, &spec(), Split::Base, true, &p).unwrap();
        let b = generate_scene(42, &spec(), Split::Base, true, &p).unwrap();
        assert_eq!(a, b);
        let c = generate_scene(43, &spec(), Split::Base, true, &p).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn eight_objects_on_distinct_cells() {
        let p = SceneParams::default();
        for seed in 0..50 {
            let s = generate_scene(seed, &spec(), Split::Novel, seed % 2 == 0, &p).unwrap();
            assert_eq!(s.objects.len(), 8);
            let cells: HashSet<_> = s.objects.iter().map(|o| o.grid_cell).collect();
            assert_eq!(cells.len(), 8);
            assert!(s.objects.iter().all(|o| (0.02..=0.12).contains(&o.size_m)));
            assert!(!s.description.is_empty());
        }
    }

    #[test]
    fn identical_pair_has_exactly_one_twin() {
        let p = SceneParams::default();
        for seed in 0..100 {
            let s = generate_scene(seed, &spec(), Split::Base, true, &p).unwrap();
            let mut pairs = 0;
            for i in 0..s.objects.len() {
                for j in i + 1..s.objects.len() {
                    if s.objects[i].same_attributes(&s.objects[j]) {
                        pairs += 1;
                    }
                }
            }
            assert_eq!(pairs, 1, "seed {seed}");
            assert!(s.twin_of_target().is_some());
            assert!(s.relative_index.is_some() && s.relation.is_some());
        }
    }

    #[test]
    fn targets_come_from_requested_split() {
        let spec = spec();
        let p = SceneParams::default();
        for seed in 0..100 {
            let s = generate_scene(seed, &spec, Split::Novel, false, &p).unwrap();
            assert!(spec.novel_classes.contains(&s.target().class_name));
            assert!(!spec.base_classes.contains(&s.target().class_name));
            assert!(s.target().is_novel);
        }
    }

    #[test]
    fn too_many_objects_is_a_config_error() {
        let p = SceneParams {
            objects_per_scene: 8,
            grid: Grid { rows: 2, cols: 3 },
            ..SceneParams::default()
        };
        let err = generate_scene(1, &spec(), Split::Base, false, &p).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn overlapping_split_rejected() {
        let mut s = spec();
        s.novel_classes.push("apple".into());
        assert!(matches!(s.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn ground_truth_box_inside_image() {
        let p = SceneParams {
            size_range_m: (0.02, 0.12),
            ..SceneParams::default()
        };
        for seed in 0..200 {
            let s = generate_scene(seed, &spec(), Split::Base, false, &p).unwrap();
            for i in 0..s.objects.len() {
                let b = s.object_box(i);
                assert!(b.x_min >= 0.0 && b.y_min >= 0.0);
                assert!(b.x_max <= IMAGE_WIDTH as f64 && b.y_max <= IMAGE_HEIGHT as f64);
                assert!(b.x_min < b.x_max && b.y_min < b.y_max);
            }
        }
    }
}
