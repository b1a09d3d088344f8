//! Top-down pinhole camera and the ray-cast depth renderer.

use serde::{Deserialize, Serialize};

use super::{Grid, SceneDescription, SceneObject, Shape, IMAGE_HEIGHT, IMAGE_WIDTH};
use crate::tensor::Matrix;

/// A `480 x 640` depth map, row `v`, column `u`, values are depth along the
/// optical axis in meters.
pub type DepthImage = Matrix;

/// Pinhole intrinsics plus the mounting height above the table.
///
/// Pixel `(u, v)` covers `[u, u + 1) x [v, v + 1)` in image coordinates, so
/// its center is at `(u + 0.5, v + 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Distance from the optical center to the table plane, meters.
    pub height_m: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Self {
            fx: 400.0,
            fy: 400.0,
            cx: IMAGE_WIDTH as f64 / 2.0,
            cy: IMAGE_HEIGHT as f64 / 2.0,
            height_m: 1.5,
        }
    }
}

impl Camera {
    pub fn is_valid(&self) -> bool {
        self.fx > 0.0 && self.fy > 0.0 && self.height_m > 0.0
    }

    /// Image coordinates of a camera-frame point.
    pub fn project(&self, p: [f64; 3]) -> (f64, f64) {
        (
            self.fx * p[0] / p[2] + self.cx,
            self.fy * p[1] / p[2] + self.cy,
        )
    }

    /// Camera-frame point at depth `z` seen through image coordinates
    /// `(u, v)`.
    pub fn back_project(&self, u: f64, v: f64, z: f64) -> [f64; 3] {
        [(u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z]
    }

    /// Pixel extent `(width, height)` of the top face of an object of the
    /// given size resting on the table.
    pub fn footprint_px(&self, size_m: f64) -> (f64, f64) {
        let z_top = self.height_m - size_m;
        (self.fx * size_m / z_top, self.fy * size_m / z_top)
    }

    /// Object center for an object whose top face is centered on `cell`.
    pub fn place_on_cell(&self, grid: &Grid, cell: (usize, usize), size_m: f64) -> [f64; 3] {
        let (u, v) = grid.cell_center(cell);
        let top = self.back_project(u, v, self.height_m - size_m);
        [top[0], top[1], self.height_m - size_m / 2.0]
    }
}

/// Ray-casts the scene: object top surfaces over a flat table at depth
/// `camera.height_m`.
pub fn render_depth(scene: &SceneDescription) -> DepthImage {
    render_objects(&scene.camera, &scene.objects)
}

pub fn render_objects(camera: &Camera, objects: &[SceneObject]) -> DepthImage {
    let (h, w) = (IMAGE_HEIGHT, IMAGE_WIDTH);
    let mut depth = vec![camera.height_m; h * w];
    for obj in objects {
        let (u0, u1, v0, v1) = pixel_bounds(camera, obj);
        for v in v0..v1 {
            for u in u0..u1 {
                let dir = [
                    (u as f64 + 0.5 - camera.cx) / camera.fx,
                    (v as f64 + 0.5 - camera.cy) / camera.fy,
                    1.0,
                ];
                if let Some(z) = intersect(camera, obj, dir) {
                    let d = &mut depth[v * w + u];
                    if z < *d {
                        *d = z;
                    }
                }
            }
        }
    }
    Matrix::new(h, w, depth).expect("depths are finite")
}

/// Conservative pixel rectangle `[u0, u1) x [v0, v1)` containing the
/// projection of the object's bounding box.
fn pixel_bounds(camera: &Camera, obj: &SceneObject) -> (usize, usize, usize, usize) {
    let half = obj.size_m / 2.0;
    let c = obj.world_pose;
    let (mut umin, mut umax, mut vmin, mut vmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for dx in [-half, half] {
        for dy in [-half, half] {
            for dz in [-half, half] {
                let (u, v) = camera.project([c[0] + dx, c[1] + dy, c[2] + dz]);
                umin = umin.min(u);
                umax = umax.max(u);
                vmin = vmin.min(v);
                vmax = vmax.max(v);
            }
        }
    }
    let clamp = |x: f64, hi: usize| (x.max(0.0) as usize).min(hi);
    (
        clamp(umin.floor() - 1.0, IMAGE_WIDTH),
        clamp(umax.ceil() + 1.0, IMAGE_WIDTH),
        clamp(vmin.floor() - 1.0, IMAGE_HEIGHT),
        clamp(vmax.ceil() + 1.0, IMAGE_HEIGHT),
    )
}

/// Depth of the first hit along the ray `t * dir` (with `dir.z = 1`, so the
/// ray parameter equals depth).
fn intersect(camera: &Camera, obj: &SceneObject, dir: [f64; 3]) -> Option<f64> {
    let c = obj.world_pose;
    let s = obj.size_m;
    let r = s / 2.0;
    let table = camera.height_m;
    match obj.shape {
        Shape::Box => {
            let mut t_in = f64::MIN;
            let mut t_out = f64::MAX;
            for axis in 0..3 {
                let lo = c[axis] - r;
                let hi = c[axis] + r;
                let d = dir[axis];
                if d.abs() < 1e-15 {
                    if !(lo..=hi).contains(&0.0) {
                        return None;
                    }
                } else {
                    let (a, b) = ((lo / d), (hi / d));
                    t_in = t_in.max(a.min(b));
                    t_out = t_out.min(a.max(b));
                }
            }
            (t_in <= t_out && t_in > 0.0).then_some(t_in)
        }
        Shape::Sphere => {
            let dd = dir[0] * dir[0] + dir[1] * dir[1] + 1.0;
            let dc = dir[0] * c[0] + dir[1] * c[1] + c[2];
            let cc = c[0] * c[0] + c[1] * c[1] + c[2] * c[2];
            let disc = dc * dc - dd * (cc - r * r);
            if disc < 0.0 {
                return None;
            }
            let t = (dc - disc.sqrt()) / dd;
            (t > 0.0).then_some(t)
        }
        Shape::Cylinder => {
            let (z_top, z_bottom) = (table - s, table);
            let a = dir[0] * dir[0] + dir[1] * dir[1];
            let b = -2.0 * (dir[0] * c[0] + dir[1] * c[1]);
            let k = c[0] * c[0] + c[1] * c[1] - r * r;
            let (t1, t2) = if a < 1e-18 {
                if k > 0.0 {
                    return None;
                }
                (f64::MIN, f64::MAX)
            } else {
                let disc = b * b - 4.0 * a * k;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                ((-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a))
            };
            let t_in = t1.max(z_top);
            (t_in <= t2.min(z_bottom)).then_some(t_in)
        }
    }
}
