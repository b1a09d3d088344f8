//! Depth-image cropping and the 2.5D completion used to see object sides
//! from a single top-down view.

use std::collections::{HashSet, VecDeque};

use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};

use super::PointCloud;
use crate::error::{Error, Result};
use crate::grounding::BBox;
use crate::scene::{Camera, DepthImage};

/// Pixels closer than this to the table depth are treated as table.
pub const PLANE_TOLERANCE_M: f64 = 1e-3;

/// A pixel inside a crop that sees an object, with its depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropPixel {
    pub u: usize,
    pub v: usize,
    pub depth: f64,
}

/// Pixels whose centers fall in `bbox` and whose depth differs from the
/// table by more than a millimeter.
pub fn crop_pixels(depth: &DepthImage, bbox: &BBox, camera: &Camera) -> Result<Vec<CropPixel>> {
    if !camera.is_valid() {
        return Err(Error::contract("crop_cloud", "invalid camera"));
    }
    if !bbox.is_valid() || bbox.x_min < 0.0 || bbox.y_min < 0.0
        || bbox.x_max > depth.cols() as f64
        || bbox.y_max > depth.rows() as f64
    {
        return Err(Error::contract("crop_cloud", format!("box {bbox:?} outside the image")));
    }
    let u0 = (bbox.x_min - 0.5).ceil().max(0.0) as usize;
    let v0 = (bbox.y_min - 0.5).ceil().max(0.0) as usize;
    let mut out = Vec::new();
    for v in v0..depth.rows() {
        let vc = v as f64 + 0.5;
        if vc >= bbox.y_max {
            break;
        }
        for u in u0..depth.cols() {
            let uc = u as f64 + 0.5;
            if uc >= bbox.x_max {
                break;
            }
            let z = depth.get(v, u);
            if (z - camera.height_m).abs() > PLANE_TOLERANCE_M {
                out.push(CropPixel { u, v, depth: z });
            }
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyCrop);
    }
    Ok(out)
}

fn back_project(camera: &Camera, px: &CropPixel) -> Point3<f64> {
    Point3::from(camera.back_project(px.u as f64 + 0.5, px.v as f64 + 0.5, px.depth))
}

/// Back-projects every object pixel inside `bbox`.
pub fn crop_cloud(depth: &DepthImage, bbox: &BBox, camera: &Camera) -> Result<PointCloud> {
    let pixels = crop_pixels(depth, bbox, camera)?;
    Ok(PointCloud::new(
        pixels.iter().map(|px| back_project(camera, px)).collect(),
    ))
}

/// Indices of the `k` nearest neighbors of every point, the point itself
/// included.
fn knn(points: &[Point3<f64>], k: usize) -> Vec<Vec<usize>> {
    let k = k.min(points.len());
    points
        .iter()
        .map(|p| {
            let mut d: Vec<(f64, usize)> = points
                .iter()
                .enumerate()
                .map(|(j, q)| ((q - p).norm_squared(), j))
                .collect();
            if k < d.len() {
                d.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap());
                d.truncate(k);
            }
            d.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

/// Surface normals from a plane fit over the `k` nearest neighbors, oriented
/// toward the camera at the origin.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Vec<Vector3<f64>> {
    let neighbors = knn(&cloud.points, k);
    cloud
        .points
        .iter()
        .zip(neighbors)
        .map(|(p, nb)| {
            let mean = nb
                .iter()
                .fold(Vector3::zeros(), |acc, &j| acc + cloud.points[j].coords)
                / nb.len() as f64;
            let mut cov = Matrix3::zeros();
            for &j in &nb {
                let d = cloud.points[j].coords - mean;
                cov += d * d.transpose();
            }
            let n = if nb.len() < 3 {
                -p.coords.normalize()
            } else {
                let eig = SymmetricEigen::new(cov);
                let i = eig.eigenvalues.imin();
                eig.eigenvectors.column(i).into_owned()
            };
            if n.dot(&p.coords) > 0.0 {
                -n
            } else {
                n
            }
        })
        .collect()
}

/// The perceived target: visible points plus inferred side walls.
///
/// A top-down view only shows upper surfaces, which carry no opposing
/// normals for a horizontal grasp. Treating each object pixel as a vertical
/// column down to the table, every column face not shared with another
/// object pixel becomes a wall, sampled at fixed depth levels with an
/// axis-aligned horizontal normal.
#[derive(Debug, Clone)]
pub struct GraspView {
    pub pixels: Vec<CropPixel>,
    pub cloud: PointCloud,
    /// Box center lifted to 3D at the median crop depth.
    pub target_center: Point3<f64>,
}

impl GraspView {
    /// Builds the view from the pixels of `bbox` grown by `margin_px`,
    /// keeping the connected component nearest the box center.
    pub fn from_depth(
        depth: &DepthImage,
        bbox: &BBox,
        camera: &Camera,
        margin_px: f64,
        wall_step_m: f64,
        normal_neighbors: usize,
    ) -> Result<GraspView> {
        let grown = bbox
            .expanded(margin_px)
            .clamped(depth.cols() as f64, depth.rows() as f64);
        let all = crop_pixels(depth, &grown, camera)?;
        let (cu, cv) = bbox.center();
        let pixels = central_component(&all, cu, cv);

        let mut depths: Vec<f64> = pixels.iter().map(|p| p.depth).collect();
        depths.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = depths[depths.len() / 2];
        let target_center = Point3::from(camera.back_project(cu, cv, median));

        let visible = PointCloud::new(pixels.iter().map(|px| back_project(camera, px)).collect());
        let visible_normals = estimate_normals(&visible, normal_neighbors);

        let mask: HashSet<(usize, usize)> = pixels.iter().map(|p| (p.u, p.v)).collect();
        let mut points = visible.points;
        let mut normals = visible_normals;
        for px in &pixels {
            let top = back_project(camera, px);
            let half_pixel = 0.5 * px.depth / camera.fx;
            let faces: [((isize, isize), Vector3<f64>); 4] = [
                ((-1, 0), -Vector3::x()),
                ((1, 0), Vector3::x()),
                ((0, -1), -Vector3::y()),
                ((0, 1), Vector3::y()),
            ];
            for ((du, dv), n) in faces {
                let nu = px.u as isize + du;
                let nv = px.v as isize + dv;
                if nu >= 0 && nv >= 0 && mask.contains(&(nu as usize, nv as usize)) {
                    continue;
                }
                let base = top + n * half_pixel;
                let mut level = 1;
                loop {
                    let z = camera.height_m - level as f64 * wall_step_m;
                    if z <= px.depth {
                        break;
                    }
                    if z < camera.height_m - PLANE_TOLERANCE_M {
                        points.push(Point3::new(base.x, base.y, z));
                        normals.push(n);
                    }
                    level += 1;
                }
            }
        }
        Ok(GraspView {
            pixels,
            cloud: PointCloud::with_normals(points, normals)?,
            target_center,
        })
    }
}

/// The 4-connected component containing the pixel nearest `(cu, cv)`.
fn central_component(pixels: &[CropPixel], cu: f64, cv: f64) -> Vec<CropPixel> {
    let index: std::collections::HashMap<(usize, usize), usize> = pixels
        .iter()
        .enumerate()
        .map(|(i, p)| ((p.u, p.v), i))
        .collect();
    let seed = (0..pixels.len())
        .min_by(|&a, &b| {
            let d = |p: &CropPixel| (p.u as f64 + 0.5 - cu).powi(2) + (p.v as f64 + 0.5 - cv).powi(2);
            d(&pixels[a]).partial_cmp(&d(&pixels[b])).unwrap().then(a.cmp(&b))
        })
        .expect("crop is nonempty");
    let mut keep = vec![false; pixels.len()];
    keep[seed] = true;
    let mut queue = VecDeque::from([seed]);
    while let Some(i) = queue.pop_front() {
        let p = pixels[i];
        let neighbors = [
            (p.u.wrapping_sub(1), p.v),
            (p.u + 1, p.v),
            (p.u, p.v.wrapping_sub(1)),
            (p.u, p.v + 1),
        ];
        for key in neighbors {
            if let Some(&j) = index.get(&key) {
                if !keep[j] {
                    keep[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    pixels
        .iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(*p))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::camera::render_objects;
    use crate::scene::{Color, SceneObject, Shape};

    fn centered_box(cam: &Camera, s: f64) -> SceneObject {
        SceneObject {
            class_name: "mug".into(),
            color: Color::Red,
            shape: Shape::Box,
            size_m: s,
            grid_cell: (0, 0),
            world_pose: [0.0, 0.0, cam.height_m - s / 2.0],
            is_novel: false,
        }
    }

    #[test]
    fn empty_table_crop_fails() {
        let cam = Camera::default();
        let d = render_objects(&cam, &[]);
        let err = crop_cloud(&d, &BBox::new(100.0, 100.0, 140.0, 140.0), &cam).unwrap_err();
        assert!(matches!(err, Error::EmptyCrop));
    }

    #[test]
    fn crop_counts_footprint_pixels() {
        let cam = Camera::default();
        let s = 0.05;
        let d = render_objects(&cam, &[centered_box(&cam, s)]);
        let (fw, fh) = cam.footprint_px(s);
        let bbox = BBox::new(cam.cx - fw / 2.0, cam.cy - fh / 2.0, cam.cx + fw / 2.0, cam.cy + fh / 2.0);
        let cloud = crop_cloud(&d, &bbox, &cam).unwrap();
        let side = (0..640)
            .filter(|&u| ((u as f64 + 0.5) - cam.cx).abs() < fw / 2.0)
            .count();
        assert_eq!(cloud.len(), side * side);
        assert!(cloud.points.iter().all(|p| (p.z - (cam.height_m - s)).abs() < 1e-12));
    }

    #[test]
    fn box_outside_image_is_contract_error() {
        let cam = Camera::default();
        let d = render_objects(&cam, &[]);
        assert!(matches!(
            crop_cloud(&d, &BBox::new(600.0, 10.0, 700.0, 20.0), &cam),
            Err(Error::Contract { .. })
        ));
    }

    #[test]
    fn plane_normals_face_camera() {
        let pts: Vec<Point3<f64>> = (0..10)
            .flat_map(|i| (0..10).map(move |j| Point3::new(i as f64 * 0.01, j as f64 * 0.01, 1.2)))
            .collect();
        let normals = estimate_normals(&PointCloud::new(pts), 10);
        for n in normals {
            assert!((n - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn view_adds_opposing_walls() {
        let cam = Camera::default();
        let s = 0.04;
        let d = render_objects(&cam, &[centered_box(&cam, s)]);
        let (fw, _) = cam.footprint_px(s);
        let bbox = BBox::new(cam.cx - fw / 2.0, cam.cy - fw / 2.0, cam.cx + fw / 2.0, cam.cy + fw / 2.0);
        let view = GraspView::from_depth(&d, &bbox, &cam, 4.0, 0.002, 10).unwrap();
        let normals = view.cloud.normals.as_ref().unwrap();
        let mut xs_pos = Vec::new();
        let mut xs_neg = Vec::new();
        for (p, n) in view.cloud.points.iter().zip(normals) {
            if n.x > 0.99 {
                xs_pos.push(p.x);
            }
            if n.x < -0.99 {
                xs_neg.push(p.x);
            }
        }
        let max = xs_pos.iter().copied().fold(f64::MIN, f64::max);
        let min = xs_neg.iter().copied().fold(f64::MAX, f64::min);
        // walls sit on the pixel edges, within one pixel of the true faces
        let pixel = (cam.height_m - s) / cam.fx;
        assert!((max - s / 2.0).abs() <= pixel, "{max}");
        assert!((min + s / 2.0).abs() <= pixel, "{min}");
        assert!((view.target_center.z - (cam.height_m - s)).abs() < 1e-12);
    }

    #[test]
    fn component_filter_drops_neighbors() {
        let px = |u, v| CropPixel { u, v, depth: 1.0 };
        let pixels = vec![px(10, 10), px(11, 10), px(11, 11), px(20, 20), px(21, 20)];
        let kept = central_component(&pixels, 11.0, 11.0);
        assert_eq!(kept.len(), 3);
    }
}
