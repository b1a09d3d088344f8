use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{estimate_normals, GraspPose, PointCloud, MAX_JAW_WIDTH_M};
use crate::error::{Error, Result};

/// Knobs of the antipodal sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateParams {
    /// Opposite contact normals may deviate from exact opposition by at most
    /// `atan(friction)`.
    pub friction: f64,
    /// Maximum distance of the opposite contact from the inward normal ray.
    pub ray_tolerance_m: f64,
    /// Contacts closer than this are the same surface.
    pub min_separation_m: f64,
    /// Added to the contact separation to get the jaw opening.
    pub clearance_m: f64,
    pub max_width_m: f64,
    /// Jaw pad extent along the approach axis, used to size the opening.
    pub finger_depth_m: f64,
    /// Jaw pad extent along the minor axis.
    pub pad_width_m: f64,
    /// Neighborhood size for normal estimation when the cloud has none.
    pub normal_neighbors: usize,
}

impl Default for CandidateParams {
    fn default() -> Self {
        Self {
            friction: 0.4,
            ray_tolerance_m: 0.002,
            min_separation_m: 0.005,
            clearance_m: 0.005,
            max_width_m: MAX_JAW_WIDTH_M,
            finger_depth_m: 0.03,
            pad_width_m: 0.02,
            normal_neighbors: 10,
        }
    }
}

/// Antipodal grasp sampler.
///
/// For each of `n` seeded draws a surface point `p` is picked and the ray
/// from `p` along its inward normal is searched for an opposite contact `q`
/// whose normal opposes `p`'s within the friction cone. The pose closes along
/// `p - q` about their midpoint and scores the cosine of the worse of the two
/// contact-normal deviations from the closing axis.
///
/// The opening is `|p - q|` plus clearance, widened if needed so the open
/// jaws clear every observed point inside the pad volume; otherwise a chord
/// narrower than the object's widest section would put the fingers through
/// it.
pub fn generate_candidates(
    cloud: &PointCloud,
    n: usize,
    seed: u64,
    params: &CandidateParams,
) -> Result<Vec<GraspPose>> {
    if n == 0 {
        return Err(Error::contract("generate_candidates", "n must be at least 1"));
    }
    if cloud.is_empty() {
        return Err(Error::NoCandidates);
    }
    let estimated;
    let normals: &[Vector3<f64>] = match &cloud.normals {
        Some(ns) => ns,
        None => {
            estimated = estimate_normals(cloud, params.normal_neighbors);
            &estimated
        }
    };
    let cos_cone = params.friction.atan().cos();
    let pts = &cloud.points;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut poses = Vec::new();
    for _ in 0..n {
        let i = rng.random_range(0..pts.len());
        let p = pts[i];
        let np = normals[i];
        let inward = -np;
        let mut best: Option<(f64, f64, usize)> = None;
        for (j, q) in pts.iter().enumerate() {
            let w = q - p;
            let t = w.dot(&inward);
            if t < params.min_separation_m {
                continue;
            }
            if normals[j].dot(&inward) < cos_cone {
                continue;
            }
            let lateral = (w - inward * t).norm();
            if lateral > params.ray_tolerance_m {
                continue;
            }
            if best.is_none_or(|(bl, bt, _)| (lateral, t) < (bl, bt)) {
                best = Some((lateral, t, j));
            }
        }
        let Some((_, _, j)) = best else { continue };
        let q = pts[j];
        let span = (p - q).norm();
        if span + params.clearance_m > params.max_width_m {
            continue;
        }
        let closing = (p - q) / span;
        let score = np.dot(&closing).min(-normals[j].dot(&closing)).clamp(0.0, 1.0);
        let mid = Point3::from((p.coords + q.coords) / 2.0);
        let frame = GraspPose::from_closing_axis(closing, mid, params.max_width_m, score)?;
        let opening = span.max(2.0 * half_extent(&frame, pts, params)) + params.clearance_m;
        if opening > params.max_width_m {
            continue;
        }
        poses.push(GraspPose::new(*frame.rotation(), mid, opening, score)?);
    }
    if poses.is_empty() {
        return Err(Error::NoCandidates);
    }
    Ok(poses)
}

/// Largest distance along the closing axis of any point inside the pad
/// volume of the fully open gripper.
fn half_extent(frame: &GraspPose, pts: &[Point3<f64>], params: &CandidateParams) -> f64 {
    let (a, c, m) = (frame.approach(), frame.closing(), frame.minor());
    let t = frame.translation();
    let half_open = params.max_width_m / 2.0;
    pts.iter()
        .filter_map(|p| {
            let d = p - t;
            let pc = d.dot(&c).abs();
            (d.dot(&a).abs() <= params.finger_depth_m / 2.0
                && d.dot(&m).abs() <= params.pad_width_m / 2.0
                && pc <= half_open)
                .then_some(pc)
        })
        .fold(0.0, f64::max)
}

/// Keeps poses scoring at least `min_score` whose approach tilts at most
/// `max_tilt_deg` from straight down. Order is preserved.
pub fn filter_poses(poses: &[GraspPose], min_score: f64, max_tilt_deg: f64) -> Vec<GraspPose> {
    poses
        .iter()
        .filter(|p| p.score() >= min_score && p.tilt_deg() <= max_tilt_deg)
        .cloned()
        .collect()
}

/// Index of the pose whose translation is nearest `target_center`; ties go
/// to the lower index.
pub fn select_pose_index(poses: &[GraspPose], target_center: &Point3<f64>) -> Result<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (i, p) in poses.iter().enumerate() {
        let d = (p.translation() - target_center).norm();
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, i));
        }
    }
    best.map(|(_, i)| i).ok_or(Error::NoCandidates)
}

pub fn select_pose(poses: &[GraspPose], target_center: &Point3<f64>) -> Result<GraspPose> {
    select_pose_index(poses, target_center).map(|i| poses[i].clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grasp::down;
    use crate::scene::{sample_point_cloud, Color, SceneObject, Shape};

    fn object(shape: Shape, size: f64) -> SceneObject {
        SceneObject {
            class_name: "apple".into(),
            color: Color::Green,
            shape,
            size_m: size,
            grid_cell: (0, 0),
            world_pose: [0.05, 0.02, 1.4],
            is_novel: false,
        }
    }

    fn pose_at(x: f64, score: f64, closing: Vector3<f64>) -> GraspPose {
        GraspPose::from_closing_axis(closing, Point3::new(x, 0.0, 0.0), 0.05, score).unwrap()
    }

    #[test]
    fn sphere_axes_pass_through_center() {
        let obj = object(Shape::Sphere, 0.06);
        let cloud = sample_point_cloud(&obj, 6000, 1).unwrap();
        let poses = generate_candidates(&cloud, 200, 2, &CandidateParams::default()).unwrap();
        assert!(poses.len() > 50);
        let c = Point3::from(obj.world_pose);
        for p in &poses {
            let to_center = c - p.translation();
            let off_axis = (to_center - p.closing() * to_center.dot(&p.closing())).norm();
            assert!(off_axis < 1e-3, "{off_axis}");
            assert!((p.width_m() - 0.065).abs() < 1e-3, "{}", p.width_m());
        }
    }

    #[test]
    fn oversized_box_has_no_candidates() {
        let cloud = sample_point_cloud(&object(Shape::Box, 0.09), 4000, 1).unwrap();
        let err = generate_candidates(&cloud, 200, 2, &CandidateParams::default()).unwrap_err();
        assert!(matches!(err, Error::NoCandidates));
    }

    #[test]
    fn candidates_are_deterministic() {
        let cloud = sample_point_cloud(&object(Shape::Cylinder, 0.05), 3000, 4).unwrap();
        let a = generate_candidates(&cloud, 100, 9, &CandidateParams::default()).unwrap();
        let b = generate_candidates(&cloud, 100, 9, &CandidateParams::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn filter_thresholds() {
        let poses = vec![pose_at(0.0, 0.9, Vector3::x()), pose_at(1.0, 0.2, Vector3::y()), pose_at(2.0, 0.8, down())];
        assert_eq!(filter_poses(&poses, 0.0, 180.0), poses);
        let kept = filter_poses(&poses, 0.3, 45.0);
        assert_eq!(kept, vec![poses[0].clone()]);
        assert_eq!(filter_poses(&kept, 0.3, 45.0), kept);
    }

    #[test]
    fn nearest_pose_selected() {
        let poses = vec![pose_at(0.01, 0.5, Vector3::x()), pose_at(0.02, 0.5, Vector3::x())];
        assert_eq!(select_pose_index(&poses, &Point3::origin()).unwrap(), 0);
        assert_eq!(select_pose(&poses[1..], &Point3::origin()).unwrap(), poses[1]);
        let tie = vec![pose_at(-0.01, 0.5, Vector3::x()), pose_at(0.01, 0.5, Vector3::x())];
        assert_eq!(select_pose_index(&tie, &Point3::origin()).unwrap(), 0);
        assert!(matches!(select_pose(&[], &Point3::origin()), Err(Error::NoCandidates)));
    }
}
