//! Grasp selection for a parallel-jaw gripper: crop the target's points out
//! of the depth image, propose antipodal grasps, filter them by score and
//! tilt, take the one nearest the target center and check force closure.
//!
//! Frames follow [`crate::scene`]: the camera frame, with `+z` pointing down
//! into the table. A top-down approach is therefore `(0, 0, 1)`.

pub mod candidates;
pub mod closure;
pub mod cloud;
pub mod protocol;

use std::io::Write;

use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use candidates::{filter_poses, generate_candidates, select_pose, select_pose_index, CandidateParams};
pub use closure::{closure_check, closure_report, ClosureReport};
pub use cloud::{crop_cloud, estimate_normals, GraspView};
pub use protocol::{attempt_protocol, AttemptResult, GraspConfig, GraspSetting, OutcomeRecord, ProtocolOutcome};

/// Jaw span of the ROBOTIQ-85 gripper.
pub const MAX_JAW_WIDTH_M: f64 = 0.085;

/// Straight down, toward the table.
pub fn down() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
    pub normals: Option<Vec<Vector3<f64>>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3<f64>>) -> Self {
        Self {
            points,
            normals: None,
        }
    }

    pub fn with_normals(points: Vec<Point3<f64>>, normals: Vec<Vector3<f64>>) -> Result<Self> {
        if points.len() != normals.len() {
            return Err(Error::contract(
                "PointCloud::with_normals",
                format!("{} points, {} normals", points.len(), normals.len()),
            ));
        }
        if let Some(i) = normals.iter().position(|n| (n.norm() - 1.0).abs() > 1e-6) {
            return Err(Error::contract(
                "PointCloud::with_normals",
                format!("normal {i} is not unit length"),
            ));
        }
        Ok(Self {
            points,
            normals: Some(normals),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Point3<f64>> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self
            .points
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Some(Point3::from(sum / self.points.len() as f64))
    }

    /// Concatenates clouds. Normals survive only if every part has them.
    pub fn concat(parts: &[PointCloud]) -> PointCloud {
        let points = parts.iter().flat_map(|c| c.points.iter().copied()).collect();
        let normals = parts
            .iter()
            .map(|c| c.normals.as_ref())
            .collect::<Option<Vec<_>>>()
            .map(|ns| ns.into_iter().flatten().copied().collect());
        PointCloud { points, normals }
    }

    /// ASCII PLY with `x y z` and, when present, `nx ny nz` per vertex.
    pub fn write_ply<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "ply")?;
        writeln!(w, "format ascii 1.0")?;
        writeln!(w, "element vertex {}", self.points.len())?;
        for axis in ["x", "y", "z"] {
            writeln!(w, "property double {axis}")?;
        }
        if self.normals.is_some() {
            for axis in ["nx", "ny", "nz"] {
                writeln!(w, "property double {axis}")?;
            }
        }
        writeln!(w, "end_header")?;
        for (i, p) in self.points.iter().enumerate() {
            match &self.normals {
                Some(ns) => {
                    let n = ns[i];
                    writeln!(w, "{} {} {} {} {} {}", p.x, p.y, p.z, n.x, n.y, n.z)?
                }
                None => writeln!(w, "{} {} {}", p.x, p.y, p.z)?,
            }
        }
        Ok(())
    }
}

/// A 6-DOF parallel-jaw grasp. Rotation columns are the approach, closing
/// and minor axes; the translation is the midpoint between the jaws.
#[derive(Debug, Clone, PartialEq)]
pub struct GraspPose {
    rotation: Matrix3<f64>,
    translation: Point3<f64>,
    width_m: f64,
    score: f64,
}

impl GraspPose {
    pub fn new(
        rotation: Matrix3<f64>,
        translation: Point3<f64>,
        width_m: f64,
        score: f64,
    ) -> Result<Self> {
        let err = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if err > 1e-8 || rotation.determinant() < 0.0 {
            return Err(Error::contract(
                "GraspPose::new",
                format!("rotation is not a proper orthonormal matrix (error {err:e})"),
            ));
        }
        if !(width_m > 0.0 && width_m <= MAX_JAW_WIDTH_M) {
            return Err(Error::contract(
                "GraspPose::new",
                format!("width {width_m} outside (0, {MAX_JAW_WIDTH_M}]"),
            ));
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::contract("GraspPose::new", format!("score {score} outside [0, 1]")));
        }
        Ok(Self {
            rotation,
            translation,
            width_m,
            score,
        })
    }

    /// Builds the pose closing along `closing`, approaching along the most
    /// downward direction perpendicular to it.
    pub fn from_closing_axis(
        closing: Vector3<f64>,
        translation: Point3<f64>,
        width_m: f64,
        score: f64,
    ) -> Result<Self> {
        let c = closing
            .try_normalize(1e-12)
            .ok_or_else(|| Error::contract("GraspPose::from_closing_axis", "zero closing axis"))?;
        let mut approach = down() - c * c.dot(&down());
        if approach.norm() < 1e-6 {
            let x = Vector3::x();
            approach = x - c * c.dot(&x);
        }
        let approach = approach.normalize();
        let minor = approach.cross(&c);
        Self::new(
            Matrix3::from_columns(&[approach, c, minor]),
            translation,
            width_m,
            score,
        )
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> Point3<f64> {
        self.translation
    }

    pub fn width_m(&self) -> f64 {
        self.width_m
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn approach(&self) -> Vector3<f64> {
        self.rotation.column(0).into_owned()
    }

    pub fn closing(&self) -> Vector3<f64> {
        self.rotation.column(1).into_owned()
    }

    pub fn minor(&self) -> Vector3<f64> {
        self.rotation.column(2).into_owned()
    }

    /// Angle in degrees between the approach axis and straight down.
    pub fn tilt_deg(&self) -> f64 {
        self.approach().dot(&down()).clamp(-1.0, 1.0).acos().to_degrees()
    }
}

/// Gripper geometry and contact model used by the closure check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperModel {
    pub max_width_m: f64,
    /// Extent of the jaw pads along the approach axis.
    pub finger_depth_m: f64,
    /// Extent of the jaw pads along the minor axis.
    pub pad_width_m: f64,
    pub friction_coefficient: f64,
    /// Points within this distance of the innermost surface count as contacts.
    pub contact_tolerance_m: f64,
    pub min_sweep_points: usize,
}

impl Default for GripperModel {
    fn default() -> Self {
        Self {
            max_width_m: MAX_JAW_WIDTH_M,
            finger_depth_m: 0.03,
            pad_width_m: 0.02,
            friction_coefficient: 0.4,
            contact_tolerance_m: 0.003,
            min_sweep_points: 20,
        }
    }
}

impl GripperModel {
    pub fn validate(&self) -> Result<()> {
        let all_positive = [
            self.max_width_m,
            self.finger_depth_m,
            self.pad_width_m,
            self.friction_coefficient,
            self.contact_tolerance_m,
        ]
        .iter()
        .all(|x| *x > 0.0);
        if !all_positive {
            return Err(Error::Config("gripper dimensions and friction must be positive".into()));
        }
        Ok(())
    }

    pub fn friction_half_angle(&self) -> f64 {
        self.friction_coefficient.atan()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pose_frame_is_orthonormal_and_top_down() {
        let p = GraspPose::from_closing_axis(Vector3::new(1.0, 1.0, 0.0), Point3::origin(), 0.05, 0.9).unwrap();
        assert!((p.approach() - down()).norm() < 1e-12);
        assert!(p.tilt_deg() < 1e-9);
        let r = p.rotation();
        assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-12);
        assert!(r.determinant() > 0.0);
    }

    #[test]
    fn vertical_closing_axis_still_gives_a_frame() {
        let p = GraspPose::from_closing_axis(down(), Point3::origin(), 0.05, 0.5).unwrap();
        assert!((p.tilt_deg() - 90.0).abs() < 1e-9);
    }

    #[test]
    fn pose_invariants_enforced() {
        let id = Matrix3::identity();
        assert!(GraspPose::new(id, Point3::origin(), 0.086, 0.5).is_err());
        assert!(GraspPose::new(id, Point3::origin(), 0.0, 0.5).is_err());
        assert!(GraspPose::new(id, Point3::origin(), 0.05, 1.5).is_err());
        assert!(GraspPose::new(id * 2.0, Point3::origin(), 0.05, 0.5).is_err());
        assert!(GraspPose::new(id, Point3::origin(), 0.085, 1.0).is_ok());
    }

    #[test]
    fn ply_header() {
        let cloud = PointCloud::with_normals(vec![Point3::new(1.0, 2.0, 3.0)], vec![Vector3::z()]).unwrap();
        let mut out = Vec::new();
        cloud.write_ply(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("ply\nformat ascii 1.0\nelement vertex 1\n"));
        assert!(text.contains("property double nz\nend_header\n1 2 3 0 0 1\n"));
    }

    #[test]
    fn rejects_non_unit_normals() {
        assert!(PointCloud::with_normals(vec![Point3::origin()], vec![Vector3::new(0.0, 0.0, 2.0)]).is_err());
    }
}
