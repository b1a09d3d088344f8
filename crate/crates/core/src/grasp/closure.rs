use nalgebra::Vector3;

use super::{estimate_normals, GraspPose, GripperModel, PointCloud};

/// Diagnostics of a closure check.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosureReport {
    /// Cloud indices inside the volume swept by the closing jaws.
    pub swept: Vec<usize>,
    /// Extent of the swept points along the closing axis.
    pub required_width_m: f64,
    /// Whether each jaw (positive then negative closing side) found a
    /// friction-stable contact.
    pub jaws_stable: [bool; 2],
    pub success: bool,
}

/// Force-closure test of `pose` against `cloud`.
///
/// The swept volume is the box spanned by the open jaws: `width` along the
/// closing axis, the finger depth along the approach axis and the pad width
/// along the minor axis. The grasp holds when
/// - at least `min_sweep_points` points lie in it,
/// - on each side, the majority of contact points (those within the contact
///   tolerance of the innermost swept surface) have normals inside the
///   friction cone around the closing direction, and
/// - the swept extent fits in the gripper's maximum opening.
pub fn closure_report(pose: &GraspPose, cloud: &PointCloud, gripper: &GripperModel) -> ClosureReport {
    let estimated;
    let normals: &[Vector3<f64>] = match &cloud.normals {
        Some(ns) => ns,
        None => {
            estimated = estimate_normals(cloud, 10);
            &estimated
        }
    };
    let (a, c, m) = (pose.approach(), pose.closing(), pose.minor());
    let t = pose.translation();
    let half_w = pose.width_m() / 2.0;

    let mut swept = Vec::new();
    let mut along = Vec::new();
    for (i, p) in cloud.points.iter().enumerate() {
        let d = p - t;
        let (pa, pc, pm) = (d.dot(&a), d.dot(&c), d.dot(&m));
        if pa.abs() <= gripper.finger_depth_m / 2.0
            && pm.abs() <= gripper.pad_width_m / 2.0
            && pc.abs() <= half_w
        {
            swept.push(i);
            along.push(pc);
        }
    }
    if swept.len() < gripper.min_sweep_points {
        return ClosureReport {
            swept,
            required_width_m: 0.0,
            jaws_stable: [false, false],
            success: false,
        };
    }

    let max = along.iter().copied().fold(f64::MIN, f64::max);
    let min = along.iter().copied().fold(f64::MAX, f64::min);
    let cos_cone = gripper.friction_half_angle().cos();
    let jaw_stable = |outward: Vector3<f64>, contact: &dyn Fn(f64) -> bool| {
        let (inside, total) = swept
            .iter()
            .zip(&along)
            .filter(|(_, pc)| contact(**pc))
            .fold((0usize, 0usize), |(ok, n), (&i, _)| {
                (ok + usize::from(normals[i].dot(&outward) >= cos_cone), n + 1)
            });
        2 * inside > total
    };
    let tol = gripper.contact_tolerance_m;
    let jaws_stable = [
        jaw_stable(c, &|pc| pc >= max - tol),
        jaw_stable(-c, &|pc| pc <= min + tol),
    ];
    let required_width_m = max - min;
    let success = jaws_stable[0] && jaws_stable[1] && required_width_m <= gripper.max_width_m;
    ClosureReport {
        swept,
        required_width_m,
        jaws_stable,
        success,
    }
}

pub fn closure_check(pose: &GraspPose, cloud: &PointCloud, gripper: &GripperModel) -> bool {
    closure_report(pose, cloud, gripper).success
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{sample_point_cloud, Color, SceneObject, Shape};
    use nalgebra::Point3;

    fn sphere(r: f64) -> SceneObject {
        SceneObject {
            class_name: "apple".into(),
            color: Color::Red,
            shape: Shape::Sphere,
            size_m: 2.0 * r,
            grid_cell: (0, 0),
            world_pose: [0.0, 0.0, 1.47],
            is_novel: false,
        }
    }

    #[test]
    fn centered_sphere_grasp_holds() {
        let obj = sphere(0.03);
        let cloud = sample_point_cloud(&obj, 4000, 1).unwrap();
        let pose = GraspPose::from_closing_axis(Vector3::x(), Point3::from(obj.world_pose), 0.065, 1.0).unwrap();
        let report = closure_report(&pose, &cloud, &GripperModel::default());
        assert!(report.success, "{report:?}");
        assert!((report.required_width_m - 0.06).abs() < 2e-3);
    }

    #[test]
    fn far_pose_has_no_contact() {
        let obj = sphere(0.03);
        let cloud = sample_point_cloud(&obj, 4000, 1).unwrap();
        let mut at = Point3::from(obj.world_pose);
        at.x += 0.1;
        let pose = GraspPose::from_closing_axis(Vector3::x(), at, 0.065, 1.0).unwrap();
        let report = closure_report(&pose, &cloud, &GripperModel::default());
        assert!(report.swept.is_empty());
        assert!(!report.success);
    }

    #[test]
    fn too_wide_fails() {
        let obj = sphere(0.03);
        let cloud = sample_point_cloud(&obj, 4000, 1).unwrap();
        let pose = GraspPose::from_closing_axis(Vector3::x(), Point3::from(obj.world_pose), 0.065, 1.0).unwrap();
        let small = GripperModel {
            max_width_m: 0.05,
            ..GripperModel::default()
        };
        assert!(!closure_check(&pose, &cloud, &small));
    }

    #[test]
    fn off_center_chord_slips() {
        let obj = sphere(0.03);
        let cloud = sample_point_cloud(&obj, 4000, 1).unwrap();
        let mut at = Point3::from(obj.world_pose);
        at.y += 0.02;
        let pose = GraspPose::from_closing_axis(Vector3::x(), at, 0.065, 1.0).unwrap();
        assert!(!closure_check(&pose, &cloud, &GripperModel::default()));
    }
}
