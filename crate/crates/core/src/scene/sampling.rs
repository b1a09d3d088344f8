use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{SceneObject, Shape};
use crate::error::{Error, Result};
use crate::grasp::PointCloud;

pub const MIN_SURFACE_SAMPLES: usize = 100;

/// Draws `n` points uniformly over the object's full surface, with outward
/// unit normals, in the camera frame.
pub fn sample_point_cloud(obj: &SceneObject, n: usize, seed: u64) -> Result<PointCloud> {
    if n < MIN_SURFACE_SAMPLES {
        return Err(Error::contract(
            "sample_point_cloud",
            format!("need at least {MIN_SURFACE_SAMPLES} points, got {n}"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = Vector3::from(obj.world_pose);
    let r = obj.size_m / 2.0;
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for _ in 0..n {
        let (p, nrm) = match obj.shape {
            Shape::Sphere => {
                let g = Vector3::new(
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                );
                let dir = g.normalize();
                (c + dir * r, dir)
            }
            Shape::Box => {
                let face = rng.random_range(0..6usize);
                let axis = face / 2;
                let sign = if face % 2 == 0 { 1.0 } else { -1.0 };
                let mut local = Vector3::new(
                    rng.random_range(-r..r),
                    rng.random_range(-r..r),
                    rng.random_range(-r..r),
                );
                local[axis] = sign * r;
                let mut nrm = Vector3::zeros();
                nrm[axis] = sign;
                (c + local, nrm)
            }
            Shape::Cylinder => {
                // side 2*pi*r*h with h = 2r, each cap pi*r^2
                let side = 2.0 * PI * r * (2.0 * r);
                let cap = PI * r * r;
                let pick = rng.random_range(0.0..side + 2.0 * cap);
                if pick < side {
                    let phi = rng.random_range(0.0..2.0 * PI);
                    let z = rng.random_range(-r..r);
                    let radial = Vector3::new(phi.cos(), phi.sin(), 0.0);
                    (c + radial * r + Vector3::new(0.0, 0.0, z), radial)
                } else {
                    let rho = r * rng.random_range(0.0f64..1.0).sqrt();
                    let phi = rng.random_range(0.0..2.0 * PI);
                    let sign = if pick < side + cap { -1.0 } else { 1.0 };
                    let local = Vector3::new(rho * phi.cos(), rho * phi.sin(), sign * r);
                    (c + local, Vector3::new(0.0, 0.0, sign))
                }
            }
        };
        points.push(Point3::from(p));
        normals.push(nrm);
    }
    PointCloud::with_normals(points, normals)
}
