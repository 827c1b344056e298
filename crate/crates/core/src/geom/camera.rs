use serde::{Deserialize, Serialize};

use super::{mat3_mul_vec, mat3_transpose, Mat3, Ray, Vec3};
use crate::{Error, Result};

/// Pinhole camera: `intrinsics` K (3×3) and world→camera `extrinsics` [R | t] (3×4).
///
/// Camera space follows the usual vision convention (x right, y down, z forward).
/// Pixel `(i, j)` has its center at image coordinate `(u, v) = (i, j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub intrinsics: [[f64; 3]; 3],
    pub extrinsics: [[f64; 4]; 3],
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl Camera {
    pub fn new(intrinsics: Mat3, extrinsics: [[f64; 4]; 3], width: usize, height: usize) -> Result<Self> {
        let cam = Camera {
            intrinsics,
            extrinsics,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsics;
        if !(k[0][0] > 0.0 && k[1][1] > 0.0) {
            return Err(Error::InvalidInput("camera focal lengths must be positive".into()));
        }
        if k[1][0] != 0.0 || k[2][0] != 0.0 || k[2][1] != 0.0 || k[2][2] != 1.0 {
            return Err(Error::InvalidInput(
                "intrinsics must be upper triangular with K[2][2] = 1".into(),
            ));
        }
        let r = self.rotation();
        let rt = mat3_transpose(&r);
        for a in 0..3 {
            for b in 0..3 {
                let dot: f64 = (0..3).map(|k| r[a][k] * rt[k][b]).sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                if (dot - expect).abs() > 1e-6 {
                    return Err(Error::InvalidInput("extrinsic rotation is not orthonormal".into()));
                }
            }
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidInput("camera image size must be positive".into()));
        }
        Ok(())
    }

    /// Camera at `eye` looking at `target`; `up` fixes the roll (image y points along −up).
    /// `fov_y` is the full vertical field of view in radians.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, fov_y: f64, width: usize, height: usize) -> Result<Self> {
        let forward = (target - eye).normalized();
        let right = forward.cross(up).normalized();
        if right.norm_squared() == 0.0 {
            return Err(Error::InvalidInput("look_at: up is parallel to the view direction".into()));
        }
        let down = forward.cross(right);
        let r = [right.to_array(), down.to_array(), forward.to_array()];
        let t = -mat3_mul_vec(&r, eye);
        let f = 0.5 * height as f64 / (0.5 * fov_y).tan();
        let k = [
            [f, 0.0, (width as f64 - 1.0) * 0.5],
            [0.0, f, (height as f64 - 1.0) * 0.5],
            [0.0, 0.0, 1.0],
        ];
        let e = [
            [r[0][0], r[0][1], r[0][2], t.x],
            [r[1][0], r[1][1], r[1][2], t.y],
            [r[2][0], r[2][1], r[2][2], t.z],
        ];
        Camera::new(k, e, width, height)
    }

    /// `count` cameras at `distance` from the origin, evenly spaced in yaw about +z,
    /// at the given elevation (radians), all looking at the origin.
    pub fn ring(count: usize, distance: f64, elevation: f64, fov_y: f64, width: usize, height: usize) -> Result<Vec<Camera>> {
        (0..count)
            .map(|i| {
                let yaw = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
                let eye = Vec3::new(
                    distance * elevation.cos() * yaw.cos(),
                    distance * elevation.cos() * yaw.sin(),
                    distance * elevation.sin(),
                );
                Camera::look_at(eye, Vec3::ZERO, Vec3::Z, fov_y, width, height)
            })
            .collect()
    }

    pub fn rotation(&self) -> Mat3 {
        let e = &self.extrinsics;
        [
            [e[0][0], e[0][1], e[0][2]],
            [e[1][0], e[1][1], e[1][2]],
            [e[2][0], e[2][1], e[2][2]],
        ]
    }

    pub fn translation(&self) -> Vec3 {
        let e = &self.extrinsics;
        Vec3::new(e[0][3], e[1][3], e[2][3])
    }

    /// Camera center in world coordinates, `-Rᵀ t`.
    pub fn center(&self) -> Vec3 {
        -mat3_mul_vec(&mat3_transpose(&self.rotation()), self.translation())
    }

    pub fn to_camera(&self, p: Vec3) -> Vec3 {
        mat3_mul_vec(&self.rotation(), p) + self.translation()
    }

    /// Pinhole projection; depth is the camera-space z.
    pub fn project(&self, p: Vec3) -> Result<Projection> {
        let pc = self.to_camera(p);
        if pc.z <= 0.0 {
            return Err(Error::BehindCamera { depth: pc.z });
        }
        let k = &self.intrinsics;
        let x = pc.x / pc.z;
        let y = pc.y / pc.z;
        Ok(Projection {
            u: k[0][0] * x + k[0][1] * y + k[0][2],
            v: k[1][1] * y + k[1][2],
            depth: pc.z,
        })
    }

    /// Inverse of [`Camera::project`] at a known depth.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        let k = &self.intrinsics;
        let y = (v - k[1][2]) / k[1][1];
        let x = (u - k[0][2] - k[0][1] * y) / k[0][0];
        let pc = Vec3::new(x * depth, y * depth, depth);
        mat3_mul_vec(&mat3_transpose(&self.rotation()), pc - self.translation())
    }

    /// Primary ray through image coordinate `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> Ray {
        let center = self.center();
        let through = self.unproject(u, v, 1.0);
        Ray::new(center, through - center)
    }

    /// Primary ray through the center of pixel `(i, j)`.
    pub fn pixel_ray(&self, i: usize, j: usize) -> Ray {
        self.ray(i as f64, j as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::rotation_matrix;

    fn identity_camera(f: f64, c: f64) -> Camera {
        Camera::new(
            [[f, 0.0, c], [0.0, f, c], [0.0, 0.0, 1.0]],
            [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]],
            64,
            64,
        )
        .unwrap()
    }

    #[test]
    fn unit_pinhole() {
        let cam = identity_camera(1.0, 0.0);
        let p = cam.project(Vec3::new(1.0, 0.0, 1.0)).unwrap();
        assert_eq!((p.u, p.v, p.depth), (1.0, 0.0, 1.0));
    }

    #[test]
    fn optical_axis_maps_to_principal_point() {
        let cam = Camera::look_at(Vec3::new(0.0, -3.0, 0.5), Vec3::new(0.0, 0.0, 0.5), Vec3::Z, 0.8, 101, 81).unwrap();
        let d = 2.25;
        let p = cam.project(Vec3::new(0.0, -3.0 + d, 0.5)).unwrap();
        assert!((p.u - 50.0).abs() < 1e-9 && (p.v - 40.0).abs() < 1e-9);
        assert!((p.depth - d).abs() < 1e-12);
    }

    #[test]
    fn behind_camera_is_signalled() {
        let cam = identity_camera(1.0, 0.0);
        assert!(matches!(
            cam.project(Vec3::new(0.0, 0.0, -1.0)),
            Err(Error::BehindCamera { .. })
        ));
    }

    #[test]
    fn unproject_inverts_project() {
        let cam = Camera::look_at(Vec3::new(1.5, 0.7, 0.9), Vec3::ZERO, Vec3::Z, 0.9, 128, 96).unwrap();
        for p in [Vec3::new(0.1, -0.2, 0.3), Vec3::new(-0.4, 0.2, 0.0), Vec3::ZERO] {
            let q = cam.project(p).unwrap();
            let back = cam.unproject(q.u, q.v, q.depth);
            assert!(back.distance(p) < 1e-9);
        }
    }

    #[test]
    fn projection_is_scale_covariant() {
        let r = rotation_matrix(Vec3::new(0.3, 1.0, 0.2), 0.4);
        let t = Vec3::new(0.1, -0.2, 3.0);
        let make = |s: f64| {
            Camera::new(
                [[200.0, 0.0, 64.0], [0.0, 210.0, 60.0], [0.0, 0.0, 1.0]],
                [
                    [r[0][0], r[0][1], r[0][2], t.x * s],
                    [r[1][0], r[1][1], r[1][2], t.y * s],
                    [r[2][0], r[2][1], r[2][2], t.z * s],
                ],
                128,
                128,
            )
            .unwrap()
        };
        let p = Vec3::new(0.2, 0.1, -0.3);
        let a = make(1.0).project(p).unwrap();
        let b = make(2.5).project(p * 2.5).unwrap();
        assert!((a.u - b.u).abs() < 1e-9 && (a.v - b.v).abs() < 1e-9);
    }

    #[test]
    fn ring_cameras_face_the_origin() {
        let cams = Camera::ring(4, 2.0, 0.0, 0.9, 32, 32).unwrap();
        for c in &cams {
            assert!((c.center().norm() - 2.0).abs() < 1e-12);
            let p = c.project(Vec3::ZERO).unwrap();
            assert!((p.u - 15.5).abs() < 1e-9 && (p.v - 15.5).abs() < 1e-9);
        }
    }
}
