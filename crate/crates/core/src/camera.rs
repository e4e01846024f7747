//! Pinhole projection into image-plus-inverse-depth coordinates.
//!
//! A 3D point `(X, Y, Z)` in the camera frame maps to `(x, y, d)` with
//! `x = fx X/Z + cx`, `y = fy Y/Z + cy`, `d = 1/Z`. Points at or behind the
//! minimum depth [`MIN_DEPTH`] are rejected rather than clamped; callers mask
//! the affected pixels.

use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::se3::SE3Transform;

/// Smallest depth (meters) accepted by projection routines.
pub const MIN_DEPTH: f64 = 1e-4;

/// Pinhole intrinsics: focal lengths and principal point in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl PinholeCamera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let all_finite = fx.is_finite() && fy.is_finite() && cx.is_finite() && cy.is_finite();
        if !all_finite {
            return Err(Error::NonFinite { what: "camera intrinsics" });
        }
        if fx <= 0.0 || fy <= 0.0 {
            return Err(Error::InvalidArgument { what: "focal lengths must be positive" });
        }
        Ok(PinholeCamera { fx, fy, cx, cy })
    }

    /// Intrinsics for the image downsampled by an integer factor.
    ///
    /// Uses the pixel-center convention: full-resolution coordinate `x` maps
    /// to `(x + 0.5)/f - 0.5` at the coarse scale, so `cx' = (cx + 0.5)/f - 0.5`
    /// while focal lengths divide by `f`.
    pub fn downscaled(&self, factor: u32) -> Self {
        let f = f64::from(factor);
        PinholeCamera {
            fx: self.fx / f,
            fy: self.fy / f,
            cx: (self.cx + 0.5) / f - 0.5,
            cy: (self.cy + 0.5) / f - 0.5,
        }
    }
}

/// A point in map coordinates: pixel position plus inverse depth.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MapPoint {
    pub x: f64,
    pub y: f64,
    /// Inverse depth in 1/meters, strictly positive for valid points.
    pub d: f64,
}

impl MapPoint {
    pub const fn new(x: f64, y: f64, d: f64) -> Self {
        MapPoint { x, y, d }
    }
}

/// Projects a camera-frame point to map coordinates.
pub fn project(cam: &PinholeCamera, p: Vec3) -> Result<MapPoint> {
    if !p.is_finite() {
        return Err(Error::NonFinite { what: "point to project" });
    }
    if p.z < MIN_DEPTH {
        return Err(Error::ProjectionDomain { z: p.z });
    }
    let iz = 1.0 / p.z;
    Ok(MapPoint { x: cam.fx * p.x * iz + cam.cx, y: cam.fy * p.y * iz + cam.cy, d: iz })
}

/// Recovers the camera-frame point for a map point.
pub fn backproject(cam: &PinholeCamera, m: MapPoint) -> Result<Vec3> {
    if !(m.x.is_finite() && m.y.is_finite() && m.d.is_finite()) {
        return Err(Error::NonFinite { what: "map point" });
    }
    if m.d <= 0.0 {
        return Err(Error::InverseDepthDomain { d: m.d });
    }
    let z = 1.0 / m.d;
    Ok(Vec3::new((m.x - cam.cx) / cam.fx * z, (m.y - cam.cy) / cam.fy * z, z))
}

/// Jacobian of the warped projection `pi(T p)` with respect to a
/// left-multiplicative twist perturbation of `T`, evaluated at the given
/// point. Rows are the `(x, y, d)` outputs; columns follow the twist storage
/// order, translational then rotational.
///
/// With `q = T p`, the translational block is `d pi(q)` and the rotational
/// block is `-d pi(q) [q]x`.
pub fn reprojection_jacobian(
    cam: &PinholeCamera,
    t: &SE3Transform,
    p: Vec3,
) -> Result<[[f64; 6]; 3]> {
    let q = t.apply(p);
    if !q.is_finite() {
        return Err(Error::NonFinite { what: "transformed point" });
    }
    if q.z < MIN_DEPTH {
        return Err(Error::ProjectionDomain { z: q.z });
    }
    Ok(jacobian_of_projection(cam, q))
}

/// Jacobian rows for an already transformed point `q = T p` with `q.z`
/// validated by the caller.
pub(crate) fn jacobian_of_projection(cam: &PinholeCamera, q: Vec3) -> [[f64; 6]; 3] {
    let iz = 1.0 / q.z;
    let iz2 = iz * iz;
    let dpi = [
        Vec3::new(cam.fx * iz, 0.0, -cam.fx * q.x * iz2),
        Vec3::new(0.0, cam.fy * iz, -cam.fy * q.y * iz2),
        Vec3::new(0.0, 0.0, -iz2),
    ];
    let mut j = [[0.0; 6]; 3];
    for (row, g) in j.iter_mut().zip(dpi) {
        let rot = -g.cross(q);
        *row = [g.x, g.y, g.z, rot.x, rot.y, rot.z];
    }
    j
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::{self, Twist};
    use proptest::prelude::*;

    #[test]
    fn project_known_point() {
        let cam = PinholeCamera::new(100.0, 100.0, 50.0, 50.0).unwrap();
        let m = project(&cam, Vec3::new(2.0, 1.0, 4.0)).unwrap();
        assert_eq!(m, MapPoint::new(100.0, 75.0, 0.25));
    }

    #[test]
    fn project_rejects_points_behind_camera() {
        let cam = PinholeCamera::new(100.0, 100.0, 50.0, 50.0).unwrap();
        assert!(matches!(project(&cam, Vec3::new(0.0, 0.0, 0.0)), Err(Error::ProjectionDomain { .. })));
        assert!(matches!(project(&cam, Vec3::new(1.0, 1.0, -2.0)), Err(Error::ProjectionDomain { .. })));
        assert!(matches!(project(&cam, Vec3::new(1.0, 1.0, 5e-5)), Err(Error::ProjectionDomain { .. })));
    }

    #[test]
    fn backproject_rejects_nonpositive_inverse_depth() {
        let cam = PinholeCamera::new(100.0, 100.0, 50.0, 50.0).unwrap();
        assert!(backproject(&cam, MapPoint::new(10.0, 10.0, 0.0)).is_err());
        assert!(backproject(&cam, MapPoint::new(10.0, 10.0, -0.1)).is_err());
    }

    #[test]
    fn projection_round_trip() {
        let cam = PinholeCamera::new(320.0, 300.0, 160.5, 120.25).unwrap();
        let p = Vec3::new(0.7, -0.4, 2.5);
        let back = backproject(&cam, project(&cam, p).unwrap()).unwrap();
        assert!((back - p).norm() < 1e-12);
    }

    #[test]
    fn downscaled_intrinsics_follow_pixel_centers() {
        let cam = PinholeCamera::new(200.0, 180.0, 95.5, 63.5).unwrap();
        let half = cam.downscaled(2);
        assert_eq!(half.fx, 100.0);
        assert_eq!(half.fy, 90.0);
        assert_eq!(half.cx, (95.5 + 0.5) / 2.0 - 0.5);
        assert_eq!(half.cy, (63.5 + 0.5) / 2.0 - 0.5);
    }

    #[test]
    fn jacobian_depth_row_translation_block() {
        // The d-row depends on translation only through Z: (0, 0, -1/Z^2).
        let cam = PinholeCamera::new(120.0, 110.0, 60.0, 40.0).unwrap();
        let p = Vec3::new(0.3, -0.6, 2.0);
        let j = reprojection_jacobian(&cam, &SE3Transform::IDENTITY, p).unwrap();
        assert_eq!(&j[2][..3], &[0.0, 0.0, -1.0 / 4.0]);
    }

    #[test]
    fn jacobian_axis_point_has_no_roll_sensitivity() {
        // For a point on the optical axis, rotation about the optical axis
        // moves nothing: the z-rotation column vanishes in the x and y rows.
        let cam = PinholeCamera::new(150.0, 150.0, 64.0, 64.0).unwrap();
        let j = reprojection_jacobian(&cam, &SE3Transform::IDENTITY, Vec3::new(0.0, 0.0, 3.0))
            .unwrap();
        assert_eq!(j[0][5], 0.0);
        assert_eq!(j[1][5], 0.0);
        assert_eq!(j[0][4], 150.0 / 3.0 * 3.0);
        assert_eq!(j[1][3], -150.0 / 3.0 * 3.0);
    }

    fn numeric_jacobian(
        cam: &PinholeCamera,
        t: &SE3Transform,
        p: Vec3,
        h: f64,
    ) -> [[f64; 6]; 3] {
        let mut j = [[0.0; 6]; 3];
        for col in 0..6 {
            let mut delta = [0.0; 6];
            delta[col] = h;
            let tp = se3::compose(&se3::exp(&Twist::from_array(delta)).unwrap(), t);
            delta[col] = -h;
            let tm = se3::compose(&se3::exp(&Twist::from_array(delta)).unwrap(), t);
            let mp = project(cam, tp.apply(p)).unwrap();
            let mm = project(cam, tm.apply(p)).unwrap();
            j[0][col] = (mp.x - mm.x) / (2.0 * h);
            j[1][col] = (mp.y - mm.y) / (2.0 * h);
            j[2][col] = (mp.d - mm.d) / (2.0 * h);
        }
        j
    }

    proptest! {
        #[test]
        fn prop_jacobian_matches_finite_differences(
            v in prop::array::uniform3(-0.5f64..0.5),
            w in prop::array::uniform3(-0.5f64..0.5),
            px in -1.0f64..1.0,
            py in -1.0f64..1.0,
            pz in 1.5f64..5.0,
        ) {
            let cam = PinholeCamera::new(140.0, 130.0, 64.0, 48.0).unwrap();
            let t = se3::exp(&Twist::new(
                Vec3::new(v[0], v[1], v[2]),
                Vec3::new(w[0], w[1], w[2]),
            )).unwrap();
            let p = Vec3::new(px, py, pz);
            prop_assume!(t.apply(p).z > 0.5);
            let j = reprojection_jacobian(&cam, &t, p).unwrap();
            let jn = numeric_jacobian(&cam, &t, p, 1e-6);
            for r in 0..3 {
                for c in 0..6 {
                    prop_assert!((j[r][c] - jn[r][c]).abs() < 1e-6,
                        "row {} col {}: {} vs {}", r, c, j[r][c], jn[r][c]);
                }
            }
        }
    }
}
