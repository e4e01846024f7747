//! Rigid transforms on SE(3).
//!
//! Transforms are stored as a unit quaternion plus a translation vector.
//! Twists follow the (translational, rotational) component order, and all
//! incremental updates compose on the left: `T_new = exp(delta) * T_old`.
//!
//! The exponential and logarithm use Taylor branches below an angle of
//! [`TAYLOR_THRESHOLD`], and coefficients in the trigonometric branch are
//! arranged to avoid cancellation (for example `(1 - cos t)/t^2` is computed
//! as `2 sin^2(t/2) / t^2`), so the round trip stays accurate at every angle
//! the logarithm accepts.

use crate::error::{Error, Result};
use crate::linalg::Vec3;

#[allow(unused_imports)]
use num_traits::Float;

/// Rotation angle below which exp/log switch to Taylor expansions.
pub const TAYLOR_THRESHOLD: f64 = 1e-8;

/// Largest rotation angle the logarithm accepts. At angles this close to pi
/// the axis is numerically undefined, so [`log`] returns an error instead.
pub const MAX_LOG_ANGLE: f64 = core::f64::consts::PI - 1e-6;

/// Unit-norm drift beyond which composition renormalizes the quaternion.
/// Keeping the guard conditional leaves exact-unit products untouched, so
/// composing with the identity is bit-exact.
const RENORM_TOLERANCE: f64 = 1e-13;

/// A quaternion with scalar part `w` and vector part `(x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn norm_squared(self) -> f64 {
        self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn conjugate(self) -> Quat {
        Quat { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// Hamilton product `self * other`.
    pub fn mul(self, o: Quat) -> Quat {
        Quat {
            w: self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            x: self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            y: self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            z: self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        }
    }

    /// Rotates a vector by this (unit) quaternion.
    pub fn rotate(self, v: Vec3) -> Vec3 {
        // v' = v + 2 qv x (qv x v + w v), exact for the identity quaternion.
        let qv = Vec3::new(self.x, self.y, self.z);
        let u = qv.cross(v) + v * self.w;
        v + qv.cross(u) * 2.0
    }

    fn scaled(self, s: f64) -> Quat {
        Quat { w: self.w * s, x: self.x * s, y: self.y * s, z: self.z * s }
    }

    fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// An element of the Lie algebra se(3): translational part `v`, rotational
/// part `w` (axis times angle, radians).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub v: Vec3,
    pub w: Vec3,
}

impl Twist {
    pub const ZERO: Twist = Twist { v: Vec3::ZERO, w: Vec3::ZERO };

    pub const fn new(v: Vec3, w: Vec3) -> Self {
        Twist { v, w }
    }

    /// Components in storage order: translational first, then rotational.
    pub fn to_array(self) -> [f64; 6] {
        [self.v.x, self.v.y, self.v.z, self.w.x, self.w.y, self.w.z]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Twist { v: Vec3::new(a[0], a[1], a[2]), w: Vec3::new(a[3], a[4], a[5]) }
    }

    pub fn is_finite(self) -> bool {
        self.v.is_finite() && self.w.is_finite()
    }
}

/// A rigid transform: rotation as a unit quaternion plus a translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SE3Transform {
    pub rotation: Quat,
    pub translation: Vec3,
}

impl SE3Transform {
    pub const IDENTITY: SE3Transform =
        SE3Transform { rotation: Quat::IDENTITY, translation: Vec3::ZERO };

    pub fn identity() -> Self {
        Self::IDENTITY
    }

    /// Builds a transform from raw parts, validating finiteness and unit norm.
    /// The quaternion may deviate from unit length by up to `1e-6` (as stored
    /// single-precision values do) and is renormalized on acceptance.
    pub fn from_parts(rotation: Quat, translation: Vec3) -> Result<Self> {
        if !rotation.is_finite() || !translation.is_finite() {
            return Err(Error::NonFinite { what: "SE3 transform components" });
        }
        let n2 = rotation.norm_squared();
        if (n2 - 1.0).abs() > 2e-6 {
            return Err(Error::InvalidArgument { what: "rotation quaternion must have unit norm" });
        }
        Ok(SE3Transform { rotation: renormalized(rotation), translation })
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn rotation_angle(&self) -> f64 {
        let q = self.rotation;
        let vn = (q.x * q.x + q.y * q.y + q.z * q.z).sqrt();
        2.0 * vn.atan2(q.w.abs())
    }

    /// Applies the transform to a point: `R p + t`.
    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }
}

fn renormalized(q: Quat) -> Quat {
    let n2 = q.norm_squared();
    if (n2 - 1.0).abs() > RENORM_TOLERANCE {
        q.scaled(1.0 / n2.sqrt())
    } else {
        q
    }
}

/// Exponential map from a twist to a rigid transform.
///
/// For `xi = (v, w)` with angle `t = |w|` the rotation is the unit quaternion
/// `(cos(t/2), sin(t/2) w/t)` and the translation is `V v` with
/// `V = I + A [w]x + B [w]x^2`, `A = (1 - cos t)/t^2`, `B = (t - sin t)/t^3`.
pub fn exp(xi: &Twist) -> Result<SE3Transform> {
    if !xi.is_finite() {
        return Err(Error::NonFinite { what: "twist" });
    }
    let w = xi.w;
    let t2 = w.norm_squared();
    let (qw, qf, a, b);
    if t2 < TAYLOR_THRESHOLD * TAYLOR_THRESHOLD {
        qw = 1.0 - t2 / 8.0;
        qf = 0.5 - t2 / 48.0;
        a = 0.5 - t2 / 24.0;
        b = 1.0 / 6.0 - t2 / 120.0;
    } else {
        let t = t2.sqrt();
        let (sh, ch) = (0.5 * t).sin_cos();
        qw = ch;
        qf = sh / t;
        a = 2.0 * sh * sh / t2;
        b = (t - t.sin()) / (t2 * t);
    }
    let rotation = Quat { w: qw, x: qf * w.x, y: qf * w.y, z: qf * w.z };
    let wxv = w.cross(xi.v);
    let translation = xi.v + wxv * a + w.cross(wxv) * b;
    Ok(SE3Transform { rotation, translation })
}

/// Logarithm map from a rigid transform to a twist.
///
/// Fails with [`Error::LogDomain`] when the rotation angle reaches
/// [`MAX_LOG_ANGLE`]; the rotation axis is ill-conditioned there and fields
/// near that regime should be rejected rather than silently flipped.
pub fn log(tf: &SE3Transform) -> Result<Twist> {
    let mut q = tf.rotation;
    if q.w < 0.0 {
        q = q.scaled(-1.0);
    }
    let qv = Vec3::new(q.x, q.y, q.z);
    let vn2 = qv.norm_squared();
    let vn = vn2.sqrt();
    let angle = 2.0 * vn.atan2(q.w);
    if angle >= MAX_LOG_ANGLE {
        return Err(Error::LogDomain { angle, pixel: None });
    }
    let w = if angle < TAYLOR_THRESHOLD {
        qv * ((2.0 / q.w) * (1.0 - vn2 / (3.0 * q.w * q.w)))
    } else {
        qv * (angle / vn)
    };
    // v = V^{-1} t with V^{-1} = I - 1/2 [w]x + c [w]x^2,
    // c = (1 - (t/2) cot(t/2)) / t^2.
    let c = if angle < TAYLOR_THRESHOLD {
        1.0 / 12.0 + angle * angle / 720.0
    } else {
        let half = 0.5 * angle;
        (1.0 - half * half.cos() / half.sin()) / (angle * angle)
    };
    let t = tf.translation;
    let wxt = w.cross(t);
    let v = t - wxt * 0.5 + w.cross(wxt) * c;
    Ok(Twist { v, w })
}

/// Composition `a * b` (apply `b` first, then `a`).
pub fn compose(a: &SE3Transform, b: &SE3Transform) -> SE3Transform {
    SE3Transform {
        rotation: renormalized(a.rotation.mul(b.rotation)),
        translation: a.rotation.rotate(b.translation) + a.translation,
    }
}

/// Inverse transform.
pub fn inverse(tf: &SE3Transform) -> SE3Transform {
    let qi = tf.rotation.conjugate();
    SE3Transform { rotation: qi, translation: -qi.rotate(tf.translation) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;
    use proptest::prelude::*;

    fn vec_near(a: Vec3, b: Vec3, tol: f64) {
        assert!((a - b).norm() <= tol, "{a:?} vs {b:?}");
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let t = exp(&Twist::ZERO).unwrap();
        assert_eq!(t, SE3Transform::IDENTITY);
    }

    #[test]
    fn exp_pure_translation() {
        let xi = Twist::new(Vec3::new(1.0, 2.0, 3.0), Vec3::ZERO);
        let t = exp(&xi).unwrap();
        assert_eq!(t.rotation, Quat::IDENTITY);
        assert_eq!(t.translation, Vec3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn exp_quarter_turn_moves_unit_x_to_unit_y() {
        let xi = Twist::new(Vec3::ZERO, Vec3::new(0.0, 0.0, PI / 2.0));
        let t = exp(&xi).unwrap();
        vec_near(t.apply(Vec3::new(1.0, 0.0, 0.0)), Vec3::new(0.0, 1.0, 0.0), 1e-12);
    }

    #[test]
    fn exp_screw_translation_closed_form() {
        // For v = (1,0,0), w = (0,0,pi/2) the closed form gives
        // t = (2/pi, 2/pi, 0).
        let xi = Twist::new(Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 0.0, PI / 2.0));
        let t = exp(&xi).unwrap();
        vec_near(t.translation, Vec3::new(2.0 / PI, 2.0 / PI, 0.0), 1e-12);
    }

    #[test]
    fn exp_rejects_non_finite() {
        let xi = Twist::new(Vec3::new(f64::NAN, 0.0, 0.0), Vec3::ZERO);
        assert!(matches!(exp(&xi), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn log_rejects_angles_at_the_cut() {
        let near_pi = exp(&Twist::new(Vec3::ZERO, Vec3::new(PI - 1e-7, 0.0, 0.0))).unwrap();
        assert!(matches!(log(&near_pi), Err(Error::LogDomain { .. })));
        let below_cut = exp(&Twist::new(Vec3::ZERO, Vec3::new(PI - 1e-5, 0.0, 0.0))).unwrap();
        let xi = log(&below_cut).unwrap();
        assert!((xi.w.norm() - (PI - 1e-5)).abs() < 1e-9);
    }

    #[test]
    fn compose_with_identity_is_bit_exact() {
        let t = exp(&Twist::new(Vec3::new(0.3, -0.2, 0.9), Vec3::new(0.1, 0.4, -0.2))).unwrap();
        assert_eq!(compose(&SE3Transform::IDENTITY, &t), t);
        assert_eq!(compose(&t, &SE3Transform::IDENTITY), t);
    }

    #[test]
    fn inverse_composes_to_identity() {
        let t = exp(&Twist::new(Vec3::new(1.0, -2.0, 0.5), Vec3::new(0.7, -0.3, 0.2))).unwrap();
        let r = compose(&t, &inverse(&t));
        assert!((r.rotation.norm_squared() - 1.0).abs() < 1e-12);
        assert!(r.rotation.w.abs() > 1.0 - 1e-12);
        assert!(r.translation.norm() < 1e-12);
    }

    #[test]
    fn tiny_angle_round_trip_is_accurate() {
        // Angles far below the Taylor threshold and just above it.
        for scale in [1e-12, 1e-9, 2e-8, 1e-6, 1e-3] {
            let xi = Twist::new(
                Vec3::new(0.3, -1.2, 0.9),
                Vec3::new(0.6, -0.8, 0.2) * scale,
            );
            let back = log(&exp(&xi).unwrap()).unwrap();
            vec_near(back.v, xi.v, 1e-12);
            vec_near(back.w, xi.w, 1e-12);
        }
    }

    fn arb_twist() -> impl Strategy<Value = Twist> {
        // Rotation magnitude up to 3 rad keeps the angle clear of the pi cut.
        (
            prop::array::uniform3(-10.0f64..10.0),
            prop::array::uniform3(-1.0f64..1.0),
            0.0f64..3.0,
        )
            .prop_map(|(v, dir, mag)| {
                let d = Vec3::new(dir[0], dir[1], dir[2]);
                let n = d.norm();
                let w = if n < 1e-6 { Vec3::ZERO } else { d * (mag / n) };
                Twist::new(Vec3::new(v[0], v[1], v[2]), w)
            })
    }

    proptest! {
        #[test]
        fn prop_log_exp_round_trip(xi in arb_twist()) {
            let back = log(&exp(&xi).unwrap()).unwrap();
            prop_assert!((back.v - xi.v).norm() < 1e-9);
            prop_assert!((back.w - xi.w).norm() < 1e-9);
        }

        #[test]
        fn prop_exp_log_round_trip(xi in arb_twist()) {
            let t = exp(&xi).unwrap();
            let t2 = exp(&log(&t).unwrap()).unwrap();
            prop_assert!((t.translation - t2.translation).norm() < 1e-9);
            let dq = t.rotation.mul(t2.rotation.conjugate());
            prop_assert!(dq.w.abs() > 1.0 - 1e-12);
        }

        #[test]
        fn prop_compose_associative(a in arb_twist(), b in arb_twist(), c in arb_twist()) {
            let (ta, tb, tc) = (exp(&a).unwrap(), exp(&b).unwrap(), exp(&c).unwrap());
            let left = compose(&compose(&ta, &tb), &tc);
            let right = compose(&ta, &compose(&tb, &tc));
            prop_assert!((left.translation - right.translation).norm() < 1e-9);
            let dq = left.rotation.mul(right.rotation.conjugate());
            prop_assert!(dq.w.abs() > 1.0 - 1e-12);
        }

        #[test]
        fn prop_unit_norm_preserved(a in arb_twist(), b in arb_twist()) {
            let mut t = exp(&a).unwrap();
            let s = exp(&b).unwrap();
            for _ in 0..64 {
                t = compose(&s, &t);
                prop_assert!((t.rotation.norm_squared() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn prop_apply_is_isometry(a in arb_twist(), p in prop::array::uniform3(-5.0f64..5.0), q in prop::array::uniform3(-5.0f64..5.0)) {
            let t = exp(&a).unwrap();
            let (p, q) = (Vec3::new(p[0], p[1], p[2]), Vec3::new(q[0], q[1], q[2]));
            let before = (p - q).norm();
            let after = (t.apply(p) - t.apply(q)).norm();
            prop_assert!((before - after).abs() < 1e-9);
        }
    }
}
