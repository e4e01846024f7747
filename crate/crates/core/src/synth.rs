//! Procedural rigid scenes with exact ground truth.
//!
//! Every surface is a plane patch, a box, or the unbounded background plane,
//! placed by a rigid pose and textured with band-limited value noise in its
//! local coordinates. The second frame ray-casts the same surfaces after
//! each one's rigid motion, so colors, depths, ground-truth transforms,
//! flow, and occlusion all derive from one geometric model: the generator is
//! the brute-force oracle the estimation pipeline is tested against.

use alloc::vec;
use alloc::vec::Vec;

use crate::camera::{self, PinholeCamera};
use crate::error::{Error, Result};
use crate::field::{FlowField, SE3Field};
use crate::linalg::Vec3;
use crate::raster::{ChannelGrid, Grid, RgbdFrame};
use crate::se3::{self, Quat, SE3Transform, MAX_LOG_ANGLE};

#[allow(unused_imports)]
use num_traits::Float;

/// Rays report no hit closer than this, discarding surfaces that contain
/// the camera.
const MIN_RAY_DEPTH: f64 = 1e-6;

/// A target pixel counts as occluded when another splatted target in its
/// cell undercuts its depth by more than this relative slack.
pub const OCCLUSION_RELATIVE_TOLERANCE: f64 = 0.01;

const NOISE_OCTAVES: u32 = 3;

/// Band-limited value-noise texture parameters.
///
/// `frequency` is the base lattice frequency in cycles per local unit; the
/// finest octave runs at four times that, so it should stay coarse enough to
/// span several pixels at the surface's depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextureSpec {
    pub seed: u64,
    pub frequency: f64,
}

/// Geometry of a movable scene object, in its local frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectShape {
    /// Planar patch spanning `[-half_width, half_width] x
    /// [-half_height, half_height]` in the local XY plane.
    Rect { half_width: f64, half_height: f64 },
    /// Axis-aligned box centered at the local origin.
    Box { half_extents: Vec3 },
}

/// One rigid object: geometry, first-frame placement, and its motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneObject {
    pub shape: ObjectShape,
    /// Local-to-camera placement in the first frame.
    pub pose: SE3Transform,
    /// Camera-frame rigid motion: a surface point `p` moves to `motion * p`.
    pub motion: SE3Transform,
    pub texture: TextureSpec,
}

/// Full description of a two-frame rigid scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub camera: PinholeCamera,
    pub width: usize,
    pub height: usize,
    /// Depth of the background plane along the optical axis.
    pub background_depth: f64,
    /// Background plane tilt: rotations about the x and y axes, in radians.
    pub background_tilt: (f64, f64),
    pub background_motion: SE3Transform,
    pub background_texture: TextureSpec,
    pub objects: Vec<SceneObject>,
    /// Global seed mixed into every texture hash.
    pub seed: u64,
}

/// Everything the generator knows about a rendered scene pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScene {
    pub frame1: RgbdFrame,
    pub frame2: RgbdFrame,
    /// Per-pixel ground-truth motion: the motion of the surface seen at that
    /// pixel in the first frame.
    pub gt_field: SE3Field,
    /// Ground-truth flow and inverse-depth change, computed directly from
    /// the ray-cast geometry.
    pub gt_flow: FlowField,
    pub gt_flow_valid: Grid<bool>,
    /// Surface label per pixel: `0` for the background (and unhit pixels,
    /// which carry zero inverse depth), `k` for `objects[k - 1]`.
    pub labels: Grid<u32>,
    /// First-frame pixels whose target is covered by a nearer surface in the
    /// second frame or leaves the frame.
    pub occlusion: Grid<bool>,
}

#[derive(Debug, Clone, Copy)]
enum SurfaceGeometry {
    /// Plane `z = 0` in local coordinates; `None` bounds mean unbounded.
    Plane { bounds: Option<(f64, f64)> },
    Box { half: Vec3 },
}

struct Surface {
    geometry: SurfaceGeometry,
    to_local: SE3Transform,
    texture: TextureSpec,
    motion: SE3Transform,
    label: u32,
}

struct Hit {
    surface: usize,
    depth: f64,
    local: Vec3,
}

/// Renders both frames of a scene and derives its exact ground truth.
pub fn generate(spec: &SceneSpec) -> Result<GeneratedScene> {
    validate(spec)?;
    let surfaces1 = build_surfaces(spec, false)?;
    let surfaces2 = build_surfaces(spec, true)?;
    let (frame1, hits1) = render(spec, &surfaces1);
    let (frame2, _) = render(spec, &surfaces2);
    let (w, h) = (spec.width, spec.height);
    let cam = &spec.camera;

    let gt_field = SE3Field::from_fn(w, h, |x, y| match &hits1[y * w + x] {
        Some(hit) => surfaces1[hit.surface].motion,
        None => SE3Transform::IDENTITY,
    })?;

    let mut labels = Grid::new(w, h, 0u32);
    let mut gt_flow = FlowField::zeros(w, h);
    let mut valid = Grid::new(w, h, false);
    let mut targets: Vec<Option<(f64, f64, f64)>> = vec![None; w * h];
    for y in 0..h {
        for x in 0..w {
            let Some(hit) = &hits1[y * w + x] else { continue };
            labels.set(x, y, surfaces1[hit.surface].label);
            let d1 = 1.0 / hit.depth;
            let motion = &surfaces1[hit.surface].motion;
            // Same identity short-circuit as the induced flow: static
            // surfaces get exactly zero flow, free of rounding noise.
            if *motion == SE3Transform::IDENTITY {
                if 1.0 / d1 >= camera::MIN_DEPTH {
                    valid.set(x, y, true);
                    targets[y * w + x] = Some((x as f64, y as f64, hit.depth));
                }
                continue;
            }
            let p1 = pixel_ray(cam, x, y) * hit.depth;
            let p2 = motion.apply(p1);
            match camera::project(cam, p2) {
                Ok(m) => {
                    gt_flow.set(x, y, m.x - x as f64, m.y - y as f64, m.d - d1);
                    valid.set(x, y, true);
                    targets[y * w + x] = Some((m.x, m.y, p2.z));
                }
                Err(Error::ProjectionDomain { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }

    let occlusion = occlusion_from_targets(w, h, &targets);
    Ok(GeneratedScene { frame1, frame2, gt_field, gt_flow, gt_flow_valid: valid, labels, occlusion })
}

/// Mean absolute per-channel difference between first-frame colors and the
/// second frame sampled at the ground-truth targets, over valid non-occluded
/// pixels. Bounded by the bilinear interpolation error of the textures.
pub fn photoconsistency_error(scene: &GeneratedScene) -> f64 {
    let (w, h) = (scene.frame1.width(), scene.frame1.height());
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut sample = [0.0; 3];
    for y in 0..h {
        for x in 0..w {
            if !scene.gt_flow_valid.at(x, y) || scene.occlusion.at(x, y) {
                continue;
            }
            let (dx, dy, _) = scene.gt_flow.at(x, y);
            scene.frame2.color.sample_clamped(x as f64 + dx, y as f64 + dy, &mut sample);
            for (a, b) in sample.iter().zip(scene.frame1.color.pixel(x, y)) {
                sum += (a - b).abs();
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

fn validate(spec: &SceneSpec) -> Result<()> {
    if spec.width == 0 || spec.height == 0 {
        return Err(Error::InvalidArgument { what: "scene dimensions must be positive" });
    }
    if !(spec.background_depth.is_finite() && spec.background_depth > 0.0) {
        return Err(Error::InvalidArgument { what: "background depth must be positive" });
    }
    if !(spec.background_tilt.0.is_finite() && spec.background_tilt.1.is_finite()) {
        return Err(Error::NonFinite { what: "background tilt" });
    }
    check_texture(&spec.background_texture)?;
    check_motion(&spec.background_motion)?;
    let anchor = Vec3::new(0.0, 0.0, spec.background_depth);
    if spec.background_motion.apply(anchor).z <= 0.0 {
        return Err(Error::InvalidArgument {
            what: "background motion moves the plane anchor behind the camera",
        });
    }
    for obj in &spec.objects {
        check_texture(&obj.texture)?;
        check_motion(&obj.motion)?;
        let extents_ok = match obj.shape {
            ObjectShape::Rect { half_width, half_height } => {
                half_width.is_finite() && half_width > 0.0 && half_height.is_finite()
                    && half_height > 0.0
            }
            ObjectShape::Box { half_extents } => {
                half_extents.is_finite()
                    && half_extents.x > 0.0
                    && half_extents.y > 0.0
                    && half_extents.z > 0.0
            }
        };
        if !extents_ok {
            return Err(Error::InvalidArgument { what: "object half extents must be positive" });
        }
        if obj.pose.translation.z <= 0.0 {
            return Err(Error::InvalidArgument {
                what: "object center must sit in front of the camera",
            });
        }
        if obj.motion.apply(obj.pose.translation).z <= 0.0 {
            return Err(Error::InvalidArgument {
                what: "object motion moves its center behind the camera",
            });
        }
    }
    Ok(())
}

fn check_texture(tex: &TextureSpec) -> Result<()> {
    if !(tex.frequency.is_finite() && tex.frequency > 0.0) {
        return Err(Error::InvalidArgument { what: "texture frequency must be positive" });
    }
    Ok(())
}

fn check_motion(motion: &SE3Transform) -> Result<()> {
    let angle = motion.rotation_angle();
    if angle >= MAX_LOG_ANGLE {
        return Err(Error::LogDomain { angle, pixel: None });
    }
    Ok(())
}

fn background_pose(spec: &SceneSpec) -> Result<SE3Transform> {
    let (tx, ty) = spec.background_tilt;
    let qx = Quat { w: (tx / 2.0).cos(), x: (tx / 2.0).sin(), y: 0.0, z: 0.0 };
    let qy = Quat { w: (ty / 2.0).cos(), x: 0.0, y: (ty / 2.0).sin(), z: 0.0 };
    SE3Transform::from_parts(qx.mul(qy), Vec3::new(0.0, 0.0, spec.background_depth))
}

fn build_surfaces(spec: &SceneSpec, second_frame: bool) -> Result<Vec<Surface>> {
    let mut out = Vec::with_capacity(spec.objects.len() + 1);
    let mut push = |geometry, pose: SE3Transform, motion: SE3Transform, texture, label| {
        let placed = if second_frame { se3::compose(&motion, &pose) } else { pose };
        out.push(Surface { geometry, to_local: se3::inverse(&placed), texture, motion, label });
    };
    push(
        SurfaceGeometry::Plane { bounds: None },
        background_pose(spec)?,
        spec.background_motion,
        spec.background_texture,
        0,
    );
    for (i, obj) in spec.objects.iter().enumerate() {
        let geometry = match obj.shape {
            ObjectShape::Rect { half_width, half_height } => {
                SurfaceGeometry::Plane { bounds: Some((half_width, half_height)) }
            }
            ObjectShape::Box { half_extents } => SurfaceGeometry::Box { half: half_extents },
        };
        push(geometry, obj.pose, obj.motion, obj.texture, (i + 1) as u32);
    }
    Ok(out)
}

fn pixel_ray(cam: &PinholeCamera, x: usize, y: usize) -> Vec3 {
    Vec3::new((x as f64 - cam.cx) / cam.fx, (y as f64 - cam.cy) / cam.fy, 1.0)
}

/// Intersects the pixel ray `s * dir` with a surface. Because `dir.z = 1`,
/// the ray parameter of a hit equals its camera-frame depth.
fn intersect(surface: &Surface, dir: Vec3) -> Option<(f64, Vec3)> {
    let o = surface.to_local.translation;
    let d = surface.to_local.rotation.rotate(dir);
    match surface.geometry {
        SurfaceGeometry::Plane { bounds } => {
            if d.z.abs() < 1e-12 {
                return None;
            }
            let s = -o.z / d.z;
            if s < MIN_RAY_DEPTH {
                return None;
            }
            let p = o + d * s;
            if let Some((hw, hh)) = bounds {
                if p.x.abs() > hw || p.y.abs() > hh {
                    return None;
                }
            }
            Some((s, p))
        }
        SurfaceGeometry::Box { half } => {
            let mut enter = f64::NEG_INFINITY;
            let mut exit = f64::INFINITY;
            for (oc, dc, hc) in [(o.x, d.x, half.x), (o.y, d.y, half.y), (o.z, d.z, half.z)] {
                if dc.abs() < 1e-15 {
                    if oc.abs() > hc {
                        return None;
                    }
                } else {
                    let inv = 1.0 / dc;
                    let (a, b) = ((-hc - oc) * inv, (hc - oc) * inv);
                    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                    enter = enter.max(lo);
                    exit = exit.min(hi);
                }
            }
            if enter > exit || enter < MIN_RAY_DEPTH {
                return None;
            }
            Some((enter, o + d * enter))
        }
    }
}

fn render(spec: &SceneSpec, surfaces: &[Surface]) -> (RgbdFrame, Vec<Option<Hit>>) {
    let (w, h) = (spec.width, spec.height);
    let mut color = ChannelGrid::new(w, h, 3);
    let mut inv_depth = Grid::new(w, h, 0.0);
    let mut hits: Vec<Option<Hit>> = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let dir = pixel_ray(&spec.camera, x, y);
            let mut best: Option<Hit> = None;
            for (i, surface) in surfaces.iter().enumerate() {
                if let Some((depth, local)) = intersect(surface, dir) {
                    if best.as_ref().map_or(true, |b| depth < b.depth) {
                        best = Some(Hit { surface: i, depth, local });
                    }
                }
            }
            if let Some(hit) = &best {
                let tex = &surfaces[hit.surface].texture;
                let px = color.pixel_mut(x, y);
                for (c, slot) in px.iter_mut().enumerate() {
                    *slot = surface_color(spec.seed, tex, c as u32, hit.local);
                }
                inv_depth.set(x, y, 1.0 / hit.depth);
            }
            hits.push(best);
        }
    }
    (RgbdFrame { color, inverse_depth: inv_depth }, hits)
}

/// Forward-splats target depths onto the pixel grid (nearest cell, keeping
/// the minimum) and flags every target that a splat in its cell undercuts by
/// more than the relative slack; targets leaving the frame are flagged too.
fn occlusion_from_targets(
    w: usize,
    h: usize,
    targets: &[Option<(f64, f64, f64)>],
) -> Grid<bool> {
    let cell = |x2: f64, y2: f64| -> Option<(usize, usize)> {
        let (cx, cy) = (x2.round(), y2.round());
        if cx < 0.0 || cy < 0.0 || cx >= w as f64 || cy >= h as f64 {
            None
        } else {
            Some((cx as usize, cy as usize))
        }
    };
    let mut nearest = Grid::new(w, h, f64::INFINITY);
    for target in targets.iter().flatten() {
        let (x2, y2, z2) = *target;
        if let Some((cx, cy)) = cell(x2, y2) {
            if z2 < nearest.at(cx, cy) {
                nearest.set(cx, cy, z2);
            }
        }
    }
    let mut occ = Grid::new(w, h, false);
    for (slot, target) in occ.data_mut().iter_mut().zip(targets) {
        let Some((x2, y2, z2)) = target else { continue };
        *slot = match cell(*x2, *y2) {
            Some((cx, cy)) => *z2 > nearest.at(cx, cy) * (1.0 + OCCLUSION_RELATIVE_TOLERANCE),
            None => true,
        };
    }
    occ
}

fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58476D1CE4E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn lattice_value(seed: u64, ix: i64, iy: i64, iz: i64) -> f64 {
    let mut h = seed;
    for v in [ix, iy, iz] {
        h = mix64(h ^ (v as u64).wrapping_mul(0x9E3779B97F4A7C15));
    }
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

fn value_noise(seed: u64, p: Vec3) -> f64 {
    let (bx, by, bz) = (p.x.floor(), p.y.floor(), p.z.floor());
    let (ix, iy, iz) = (bx as i64, by as i64, bz as i64);
    let (ux, uy, uz) = (fade(p.x - bx), fade(p.y - by), fade(p.z - bz));
    let mut acc = 0.0;
    for dz in 0..2i64 {
        let wz = if dz == 0 { 1.0 - uz } else { uz };
        for dy in 0..2i64 {
            let wy = if dy == 0 { 1.0 - uy } else { uy };
            for dx in 0..2i64 {
                let wx = if dx == 0 { 1.0 - ux } else { ux };
                acc += wz * wy * wx * lattice_value(seed, ix + dx, iy + dy, iz + dz);
            }
        }
    }
    acc
}

/// Smoothly interpolated lattice noise in `[0, 1]`, summed over
/// [`NOISE_OCTAVES`] octaves with halving amplitude and doubling frequency.
fn band_limited_noise(seed: u64, p: Vec3) -> f64 {
    let mut acc = 0.0;
    let mut norm = 0.0;
    let mut amp = 1.0;
    let mut freq = 1.0;
    for octave in 0..NOISE_OCTAVES {
        acc += amp * value_noise(mix64(seed ^ u64::from(octave)), p * freq);
        norm += amp;
        amp *= 0.5;
        freq *= 2.0;
    }
    acc / norm
}

fn surface_color(scene_seed: u64, tex: &TextureSpec, channel: u32, p: Vec3) -> f64 {
    let seed = mix64(scene_seed ^ tex.seed.rotate_left(17) ^ (u64::from(channel) << 56));
    band_limited_noise(seed, p * tex.frequency)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::induced_flow;

    fn camera() -> PinholeCamera {
        PinholeCamera::new(120.0, 120.0, 47.5, 47.5).unwrap()
    }

    fn rot_z(angle: f64) -> Quat {
        Quat { w: (angle / 2.0).cos(), x: 0.0, y: 0.0, z: (angle / 2.0).sin() }
    }

    fn rot_y(angle: f64) -> Quat {
        Quat { w: (angle / 2.0).cos(), x: 0.0, y: (angle / 2.0).sin(), z: 0.0 }
    }

    fn translation(x: f64, y: f64, z: f64) -> SE3Transform {
        SE3Transform::from_parts(Quat::IDENTITY, Vec3::new(x, y, z)).unwrap()
    }

    fn static_spec() -> SceneSpec {
        SceneSpec {
            camera: camera(),
            width: 96,
            height: 96,
            background_depth: 3.0,
            background_tilt: (0.15, -0.1),
            background_motion: SE3Transform::IDENTITY,
            background_texture: TextureSpec { seed: 11, frequency: 1.5 },
            objects: vec![SceneObject {
                shape: ObjectShape::Rect { half_width: 0.25, half_height: 0.2 },
                pose: translation(-0.2, 0.05, 1.8),
                motion: SE3Transform::IDENTITY,
                texture: TextureSpec { seed: 22, frequency: 2.0 },
            }],
            seed: 7,
        }
    }

    fn composite_spec() -> SceneSpec {
        let rect_motion = SE3Transform::from_parts(rot_z(0.05), Vec3::new(0.04, -0.02, 0.05))
            .unwrap();
        let box_motion = SE3Transform::from_parts(rot_y(0.04), Vec3::new(-0.05, 0.02, -0.08))
            .unwrap();
        SceneSpec {
            camera: camera(),
            width: 96,
            height: 96,
            background_depth: 3.0,
            background_tilt: (0.15, -0.1),
            background_motion: translation(0.03, 0.0, 0.0),
            background_texture: TextureSpec { seed: 11, frequency: 1.5 },
            objects: vec![
                SceneObject {
                    shape: ObjectShape::Rect { half_width: 0.25, half_height: 0.2 },
                    pose: translation(-0.2, 0.05, 1.8),
                    motion: rect_motion,
                    texture: TextureSpec { seed: 22, frequency: 2.0 },
                },
                SceneObject {
                    shape: ObjectShape::Box { half_extents: Vec3::new(0.15, 0.12, 0.1) },
                    pose: translation(0.35, -0.1, 2.2),
                    motion: box_motion,
                    texture: TextureSpec { seed: 33, frequency: 2.0 },
                },
            ],
            seed: 7,
        }
    }

    #[test]
    fn zero_motion_scene_is_static() {
        let scene = generate(&static_spec()).unwrap();
        assert_eq!(scene.frame1, scene.frame2);
        for y in 0..96 {
            for x in 0..96 {
                assert!(scene.gt_flow_valid.at(x, y));
                assert_eq!(scene.gt_flow.at(x, y), (0.0, 0.0, 0.0));
                assert!(!scene.occlusion.at(x, y));
            }
        }
    }

    #[test]
    fn fronto_parallel_plane_translation_has_closed_form_flow() {
        let spec = SceneSpec {
            camera: PinholeCamera::new(200.0, 200.0, 31.5, 23.5).unwrap(),
            width: 64,
            height: 48,
            background_depth: 2.0,
            background_tilt: (0.0, 0.0),
            background_motion: translation(0.1, 0.0, 0.0),
            background_texture: TextureSpec { seed: 3, frequency: 1.0 },
            objects: vec![],
            seed: 1,
        };
        let scene = generate(&spec).unwrap();
        for y in 0..48 {
            for x in 0..64 {
                assert!(scene.gt_flow_valid.at(x, y));
                let (dx, dy, dd) = scene.gt_flow.at(x, y);
                assert!((dx - 10.0).abs() < 1e-9, "flow x at ({x},{y}) = {dx}");
                assert!(dy.abs() < 1e-9);
                assert_eq!(dd, 0.0, "pure x translation leaves depth unchanged");
            }
        }
    }

    #[test]
    fn emitted_flow_matches_flow_induced_by_emitted_field() {
        let scene = generate(&composite_spec()).unwrap();
        let (flow, valid) =
            induced_flow(&scene.gt_field, &scene.frame1.inverse_depth, &camera()).unwrap();
        for y in 0..96 {
            for x in 0..96 {
                assert_eq!(valid.at(x, y), scene.gt_flow_valid.at(x, y), "mask at ({x},{y})");
                let (ax, ay, ad) = scene.gt_flow.at(x, y);
                let (bx, by, bd) = flow.at(x, y);
                assert!((ax - bx).abs() < 1e-9, "({x},{y}): {ax} vs {bx}");
                assert!((ay - by).abs() < 1e-9);
                assert!((ad - bd).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&composite_spec()).unwrap();
        let b = generate(&composite_spec()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn field_is_piecewise_constant_on_labels() {
        let spec = composite_spec();
        let scene = generate(&spec).unwrap();
        let mut seen = [0usize; 3];
        for y in 0..96 {
            for x in 0..96 {
                let label = scene.labels.at(x, y) as usize;
                seen[label] += 1;
                let expected = match label {
                    0 => &spec.background_motion,
                    k => &spec.objects[k - 1].motion,
                };
                assert_eq!(scene.gt_field.at(x, y), expected);
            }
        }
        assert!(seen.iter().all(|n| *n > 50), "all surfaces visible: {seen:?}");
    }

    #[test]
    fn warped_colors_match_on_non_occluded_pixels() {
        let scene = generate(&composite_spec()).unwrap();
        let occluded = scene.occlusion.data().iter().filter(|o| **o).count();
        assert!(occluded < 96 * 96 / 5, "occlusion stays sparse: {occluded}");
        let err = photoconsistency_error(&scene);
        assert!(err < 2.0 / 255.0, "mean abs color error {err}");
    }

    #[test]
    fn covered_background_is_flagged_occluded() {
        let spec = SceneSpec {
            camera: PinholeCamera::new(120.0, 120.0, 40.0, 40.0).unwrap(),
            width: 81,
            height: 81,
            background_depth: 4.0,
            background_tilt: (0.0, 0.0),
            background_motion: SE3Transform::IDENTITY,
            background_texture: TextureSpec { seed: 5, frequency: 1.0 },
            objects: vec![SceneObject {
                shape: ObjectShape::Rect { half_width: 0.2, half_height: 0.15 },
                pose: translation(-0.3, 0.0, 1.0),
                motion: translation(0.25, 0.0, 0.0),
                texture: TextureSpec { seed: 6, frequency: 4.0 },
            }],
            seed: 2,
        };
        let scene = generate(&spec).unwrap();
        // The object spans screen x in [-20, 28] before and [10, 58] after
        // its 30 px shift; static background around x = 45 becomes covered.
        assert_eq!(scene.labels.at(45, 40), 0);
        assert!(scene.occlusion.at(45, 40), "newly covered background pixel");
        assert!(!scene.occlusion.at(70, 40), "background far from the object");
        assert_eq!(scene.labels.at(15, 40), 1);
        assert!(!scene.occlusion.at(15, 40), "the moving object stays visible");
        let (dx, dy, _) = scene.gt_flow.at(15, 40);
        assert!((dx - 30.0).abs() < 1e-9 && dy.abs() < 1e-9);
    }

    #[test]
    fn degenerate_specs_are_rejected() {
        let mut spec = static_spec();
        spec.objects[0].pose = translation(0.0, 0.0, -1.0);
        assert!(matches!(generate(&spec), Err(Error::InvalidArgument { .. })));

        let mut spec = static_spec();
        spec.objects[0].motion = translation(0.0, 0.0, -5.0);
        assert!(matches!(generate(&spec), Err(Error::InvalidArgument { .. })));

        let mut spec = static_spec();
        spec.background_depth = 0.0;
        assert!(matches!(generate(&spec), Err(Error::InvalidArgument { .. })));
    }

    #[test]
    fn value_noise_collapses_to_lattice_at_integers() {
        let p = Vec3::new(3.0, -2.0, 5.0);
        assert_eq!(value_noise(99, p), lattice_value(99, 3, -2, 5));
        for i in 0..64 {
            let q = Vec3::new(i as f64 * 0.37, i as f64 * -0.21, 0.4);
            let v = band_limited_noise(123, q);
            assert!((0.0..=1.0).contains(&v));
        }
    }
}
