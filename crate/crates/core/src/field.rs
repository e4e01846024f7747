//! Dense SE(3) fields, motion-embedding fields, and their resampling.
//!
//! Convex x2 upsampling blends the logarithms of the 3x3 coarse neighborhood
//! under per-pixel convex weights and exponentiates the result; bilinear
//! upsampling interpolates logarithms at source coordinate `fine / factor`.
//! Both therefore stay on the SE(3) manifold by construction.

use alloc::vec;
use alloc::vec::Vec;

use crate::camera::{self, PinholeCamera};
use crate::error::{Error, Result};
use crate::raster::{bilinear_parts, ChannelGrid, Grid};
use crate::se3::{self, SE3Transform, Twist, MAX_LOG_ANGLE};

#[allow(unused_imports)]
use num_traits::Float;

/// Default number of motion-embedding channels.
pub const DEFAULT_EMBEDDING_CHANNELS: usize = 16;

/// Per-pixel rigid-motion embeddings, one `f64` vector per pixel.
pub type MotionEmbeddingField = ChannelGrid;

/// A dense raster of rigid transforms.
///
/// Every element keeps its rotation angle below the logarithm cut, so the
/// field can be mapped to twist channels at any time. The invariant is
/// enforced at construction and by [`SE3Field::set`].
#[derive(Debug, Clone, PartialEq)]
pub struct SE3Field {
    width: usize,
    height: usize,
    data: Vec<SE3Transform>,
}

impl SE3Field {
    pub fn identity(width: usize, height: usize) -> Self {
        SE3Field { width, height, data: vec![SE3Transform::IDENTITY; width * height] }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> SE3Transform,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let t = f(x, y);
                check_element(&t, x, y)?;
                data.push(t);
            }
        }
        Ok(SE3Field { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn at(&self, x: usize, y: usize) -> &SE3Transform {
        debug_assert!(x < self.width && y < self.height);
        &self.data[y * self.width + x]
    }

    /// Replaces one element, enforcing the field invariants.
    pub fn set(&mut self, x: usize, y: usize, t: SE3Transform) -> Result<()> {
        check_element(&t, x, y)?;
        self.data[y * self.width + x] = t;
        Ok(())
    }

    pub fn data(&self) -> &[SE3Transform] {
        &self.data
    }

    /// Per-pixel logarithms as a 6-channel grid (translational, rotational).
    pub fn log_channels(&self) -> Result<ChannelGrid> {
        let mut out = ChannelGrid::new(self.width, self.height, 6);
        for y in 0..self.height {
            for x in 0..self.width {
                let xi = log_at(self.at(x, y), x, y)?;
                out.pixel_mut(x, y).copy_from_slice(&xi.to_array());
            }
        }
        Ok(out)
    }

    /// Downsamples by picking the element nearest each coarse pixel center.
    pub fn downsample_center(&self, factor: usize) -> SE3Field {
        assert!(factor >= 1 && self.width % factor == 0 && self.height % factor == 0);
        let (w, h) = (self.width / factor, self.height / factor);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(*self.at(x * factor + factor / 2, y * factor + factor / 2));
            }
        }
        SE3Field { width: w, height: h, data }
    }
}

fn check_element(t: &SE3Transform, x: usize, y: usize) -> Result<()> {
    if !(t.rotation.norm_squared().is_finite() && t.translation.is_finite()) {
        return Err(Error::Numeric { what: "non-finite transform", pixel: Some((x, y)) });
    }
    if (t.rotation.norm_squared() - 1.0).abs() > 1e-9 {
        return Err(Error::Numeric { what: "rotation lost unit norm", pixel: Some((x, y)) });
    }
    let angle = t.rotation_angle();
    if angle >= MAX_LOG_ANGLE {
        return Err(Error::LogDomain { angle, pixel: Some((x, y)) });
    }
    Ok(())
}

fn log_at(t: &SE3Transform, x: usize, y: usize) -> Result<Twist> {
    se3::log(t).map_err(|e| match e {
        Error::LogDomain { angle, .. } => Error::LogDomain { angle, pixel: Some((x, y)) },
        other => other,
    })
}

/// Convex weights for x2 upsampling: per fine pixel, 9 nonnegative weights
/// over the 3x3 coarse neighborhood centered on its parent pixel, summing
/// to 1. Weight `k` addresses coarse offset `(k % 3 - 1, k / 3 - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexUpsampleMask {
    fine_width: usize,
    fine_height: usize,
    weights: Vec<f64>,
}

impl ConvexUpsampleMask {
    /// A mask with all nine weights equal.
    pub fn uniform(fine_width: usize, fine_height: usize) -> Self {
        ConvexUpsampleMask {
            fine_width,
            fine_height,
            weights: vec![1.0 / 9.0; fine_width * fine_height * 9],
        }
    }

    /// Builds a mask from unnormalized logits via a per-pixel softmax.
    pub fn from_logits(logits: &ChannelGrid) -> Result<Self> {
        if logits.channels() != 9 {
            return Err(Error::InvalidArgument { what: "mask logits must have 9 channels" });
        }
        let (w, h) = (logits.width(), logits.height());
        let mut weights = Vec::with_capacity(w * h * 9);
        for y in 0..h {
            for x in 0..w {
                let px = logits.pixel(x, y);
                let max = px.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if !max.is_finite() {
                    return Err(Error::NonFinite { what: "mask logits" });
                }
                let mut e = [0.0; 9];
                let mut sum = 0.0;
                for (o, v) in e.iter_mut().zip(px) {
                    *o = (v - max).exp();
                    sum += *o;
                }
                for o in &e {
                    weights.push(o / sum);
                }
            }
        }
        Ok(ConvexUpsampleMask { fine_width: w, fine_height: h, weights })
    }

    /// Builds a mask from nonnegative weights, normalizing each pixel's nine
    /// weights to sum to 1.
    pub fn from_weights(raw: &ChannelGrid) -> Result<Self> {
        if raw.channels() != 9 {
            return Err(Error::InvalidArgument { what: "mask weights must have 9 channels" });
        }
        let (w, h) = (raw.width(), raw.height());
        let mut weights = Vec::with_capacity(w * h * 9);
        for y in 0..h {
            for x in 0..w {
                let px = raw.pixel(x, y);
                let mut sum = 0.0;
                for v in px {
                    if !(*v >= 0.0) || !v.is_finite() {
                        return Err(Error::InvalidArgument {
                            what: "mask weights must be finite and nonnegative",
                        });
                    }
                    sum += v;
                }
                if sum <= 0.0 {
                    return Err(Error::InvalidArgument {
                        what: "mask weights must not sum to zero",
                    });
                }
                for v in px {
                    weights.push(v / sum);
                }
            }
        }
        Ok(ConvexUpsampleMask { fine_width: w, fine_height: h, weights })
    }

    pub fn fine_width(&self) -> usize {
        self.fine_width
    }

    pub fn fine_height(&self) -> usize {
        self.fine_height
    }

    /// The nine normalized weights for a fine pixel.
    pub fn weights(&self, x: usize, y: usize) -> &[f64] {
        let base = (y * self.fine_width + x) * 9;
        &self.weights[base..base + 9]
    }
}

fn check_mask_dims(mask: &ConvexUpsampleMask, coarse_w: usize, coarse_h: usize) -> Result<()> {
    if mask.fine_width != coarse_w * 2 || mask.fine_height != coarse_h * 2 {
        return Err(Error::ShapeMismatch {
            expected: (coarse_w * 2, coarse_h * 2),
            got: (mask.fine_width, mask.fine_height),
        });
    }
    Ok(())
}

/// Upsamples an SE(3) field to twice the resolution with convex weights
/// applied in the Lie algebra.
pub fn convex_upsample_se3(field: &SE3Field, mask: &ConvexUpsampleMask) -> Result<SE3Field> {
    check_mask_dims(mask, field.width, field.height)?;
    let (cw, ch) = (field.width as i64, field.height as i64);
    let mut logs = Vec::with_capacity(field.width * field.height);
    for y in 0..field.height {
        for x in 0..field.width {
            logs.push(log_at(field.at(x, y), x, y)?);
        }
    }
    let mut data = Vec::with_capacity(mask.fine_width * mask.fine_height);
    for yf in 0..mask.fine_height {
        for xf in 0..mask.fine_width {
            let (px, py) = ((xf / 2) as i64, (yf / 2) as i64);
            let w = mask.weights(xf, yf);
            let mut acc = [0.0; 6];
            for (k, wk) in w.iter().enumerate() {
                let nx = (px + (k % 3) as i64 - 1).clamp(0, cw - 1) as usize;
                let ny = (py + (k / 3) as i64 - 1).clamp(0, ch - 1) as usize;
                let xi = logs[ny * field.width + nx].to_array();
                for (a, v) in acc.iter_mut().zip(xi) {
                    *a += wk * v;
                }
            }
            data.push(se3::exp(&Twist::from_array(acc))?);
        }
    }
    Ok(SE3Field { width: mask.fine_width, height: mask.fine_height, data })
}

/// Upsamples a channel field to twice the resolution with convex weights.
pub fn convex_upsample_channels(
    values: &ChannelGrid,
    mask: &ConvexUpsampleMask,
) -> Result<ChannelGrid> {
    check_mask_dims(mask, values.width(), values.height())?;
    let (cw, ch) = (values.width() as i64, values.height() as i64);
    let mut out = ChannelGrid::new(mask.fine_width, mask.fine_height, values.channels());
    for yf in 0..mask.fine_height {
        for xf in 0..mask.fine_width {
            let (px, py) = ((xf / 2) as i64, (yf / 2) as i64);
            let w = mask.weights(xf, yf);
            let acc = out.pixel_mut(xf, yf);
            for (k, wk) in w.iter().enumerate() {
                let nx = (px + (k % 3) as i64 - 1).clamp(0, cw - 1) as usize;
                let ny = (py + (k / 3) as i64 - 1).clamp(0, ch - 1) as usize;
                for (a, v) in acc.iter_mut().zip(values.pixel(nx, ny)) {
                    *a += wk * v;
                }
            }
        }
    }
    Ok(out)
}

/// Upsamples an SE(3) field by a power-of-two factor with bilinear
/// interpolation of twists. Factor 1 returns the field unchanged.
pub fn bilinear_upsample_se3(field: &SE3Field, factor: u32) -> Result<SE3Field> {
    if !matches!(factor, 1 | 2 | 4 | 8) {
        return Err(Error::InvalidArgument { what: "upsampling factor must be 1, 2, 4, or 8" });
    }
    if factor == 1 {
        return Ok(field.clone());
    }
    let mut logs = Vec::with_capacity(field.width * field.height);
    for y in 0..field.height {
        for x in 0..field.width {
            logs.push(log_at(field.at(x, y), x, y)?.to_array());
        }
    }
    let (w, h) = (field.width * factor as usize, field.height * factor as usize);
    let inv = 1.0 / f64::from(factor);
    let mut data = Vec::with_capacity(w * h);
    for yf in 0..h {
        let sy = yf as f64 * inv;
        for xf in 0..w {
            let sx = xf as f64 * inv;
            let (x0, y0, fx, fy) = bilinear_parts(sx, sy);
            let clamp = |v: i64, hi: usize| -> usize { v.clamp(0, hi as i64 - 1) as usize };
            let mut acc = [0.0; 6];
            for (dy, wy) in [(0i64, 1.0 - fy), (1, fy)] {
                for (dx, wx) in [(0i64, 1.0 - fx), (1, fx)] {
                    let idx = clamp(y0 + dy, field.height) * field.width
                        + clamp(x0 + dx, field.width);
                    let wgt = wy * wx;
                    for (a, v) in acc.iter_mut().zip(logs[idx]) {
                        *a += wgt * v;
                    }
                }
            }
            data.push(se3::exp(&Twist::from_array(acc))?);
        }
    }
    Ok(SE3Field { width: w, height: h, data })
}

/// Optical flow plus inverse-depth change, one `(dx, dy, dd)` per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    values: ChannelGrid,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField { values: ChannelGrid::new(width, height, 3) }
    }

    pub fn from_channels(values: ChannelGrid) -> Result<Self> {
        if values.channels() != 3 {
            return Err(Error::InvalidArgument { what: "flow field requires 3 channels" });
        }
        Ok(FlowField { values })
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    /// `(dx, dy, dd)` at a pixel.
    pub fn at(&self, x: usize, y: usize) -> (f64, f64, f64) {
        let p = self.values.pixel(x, y);
        (p[0], p[1], p[2])
    }

    pub fn set(&mut self, x: usize, y: usize, dx: f64, dy: f64, dd: f64) {
        self.values.pixel_mut(x, y).copy_from_slice(&[dx, dy, dd]);
    }

    pub fn channels(&self) -> &ChannelGrid {
        &self.values
    }

    /// The 2D flow part as a 2-channel grid.
    pub fn flow2d(&self) -> ChannelGrid {
        let mut out = ChannelGrid::new(self.width(), self.height(), 2);
        for y in 0..self.height() {
            for x in 0..self.width() {
                let p = self.values.pixel(x, y);
                out.pixel_mut(x, y).copy_from_slice(&p[..2]);
            }
        }
        out
    }
}

/// Flow induced by a transform field: per pixel,
/// `(f, d) = pi(T * pi^{-1}(x, y, d)) - (x, y, d)`.
///
/// Pixels with nonpositive inverse depth or a failed projection are masked
/// out with zero flow entries; no values are clamped.
pub fn induced_flow(
    field: &SE3Field,
    inv_depth1: &Grid<f64>,
    cam: &PinholeCamera,
) -> Result<(FlowField, Grid<bool>)> {
    if field.width != inv_depth1.width() || field.height != inv_depth1.height() {
        return Err(Error::ShapeMismatch {
            expected: (field.width, field.height),
            got: (inv_depth1.width(), inv_depth1.height()),
        });
    }
    let mut flow = FlowField::zeros(field.width, field.height);
    let mut valid = Grid::new(field.width, field.height, false);
    for y in 0..field.height {
        for x in 0..field.width {
            let d = inv_depth1.at(x, y);
            if d <= 0.0 {
                continue;
            }
            let t = field.at(x, y);
            // The identity transform maps every pixel to itself; short-circuit
            // so static estimates carry no projection rounding noise.
            if *t == SE3Transform::IDENTITY {
                if 1.0 / d >= camera::MIN_DEPTH {
                    valid.set(x, y, true);
                }
                continue;
            }
            let p = camera::backproject(cam, camera::MapPoint::new(x as f64, y as f64, d))?;
            let q = t.apply(p);
            match camera::project(cam, q) {
                Ok(m) => {
                    flow.set(x, y, m.x - x as f64, m.y - y as f64, m.d - d);
                    valid.set(x, y, true);
                }
                Err(Error::ProjectionDomain { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok((flow, valid))
}

/// Inverse-depth residual: the inverse depth implied by the transform field
/// minus the second-frame inverse depth sampled at the warped position.
///
/// Invalid first-frame pixels, failed projections, and out-of-frame or
/// invalid second-frame samples are masked out with zero residual.
pub fn inverse_depth_residual(
    field: &SE3Field,
    inv_depth1: &Grid<f64>,
    inv_depth2: &Grid<f64>,
    cam: &PinholeCamera,
) -> Result<(Grid<f64>, Grid<bool>)> {
    if field.width != inv_depth1.width() || field.height != inv_depth1.height() {
        return Err(Error::ShapeMismatch {
            expected: (field.width, field.height),
            got: (inv_depth1.width(), inv_depth1.height()),
        });
    }
    if !inv_depth1.same_shape(inv_depth2) {
        return Err(Error::ShapeMismatch {
            expected: (inv_depth1.width(), inv_depth1.height()),
            got: (inv_depth2.width(), inv_depth2.height()),
        });
    }
    let mut residual = Grid::new(field.width, field.height, 0.0);
    let mut valid = Grid::new(field.width, field.height, false);
    for y in 0..field.height {
        for x in 0..field.width {
            let d = inv_depth1.at(x, y);
            if d <= 0.0 {
                continue;
            }
            let t = field.at(x, y);
            let m = if *t == SE3Transform::IDENTITY {
                if 1.0 / d < camera::MIN_DEPTH {
                    continue;
                }
                camera::MapPoint::new(x as f64, y as f64, d)
            } else {
                let p = camera::backproject(cam, camera::MapPoint::new(x as f64, y as f64, d))?;
                match camera::project(cam, t.apply(p)) {
                    Ok(m) => m,
                    Err(Error::ProjectionDomain { .. }) => continue,
                    Err(e) => return Err(e),
                }
            };
            if let Some(d2) = inv_depth2.sample_if_positive(m.x, m.y) {
                residual.set(x, y, m.d - d2);
                valid.set(x, y, true);
            }
        }
    }
    Ok((residual, valid))
}
