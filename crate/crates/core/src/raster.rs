//! Dense per-pixel storage.
//!
//! [`Grid`] holds one value per pixel; [`ChannelGrid`] holds a fixed-length
//! `f64` vector per pixel in pixel-major order (index `(y * width + x) *
//! channels + c`), which keeps per-pixel slices contiguous for the inner
//! loops of convolution and correlation.
//!
//! Downsampling by an integer factor `f` averages `f x f` blocks, placing
//! coarse pixel centers per the pixel-center convention `(x + 0.5)/f - 0.5`
//! (matching [`crate::camera::PinholeCamera::downscaled`]). Upsampling reads
//! source coordinates as plain `x / f`, the same scaling the correlation
//! lookup applies to flow targets across pyramid levels.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[allow(unused_imports)]
use num_traits::Float;

/// A dense raster with one value per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        Grid { width, height, data: vec![fill; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidArgument { what: "grid data length must be width * height" });
        }
        Ok(Grid { width, height, data })
    }
}

impl<T> Grid<T> {
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Grid { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> &T {
        debug_assert!(x < self.width && y < self.height);
        &self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: T) {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }
}

impl<T: Copy> Grid<T> {
    pub fn at(&self, x: usize, y: usize) -> T {
        *self.get(x, y)
    }

    /// Downsamples by picking the sample nearest each coarse pixel center.
    /// Suited to piecewise-constant rasters such as labels.
    pub fn downsample_center(&self, factor: usize) -> Grid<T> {
        assert!(factor >= 1 && self.width % factor == 0 && self.height % factor == 0);
        Grid::from_fn(self.width / factor, self.height / factor, |x, y| {
            self.at(x * factor + factor / 2, y * factor + factor / 2)
        })
    }
}

impl Grid<f64> {
    /// Bilinear sample; out-of-range corner contributions are zero.
    pub fn sample_zero_fill(&self, x: f64, y: f64) -> f64 {
        let (x0, y0, fx, fy) = bilinear_parts(x, y);
        let mut acc = 0.0;
        for (dy, wy) in [(0i64, 1.0 - fy), (1, fy)] {
            for (dx, wx) in [(0i64, 1.0 - fx), (1, fx)] {
                let (cx, cy) = (x0 + dx, y0 + dy);
                if cx >= 0 && cy >= 0 && (cx as usize) < self.width && (cy as usize) < self.height {
                    acc += wy * wx * self.at(cx as usize, cy as usize);
                }
            }
        }
        acc
    }

    /// Bilinear sample that is valid only when every contributing corner is
    /// in range and strictly positive. Exact-integer coordinates collapse to
    /// the corners they land on, so positions up to and including the last
    /// pixel remain sampleable. Used for inverse-depth rasters, where
    /// nonpositive entries mark invalid pixels.
    pub fn sample_if_positive(&self, x: f64, y: f64) -> Option<f64> {
        let (x0, y0, fx, fy) = bilinear_parts(x, y);
        if x0 < 0 || y0 < 0 {
            return None;
        }
        let (x0, y0) = (x0 as usize, y0 as usize);
        let x1 = if fx == 0.0 { x0 } else { x0 + 1 };
        let y1 = if fy == 0.0 { y0 } else { y0 + 1 };
        if x1 >= self.width || y1 >= self.height {
            return None;
        }
        let mut acc = 0.0;
        for (cy, wy) in [(y0, 1.0 - fy), (y1, fy)] {
            for (cx, wx) in [(x0, 1.0 - fx), (x1, fx)] {
                let v = self.at(cx, cy);
                if v <= 0.0 {
                    return None;
                }
                acc += wy * wx * v;
            }
        }
        Some(acc)
    }

    /// Downsamples by averaging each `factor x factor` block.
    pub fn downsample_block_mean(&self, factor: usize) -> Grid<f64> {
        assert!(factor >= 1 && self.width % factor == 0 && self.height % factor == 0);
        let norm = 1.0 / (factor * factor) as f64;
        Grid::from_fn(self.width / factor, self.height / factor, |x, y| {
            let mut acc = 0.0;
            for by in 0..factor {
                for bx in 0..factor {
                    acc += self.at(x * factor + bx, y * factor + by);
                }
            }
            acc * norm
        })
    }

    /// Downsamples by averaging the strictly positive entries of each block;
    /// blocks with no positive entry yield `0.0`. Used for inverse depth,
    /// where nonpositive entries mark invalid pixels.
    pub fn downsample_positive_mean(&self, factor: usize) -> Grid<f64> {
        assert!(factor >= 1 && self.width % factor == 0 && self.height % factor == 0);
        Grid::from_fn(self.width / factor, self.height / factor, |x, y| {
            let mut acc = 0.0;
            let mut n = 0usize;
            for by in 0..factor {
                for bx in 0..factor {
                    let v = self.at(x * factor + bx, y * factor + by);
                    if v > 0.0 {
                        acc += v;
                        n += 1;
                    }
                }
            }
            if n == 0 {
                0.0
            } else {
                acc / n as f64
            }
        })
    }
}

/// Splits a sampling position into its floor cell and fractional weights.
pub fn bilinear_parts(x: f64, y: f64) -> (i64, i64, f64, f64) {
    let xf = x.floor();
    let yf = y.floor();
    (xf as i64, yf as i64, x - xf, y - yf)
}

/// A dense raster with a fixed-length `f64` vector per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelGrid {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ChannelGrid {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        ChannelGrid { width, height, channels, data: vec![0.0; width * height * channels] }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::InvalidArgument {
                what: "channel grid data length must be width * height * channels",
            });
        }
        Ok(ChannelGrid { width, height, channels, data })
    }

    /// A single-channel copy of a scalar grid.
    pub fn from_single(grid: &Grid<f64>) -> ChannelGrid {
        ChannelGrid {
            width: grid.width(),
            height: grid.height(),
            channels: 1,
            data: grid.data().to_vec(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        debug_assert!(x < self.width && y < self.height);
        let base = (y * self.width + x) * self.channels;
        &self.data[base..base + self.channels]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        debug_assert!(x < self.width && y < self.height);
        let base = (y * self.width + x) * self.channels;
        &mut self.data[base..base + self.channels]
    }

    pub fn value(&self, x: usize, y: usize, c: usize) -> f64 {
        debug_assert!(c < self.channels);
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn set_value(&mut self, x: usize, y: usize, c: usize, v: f64) {
        debug_assert!(c < self.channels);
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &ChannelGrid) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Copies channel `c` into `out`, one value per pixel in row-major order.
    pub fn copy_channel(&self, c: usize, out: &mut [f64]) {
        assert!(c < self.channels && out.len() == self.width * self.height);
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.data[i * self.channels + c];
        }
    }

    /// Writes `values` (one per pixel, row-major) into channel `c`.
    pub fn set_channel(&mut self, c: usize, values: &[f64]) {
        assert!(c < self.channels && values.len() == self.width * self.height);
        for (i, v) in values.iter().enumerate() {
            self.data[i * self.channels + c] = *v;
        }
    }

    /// Bilinear sample with coordinates clamped to the border.
    pub fn sample_clamped(&self, x: f64, y: f64, out: &mut [f64]) {
        debug_assert!(out.len() == self.channels);
        let (x0, y0, fx, fy) = bilinear_parts(x, y);
        let clamp = |v: i64, hi: usize| -> usize { v.clamp(0, hi as i64 - 1) as usize };
        out.fill(0.0);
        for (dy, wy) in [(0i64, 1.0 - fy), (1, fy)] {
            for (dx, wx) in [(0i64, 1.0 - fx), (1, fx)] {
                let px = self.pixel(clamp(x0 + dx, self.width), clamp(y0 + dy, self.height));
                let w = wy * wx;
                for (o, v) in out.iter_mut().zip(px) {
                    *o += w * v;
                }
            }
        }
    }

    /// Downsamples by averaging each `factor x factor` block per channel.
    pub fn downsample_block_mean(&self, factor: usize) -> ChannelGrid {
        assert!(factor >= 1 && self.width % factor == 0 && self.height % factor == 0);
        let (w, h) = (self.width / factor, self.height / factor);
        let mut out = ChannelGrid::new(w, h, self.channels);
        let norm = 1.0 / (factor * factor) as f64;
        for y in 0..h {
            for x in 0..w {
                let acc = out.pixel_mut(x, y);
                for by in 0..factor {
                    for bx in 0..factor {
                        let px = self.pixel(x * factor + bx, y * factor + by);
                        for (a, v) in acc.iter_mut().zip(px) {
                            *a += v;
                        }
                    }
                }
                for a in acc.iter_mut() {
                    *a *= norm;
                }
            }
        }
        out
    }

    /// Upsamples by an integer factor with bilinear interpolation, reading
    /// source coordinates as `x / factor`; border samples clamp to the edge.
    pub fn upsample_bilinear(&self, factor: usize) -> ChannelGrid {
        assert!(factor >= 1);
        if factor == 1 {
            return self.clone();
        }
        let (w, h) = (self.width * factor, self.height * factor);
        let mut out = ChannelGrid::new(w, h, self.channels);
        let inv = 1.0 / factor as f64;
        for y in 0..h {
            let sy = y as f64 * inv;
            for x in 0..w {
                let sx = x as f64 * inv;
                let mut buf = [0.0; 8];
                if self.channels <= 8 {
                    self.sample_clamped(sx, sy, &mut buf[..self.channels]);
                    out.pixel_mut(x, y).copy_from_slice(&buf[..self.channels]);
                } else {
                    let mut v = alloc::vec![0.0; self.channels];
                    self.sample_clamped(sx, sy, &mut v);
                    out.pixel_mut(x, y).copy_from_slice(&v);
                }
            }
        }
        out
    }
}

/// An RGB-D frame: three color channels in `[0, 1]` plus inverse depth,
/// where nonpositive inverse-depth entries mark invalid pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbdFrame {
    pub color: ChannelGrid,
    pub inverse_depth: Grid<f64>,
}

impl RgbdFrame {
    pub fn new(color: ChannelGrid, inverse_depth: Grid<f64>) -> Result<Self> {
        if color.channels() != 3 {
            return Err(Error::InvalidArgument { what: "rgbd color must have 3 channels" });
        }
        if color.width() != inverse_depth.width() || color.height() != inverse_depth.height() {
            return Err(Error::ShapeMismatch {
                expected: (color.width(), color.height()),
                got: (inverse_depth.width(), inverse_depth.height()),
            });
        }
        Ok(RgbdFrame { color, inverse_depth })
    }

    pub fn width(&self) -> usize {
        self.color.width()
    }

    pub fn height(&self) -> usize {
        self.color.height()
    }

    /// Downsamples color by block mean and inverse depth by positive mean.
    pub fn downsample(&self, factor: usize) -> RgbdFrame {
        RgbdFrame {
            color: self.color.downsample_block_mean(factor),
            inverse_depth: self.inverse_depth.downsample_positive_mean(factor),
        }
    }
}

/// Concatenates the channels of several same-shaped grids.
pub fn concat_channels(parts: &[&ChannelGrid]) -> Result<ChannelGrid> {
    let first = parts.first().ok_or(Error::InvalidArgument { what: "empty concatenation" })?;
    let (w, h) = (first.width, first.height);
    let mut channels = 0;
    for p in parts {
        if p.width != w || p.height != h {
            return Err(Error::ShapeMismatch { expected: (w, h), got: (p.width, p.height) });
        }
        channels += p.channels;
    }
    let mut out = ChannelGrid::new(w, h, channels);
    for y in 0..h {
        for x in 0..w {
            let dst = out.pixel_mut(x, y);
            let mut off = 0;
            for p in parts {
                dst[off..off + p.channels].copy_from_slice(p.pixel(x, y));
                off += p.channels;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_grid_layout_is_pixel_major() {
        let mut g = ChannelGrid::new(2, 2, 3);
        for y in 0..2 {
            for x in 0..2 {
                for c in 0..3 {
                    g.set_value(x, y, c, (y * 100 + x * 10 + c) as f64);
                }
            }
        }
        assert_eq!(
            g.data(),
            &[0.0, 1.0, 2.0, 10.0, 11.0, 12.0, 100.0, 101.0, 102.0, 110.0, 111.0, 112.0]
        );
    }

    #[test]
    fn bilinear_at_integer_coordinates_is_exact() {
        let g = Grid::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(g.sample_zero_fill(0.0, 0.0), 1.0);
        assert_eq!(g.sample_zero_fill(1.0, 1.0), 4.0);
        assert_eq!(g.sample_zero_fill(0.5, 0.0), 1.5);
        assert_eq!(g.sample_zero_fill(0.5, 0.5), 2.5);
    }

    #[test]
    fn bilinear_outside_is_zero_filled() {
        let g = Grid::new(2, 2, 5.0);
        assert_eq!(g.sample_zero_fill(-2.0, 0.0), 0.0);
        // Halfway over the left edge: two in-range corners with weight 1/2.
        assert_eq!(g.sample_zero_fill(-0.5, 0.0), 2.5);
    }

    #[test]
    fn sample_if_positive_requires_all_corners() {
        let g = Grid::from_vec(2, 2, vec![1.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(g.sample_if_positive(0.5, 0.5), None, "corner (1,1) is invalid");
        assert_eq!(g.sample_if_positive(0.0, 0.0), Some(1.0), "integer reads skip far corners");
        let g = Grid::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(g.sample_if_positive(0.5, 0.5), Some(2.5));
        assert_eq!(g.sample_if_positive(1.0, 1.0), Some(4.0), "exact corner read");
        assert_eq!(g.sample_if_positive(1.0 + 1e-9, 1.0), None, "past the last pixel");
    }

    #[test]
    fn block_mean_and_positive_mean() {
        let g = Grid::from_vec(2, 2, vec![1.0, 3.0, 0.0, 4.0]).unwrap();
        assert_eq!(g.downsample_block_mean(2).at(0, 0), 2.0);
        assert_eq!(g.downsample_positive_mean(2).at(0, 0), (1.0 + 3.0 + 4.0) / 3.0);
        let all_invalid = Grid::new(2, 2, -1.0);
        assert_eq!(all_invalid.downsample_positive_mean(2).at(0, 0), 0.0);
    }

    #[test]
    fn center_downsample_picks_block_center() {
        let g = Grid::from_fn(4, 4, |x, y| (y * 4 + x) as u32);
        let d = g.downsample_center(2);
        assert_eq!(d.at(0, 0), 5);
        assert_eq!(d.at(1, 1), 15);
    }

    #[test]
    fn upsample_bilinear_preserves_constants_and_blends_neighbors() {
        let c = ChannelGrid::from_vec(2, 1, 1, vec![2.0, 6.0]).unwrap();
        let up = c.upsample_bilinear(2);
        // Fine x samples source x/2: 0, 0.5, 1, 1.5 (clamped).
        assert_eq!(up.value(0, 0, 0), 2.0);
        assert_eq!(up.value(1, 0, 0), 4.0);
        assert_eq!(up.value(2, 0, 0), 6.0);
        assert_eq!(up.value(3, 0, 0), 6.0);
        let flat = ChannelGrid::from_vec(2, 2, 1, vec![7.0; 4]).unwrap();
        assert!(flat.upsample_bilinear(4).data().iter().all(|v| *v == 7.0));
    }

    #[test]
    fn concat_stacks_channels_per_pixel() {
        let a = ChannelGrid::from_vec(1, 2, 1, vec![1.0, 2.0]).unwrap();
        let b = ChannelGrid::from_vec(1, 2, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let c = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.channels(), 3);
        assert_eq!(c.pixel(0, 0), &[1.0, 3.0, 4.0]);
        assert_eq!(c.pixel(0, 1), &[2.0, 5.0, 6.0]);
    }

    #[test]
    fn concat_rejects_shape_mismatch() {
        let a = ChannelGrid::new(2, 2, 1);
        let b = ChannelGrid::new(3, 2, 1);
        assert!(concat_channels(&[&a, &b]).is_err());
    }
}
