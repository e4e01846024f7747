//! All-pairs feature correlation with a two-level pooled pyramid.
//!
//! Level 0 holds the similarity `<f1_i, f2_j> / sqrt(D)` for every pixel
//! pair; level 1 is a 2x2 average-pool over the target dimensions. The
//! materialized backend precomputes both volumes; the on-demand backend
//! stores only the feature maps and evaluates entries as they are sampled,
//! averaging the same four level-0 values in the same order, so the two
//! backends agree bit-for-bit.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::raster::{bilinear_parts, ChannelGrid};

#[allow(unused_imports)]
use num_traits::Float;

/// Default lookup window radius.
pub const DEFAULT_LOOKUP_RADIUS: usize = 4;

/// Number of pyramid levels.
pub const LEVELS: usize = 2;

/// Per-pixel feature vectors, as produced by a feature provider.
pub type FeatureMap = ChannelGrid;

/// Storage strategy for the cost volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrelationMode {
    /// Precompute the full pyramid; fastest lookups, quadratic memory.
    Materialized,
    /// Keep only the feature maps and evaluate costs at lookup time.
    OnDemand,
}

enum Backend {
    Materialized { levels: [Vec<f64>; LEVELS] },
    OnDemand { f1: FeatureMap, f2: FeatureMap },
}

/// A two-level correlation pyramid over a source/target feature-map pair.
pub struct CorrelationPyramid {
    source_width: usize,
    source_height: usize,
    /// Target-side dimensions per level, as (width, height).
    level_dims: [(usize, usize); LEVELS],
    inv_sqrt_d: f64,
    backend: Backend,
}

fn dot_scaled(a: &[f64], b: &[f64], scale: f64) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc * scale
}

/// Builds the correlation pyramid for a feature-map pair.
pub fn build_pyramid(
    f1: &FeatureMap,
    f2: &FeatureMap,
    mode: CorrelationMode,
) -> Result<CorrelationPyramid> {
    if f1.channels() != f2.channels() {
        return Err(Error::InvalidArgument { what: "feature maps must share a channel count" });
    }
    if !f1.data().iter().all(|v| v.is_finite()) || !f2.data().iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { what: "feature maps" });
    }
    let inv_sqrt_d = 1.0 / (f1.channels() as f64).sqrt();
    let (w1, h1) = (f1.width(), f1.height());
    let (w2, h2) = (f2.width(), f2.height());
    let level_dims = [(w2, h2), (w2 / 2, h2 / 2)];
    let backend = match mode {
        CorrelationMode::OnDemand => Backend::OnDemand { f1: f1.clone(), f2: f2.clone() },
        CorrelationMode::Materialized => {
            let mut level0 = Vec::with_capacity(w1 * h1 * w2 * h2);
            for y1 in 0..h1 {
                for x1 in 0..w1 {
                    let a = f1.pixel(x1, y1);
                    for y2 in 0..h2 {
                        for x2 in 0..w2 {
                            level0.push(dot_scaled(a, f2.pixel(x2, y2), inv_sqrt_d));
                        }
                    }
                }
            }
            let (pw, ph) = level_dims[1];
            let mut level1 = Vec::with_capacity(w1 * h1 * pw * ph);
            for i in 0..w1 * h1 {
                let base = i * w2 * h2;
                for y in 0..ph {
                    for x in 0..pw {
                        let r0 = base + (2 * y) * w2 + 2 * x;
                        let r1 = base + (2 * y + 1) * w2 + 2 * x;
                        level1.push(
                            (level0[r0] + level0[r0 + 1] + level0[r1] + level0[r1 + 1]) * 0.25,
                        );
                    }
                }
            }
            Backend::Materialized { levels: [level0, level1] }
        }
    };
    Ok(CorrelationPyramid {
        source_width: w1,
        source_height: h1,
        level_dims,
        inv_sqrt_d,
        backend,
    })
}

impl CorrelationPyramid {
    pub fn source_width(&self) -> usize {
        self.source_width
    }

    pub fn source_height(&self) -> usize {
        self.source_height
    }

    /// Target-side dimensions of a level, as (width, height).
    pub fn level_dims(&self, level: usize) -> (usize, usize) {
        self.level_dims[level]
    }

    /// Cost entry for source pixel `(x1, y1)` and integer target coordinates
    /// `(x2, y2)` at a level. Out-of-range target coordinates yield 0.
    pub fn cost_at(&self, level: usize, x1: usize, y1: usize, x2: i64, y2: i64) -> f64 {
        debug_assert!(level < LEVELS);
        let (lw, lh) = self.level_dims[level];
        if x2 < 0 || y2 < 0 || x2 as usize >= lw || y2 as usize >= lh {
            return 0.0;
        }
        let (x2, y2) = (x2 as usize, y2 as usize);
        match &self.backend {
            Backend::Materialized { levels } => {
                levels[level][(y1 * self.source_width + x1) * lw * lh + y2 * lw + x2]
            }
            Backend::OnDemand { f1, f2 } => {
                let a = f1.pixel(x1, y1);
                if level == 0 {
                    dot_scaled(a, f2.pixel(x2, y2), self.inv_sqrt_d)
                } else {
                    let v00 = dot_scaled(a, f2.pixel(2 * x2, 2 * y2), self.inv_sqrt_d);
                    let v01 = dot_scaled(a, f2.pixel(2 * x2 + 1, 2 * y2), self.inv_sqrt_d);
                    let v10 = dot_scaled(a, f2.pixel(2 * x2, 2 * y2 + 1), self.inv_sqrt_d);
                    let v11 = dot_scaled(a, f2.pixel(2 * x2 + 1, 2 * y2 + 1), self.inv_sqrt_d);
                    (v00 + v01 + v10 + v11) * 0.25
                }
            }
        }
    }

    /// Bilinear sample of a level's cost slice for a source pixel.
    /// Out-of-range corners contribute 0.
    fn sample(&self, level: usize, x1: usize, y1: usize, x: f64, y: f64) -> f64 {
        let (x0, y0, fx, fy) = bilinear_parts(x, y);
        let mut acc = 0.0;
        for (dy, wy) in [(0i64, 1.0 - fy), (1, fy)] {
            for (dx, wx) in [(0i64, 1.0 - fx), (1, fx)] {
                let w = wy * wx;
                if w != 0.0 {
                    acc += w * self.cost_at(level, x1, y1, x0 + dx, y0 + dy);
                }
            }
        }
        acc
    }
}

/// Samples cost windows around per-pixel target positions.
///
/// For each source pixel, each pyramid level `l` is sampled at
/// `coords / 2^l` offset by every integer displacement in the
/// `(2r+1) x (2r+1)` window. Output channels are ordered level-major, then
/// by dy, then dx: channel `l * (2r+1)^2 + (dy + r) * (2r+1) + (dx + r)`.
pub fn lookup(pyr: &CorrelationPyramid, coords: &ChannelGrid, radius: usize) -> Result<ChannelGrid> {
    if coords.channels() != 2 {
        return Err(Error::InvalidArgument { what: "lookup coords must have 2 channels" });
    }
    if coords.width() != pyr.source_width || coords.height() != pyr.source_height {
        return Err(Error::ShapeMismatch {
            expected: (pyr.source_width, pyr.source_height),
            got: (coords.width(), coords.height()),
        });
    }
    if radius < 1 {
        return Err(Error::InvalidArgument { what: "lookup radius must be at least 1" });
    }
    let side = 2 * radius + 1;
    let window = side * side;
    let mut out = ChannelGrid::new(pyr.source_width, pyr.source_height, LEVELS * window);
    for y1 in 0..pyr.source_height {
        for x1 in 0..pyr.source_width {
            let c = coords.pixel(x1, y1);
            let px = out.pixel_mut(x1, y1);
            for level in 0..LEVELS {
                let scale = 1.0 / (1u32 << level) as f64;
                let (cx, cy) = (c[0] * scale, c[1] * scale);
                let base = level * window;
                for dy in 0..side {
                    let sy = cy + dy as f64 - radius as f64;
                    for dx in 0..side {
                        let sx = cx + dx as f64 - radius as f64;
                        px[base + dy * side + dx] = pyr.sample(level, x1, y1, sx, sy);
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_features(w: usize, h: usize, d: usize, seed: u64) -> FeatureMap {
        let mut f = ChannelGrid::new(w, h, d);
        let mut s = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(7);
        for v in f.data_mut() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *v = (s >> 11) as f64 / (1u64 << 52) as f64 - 1.0;
        }
        f
    }

    #[test]
    fn orthonormal_features_give_scaled_identity() {
        // 2x2 image, D = 4, each pixel a distinct basis vector.
        let mut f = ChannelGrid::new(2, 2, 4);
        for i in 0..4 {
            f.data_mut()[i * 4 + i] = 1.0;
        }
        let pyr = build_pyramid(&f, &f, CorrelationMode::Materialized).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 0.5 } else { 0.0 };
                let (x1, y1) = (i % 2, i / 2);
                let (x2, y2) = ((j % 2) as i64, (j / 2) as i64);
                assert_eq!(pyr.cost_at(0, x1, y1, x2, y2), expected);
            }
        }
    }

    #[test]
    fn single_channel_example_volume() {
        let f1 = ChannelGrid::from_vec(2, 2, 1, alloc::vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let f2 = ChannelGrid::from_vec(2, 2, 1, alloc::vec![1.0; 4]).unwrap();
        let pyr = build_pyramid(&f1, &f2, CorrelationMode::Materialized).unwrap();
        for (i, expect) in [1.0, 2.0, 3.0, 4.0].iter().enumerate() {
            let (x1, y1) = (i % 2, i / 2);
            for j in 0..4i64 {
                assert_eq!(pyr.cost_at(0, x1, y1, j % 2, j / 2), *expect);
            }
            // Level 1 pools the constant row to the same value.
            assert_eq!(pyr.cost_at(1, x1, y1, 0, 0), *expect);
        }
    }

    #[test]
    fn modes_agree_bit_for_bit() {
        let f1 = lcg_features(8, 8, 8, 1);
        let f2 = lcg_features(8, 8, 8, 2);
        let mat = build_pyramid(&f1, &f2, CorrelationMode::Materialized).unwrap();
        let ond = build_pyramid(&f1, &f2, CorrelationMode::OnDemand).unwrap();
        for level in 0..LEVELS {
            let (lw, lh) = mat.level_dims(level);
            for y1 in 0..8 {
                for x1 in 0..8 {
                    for y2 in 0..lh as i64 {
                        for x2 in 0..lw as i64 {
                            let a = mat.cost_at(level, x1, y1, x2, y2);
                            let b = ond.cost_at(level, x1, y1, x2, y2);
                            assert!(
                                a == b,
                                "level {level} ({x1},{y1})->({x2},{y2}): {a} != {b}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn level1_is_average_pool_of_level0() {
        let f1 = lcg_features(4, 4, 3, 5);
        let f2 = lcg_features(6, 6, 3, 6);
        let pyr = build_pyramid(&f1, &f2, CorrelationMode::Materialized).unwrap();
        for y1 in 0..4 {
            for x1 in 0..4 {
                for y in 0..3i64 {
                    for x in 0..3i64 {
                        let pooled = 0.25
                            * (pyr.cost_at(0, x1, y1, 2 * x, 2 * y)
                                + pyr.cost_at(0, x1, y1, 2 * x + 1, 2 * y)
                                + pyr.cost_at(0, x1, y1, 2 * x, 2 * y + 1)
                                + pyr.cost_at(0, x1, y1, 2 * x + 1, 2 * y + 1));
                        assert!((pyr.cost_at(1, x1, y1, x, y) - pooled).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn level0_is_symmetric_under_argument_swap() {
        let f = lcg_features(5, 4, 6, 9);
        let g = lcg_features(3, 6, 6, 10);
        let fg = build_pyramid(&f, &g, CorrelationMode::Materialized).unwrap();
        let gf = build_pyramid(&g, &f, CorrelationMode::Materialized).unwrap();
        for y1 in 0..4 {
            for x1 in 0..5 {
                for y2 in 0..6i64 {
                    for x2 in 0..3i64 {
                        assert_eq!(
                            fg.cost_at(0, x1, y1, x2, y2),
                            gf.cost_at(0, x2 as usize, y2 as usize, x1 as i64, y1 as i64)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn center_tap_of_identity_lookup_is_feature_norm() {
        let f = lcg_features(6, 6, 4, 20);
        let pyr = build_pyramid(&f, &f, CorrelationMode::OnDemand).unwrap();
        let mut coords = ChannelGrid::new(6, 6, 2);
        for y in 0..6 {
            for x in 0..6 {
                coords.pixel_mut(x, y).copy_from_slice(&[x as f64, y as f64]);
            }
        }
        let r = 2;
        let looked = lookup(&pyr, &coords, r).unwrap();
        let side = 2 * r + 1;
        let center = r * side + r;
        for y in 0..6 {
            for x in 0..6 {
                let expect = f.pixel(x, y).iter().map(|v| v * v).sum::<f64>() / 2.0;
                assert!((looked.value(x, y, center) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn far_outside_coords_give_all_zero_windows() {
        let f = lcg_features(4, 4, 2, 30);
        let pyr = build_pyramid(&f, &f, CorrelationMode::Materialized).unwrap();
        let mut coords = ChannelGrid::new(4, 4, 2);
        for px in coords.data_mut().chunks_mut(2) {
            px.copy_from_slice(&[1000.0, -1000.0]);
        }
        let looked = lookup(&pyr, &coords, 4).unwrap();
        assert!(looked.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn lookup_agrees_across_modes() {
        let f1 = lcg_features(7, 5, 5, 40);
        let f2 = lcg_features(7, 5, 5, 41);
        let mat = build_pyramid(&f1, &f2, CorrelationMode::Materialized).unwrap();
        let ond = build_pyramid(&f1, &f2, CorrelationMode::OnDemand).unwrap();
        let mut coords = ChannelGrid::new(7, 5, 2);
        let mut s = 123u64;
        for px in coords.data_mut().chunks_mut(2) {
            for v in px.iter_mut() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                // Fractional positions spanning the border and beyond.
                *v = (s >> 11) as f64 / (1u64 << 53) as f64 * 12.0 - 3.0;
            }
        }
        let a = lookup(&mat, &coords, 3).unwrap();
        let b = lookup(&ond, &coords, 3).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn build_rejects_channel_mismatch() {
        let f1 = ChannelGrid::new(2, 2, 3);
        let f2 = ChannelGrid::new(2, 2, 4);
        assert!(build_pyramid(&f1, &f2, CorrelationMode::OnDemand).is_err());
    }
}
