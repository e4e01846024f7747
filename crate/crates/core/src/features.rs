//! Deterministic per-scale feature and context providers.
//!
//! The estimation driver is agnostic to where feature maps come from; these
//! traits describe the two inputs it needs per scale. [`HandcraftedEncoder`]
//! supplies both from fixed image statistics plus a seeded linear projection,
//! so the full loop runs deterministically without any learned weights.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::raster::{ChannelGrid, Grid, RgbdFrame};

/// Channel count of the hand-crafted feature maps.
pub const FEATURE_CHANNELS: usize = 16;

/// Weight applied to the census signature channels so their dot-product
/// contribution stays comparable to the unit-range color channels.
const CENSUS_SCALE: f64 = 0.25;

/// Context maps for one scale: `con1` seeds the recurrent hidden state once
/// per scale, `con2` is fed into every update step.
#[derive(Debug, Clone)]
pub struct ContextPair {
    pub con1: ChannelGrid,
    pub con2: ChannelGrid,
}

/// Produces the per-scale feature maps that correlation volumes are built
/// from. `frame` is already downsampled to the working scale; `factor` is the
/// full-resolution-to-working-scale ratio for providers that care about it.
pub trait FeatureProvider {
    fn features(&self, frame: &RgbdFrame, factor: u32) -> Result<ChannelGrid>;
}

/// Produces the per-scale context maps consumed by the update operator.
pub trait ContextProvider {
    fn context(&self, frame: &RgbdFrame, factor: u32) -> Result<ContextPair>;
}

/// Fixed image statistics for one frame: color, gray, centered gray
/// gradients, gradient magnitude, a 4-neighbor Laplacian, and a signed 3x3
/// census signature. Borders are handled by clamping coordinates.
pub fn handcrafted_features(frame: &RgbdFrame) -> ChannelGrid {
    let (w, h) = (frame.width(), frame.height());
    let mut gray = Grid::new(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let c = frame.color.pixel(x, y);
            gray.set(x, y, (c[0] + c[1] + c[2]) / 3.0);
        }
    }
    let clamped = |x: isize, y: isize| {
        let cx = x.clamp(0, w as isize - 1) as usize;
        let cy = y.clamp(0, h as isize - 1) as usize;
        *gray.get(cx, cy)
    };
    let mut out = ChannelGrid::new(w, h, FEATURE_CHANNELS);
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            let center = *gray.get(x, y);
            let gx = (clamped(xi + 1, yi) - clamped(xi - 1, yi)) * 0.5;
            let gy = (clamped(xi, yi + 1) - clamped(xi, yi - 1)) * 0.5;
            let laplacian = clamped(xi + 1, yi)
                + clamped(xi - 1, yi)
                + clamped(xi, yi + 1)
                + clamped(xi, yi - 1)
                - 4.0 * center;
            let color = frame.color.pixel(x, y);
            let px = out.pixel_mut(x, y);
            px[..3].copy_from_slice(color);
            px[3] = center;
            px[4] = gx;
            px[5] = gy;
            px[6] = (gx * gx + gy * gy).sqrt();
            px[7] = laplacian;
            let mut k = 8;
            for dy in -1..=1_isize {
                for dx in -1..=1_isize {
                    if (dx, dy) == (0, 0) {
                        continue;
                    }
                    let diff = clamped(xi + dx, yi + dy) - center;
                    px[k] = CENSUS_SCALE * if diff > 0.0 { 1.0 } else if diff < 0.0 { -1.0 } else { 0.0 };
                    k += 1;
                }
            }
        }
    }
    out
}

/// Feature and context provider built from [`handcrafted_features`] plus two
/// seeded affine projection banks. The same weights are applied at every
/// scale, so outputs depend only on the frame content and the seed.
#[derive(Debug, Clone)]
pub struct HandcraftedEncoder {
    hidden_channels: usize,
    context_channels: usize,
    /// Row-major `(FEATURE_CHANNELS + 1) x channels` matrix; last row is bias.
    con1_projection: Vec<f64>,
    con2_projection: Vec<f64>,
}

impl HandcraftedEncoder {
    /// Draws both projection banks from a single seeded stream.
    pub fn new(seed: u64, hidden_channels: usize, context_channels: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = (1.0 / FEATURE_CHANNELS as f64).sqrt();
        let mut bank = |channels: usize| -> Vec<f64> {
            (0..(FEATURE_CHANNELS + 1) * channels)
                .map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * scale)
                .collect()
        };
        let con1_projection = bank(hidden_channels);
        let con2_projection = bank(context_channels);
        HandcraftedEncoder { hidden_channels, context_channels, con1_projection, con2_projection }
    }

    pub fn hidden_channels(&self) -> usize {
        self.hidden_channels
    }

    pub fn context_channels(&self) -> usize {
        self.context_channels
    }

    fn project(features: &ChannelGrid, weights: &[f64], channels: usize) -> ChannelGrid {
        let mut out = ChannelGrid::new(features.width(), features.height(), channels);
        for y in 0..features.height() {
            for x in 0..features.width() {
                let f = features.pixel(x, y);
                let o = out.pixel_mut(x, y);
                for (c, slot) in o.iter_mut().enumerate() {
                    let mut acc = weights[FEATURE_CHANNELS * channels + c];
                    for (k, v) in f.iter().enumerate() {
                        acc += weights[k * channels + c] * *v;
                    }
                    *slot = acc;
                }
            }
        }
        out
    }
}

impl FeatureProvider for HandcraftedEncoder {
    fn features(&self, frame: &RgbdFrame, _factor: u32) -> Result<ChannelGrid> {
        Ok(handcrafted_features(frame))
    }
}

impl ContextProvider for HandcraftedEncoder {
    fn context(&self, frame: &RgbdFrame, _factor: u32) -> Result<ContextPair> {
        let features = handcrafted_features(frame);
        let con1 = Self::project(&features, &self.con1_projection, self.hidden_channels);
        let con2 = Self::project(&features, &self.con2_projection, self.context_channels);
        Ok(ContextPair { con1, con2 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checker_frame(w: usize, h: usize) -> RgbdFrame {
        let color = ChannelGrid::from_vec(
            w,
            h,
            3,
            (0..w * h)
                .flat_map(|i| {
                    let (x, y) = (i % w, i / w);
                    let v = ((x + y) % 2) as f64;
                    [v, v * 0.5, 0.25]
                })
                .collect(),
        )
        .unwrap();
        let depth = Grid::new(w, h, 0.5);
        RgbdFrame::new(color, depth).unwrap()
    }

    #[test]
    fn feature_channels_match_their_definitions() {
        let mut color = ChannelGrid::new(3, 3, 3);
        for (i, v) in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 0.1, 0.3, 0.5].iter().enumerate() {
            let (x, y) = (i % 3, i / 3);
            color.pixel_mut(x, y).copy_from_slice(&[*v, *v, *v]);
        }
        let frame = RgbdFrame::new(color, Grid::new(3, 3, 1.0)).unwrap();
        let feats = handcrafted_features(&frame);
        assert_eq!(feats.channels(), FEATURE_CHANNELS);

        let center = feats.pixel(1, 1);
        assert!((center[3] - 0.8).abs() < 1e-12, "gray of a gray image is the value itself");
        assert!((center[4] - (1.0 - 0.6) * 0.5).abs() < 1e-12, "gx is centered");
        assert!((center[5] - (0.3 - 0.2) * 0.5).abs() < 1e-12, "gy is centered");
        let lap = 0.6 + 1.0 + 0.2 + 0.3 - 4.0 * 0.8;
        assert!((center[7] - lap).abs() < 1e-12, "4-neighbor Laplacian");
        assert_eq!(center[8], -CENSUS_SCALE, "top-left neighbor 0.0 is darker");
        assert_eq!(center[10], -CENSUS_SCALE, "top-right neighbor 0.4 is darker");
        assert_eq!(center[12], CENSUS_SCALE, "right neighbor 1.0 is brighter");

        let corner = feats.pixel(0, 0);
        assert!((corner[4] - (0.2 - 0.0) * 0.5).abs() < 1e-12, "border gx clamps");
        assert_eq!(corner[8], 0.0, "clamped census neighbor equals the center");
    }

    #[test]
    fn census_signature_ignores_brightness_offset() {
        let frame = checker_frame(6, 6);
        let mut brighter = frame.color.clone();
        for v in brighter.data_mut() {
            *v += 0.25;
        }
        let shifted = RgbdFrame::new(brighter, frame.inverse_depth.clone()).unwrap();
        let a = handcrafted_features(&frame);
        let b = handcrafted_features(&shifted);
        for y in 0..6 {
            for x in 0..6 {
                assert_eq!(a.pixel(x, y)[8..], b.pixel(x, y)[8..]);
                assert_eq!(a.pixel(x, y)[4..7], b.pixel(x, y)[4..7]);
            }
        }
    }

    #[test]
    fn encoder_is_deterministic_in_the_seed() {
        let frame = checker_frame(8, 6);
        let enc1 = HandcraftedEncoder::new(7, 12, 10);
        let enc2 = HandcraftedEncoder::new(7, 12, 10);
        let a = enc1.context(&frame, 4).unwrap();
        let b = enc2.context(&frame, 4).unwrap();
        assert_eq!(a.con1.data(), b.con1.data());
        assert_eq!(a.con2.data(), b.con2.data());

        let other = HandcraftedEncoder::new(8, 12, 10).context(&frame, 4).unwrap();
        assert_ne!(a.con1.data(), other.con1.data());
    }

    #[test]
    fn context_shapes_follow_the_configuration() {
        let frame = checker_frame(8, 6);
        let enc = HandcraftedEncoder::new(0, 5, 3);
        let pair = enc.context(&frame, 2).unwrap();
        assert_eq!((pair.con1.width(), pair.con1.height(), pair.con1.channels()), (8, 6, 5));
        assert_eq!((pair.con2.width(), pair.con2.height(), pair.con2.channels()), (8, 6, 3));
        let feats = enc.features(&frame, 2).unwrap();
        assert_eq!(feats.channels(), FEATURE_CHANNELS);
        assert!(feats.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn projection_applies_the_bias_row() {
        let features = ChannelGrid::new(2, 2, FEATURE_CHANNELS);
        let mut weights = alloc::vec![0.0; (FEATURE_CHANNELS + 1) * 2];
        weights[FEATURE_CHANNELS * 2] = 0.5;
        weights[FEATURE_CHANNELS * 2 + 1] = -1.5;
        let out = HandcraftedEncoder::project(&features, &weights, 2);
        for y in 0..2 {
            for x in 0..2 {
                assert_eq!(out.pixel(x, y), &[0.5, -1.5]);
            }
        }
    }
}
