//! Convolutional building blocks for the recurrent update operator.
//!
//! Forward-only: 3x3 zero-padded convolutions with seeded or externally
//! loaded weights, the usual gate activations, and a x2 pixel shuffle.
//! There is no training machinery.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::raster::ChannelGrid;

#[allow(unused_imports)]
use num_traits::Float;

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (1.0 + (-x.abs()).exp()).ln()
}

pub fn relu_in_place(grid: &mut ChannelGrid) {
    for v in grid.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

pub fn tanh_in_place(grid: &mut ChannelGrid) {
    for v in grid.data_mut() {
        *v = v.tanh();
    }
}

pub fn sigmoid_in_place(grid: &mut ChannelGrid) {
    for v in grid.data_mut() {
        *v = sigmoid(*v);
    }
}

pub fn softplus_in_place(grid: &mut ChannelGrid) {
    for v in grid.data_mut() {
        *v = softplus(*v);
    }
}

/// A named 3x3 convolution with zero padding and per-channel bias.
///
/// Kernel taps are stored in `[out][tap][in]` order with `tap = (ky + 1) * 3
/// + (kx + 1)`, keeping the innermost loop contiguous over input channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    name: &'static str,
    in_channels: usize,
    out_channels: usize,
    kernel: Vec<f64>,
    bias: Vec<f64>,
}

impl ConvLayer {
    /// Draws kernel taps uniformly from `[-a, a]` with `a = (9 * in)^{-1/2}`
    /// and zero bias, consuming the generator in a fixed order.
    pub fn seeded(
        name: &'static str,
        in_channels: usize,
        out_channels: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let a = (1.0 / (9.0 * in_channels as f64)).sqrt();
        let kernel = (0..out_channels * 9 * in_channels)
            .map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * a)
            .collect();
        ConvLayer { name, in_channels, out_channels, kernel, bias: vec![0.0; out_channels] }
    }

    pub fn from_parts(
        name: &'static str,
        in_channels: usize,
        out_channels: usize,
        kernel: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if kernel.len() != out_channels * 9 * in_channels || bias.len() != out_channels {
            return Err(Error::InvalidArgument { what: "convolution weight lengths" });
        }
        if !kernel.iter().chain(&bias).all(|v| v.is_finite()) {
            return Err(Error::NonFinite { what: "convolution weights" });
        }
        Ok(ConvLayer { name, in_channels, out_channels, kernel, bias })
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn apply(&self, input: &ChannelGrid) -> Result<ChannelGrid> {
        if input.channels() != self.in_channels {
            return Err(Error::InvalidArgument { what: "convolution input channel count" });
        }
        let (w, h) = (input.width(), input.height());
        let mut out = ChannelGrid::new(w, h, self.out_channels);
        for y in 0..h {
            for x in 0..w {
                let dst = out.pixel_mut(x, y);
                dst.copy_from_slice(&self.bias);
                for ky in -1i64..=1 {
                    let sy = y as i64 + ky;
                    if sy < 0 || sy >= h as i64 {
                        continue;
                    }
                    for kx in -1i64..=1 {
                        let sx = x as i64 + kx;
                        if sx < 0 || sx >= w as i64 {
                            continue;
                        }
                        let src = input.pixel(sx as usize, sy as usize);
                        let tap = ((ky + 1) * 3 + (kx + 1)) as usize;
                        for (oc, slot) in dst.iter_mut().enumerate() {
                            let base = (oc * 9 + tap) * self.in_channels;
                            let taps = &self.kernel[base..base + self.in_channels];
                            let mut acc = 0.0;
                            for (k, v) in taps.iter().zip(src) {
                                acc += k * v;
                            }
                            *slot += acc;
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Rearranges channel `(dy * 2 + dx) * c + k` of each pixel into channel `k`
/// of fine pixel `(2x + dx, 2y + dy)`, doubling both dimensions.
pub fn pixel_shuffle2(input: &ChannelGrid) -> Result<ChannelGrid> {
    if input.channels() % 4 != 0 {
        return Err(Error::InvalidArgument { what: "pixel shuffle needs a multiple of 4 channels" });
    }
    let c = input.channels() / 4;
    let mut out = ChannelGrid::new(input.width() * 2, input.height() * 2, c);
    for y in 0..input.height() {
        for x in 0..input.width() {
            let px = input.pixel(x, y);
            for dy in 0..2 {
                for dx in 0..2 {
                    let base = (dy * 2 + dx) * c;
                    out.pixel_mut(2 * x + dx, 2 * y + dy)
                        .copy_from_slice(&px[base..base + c]);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn activations_are_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-45.0) > 0.0 && sigmoid(-45.0) < 3e-20);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!((softplus(0.0) - core::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(softplus(-800.0), 0.0);
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-3.0) > 0.0);
    }

    #[test]
    fn center_tap_identity_kernel_preserves_input() {
        let mut kernel = vec![0.0; 9];
        kernel[4] = 1.0;
        let layer = ConvLayer::from_parts("id", 1, 1, kernel, vec![0.0]).unwrap();
        let mut input = ChannelGrid::new(4, 3, 1);
        for (i, v) in input.data_mut().iter_mut().enumerate() {
            *v = i as f64 - 5.0;
        }
        let out = layer.apply(&input).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn shifted_tap_reads_neighbor_with_zero_padding() {
        // Tap (ky, kx) = (0, -1) makes out(x) = in(x - 1).
        let mut kernel = vec![0.0; 9];
        kernel[3] = 1.0;
        let layer = ConvLayer::from_parts("shift", 1, 1, kernel, vec![0.25]).unwrap();
        let input = ChannelGrid::from_vec(3, 1, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let out = layer.apply(&input).unwrap();
        assert_eq!(out.data(), &[0.25, 1.25, 2.25]);
    }

    #[test]
    fn multi_channel_taps_mix_inputs() {
        // Two inputs, one output: center taps (2, -1), bias 0.5.
        let mut kernel = vec![0.0; 18];
        kernel[4 * 2] = 2.0;
        kernel[4 * 2 + 1] = -1.0;
        let layer = ConvLayer::from_parts("mix", 2, 1, kernel, vec![0.5]).unwrap();
        let input = ChannelGrid::from_vec(1, 1, 2, vec![3.0, 4.0]).unwrap();
        let out = layer.apply(&input).unwrap();
        assert_eq!(out.data(), &[2.0 * 3.0 - 4.0 + 0.5]);
    }

    #[test]
    fn seeded_layers_are_reproducible() {
        let a = ConvLayer::seeded("a", 5, 4, &mut ChaCha8Rng::seed_from_u64(42));
        let b = ConvLayer::seeded("a", 5, 4, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a, b);
        let c = ConvLayer::seeded("a", 5, 4, &mut ChaCha8Rng::seed_from_u64(43));
        assert_ne!(a, c);
        let bound = (1.0 / 45.0f64).sqrt();
        assert!(a.kernel().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn from_parts_validates_lengths() {
        assert!(ConvLayer::from_parts("bad", 1, 1, vec![0.0; 8], vec![0.0]).is_err());
        assert!(ConvLayer::from_parts("bad", 1, 1, vec![0.0; 9], vec![]).is_err());
        assert!(ConvLayer::from_parts("bad", 1, 1, vec![f64::NAN; 9], vec![0.0]).is_err());
    }

    #[test]
    fn pixel_shuffle_moves_channel_blocks_to_quadrants() {
        let input = ChannelGrid::from_vec(1, 1, 8, (0..8).map(f64::from).collect()).unwrap();
        let out = pixel_shuffle2(&input).unwrap();
        assert_eq!((out.width(), out.height(), out.channels()), (2, 2, 2));
        assert_eq!(out.pixel(0, 0), &[0.0, 1.0]);
        assert_eq!(out.pixel(1, 0), &[2.0, 3.0]);
        assert_eq!(out.pixel(0, 1), &[4.0, 5.0]);
        assert_eq!(out.pixel(1, 1), &[6.0, 7.0]);
        assert!(pixel_shuffle2(&ChannelGrid::new(1, 1, 6)).is_err());
    }
}
