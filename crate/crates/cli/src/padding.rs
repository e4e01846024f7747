//! Reflect padding so arbitrary inputs fit the coarse-to-fine resolution
//! ladder, plus the matching crops back to the original frame size.
//!
//! Padding mirrors about the last row and column without repeating them and
//! is applied on the right and bottom only, so pixel (x, y) of the original
//! stays at (x, y) of the padded frame.

use anyhow::{ensure, Result};
use se3flow_core::field::{FlowField, SE3Field};
use se3flow_core::raster::{ChannelGrid, Grid, RgbdFrame};

/// Smallest multiple of `multiple` that is >= `size`.
pub fn padded_size(size: usize, multiple: usize) -> usize {
    size.div_ceil(multiple) * multiple
}

/// Source index for padded index `i` on an axis of length `n`: mirror about
/// the last sample without repeating it, folding arbitrarily deep pads.
pub fn reflect_index(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * n - 2;
    let m = i % period;
    if m < n {
        m
    } else {
        period - m
    }
}

/// Pads a frame on the right and bottom so both dimensions are multiples of
/// `multiple`.
pub fn pad_frame(frame: &RgbdFrame, multiple: usize) -> Result<RgbdFrame> {
    ensure!(multiple > 0, "padding multiple must be positive");
    let width = padded_size(frame.color.width(), multiple);
    let height = padded_size(frame.color.height(), multiple);
    let color = pad_channels(&frame.color, width, height);
    let inverse_depth = pad_grid_to(&frame.inverse_depth, width, height);
    RgbdFrame::new(color, inverse_depth).map_err(|e| anyhow::anyhow!("padded frame: {e:?}"))
}

fn pad_channels(grid: &ChannelGrid, width: usize, height: usize) -> ChannelGrid {
    let mut out = ChannelGrid::new(width, height, grid.channels());
    for y in 0..height {
        let sy = reflect_index(y, grid.height());
        for x in 0..width {
            let sx = reflect_index(x, grid.width());
            out.pixel_mut(x, y).copy_from_slice(grid.pixel(sx, sy));
        }
    }
    out
}

/// Reflect-pads any scalar grid to the given size.
pub fn pad_grid_to<T: Copy>(grid: &Grid<T>, width: usize, height: usize) -> Grid<T> {
    let mut out = Grid::new(width, height, grid.at(0, 0));
    for y in 0..height {
        let sy = reflect_index(y, grid.height());
        for x in 0..width {
            out.set(x, y, grid.at(reflect_index(x, grid.width()), sy));
        }
    }
    out
}

/// Reflect-pads a transform field to the given size.
pub fn pad_field_to(field: &SE3Field, width: usize, height: usize) -> Result<SE3Field> {
    let mut out = SE3Field::identity(width, height);
    for y in 0..height {
        let sy = reflect_index(y, field.height());
        for x in 0..width {
            out.set(x, y, *field.at(reflect_index(x, field.width()), sy))
                .map_err(|e| anyhow::anyhow!("pad: {e:?}"))?;
        }
    }
    Ok(out)
}

fn check_crop(src_w: usize, src_h: usize, width: usize, height: usize) -> Result<()> {
    ensure!(
        width <= src_w && height <= src_h,
        "crop {width}x{height} exceeds source {src_w}x{src_h}"
    );
    Ok(())
}

/// Top-left crop of an interleaved raster.
pub fn crop_channels(grid: &ChannelGrid, width: usize, height: usize) -> Result<ChannelGrid> {
    check_crop(grid.width(), grid.height(), width, height)?;
    let mut out = ChannelGrid::new(width, height, grid.channels());
    for y in 0..height {
        for x in 0..width {
            out.pixel_mut(x, y).copy_from_slice(grid.pixel(x, y));
        }
    }
    Ok(out)
}

/// Top-left crop of a scalar grid.
pub fn crop_grid(grid: &Grid<f64>, width: usize, height: usize) -> Result<Grid<f64>> {
    check_crop(grid.width(), grid.height(), width, height)?;
    let mut out = Grid::new(width, height, 0.0);
    for y in 0..height {
        for x in 0..width {
            out.set(x, y, grid.at(x, y));
        }
    }
    Ok(out)
}

/// Top-left crop of a boolean mask.
pub fn crop_mask(mask: &Grid<bool>, width: usize, height: usize) -> Result<Grid<bool>> {
    check_crop(mask.width(), mask.height(), width, height)?;
    let mut out = Grid::new(width, height, false);
    for y in 0..height {
        for x in 0..width {
            out.set(x, y, mask.at(x, y));
        }
    }
    Ok(out)
}

/// Top-left crop of a transform field.
pub fn crop_field(field: &SE3Field, width: usize, height: usize) -> Result<SE3Field> {
    check_crop(field.width(), field.height(), width, height)?;
    let mut out = SE3Field::identity(width, height);
    for y in 0..height {
        for x in 0..width {
            out.set(x, y, *field.at(x, y)).map_err(|e| anyhow::anyhow!("crop: {e:?}"))?;
        }
    }
    Ok(out)
}

/// Top-left crop of a flow field.
pub fn crop_flow(flow: &FlowField, width: usize, height: usize) -> Result<FlowField> {
    check_crop(flow.width(), flow.height(), width, height)?;
    let mut out = FlowField::zeros(width, height);
    for y in 0..height {
        for x in 0..width {
            let (dx, dy, dd) = flow.at(x, y);
            out.set(x, y, dx, dy, dd);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn padded_size_rounds_up_to_the_multiple() {
        assert_eq!(padded_size(16, 16), 16);
        assert_eq!(padded_size(17, 16), 32);
        assert_eq!(padded_size(1, 16), 16);
        assert_eq!(padded_size(100, 16), 112);
    }

    #[test]
    fn reflection_mirrors_without_repeating_the_edge() {
        let n = 4;
        let expected = [0, 1, 2, 3, 2, 1, 0, 1, 2, 3];
        for (i, want) in expected.iter().enumerate() {
            assert_eq!(reflect_index(i, n), *want);
        }
        assert_eq!(reflect_index(7, 1), 0);
    }

    #[test]
    fn padding_preserves_the_original_region() {
        let mut color = ChannelGrid::new(5, 3, 3);
        let mut depth = Grid::new(5, 3, 0.0);
        for y in 0..3 {
            for x in 0..5 {
                for c in 0..3 {
                    color.pixel_mut(x, y)[c] = (y * 100 + x * 10 + c) as f64;
                }
                depth.set(x, y, 1.0 + (y * 5 + x) as f64 * 0.01);
            }
        }
        let frame = RgbdFrame::new(color.clone(), depth.clone()).unwrap();
        let padded = pad_frame(&frame, 4).unwrap();
        assert_eq!((padded.color.width(), padded.color.height()), (8, 4));
        for y in 0..3 {
            for x in 0..5 {
                assert_eq!(padded.color.pixel(x, y), color.pixel(x, y));
                assert_eq!(padded.inverse_depth.at(x, y), depth.at(x, y));
            }
        }
        assert_eq!(padded.color.pixel(5, 0), color.pixel(3, 0));
        assert_eq!(padded.color.pixel(6, 0), color.pixel(2, 0));
        assert_eq!(padded.color.pixel(0, 3), color.pixel(0, 1));
        assert_eq!(padded.inverse_depth.at(7, 3), depth.at(1, 1));
    }

    #[test]
    fn cropping_inverts_padding() {
        let mut depth = Grid::new(6, 5, 0.0);
        for y in 0..5 {
            for x in 0..6 {
                depth.set(x, y, (y * 6 + x) as f64);
            }
        }
        let color = ChannelGrid::new(6, 5, 3);
        let frame = RgbdFrame::new(color, depth.clone()).unwrap();
        let padded = pad_frame(&frame, 16).unwrap();
        let cropped = crop_grid(&padded.inverse_depth, 6, 5).unwrap();
        for y in 0..5 {
            for x in 0..6 {
                assert_eq!(cropped.at(x, y), depth.at(x, y));
            }
        }
        assert!(crop_grid(&depth, 7, 5).is_err());
    }

    #[test]
    fn interior_flow_is_stable_under_extra_padding() {
        use se3flow_core::camera::PinholeCamera;
        use se3flow_core::features::HandcraftedEncoder;
        use se3flow_core::linalg::Vec3;
        use se3flow_core::pipeline::{self, PipelineConfig};
        use se3flow_core::se3::{self, SE3Transform, Twist};
        use se3flow_core::synth::{ObjectShape, SceneObject, SceneSpec, TextureSpec};
        use se3flow_core::update::OracleOperator;

        let spec = SceneSpec {
            camera: PinholeCamera::new(55.0, 55.0, 19.5, 11.5).unwrap(),
            width: 40,
            height: 24,
            background_depth: 2.2,
            background_tilt: (0.08, -0.06),
            background_motion: se3::exp(&Twist::new(
                Vec3::new(0.01, -0.005, 0.0),
                Vec3::new(0.0, 0.0, 0.004),
            ))
            .unwrap(),
            background_texture: TextureSpec { seed: 2, frequency: 3.0 },
            objects: vec![SceneObject {
                shape: ObjectShape::Box { half_extents: Vec3::new(0.25, 0.2, 0.15) },
                pose: SE3Transform::from_parts(
                    se3flow_core::se3::Quat::IDENTITY,
                    Vec3::new(-0.1, 0.05, 1.4),
                )
                .unwrap(),
                motion: se3::exp(&Twist::new(
                    Vec3::new(0.02, 0.01, 0.0),
                    Vec3::new(0.0, 0.005, 0.0),
                ))
                .unwrap(),
                texture: TextureSpec { seed: 7, frequency: 4.0 },
            }],
            seed: 13,
        };
        let scene = se3flow_core::synth::generate(&spec).unwrap();
        let cfg = PipelineConfig::three_scale();
        let encoder = HandcraftedEncoder::new(0, 8, 6);

        let run = |multiple: usize| {
            let p1 = pad_frame(&scene.frame1, multiple).unwrap();
            let p2 = pad_frame(&scene.frame2, multiple).unwrap();
            let (pw, ph) = (p1.color.width(), p1.color.height());
            let oracle = OracleOperator::new(
                pad_field_to(&scene.gt_field, pw, ph).unwrap(),
                pad_grid_to(&scene.labels, pw, ph),
                pad_grid_to(&scene.frame1.inverse_depth, pw, ph),
                spec.camera,
                6,
            )
            .unwrap();
            let result =
                pipeline::estimate(&p1, &p2, &spec.camera, &encoder, &encoder, &oracle, &cfg)
                    .unwrap();
            crop_flow(&result.flow, 40, 24).unwrap()
        };
        let narrow = run(16);
        let wide = run(32);

        let mut worst = 0.0f64;
        for y in 0..24 {
            for x in 0..40 {
                let a = narrow.at(x, y);
                let b = wide.at(x, y);
                worst = worst.max((a.0 - b.0).abs()).max((a.1 - b.1).abs());
            }
        }
        println!("interior flow deviation under extra padding: {worst:.3e}");
        assert!(worst < 1e-3, "interior deviation {worst} too large");
    }

    proptest! {
        #[test]
        fn reflection_stays_in_bounds_and_fixes_interior_points(
            i in 0usize..1000,
            n in 1usize..50,
        ) {
            let r = reflect_index(i, n);
            prop_assert!(r < n);
            if i < n {
                prop_assert_eq!(r, i);
            }
        }

        #[test]
        fn padded_sizes_are_the_smallest_valid_multiples(
            size in 1usize..500,
            multiple in 1usize..64,
        ) {
            let padded = padded_size(size, multiple);
            prop_assert_eq!(padded % multiple, 0);
            prop_assert!(padded >= size);
            prop_assert!(padded < size + multiple);
        }
    }
}
