//! Supervision loss over refinement traces and evaluation metrics.
//!
//! The per-iteration loss compares the induced flow, the inverse-depth
//! change, and the revised-target flow against ground truth with L1 terms;
//! the total loss sums per-iteration losses with exponentially decaying
//! weights so late iterations dominate. Metrics cover 2D flow endpoint
//! error, 3D scene-flow endpoint error, and threshold-based outlier rates.

use alloc::string::String;
use alloc::vec::Vec;

use core::fmt::Write as _;

#[allow(unused_imports)]
use num_traits::Float;

use crate::camera::PinholeCamera;
use crate::error::{Error, Result};
use crate::field::FlowField;
use crate::pipeline::TraceEntry;
use crate::raster::{ChannelGrid, Grid};

/// Term weights of the supervision loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Weight of the inverse-depth-change term.
    pub inverse_depth: f64,
    /// Weight of the revised-flow term.
    pub revision: f64,
    /// Per-remaining-iteration decay of the total loss.
    pub decay: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { inverse_depth: 250.0, revision: 0.2, decay: 0.8 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.inverse_depth >= 0.0) || !(self.revision >= 0.0) {
            return Err(Error::InvalidArgument { what: "loss term weights must be nonnegative" });
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::InvalidArgument { what: "decay must lie in (0, 1]" });
        }
        Ok(())
    }
}

/// Brings a working-resolution revised flow to full resolution: bilinear
/// upsampling with the displacement values scaled by the resolution ratio.
pub fn revised_flow_to_full_resolution(
    revised_flow: &ChannelGrid,
    width: usize,
    height: usize,
) -> Result<ChannelGrid> {
    let (w, h) = (revised_flow.width(), revised_flow.height());
    if revised_flow.channels() != 3 {
        return Err(Error::InvalidArgument { what: "revised flow requires 3 channels" });
    }
    if w == 0 || h == 0 || width % w != 0 || height % h != 0 || width / w != height / h {
        return Err(Error::ShapeMismatch { expected: (width, height), got: (w, h) });
    }
    let factor = width / w;
    let mut up = revised_flow.upsample_bilinear(factor);
    for px in up.data_mut().chunks_exact_mut(3) {
        px[0] *= factor as f64;
        px[1] *= factor as f64;
    }
    Ok(up)
}

/// L1 supervision of one refinement iteration, averaged over valid pixels:
/// flow term + weighted inverse-depth term + weighted revised-flow term.
/// Flow terms use the per-pixel L1 norm |dx| + |dy|.
pub fn per_iteration_loss(
    est: &FlowField,
    revised_flow: &ChannelGrid,
    gt: &FlowField,
    valid: &Grid<bool>,
    weights: &LossWeights,
) -> Result<f64> {
    weights.validate()?;
    let (w, h) = (gt.width(), gt.height());
    if est.width() != w
        || est.height() != h
        || valid.width() != w
        || valid.height() != h
        || revised_flow.width() != w
        || revised_flow.height() != h
    {
        return Err(Error::ShapeMismatch { expected: (w, h), got: (est.width(), est.height()) });
    }
    if revised_flow.channels() != 3 {
        return Err(Error::InvalidArgument { what: "revised flow requires 3 channels" });
    }
    let mut flow_term = 0.0;
    let mut depth_term = 0.0;
    let mut revision_term = 0.0;
    let mut count = 0.0;
    for y in 0..h {
        for x in 0..w {
            if !valid.at(x, y) {
                continue;
            }
            let (gx, gy, gd) = gt.at(x, y);
            let (ex, ey, ed) = est.at(x, y);
            let rev = revised_flow.pixel(x, y);
            flow_term += (ex - gx).abs() + (ey - gy).abs();
            depth_term += (ed - gd).abs();
            revision_term += (rev[0] - gx).abs() + (rev[1] - gy).abs();
            count += 1.0;
        }
    }
    if count == 0.0 {
        return Err(Error::InvalidArgument { what: "loss mask selects no pixels" });
    }
    Ok(flow_term / count
        + weights.inverse_depth * (depth_term / count)
        + weights.revision * (revision_term / count))
}

/// Iterations left after finishing iteration `iteration` of scale
/// `scale_index` (both 0-based): the rest of this scale plus every iteration
/// of the finer scales. The last iteration of the last scale has 0 left.
pub fn remaining_iterations(
    schedule: &[usize],
    scale_index: usize,
    iteration: usize,
) -> Result<usize> {
    if scale_index >= schedule.len() || iteration >= schedule[scale_index] {
        return Err(Error::InvalidArgument { what: "scale or iteration index out of range" });
    }
    let rest_of_scale = schedule[scale_index] - 1 - iteration;
    Ok(rest_of_scale + schedule[scale_index + 1..].iter().sum::<usize>())
}

/// Decay weight of one iteration: `decay` raised to the remaining-iteration
/// count, so the final iteration always carries weight 1.
pub fn decay_weight(
    schedule: &[usize],
    scale_index: usize,
    iteration: usize,
    decay: f64,
) -> Result<f64> {
    Ok(decay.powi(remaining_iterations(schedule, scale_index, iteration)? as i32))
}

fn schedule_of(trace: &[TraceEntry]) -> Result<Vec<usize>> {
    let mut schedule: Vec<usize> = Vec::new();
    for entry in trace {
        let expect_new = entry.iteration == 0 && entry.scale_index == schedule.len();
        let expect_continued = entry.scale_index + 1 == schedule.len()
            && schedule.last() == Some(&entry.iteration);
        if expect_new {
            schedule.push(1);
        } else if expect_continued {
            *schedule.last_mut().expect("nonempty") += 1;
        } else {
            return Err(Error::InvalidArgument { what: "trace is not a complete schedule" });
        }
    }
    if schedule.is_empty() {
        return Err(Error::InvalidArgument { what: "trace is empty" });
    }
    Ok(schedule)
}

/// Decay-weighted sum of per-iteration losses over a complete trace.
///
/// The schedule is reconstructed from the trace entries' scale and iteration
/// indices; a gap or reordering is rejected as an incomplete trace.
pub fn total_loss(
    trace: &[TraceEntry],
    gt: &FlowField,
    valid: &Grid<bool>,
    weights: &LossWeights,
) -> Result<f64> {
    weights.validate()?;
    let schedule = schedule_of(trace)?;
    let mut total = 0.0;
    for entry in trace {
        let revised =
            revised_flow_to_full_resolution(&entry.revised_flow, gt.width(), gt.height())?;
        let loss = per_iteration_loss(&entry.flow, &revised, gt, valid, weights)?;
        total += decay_weight(&schedule, entry.scale_index, entry.iteration, weights.decay)? * loss;
    }
    Ok(total)
}

/// Accuracy summary over one pixel population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricGroup {
    /// Mean 2D flow endpoint error, in pixels.
    pub flow_epe: f64,
    /// Percentage of pixels with 2D endpoint error above 1 pixel.
    pub flow_outliers_1px: f64,
    /// Mean 3D scene-flow endpoint error, in world units.
    pub scene_flow_epe: f64,
    /// Percentage of pixels with 3D endpoint error above 0.05 units.
    pub scene_flow_outliers_005: f64,
    /// Percentage of pixels with 3D endpoint error above 0.1 units.
    pub scene_flow_outliers_01: f64,
    /// Percentage of target-disparity outliers (error > 3 px and > 5%).
    pub d2_outliers: f64,
    /// Percentage of flow outliers (error > 3 px and > 5% of magnitude).
    pub fl_outliers: f64,
    /// Percentage of pixels that are disparity or flow outliers.
    pub sf_outliers: f64,
    pub pixel_count: usize,
}

/// Metrics over all valid pixels, optionally split into foreground and
/// background populations by an object mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub all: MetricGroup,
    pub foreground: Option<MetricGroup>,
    pub background: Option<MetricGroup>,
}

struct MetricAccumulator {
    flow_err_sum: f64,
    flow_outliers_1px: usize,
    scene_err_sum: f64,
    scene_err_count: usize,
    scene_outliers_005: usize,
    scene_outliers_01: usize,
    d2_outliers: usize,
    fl_outliers: usize,
    sf_outliers: usize,
    count: usize,
}

impl MetricAccumulator {
    fn new() -> Self {
        MetricAccumulator {
            flow_err_sum: 0.0,
            flow_outliers_1px: 0,
            scene_err_sum: 0.0,
            scene_err_count: 0,
            scene_outliers_005: 0,
            scene_outliers_01: 0,
            d2_outliers: 0,
            fl_outliers: 0,
            sf_outliers: 0,
            count: 0,
        }
    }

    fn finish(&self) -> Option<MetricGroup> {
        if self.count == 0 {
            return None;
        }
        let pct = |n: usize| 100.0 * n as f64 / self.count as f64;
        Some(MetricGroup {
            flow_epe: self.flow_err_sum / self.count as f64,
            flow_outliers_1px: pct(self.flow_outliers_1px),
            scene_flow_epe: if self.scene_err_count == 0 {
                0.0
            } else {
                self.scene_err_sum / self.scene_err_count as f64
            },
            scene_flow_outliers_005: pct(self.scene_outliers_005),
            scene_flow_outliers_01: pct(self.scene_outliers_01),
            d2_outliers: pct(self.d2_outliers),
            fl_outliers: pct(self.fl_outliers),
            sf_outliers: pct(self.sf_outliers),
            pixel_count: self.count,
        })
    }
}

/// Flow and scene-flow accuracy of an estimate against ground truth.
///
/// The 3D endpoint error backprojects the target correspondence of each
/// pixel, `(x + fx, y + fy, d + dd)`, for both estimate and ground truth;
/// the error is the distance between the two target points. Disparity
/// outliers compare target inverse depth scaled by the focal length (a
/// unit-baseline disparity). Pixels whose estimated target inverse depth is
/// nonpositive have no 3D endpoint; they count as outliers in every
/// scene-flow and disparity rate and are excluded from the 3D error mean.
pub fn metrics(
    est: &FlowField,
    gt: &FlowField,
    valid: &Grid<bool>,
    inv_depth1: &Grid<f64>,
    cam: &PinholeCamera,
    object_mask: Option<&Grid<bool>>,
) -> Result<MetricReport> {
    let (w, h) = (gt.width(), gt.height());
    if est.width() != w
        || est.height() != h
        || valid.width() != w
        || valid.height() != h
        || inv_depth1.width() != w
        || inv_depth1.height() != h
    {
        return Err(Error::ShapeMismatch { expected: (w, h), got: (est.width(), est.height()) });
    }
    if let Some(mask) = object_mask {
        if mask.width() != w || mask.height() != h {
            return Err(Error::ShapeMismatch { expected: (w, h), got: (mask.width(), mask.height()) });
        }
    }

    let mut all = MetricAccumulator::new();
    let mut fg = MetricAccumulator::new();
    let mut bg = MetricAccumulator::new();
    for y in 0..h {
        for x in 0..w {
            let d1 = inv_depth1.at(x, y);
            if !valid.at(x, y) || d1 <= 0.0 {
                continue;
            }
            let (gx, gy, gd) = gt.at(x, y);
            let (ex, ey, ed) = est.at(x, y);
            let d_gt = d1 + gd;
            if d_gt <= 0.0 {
                continue;
            }
            let d_est = d1 + ed;

            let flow_err = ((ex - gx).powi(2) + (ey - gy).powi(2)).sqrt();
            let flow_outlier_1px = flow_err > 1.0;
            let gt_mag = (gx * gx + gy * gy).sqrt();
            let fl_outlier = flow_err > 3.0 && flow_err > 0.05 * gt_mag;

            let disp_err = cam.fx * (d_est - d_gt).abs();
            let d2_outlier =
                d_est <= 0.0 || (disp_err > 3.0 && disp_err > 0.05 * cam.fx * d_gt);

            let gt_target = crate::camera::backproject(
                cam,
                crate::camera::MapPoint { x: x as f64 + gx, y: y as f64 + gy, d: d_gt },
            )
            .expect("positive ground-truth inverse depth");
            let scene = if d_est > 0.0 {
                let est_target = crate::camera::backproject(
                    cam,
                    crate::camera::MapPoint { x: x as f64 + ex, y: y as f64 + ey, d: d_est },
                )
                .expect("positive estimated inverse depth");
                Some((est_target - gt_target).norm())
            } else {
                None
            };

            for acc in [
                Some(&mut all),
                object_mask.map(|m| if m.at(x, y) { &mut fg } else { &mut bg }),
            ]
            .into_iter()
            .flatten()
            {
                acc.count += 1;
                acc.flow_err_sum += flow_err;
                acc.flow_outliers_1px += usize::from(flow_outlier_1px);
                acc.fl_outliers += usize::from(fl_outlier);
                acc.d2_outliers += usize::from(d2_outlier);
                acc.sf_outliers += usize::from(fl_outlier || d2_outlier);
                match scene {
                    Some(err) => {
                        acc.scene_err_sum += err;
                        acc.scene_err_count += 1;
                        acc.scene_outliers_005 += usize::from(err > 0.05);
                        acc.scene_outliers_01 += usize::from(err > 0.1);
                    }
                    None => {
                        acc.scene_outliers_005 += 1;
                        acc.scene_outliers_01 += 1;
                    }
                }
            }
        }
    }

    let all = all
        .finish()
        .ok_or(Error::InvalidArgument { what: "metric mask selects no pixels" })?;
    Ok(MetricReport {
        all,
        foreground: if object_mask.is_some() { fg.finish() } else { None },
        background: if object_mask.is_some() { bg.finish() } else { None },
    })
}

impl MetricGroup {
    fn write_fields(&self, prefix: &str, out: &mut String) {
        let mut field = |name: &str, value: f64| {
            let _ = writeln!(out, "{prefix}.{name} {value:.6}");
        };
        field("flow_epe", self.flow_epe);
        field("flow_outliers_1px", self.flow_outliers_1px);
        field("scene_flow_epe", self.scene_flow_epe);
        field("scene_flow_outliers_005", self.scene_flow_outliers_005);
        field("scene_flow_outliers_01", self.scene_flow_outliers_01);
        field("d2_outliers", self.d2_outliers);
        field("fl_outliers", self.fl_outliers);
        field("sf_outliers", self.sf_outliers);
        let _ = writeln!(out, "{prefix}.pixel_count {}", self.pixel_count);
    }
}

impl MetricReport {
    /// Key/value rendering with a stable key order, one `key value` per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.all.write_fields("all", &mut out);
        if let Some(fg) = &self.foreground {
            fg.write_fields("foreground", &mut out);
        }
        if let Some(bg) = &self.background {
            bg.write_fields("background", &mut out);
        }
        out
    }
}
