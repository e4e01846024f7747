//! Coarse-to-fine estimation driver.
//!
//! Runs the recurrent refinement loop over a ladder of working resolutions:
//! at each scale the current SE(3) field induces a flow, correlation costs
//! are looked up along that flow, the update operator proposes a revision,
//! embeddings are smoothed, and a damped Gauss-Newton step folds the revised
//! targets back into the field. Scale transitions carry the field (and
//! optionally embeddings and hidden state) up by convex upsampling with the
//! mask from the coarser scale's final iteration. The same update operator
//! drives every scale.

use alloc::vec::Vec;

use crate::camera::PinholeCamera;
use crate::correlation::{self, build_pyramid, lookup, CorrelationMode, DEFAULT_LOOKUP_RADIUS};
use crate::error::{at_stage, Error, Result};
use crate::features::{ContextProvider, FeatureProvider};
use crate::field::{
    bilinear_upsample_se3, convex_upsample_channels, convex_upsample_se3, induced_flow,
    inverse_depth_residual, ConvexUpsampleMask, FlowField, SE3Field,
};
use crate::raster::{ChannelGrid, Grid, RgbdFrame};
use crate::smoothing::{self, smooth_embeddings};
use crate::solver::{build_targets, dense_se3_step};
use crate::update::{HiddenState, UpdateInputs, UpdateOperator};

/// How the hidden state and motion embeddings are initialized when the
/// working resolution doubles. The coarsest scale always starts from
/// `init_hidden(con1)` and zero embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScaleInit {
    /// Re-derive the hidden state from context, carry embeddings up.
    #[default]
    ReinitHiddenUpsampleEmbeddings,
    /// Re-derive the hidden state, reset embeddings to zero.
    ReinitHiddenReinitEmbeddings,
    /// Bilinearly upsample the hidden state, reset embeddings to zero.
    UpsampleHiddenReinitEmbeddings,
    /// Carry both the hidden state and the embeddings up.
    UpsampleHiddenUpsampleEmbeddings,
}

impl ScaleInit {
    fn upsamples_hidden(self) -> bool {
        matches!(
            self,
            ScaleInit::UpsampleHiddenReinitEmbeddings | ScaleInit::UpsampleHiddenUpsampleEmbeddings
        )
    }

    fn upsamples_embeddings(self) -> bool {
        matches!(
            self,
            ScaleInit::ReinitHiddenUpsampleEmbeddings | ScaleInit::UpsampleHiddenUpsampleEmbeddings
        )
    }
}

/// Work done at one rung of the resolution ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScaleSchedule {
    /// Full-resolution-to-working-resolution ratio; one of 16, 8, 4, 2.
    pub factor: u32,
    /// Refinement iterations to run at this scale.
    pub iterations: usize,
    /// Neighborhood radius of the dense Gauss-Newton step.
    pub se3_radius: usize,
}

/// Configuration of one end-to-end estimate call.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Coarsest-first ladder; each entry doubles the working resolution.
    pub scales: Vec<ScaleSchedule>,
    /// Levenberg damping of the dense Gauss-Newton step.
    pub damping: f64,
    /// Correlation lookup radius per pyramid level.
    pub lookup_radius: usize,
    pub correlation_mode: CorrelationMode,
    pub scale_init: ScaleInit,
    /// Whether embeddings are smoothed before the Gauss-Newton step.
    pub smoothing: bool,
    pub smoothing_tolerance: f64,
    pub smoothing_max_iterations: usize,
}

impl PipelineConfig {
    /// Ladder over 1/16, 1/8, and 1/4 resolution with a final bilinear
    /// upsampling stage to full resolution.
    pub fn three_scale() -> Self {
        PipelineConfig {
            scales: alloc::vec![
                ScaleSchedule { factor: 16, iterations: 4, se3_radius: 32 },
                ScaleSchedule { factor: 8, iterations: 6, se3_radius: 32 },
                ScaleSchedule { factor: 4, iterations: 8, se3_radius: 32 },
            ],
            damping: 1e-4,
            lookup_radius: DEFAULT_LOOKUP_RADIUS,
            correlation_mode: CorrelationMode::Materialized,
            scale_init: ScaleInit::default(),
            smoothing: true,
            smoothing_tolerance: smoothing::DEFAULT_TOLERANCE,
            smoothing_max_iterations: smoothing::DEFAULT_MAX_ITERATIONS,
        }
    }

    /// Ladder that continues to 1/2 resolution, where a single convex
    /// upsampling reaches full resolution. Correlation stays on demand:
    /// materialized volumes are quartic in the finest working size.
    pub fn four_scale() -> Self {
        PipelineConfig {
            scales: alloc::vec![
                ScaleSchedule { factor: 16, iterations: 4, se3_radius: 64 },
                ScaleSchedule { factor: 8, iterations: 5, se3_radius: 64 },
                ScaleSchedule { factor: 4, iterations: 5, se3_radius: 64 },
                ScaleSchedule { factor: 2, iterations: 6, se3_radius: 64 },
            ],
            damping: 1e-2,
            lookup_radius: DEFAULT_LOOKUP_RADIUS,
            correlation_mode: CorrelationMode::OnDemand,
            scale_init: ScaleInit::default(),
            smoothing: true,
            smoothing_tolerance: smoothing::DEFAULT_TOLERANCE,
            smoothing_max_iterations: smoothing::DEFAULT_MAX_ITERATIONS,
        }
    }

    /// Number of trace entries an estimate call will produce.
    pub fn total_iterations(&self) -> usize {
        self.scales.iter().map(|s| s.iterations).sum()
    }

    /// Channel count the correlation lookup hands to the update operator.
    pub fn cost_channels(&self) -> usize {
        let side = 2 * self.lookup_radius + 1;
        correlation::LEVELS * side * side
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::InvalidArgument { what: "schedule requires at least one scale" });
        }
        for (i, s) in self.scales.iter().enumerate() {
            if !matches!(s.factor, 2 | 4 | 8 | 16) {
                return Err(Error::InvalidArgument { what: "scale factor must be 2, 4, 8, or 16" });
            }
            if s.iterations == 0 {
                return Err(Error::InvalidArgument { what: "every scale requires iterations" });
            }
            if s.se3_radius == 0 {
                return Err(Error::InvalidArgument { what: "dense step radius must be positive" });
            }
            if i > 0 && self.scales[i - 1].factor != 2 * s.factor {
                return Err(Error::InvalidArgument {
                    what: "each scale must double the working resolution",
                });
            }
        }
        if !(self.damping > 0.0) || !self.damping.is_finite() {
            return Err(Error::InvalidArgument { what: "damping must be positive and finite" });
        }
        if self.lookup_radius == 0 {
            return Err(Error::InvalidArgument { what: "lookup radius must be positive" });
        }
        if !(self.smoothing_tolerance > 0.0) || self.smoothing_max_iterations == 0 {
            return Err(Error::InvalidArgument { what: "smoothing settings must be positive" });
        }
        Ok(())
    }
}

/// Full-resolution snapshot taken after one refinement iteration.
#[derive(Debug, Clone)]
pub struct TraceEntry {
    pub scale_index: usize,
    pub iteration: usize,
    /// The working field upsampled to full resolution.
    pub field: SE3Field,
    /// Flow induced by `field` against the full-resolution first frame.
    pub flow: FlowField,
    pub flow_valid: Grid<bool>,
    /// Revised-target flow at the working resolution: the flow the iteration
    /// started from plus the operator's revision.
    pub revised_flow: ChannelGrid,
}

/// One snapshot per refinement iteration, coarsest scale first.
pub type IterationTrace = Vec<TraceEntry>;

/// Final field and flow plus the per-iteration trace.
#[derive(Debug, Clone)]
pub struct EstimateResult {
    pub field: SE3Field,
    pub flow: FlowField,
    pub flow_valid: Grid<bool>,
    pub trace: IterationTrace,
}

/// Runs the full coarse-to-fine schedule on one frame pair.
///
/// The coarsest scale starts from the identity field, zero embeddings, and
/// `op.init_hidden(con1)`. Each iteration looks up correlation costs at the
/// currently induced flow, applies the update operator, smooths the returned
/// embeddings (unless disabled), and takes one damped Gauss-Newton step
/// toward the revised targets. The final trace entry is the output.
///
/// Frame dimensions must be divisible by the coarsest scale factor; errors
/// carry the scale and iteration they occurred at.
pub fn estimate(
    frame1: &RgbdFrame,
    frame2: &RgbdFrame,
    cam: &PinholeCamera,
    features: &dyn FeatureProvider,
    context: &dyn ContextProvider,
    op: &dyn UpdateOperator,
    cfg: &PipelineConfig,
) -> Result<EstimateResult> {
    cfg.validate()?;
    let (full_w, full_h) = (frame1.width(), frame1.height());
    if frame2.width() != full_w || frame2.height() != full_h {
        return Err(Error::ShapeMismatch {
            expected: (full_w, full_h),
            got: (frame2.width(), frame2.height()),
        });
    }
    let coarsest = cfg.scales[0].factor as usize;
    if full_w % coarsest != 0 || full_h % coarsest != 0 || full_w == 0 || full_h == 0 {
        return Err(Error::InvalidArgument {
            what: "frame dimensions must be divisible by the coarsest scale factor",
        });
    }
    if !frame1.inverse_depth.data().iter().any(|d| *d > 0.0) {
        return Err(Error::InvalidArgument { what: "first frame has no valid inverse depth" });
    }

    let embedding_channels = op.embedding_channels();
    let mut field = SE3Field::identity(full_w / coarsest, full_h / coarsest);
    let mut embeddings = ChannelGrid::new(full_w / coarsest, full_h / coarsest, embedding_channels);
    let mut hidden: Option<HiddenState> = None;
    let mut trace: IterationTrace = Vec::with_capacity(cfg.total_iterations());

    for (scale_index, sched) in cfg.scales.iter().enumerate() {
        let factor = sched.factor as usize;
        let stage0 = |e: Error| at_stage(scale_index, 0, e);
        let f1 = frame1.downsample(factor);
        let f2 = frame2.downsample(factor);
        let cam_s = cam.downscaled(sched.factor);
        let feat1 = features.features(&f1, sched.factor).map_err(stage0)?;
        let feat2 = features.features(&f2, sched.factor).map_err(stage0)?;
        let pyramid = build_pyramid(&feat1, &feat2, cfg.correlation_mode).map_err(stage0)?;
        let ctx = context.context(&f1, sched.factor).map_err(stage0)?;

        hidden = Some(match hidden.take() {
            Some(prev) if scale_index > 0 && cfg.scale_init.upsamples_hidden() => {
                prev.upsample_bilinear(2)
            }
            _ => op.init_hidden(&ctx.con1),
        });
        if scale_index > 0 && !cfg.scale_init.upsamples_embeddings() {
            embeddings = ChannelGrid::new(f1.width(), f1.height(), embedding_channels);
        }

        let mut last_mask: Option<ConvexUpsampleMask> = None;
        for iteration in 0..sched.iterations {
            let stage = |e: Error| at_stage(scale_index, iteration, e);
            let (flow, flow_valid) =
                induced_flow(&field, &f1.inverse_depth, &cam_s).map_err(stage)?;
            let mut coords = ChannelGrid::new(field.width(), field.height(), 2);
            for y in 0..field.height() {
                for x in 0..field.width() {
                    let (dx, dy, _) = flow.at(x, y);
                    coords.pixel_mut(x, y).copy_from_slice(&[x as f64 + dx, y as f64 + dy]);
                }
            }
            let costs = lookup(&pyramid, &coords, cfg.lookup_radius).map_err(stage)?;
            let (residual, _) =
                inverse_depth_residual(&field, &f1.inverse_depth, &f2.inverse_depth, &cam_s)
                    .map_err(stage)?;
            let twists = field.log_channels().map_err(stage)?;
            let flow2d = flow.flow2d();
            let inputs = UpdateInputs {
                context: &ctx.con2,
                cost_lookup: &costs,
                flow2d: &flow2d,
                inverse_depth_residual: &residual,
                twist_field: &twists,
                embeddings: &embeddings,
            };
            let (next_hidden, outputs) =
                op.update(hidden.take().expect("hidden state is set per scale"), &inputs)
                    .map_err(stage)?;
            hidden = Some(next_hidden);
            embeddings = if cfg.smoothing {
                smooth_embeddings(
                    &outputs.embeddings,
                    &outputs.edge_weights,
                    cfg.smoothing_tolerance,
                    cfg.smoothing_max_iterations,
                )
                .map_err(stage)?
            } else {
                outputs.embeddings
            };
            let targets = build_targets(&f1.inverse_depth, &flow, &flow_valid, &outputs.revision)
                .map_err(stage)?;
            field = dense_se3_step(
                &field,
                &embeddings,
                &outputs.confidence,
                &targets,
                &cam_s,
                &f1.inverse_depth,
                sched.se3_radius,
                cfg.damping,
            )
            .map_err(stage)?;

            let mut revised_flow = outputs.revision;
            for y in 0..field.height() {
                for x in 0..field.width() {
                    let (fx, fy, fd) = flow.at(x, y);
                    let px = revised_flow.pixel_mut(x, y);
                    px[0] += fx;
                    px[1] += fy;
                    px[2] += fd;
                }
            }

            let mask = ConvexUpsampleMask::from_logits(&outputs.mask_logits).map_err(stage)?;
            let half = convex_upsample_se3(&field, &mask).map_err(stage)?;
            let full = bilinear_upsample_se3(&half, sched.factor / 2).map_err(stage)?;
            let (full_flow, full_valid) =
                induced_flow(&full, &frame1.inverse_depth, cam).map_err(stage)?;
            trace.push(TraceEntry {
                scale_index,
                iteration,
                field: full,
                flow: full_flow,
                flow_valid: full_valid,
                revised_flow,
            });
            last_mask = Some(mask);
        }

        if scale_index + 1 < cfg.scales.len() {
            let stage = |e: Error| at_stage(scale_index, sched.iterations - 1, e);
            let mask = last_mask.expect("every scale runs at least one iteration");
            field = convex_upsample_se3(&field, &mask).map_err(stage)?;
            if cfg.scale_init.upsamples_embeddings() {
                embeddings = convex_upsample_channels(&embeddings, &mask).map_err(stage)?;
            }
        }
    }

    let last = trace.last().expect("the schedule runs at least one iteration");
    Ok(EstimateResult {
        field: last.field.clone(),
        flow: last.flow.clone(),
        flow_valid: last.flow_valid.clone(),
        trace,
    })
}
