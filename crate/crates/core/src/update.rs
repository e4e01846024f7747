//! Pluggable recurrent update operators.
//!
//! Each refinement iteration feeds the current estimate (correlation costs,
//! 2D flow, inverse-depth residual, twists, embeddings, context) to an
//! update operator, which returns a flow revision, per-row confidence, new
//! embeddings, edge weights, and upsampling-mask logits. Two operators
//! exist: [`ReferenceGru`], a seeded forward-only convolutional recurrent
//! unit, and [`OracleOperator`], which reads the synthetic ground truth and
//! drives the geometric core to the exact optimum. One operator instance is
//! shared across all scales.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::camera::PinholeCamera;
use crate::correlation::{self, DEFAULT_LOOKUP_RADIUS};
use crate::error::{Error, Result};
use crate::field::{induced_flow, MotionEmbeddingField, SE3Field};
use crate::nn::{self, ConvLayer};
use crate::raster::{concat_channels, ChannelGrid, Grid};
use crate::se3::{self, Twist};
use crate::smoothing::EdgeWeightField;
use crate::solver::ConfidenceField;
use crate::synth::GeneratedScene;

#[allow(unused_imports)]
use num_traits::Float;

/// Recurrent state carried across the iterations of one scale.
pub type HiddenState = ChannelGrid;

/// Scale of the oracle's one-hot label embeddings. Embeddings of different
/// labels sit `sqrt(2) * 5` apart, putting their squared distance of 50 past
/// the attention cutoff: cross-object pairs contribute exactly nothing.
pub const ORACLE_EMBEDDING_SCALE: f64 = 5.0;

/// Edge weight the oracle emits inside objects; boundaries get zero.
pub const DEFAULT_ORACLE_EDGE_WEIGHT: f64 = 1e3;

/// Mask logit the oracle assigns to coarse neighbors of a different label.
/// After the softmax their weight is `exp(-40)`, below 1e-17, so the convex
/// upsample stays label-pure to working precision while every pixel keeps a
/// valid convex combination.
pub const ORACLE_MASK_PENALTY: f64 = -40.0;

/// Channel configuration of the recurrent update operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateConfig {
    pub hidden_channels: usize,
    /// Channels of the injected per-scale context features.
    pub context_channels: usize,
    pub embedding_channels: usize,
    /// Channels of the correlation lookup raster.
    pub cost_channels: usize,
    /// Width of the two motion-encoder layers.
    pub encoder_channels: usize,
}

impl Default for UpdateConfig {
    fn default() -> Self {
        let side = 2 * DEFAULT_LOOKUP_RADIUS + 1;
        UpdateConfig {
            hidden_channels: 128,
            context_channels: 384,
            embedding_channels: crate::field::DEFAULT_EMBEDDING_CHANNELS,
            cost_channels: correlation::LEVELS * side * side,
            encoder_channels: 128,
        }
    }
}

impl UpdateConfig {
    /// Channel count of the concatenated update input: context, costs, 2D
    /// flow, inverse-depth residual, twists, embeddings.
    pub fn input_channels(&self) -> usize {
        self.context_channels + self.cost_channels + 2 + 1 + 6 + self.embedding_channels
    }

    fn validate(&self) -> Result<()> {
        let counts = [
            self.hidden_channels,
            self.context_channels,
            self.embedding_channels,
            self.cost_channels,
            self.encoder_channels,
        ];
        if counts.iter().any(|c| *c == 0) {
            return Err(Error::InvalidArgument { what: "update channel counts must be positive" });
        }
        Ok(())
    }
}

/// Borrowed per-iteration inputs, all sharing one raster shape.
pub struct UpdateInputs<'a> {
    pub context: &'a ChannelGrid,
    pub cost_lookup: &'a ChannelGrid,
    pub flow2d: &'a ChannelGrid,
    pub inverse_depth_residual: &'a Grid<f64>,
    pub twist_field: &'a ChannelGrid,
    pub embeddings: &'a MotionEmbeddingField,
}

/// Everything one update step returns besides the recurrent state.
pub struct UpdateOutputs {
    /// Flow revision per pixel: `(dx, dy)` in pixels, `dd` in 1/m.
    pub revision: ChannelGrid,
    /// Per-row nonnegative confidence for the `(x, y, d)` target rows.
    pub confidence: ConfidenceField,
    pub embeddings: MotionEmbeddingField,
    pub edge_weights: EdgeWeightField,
    /// Unnormalized convex-upsampling logits at twice the resolution.
    pub mask_logits: ChannelGrid,
}

/// A recurrent update step. Implementations are immutable after
/// construction; the hidden state is owned by the caller.
pub trait UpdateOperator {
    /// Channel count of the embeddings the operator consumes and emits.
    fn embedding_channels(&self) -> usize;

    /// Initializes the hidden state of a scale as `tanh` of the Con-1
    /// context features.
    fn init_hidden(&self, con1: &ChannelGrid) -> HiddenState {
        let mut h = con1.clone();
        nn::tanh_in_place(&mut h);
        h
    }

    fn update(
        &self,
        state: HiddenState,
        inputs: &UpdateInputs,
    ) -> Result<(HiddenState, UpdateOutputs)>;
}

fn check_input_shapes(inputs: &UpdateInputs) -> Result<(usize, usize)> {
    let (w, h) = (inputs.context.width(), inputs.context.height());
    let shapes = [
        (inputs.cost_lookup.width(), inputs.cost_lookup.height()),
        (inputs.flow2d.width(), inputs.flow2d.height()),
        (inputs.inverse_depth_residual.width(), inputs.inverse_depth_residual.height()),
        (inputs.twist_field.width(), inputs.twist_field.height()),
        (inputs.embeddings.width(), inputs.embeddings.height()),
    ];
    for got in shapes {
        if got != (w, h) {
            return Err(Error::ShapeMismatch { expected: (w, h), got });
        }
    }
    if inputs.flow2d.channels() != 2 {
        return Err(Error::InvalidArgument { what: "flow input requires 2 channels" });
    }
    if inputs.twist_field.channels() != 6 {
        return Err(Error::InvalidArgument { what: "twist input requires 6 channels" });
    }
    Ok((w, h))
}

/// Seeded forward-only recurrent unit: the concatenated inputs pass through
/// two 3x3 convolution + ReLU motion-encoder layers, a convolutional gated
/// recurrent cell, and per-output 3x3 heads. Weights are deterministic in
/// the seed; no training exists.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceGru {
    config: UpdateConfig,
    seed: Option<u64>,
    enc1: ConvLayer,
    enc2: ConvLayer,
    gate_update: ConvLayer,
    gate_reset: ConvLayer,
    gate_candidate: ConvLayer,
    head_revision: ConvLayer,
    head_confidence: ConvLayer,
    head_embeddings: ConvLayer,
    head_edges: ConvLayer,
    head_mask: ConvLayer,
}

struct LayerShape {
    name: &'static str,
    in_channels: usize,
    out_channels: usize,
}

impl ReferenceGru {
    fn layer_shapes(config: &UpdateConfig) -> [LayerShape; 10] {
        let gate_in = config.hidden_channels + config.encoder_channels;
        let ch = config.hidden_channels;
        [
            LayerShape { name: "enc1", in_channels: config.input_channels(), out_channels: config.encoder_channels },
            LayerShape { name: "enc2", in_channels: config.encoder_channels, out_channels: config.encoder_channels },
            LayerShape { name: "gru_update", in_channels: gate_in, out_channels: ch },
            LayerShape { name: "gru_reset", in_channels: gate_in, out_channels: ch },
            LayerShape { name: "gru_candidate", in_channels: gate_in, out_channels: ch },
            LayerShape { name: "head_revision", in_channels: ch, out_channels: 3 },
            LayerShape { name: "head_confidence", in_channels: ch, out_channels: 3 },
            LayerShape { name: "head_embeddings", in_channels: ch, out_channels: config.embedding_channels },
            LayerShape { name: "head_edges", in_channels: ch, out_channels: 2 },
            LayerShape { name: "head_mask", in_channels: ch, out_channels: 36 },
        ]
    }

    /// Builds all layers from a 64-bit seed, drawing them in a fixed order.
    pub fn seeded(config: UpdateConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers: Vec<ConvLayer> = Self::layer_shapes(&config)
            .iter()
            .map(|s| ConvLayer::seeded(s.name, s.in_channels, s.out_channels, &mut rng))
            .collect();
        Self::assemble(config, Some(seed), layers)
    }

    /// Rebuilds an operator from externally stored layers, matched by name.
    pub fn from_layers(config: UpdateConfig, mut layers: Vec<ConvLayer>) -> Result<Self> {
        config.validate()?;
        let mut ordered = Vec::with_capacity(10);
        for shape in Self::layer_shapes(&config) {
            let idx = layers
                .iter()
                .position(|l| l.name() == shape.name)
                .ok_or(Error::InvalidArgument { what: "missing update-operator layer" })?;
            let layer = layers.swap_remove(idx);
            if layer.in_channels() != shape.in_channels
                || layer.out_channels() != shape.out_channels
            {
                return Err(Error::InvalidArgument { what: "update-operator layer shape" });
            }
            ordered.push(layer);
        }
        if !layers.is_empty() {
            return Err(Error::InvalidArgument { what: "unexpected update-operator layer" });
        }
        Self::assemble(config, None, ordered)
    }

    fn assemble(config: UpdateConfig, seed: Option<u64>, layers: Vec<ConvLayer>) -> Result<Self> {
        let mut it = layers.into_iter();
        let mut next = || it.next().expect("ten layers");
        Ok(ReferenceGru {
            config,
            seed,
            enc1: next(),
            enc2: next(),
            gate_update: next(),
            gate_reset: next(),
            gate_candidate: next(),
            head_revision: next(),
            head_confidence: next(),
            head_embeddings: next(),
            head_edges: next(),
            head_mask: next(),
        })
    }

    pub fn config(&self) -> &UpdateConfig {
        &self.config
    }

    /// The seed the layers were drawn from, if they were not loaded.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// All layers in their fixed construction order.
    pub fn layers(&self) -> [&ConvLayer; 10] {
        [
            &self.enc1,
            &self.enc2,
            &self.gate_update,
            &self.gate_reset,
            &self.gate_candidate,
            &self.head_revision,
            &self.head_confidence,
            &self.head_embeddings,
            &self.head_edges,
            &self.head_mask,
        ]
    }

    fn check_channels(&self, inputs: &UpdateInputs, state: &HiddenState) -> Result<()> {
        let c = &self.config;
        let ok = inputs.context.channels() == c.context_channels
            && inputs.cost_lookup.channels() == c.cost_channels
            && inputs.embeddings.channels() == c.embedding_channels
            && state.channels() == c.hidden_channels;
        if !ok {
            return Err(Error::InvalidArgument { what: "update input channels do not match config" });
        }
        Ok(())
    }
}

impl UpdateOperator for ReferenceGru {
    fn embedding_channels(&self) -> usize {
        self.config.embedding_channels
    }

    fn update(
        &self,
        state: HiddenState,
        inputs: &UpdateInputs,
    ) -> Result<(HiddenState, UpdateOutputs)> {
        let (w, h) = check_input_shapes(inputs)?;
        self.check_channels(inputs, &state)?;
        if (state.width(), state.height()) != (w, h) {
            return Err(Error::ShapeMismatch { expected: (w, h), got: (state.width(), state.height()) });
        }

        let residual = ChannelGrid::from_single(inputs.inverse_depth_residual);
        let stacked = concat_channels(&[
            inputs.context,
            inputs.cost_lookup,
            inputs.flow2d,
            &residual,
            inputs.twist_field,
            inputs.embeddings,
        ])?;
        let mut x = self.enc1.apply(&stacked)?;
        nn::relu_in_place(&mut x);
        let mut x = self.enc2.apply(&x)?;
        nn::relu_in_place(&mut x);

        let hx = concat_channels(&[&state, &x])?;
        let mut z = self.gate_update.apply(&hx)?;
        nn::sigmoid_in_place(&mut z);
        let mut r = self.gate_reset.apply(&hx)?;
        nn::sigmoid_in_place(&mut r);
        let mut rh = state.clone();
        for (v, g) in rh.data_mut().iter_mut().zip(r.data()) {
            *v *= g;
        }
        let rhx = concat_channels(&[&rh, &x])?;
        let mut q = self.gate_candidate.apply(&rhx)?;
        nn::tanh_in_place(&mut q);
        let mut next = state;
        for ((v, zv), qv) in next.data_mut().iter_mut().zip(z.data()).zip(q.data()) {
            *v = (1.0 - zv) * *v + zv * qv;
        }

        let revision = self.head_revision.apply(&next)?;
        let mut confidence = self.head_confidence.apply(&next)?;
        nn::sigmoid_in_place(&mut confidence);
        let embeddings = self.head_embeddings.apply(&next)?;
        let mut edges = self.head_edges.apply(&next)?;
        nn::softplus_in_place(&mut edges);
        let mut wx = alloc::vec![0.0; w * h];
        let mut wy = alloc::vec![0.0; w * h];
        edges.copy_channel(0, &mut wx);
        edges.copy_channel(1, &mut wy);
        let edge_weights =
            EdgeWeightField::new(Grid::from_vec(w, h, wx)?, Grid::from_vec(w, h, wy)?)?;
        let mask_logits = nn::pixel_shuffle2(&self.head_mask.apply(&next)?)?;

        Ok((next, UpdateOutputs { revision, confidence, embeddings, edge_weights, mask_logits }))
    }
}

/// Ground-truth update operator for synthetic scenes.
///
/// Emits the revision that moves every valid pixel's target onto its exact
/// ground-truth correspondence, full confidence on valid pixels, one-hot
/// label embeddings scaled past the attention cutoff, edge weights that are
/// large inside objects and zero across label boundaries, and mask logits
/// that keep convex upsampling on each fine pixel's own label. Ground truth
/// is stored at full resolution and reduced on demand to whatever scale the
/// inputs arrive at, with the same downsampling rules the pipeline uses for
/// its rasters.
pub struct OracleOperator {
    gt_field: SE3Field,
    labels: Grid<u32>,
    inverse_depth: Grid<f64>,
    camera: PinholeCamera,
    embedding_channels: usize,
    edge_weight: f64,
}

impl OracleOperator {
    pub fn new(
        gt_field: SE3Field,
        labels: Grid<u32>,
        inverse_depth: Grid<f64>,
        camera: PinholeCamera,
        embedding_channels: usize,
    ) -> Result<Self> {
        let (w, h) = (gt_field.width(), gt_field.height());
        if (labels.width(), labels.height()) != (w, h)
            || (inverse_depth.width(), inverse_depth.height()) != (w, h)
        {
            return Err(Error::ShapeMismatch {
                expected: (w, h),
                got: (labels.width(), labels.height()),
            });
        }
        if embedding_channels < 2 {
            return Err(Error::InvalidArgument { what: "oracle needs at least 2 embedding channels" });
        }
        Ok(OracleOperator {
            gt_field,
            labels,
            inverse_depth,
            camera,
            embedding_channels,
            edge_weight: DEFAULT_ORACLE_EDGE_WEIGHT,
        })
    }

    pub fn from_scene(
        scene: &GeneratedScene,
        camera: &PinholeCamera,
        embedding_channels: usize,
    ) -> Result<Self> {
        Self::new(
            scene.gt_field.clone(),
            scene.labels.clone(),
            scene.frame1.inverse_depth.clone(),
            *camera,
            embedding_channels,
        )
    }

    /// Downsampling factor implied by an input raster shape.
    fn factor_for(&self, w: usize, h: usize) -> Result<usize> {
        let (fw, fh) = (self.inverse_depth.width(), self.inverse_depth.height());
        if w == 0 || h == 0 || fw % w != 0 || fh / h != fw / w || fh % h != 0 {
            return Err(Error::ShapeMismatch { expected: (fw, fh), got: (w, h) });
        }
        Ok(fw / w)
    }
}

impl UpdateOperator for OracleOperator {
    fn embedding_channels(&self) -> usize {
        self.embedding_channels
    }

    fn update(
        &self,
        state: HiddenState,
        inputs: &UpdateInputs,
    ) -> Result<(HiddenState, UpdateOutputs)> {
        let (w, h) = check_input_shapes(inputs)?;
        if inputs.embeddings.channels() != self.embedding_channels {
            return Err(Error::InvalidArgument { what: "oracle embedding channel count" });
        }
        let factor = self.factor_for(w, h)?;
        let (cam, depth, labels, gt) = if factor == 1 {
            (self.camera, self.inverse_depth.clone(), self.labels.clone(), self.gt_field.clone())
        } else {
            (
                self.camera.downscaled(factor as u32),
                self.inverse_depth.downsample_positive_mean(factor),
                self.labels.downsample_center(factor),
                self.gt_field.downsample_center(factor),
            )
        };

        let mut current = SE3Field::identity(w, h);
        for y in 0..h {
            for x in 0..w {
                let px: [f64; 6] = inputs.twist_field.pixel(x, y).try_into().expect("6 channels");
                current.set(x, y, se3::exp(&Twist::from_array(px))?)?;
            }
        }
        let (current_flow, current_valid) = induced_flow(&current, &depth, &cam)?;
        let (gt_flow, gt_valid) = induced_flow(&gt, &depth, &cam)?;

        let mut revision = ChannelGrid::new(w, h, 3);
        let mut confidence = ChannelGrid::new(w, h, 3);
        let mut embeddings = ChannelGrid::new(w, h, self.embedding_channels);
        for y in 0..h {
            for x in 0..w {
                if gt_valid.at(x, y) && current_valid.at(x, y) {
                    let g = gt_flow.at(x, y);
                    let c = current_flow.at(x, y);
                    revision.pixel_mut(x, y).copy_from_slice(&[
                        g.0 - c.0,
                        g.1 - c.1,
                        g.2 - c.2,
                    ]);
                    confidence.pixel_mut(x, y).fill(1.0);
                }
                let slot = self.labels_to_channel(labels.at(x, y));
                embeddings.set_value(x, y, slot, ORACLE_EMBEDDING_SCALE);
            }
        }

        let wx = Grid::from_fn(w, h, |x, y| {
            if x + 1 < w && labels.at(x, y) == labels.at(x + 1, y) {
                self.edge_weight
            } else {
                0.0
            }
        });
        let wy = Grid::from_fn(w, h, |x, y| {
            if y + 1 < h && labels.at(x, y) == labels.at(x, y + 1) {
                self.edge_weight
            } else {
                0.0
            }
        });
        let edge_weights = EdgeWeightField::new(wx, wy)?;
        let mask_logits = self.mask_logits(&labels, factor, w, h);

        Ok((state, UpdateOutputs { revision, confidence, embeddings, edge_weights, mask_logits }))
    }
}

impl OracleOperator {
    fn labels_to_channel(&self, label: u32) -> usize {
        label as usize % self.embedding_channels
    }

    /// Upsampling-mask logits that favor coarse neighbors sharing each fine
    /// pixel's label. Neighbor addressing clamps at the border exactly like
    /// the convex upsampler, so the penalties land on the cells the upsample
    /// would actually read. A fine pixel with no same-label neighbor gets
    /// equal logits, which the softmax turns into a uniform blend.
    fn mask_logits(
        &self,
        coarse_labels: &Grid<u32>,
        factor: usize,
        w: usize,
        h: usize,
    ) -> ChannelGrid {
        let fine_labels = if factor == 1 {
            Grid::from_fn(2 * w, 2 * h, |x, y| self.labels.at(x / 2, y / 2))
        } else {
            self.labels.downsample_center(factor / 2)
        };
        let mut logits = ChannelGrid::new(2 * w, 2 * h, 9);
        for yf in 0..2 * h {
            for xf in 0..2 * w {
                let target = fine_labels.at(xf, yf);
                let (px, py) = ((xf / 2) as i64, (yf / 2) as i64);
                let pixel = logits.pixel_mut(xf, yf);
                for (k, logit) in pixel.iter_mut().enumerate() {
                    let nx = (px + (k % 3) as i64 - 1).clamp(0, w as i64 - 1) as usize;
                    let ny = (py + (k / 3) as i64 - 1).clamp(0, h as i64 - 1) as usize;
                    if coarse_labels.at(nx, ny) != target {
                        *logit = ORACLE_MASK_PENALTY;
                    }
                }
            }
        }
        logits
    }
}
