//! The `synth`, `run`, and `eval` subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use se3flow_core::features::HandcraftedEncoder;
use se3flow_core::field::{FlowField, SE3Field};
use se3flow_core::loss;
use se3flow_core::pipeline::{self, EstimateResult};
use se3flow_core::raster::{ChannelGrid, Grid, RgbdFrame};
use se3flow_core::se3::{self, Twist};
use se3flow_core::synth;
use se3flow_core::update::{OracleOperator, ReferenceGru, UpdateConfig, UpdateOperator};

use crate::config::{OperatorDocument, RunDocument, ScaleInitChoice, SceneDocument};
use crate::formats;
use crate::padding;
use crate::weights;

/// The resolution multiple `run` pads its inputs to.
pub const PAD_MULTIPLE: usize = 16;

fn flow_to_2d(flow: &FlowField) -> ChannelGrid {
    let mut out = ChannelGrid::new(flow.width(), flow.height(), 2);
    for y in 0..flow.height() {
        for x in 0..flow.width() {
            let (dx, dy, _) = flow.at(x, y);
            out.pixel_mut(x, y).copy_from_slice(&[dx, dy]);
        }
    }
    out
}

fn flow_depth_change(flow: &FlowField) -> Grid<f64> {
    Grid::from_fn(flow.width(), flow.height(), |x, y| flow.at(x, y).2)
}

fn flow_from_parts(flow2d: &ChannelGrid, depth_change: &Grid<f64>) -> Result<FlowField> {
    ensure!(
        flow2d.width() == depth_change.width() && flow2d.height() == depth_change.height(),
        "flow is {}x{} but the inverse-depth change is {}x{}",
        flow2d.width(),
        flow2d.height(),
        depth_change.width(),
        depth_change.height()
    );
    let mut out = FlowField::zeros(flow2d.width(), flow2d.height());
    for y in 0..flow2d.height() {
        for x in 0..flow2d.width() {
            let p = flow2d.pixel(x, y);
            out.set(x, y, p[0], p[1], depth_change.at(x, y));
        }
    }
    Ok(out)
}

fn field_to_log_raster(field: &SE3Field) -> Result<ChannelGrid> {
    let mut out = ChannelGrid::new(field.width(), field.height(), 6);
    for y in 0..field.height() {
        for x in 0..field.width() {
            let xi = se3::log(field.at(x, y))
                .map_err(|e| anyhow::anyhow!("field log at ({x}, {y}): {e:?}"))?;
            out.pixel_mut(x, y).copy_from_slice(&xi.to_array());
        }
    }
    Ok(out)
}

fn field_from_log_raster(grid: &ChannelGrid) -> Result<SE3Field> {
    ensure!(grid.channels() == 6, "field rasters hold 6 channels, got {}", grid.channels());
    let mut out = SE3Field::identity(grid.width(), grid.height());
    for y in 0..grid.height() {
        for x in 0..grid.width() {
            let xi: [f64; 6] = grid.pixel(x, y).try_into().expect("6 channels");
            let tf = se3::exp(&Twist::from_array(xi))
                .map_err(|e| anyhow::anyhow!("field exp at ({x}, {y}): {e:?}"))?;
            out.set(x, y, tf).map_err(|e| anyhow::anyhow!("field at ({x}, {y}): {e:?}"))?;
        }
    }
    Ok(out)
}

/// Generates a synthetic scene directory from a scene configuration.
pub fn synth(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut doc = SceneDocument::load(config)?;
    if let Some(seed) = seed {
        doc.seed = seed;
    }
    let spec = doc.to_spec()?;
    let scene = synth::generate(&spec).map_err(|e| anyhow::anyhow!("generating scene: {e:?}"))?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    formats::write_raster(&out.join("frame1_color.sfr1"), &scene.frame1.color)?;
    formats::write_pfm(&out.join("frame1_inverse_depth.pfm"), &scene.frame1.inverse_depth)?;
    formats::write_raster(&out.join("frame2_color.sfr1"), &scene.frame2.color)?;
    formats::write_pfm(&out.join("frame2_inverse_depth.pfm"), &scene.frame2.inverse_depth)?;
    formats::write_flow(&out.join("gt_flow.flo"), &flow_to_2d(&scene.gt_flow))?;
    formats::write_pfm(
        &out.join("gt_inverse_depth_change.pfm"),
        &flow_depth_change(&scene.gt_flow),
    )?;
    formats::write_raster(&out.join("gt_field.sfr1"), &field_to_log_raster(&scene.gt_field)?)?;
    formats::write_label_raster(&out.join("gt_labels.sfr1"), &scene.labels)?;
    formats::write_mask_raster(&out.join("gt_flow_valid.sfr1"), &scene.gt_flow_valid)?;
    formats::write_mask_raster(&out.join("gt_occlusion.sfr1"), &scene.occlusion)?;
    doc.save(&out.join("scene_config.json"))?;

    let occluded = (0..spec.height)
        .flat_map(|y| (0..spec.width).map(move |x| (x, y)))
        .filter(|&(x, y)| scene.occlusion.at(x, y))
        .count();
    println!(
        "synth: wrote {}x{} scene with {} objects ({} occluded pixels) to {}",
        spec.width,
        spec.height,
        spec.objects.len(),
        occluded,
        out.display()
    );
    Ok(())
}

/// Command-line overrides applied on top of a run configuration.
#[derive(Debug, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub scales: Option<u32>,
    pub operator: Option<String>,
    pub no_smoothing: bool,
    pub scale_init: Option<ScaleInitChoice>,
}

fn rewrite_operator(doc: &RunDocument, flag: &str) -> Result<OperatorDocument> {
    if let Some(path) = flag.strip_prefix("weights:") {
        ensure!(!path.is_empty(), "--operator weights: needs a file path");
        let mut op = match &doc.operator {
            reference @ OperatorDocument::Reference { .. } => reference.clone(),
            OperatorDocument::Oracle { .. } => OperatorDocument::default(),
        };
        if let OperatorDocument::Reference { weights, .. } = &mut op {
            *weights = Some(path.to_string());
        }
        return Ok(op);
    }
    match flag {
        "reference" => {
            let mut op = match &doc.operator {
                reference @ OperatorDocument::Reference { .. } => reference.clone(),
                OperatorDocument::Oracle { .. } => OperatorDocument::default(),
            };
            if let OperatorDocument::Reference { weights, .. } = &mut op {
                *weights = None;
            }
            Ok(op)
        }
        "oracle" => match &doc.operator {
            oracle @ OperatorDocument::Oracle { .. } => Ok(oracle.clone()),
            OperatorDocument::Reference { embedding_channels, .. } => {
                let scene_dir = Path::new(&doc.inputs.color1)
                    .parent()
                    .filter(|p| !p.as_os_str().is_empty())
                    .unwrap_or_else(|| Path::new("."));
                Ok(OperatorDocument::Oracle {
                    scene: scene_dir.to_string_lossy().into_owned(),
                    embedding_channels: (*embedding_channels).max(2),
                })
            }
        },
        other => bail!("--operator must be reference, oracle, or weights:<path>, got {other:?}"),
    }
}

fn read_frame(color: &str, inverse_depth: &str) -> Result<RgbdFrame> {
    let color = formats::read_raster(Path::new(color))?;
    let inverse_depth = formats::read_pfm(Path::new(inverse_depth))?;
    RgbdFrame::new(color, inverse_depth).map_err(|e| anyhow::anyhow!("assembling frame: {e:?}"))
}

fn build_oracle(
    scene_dir: &Path,
    embedding_channels: usize,
    cam: &se3flow_core::camera::PinholeCamera,
    original: (usize, usize),
    padded: (usize, usize),
) -> Result<OracleOperator> {
    let gt_field = field_from_log_raster(&formats::read_raster(&scene_dir.join("gt_field.sfr1"))?)?;
    let labels = formats::read_label_raster(&scene_dir.join("gt_labels.sfr1"))?;
    let inverse_depth = formats::read_pfm(&scene_dir.join("frame1_inverse_depth.pfm"))?;
    ensure!(
        (gt_field.width(), gt_field.height()) == original,
        "scene ground truth is {}x{} but the inputs are {}x{}",
        gt_field.width(),
        gt_field.height(),
        original.0,
        original.1
    );
    let (pw, ph) = padded;
    OracleOperator::new(
        padding::pad_field_to(&gt_field, pw, ph)?,
        padding::pad_grid_to(&labels, pw, ph),
        padding::pad_grid_to(&inverse_depth, pw, ph),
        *cam,
        embedding_channels,
    )
    .map_err(|e| anyhow::anyhow!("building oracle: {e:?}"))
}

fn trace_manifest(result: &EstimateResult) -> String {
    let mut text = String::from("# scale iteration working_width working_height mean_flow_px\n");
    for entry in &result.trace {
        let mut total = 0.0;
        let mut count = 0usize;
        for y in 0..entry.flow.height() {
            for x in 0..entry.flow.width() {
                if entry.flow_valid.at(x, y) {
                    let (dx, dy, _) = entry.flow.at(x, y);
                    total += (dx * dx + dy * dy).sqrt();
                    count += 1;
                }
            }
        }
        let mean = if count == 0 { 0.0 } else { total / count as f64 };
        text.push_str(&format!(
            "{} {} {} {} {:.9}\n",
            entry.scale_index,
            entry.iteration,
            entry.revised_flow.width(),
            entry.revised_flow.height(),
            mean
        ));
    }
    text
}

/// Estimates scene flow for a configured frame pair and writes the outputs.
pub fn run(config: &Path, overrides: &RunOverrides, out: &Path) -> Result<()> {
    let started = Instant::now();
    let mut doc = RunDocument::load(config)?;
    if let Some(scales) = overrides.scales {
        doc.pipeline.scales = scales;
    }
    if overrides.no_smoothing {
        doc.pipeline.smoothing = Some(false);
    }
    if let Some(scale_init) = overrides.scale_init {
        doc.pipeline.scale_init = Some(scale_init);
    }
    if let Some(flag) = &overrides.operator {
        doc.operator = rewrite_operator(&doc, flag)?;
    }
    if let Some(seed) = overrides.seed {
        doc.encoder.seed = seed;
        if let OperatorDocument::Reference { seed: op_seed, .. } = &mut doc.operator {
            *op_seed = Some(seed);
        }
    }

    let cam = doc.camera.to_camera()?;
    let cfg = doc.pipeline.to_config()?;
    let frame1 = read_frame(&doc.inputs.color1, &doc.inputs.inverse_depth1)
        .context("reading first frame")?;
    let frame2 = read_frame(&doc.inputs.color2, &doc.inputs.inverse_depth2)
        .context("reading second frame")?;
    let original = (frame1.color.width(), frame1.color.height());
    ensure!(
        (frame2.color.width(), frame2.color.height()) == original,
        "frame sizes differ: {}x{} vs {}x{}",
        original.0,
        original.1,
        frame2.color.width(),
        frame2.color.height()
    );
    let padded1 = padding::pad_frame(&frame1, PAD_MULTIPLE)?;
    let padded2 = padding::pad_frame(&frame2, PAD_MULTIPLE)?;
    let padded = (padded1.color.width(), padded1.color.height());

    let (operator, encoder): (Box<dyn UpdateOperator>, HandcraftedEncoder) = match &doc.operator {
        OperatorDocument::Reference {
            seed,
            weights: weights_path,
            hidden_channels,
            context_channels,
            embedding_channels,
            encoder_channels,
        } => {
            let gru = match weights_path {
                Some(path) => {
                    let gru = weights::load_weights(Path::new(path))?;
                    ensure!(
                        gru.config().cost_channels == cfg.cost_channels(),
                        "weights expect {} cost channels but the pipeline produces {}",
                        gru.config().cost_channels,
                        cfg.cost_channels()
                    );
                    gru
                }
                None => {
                    let update_config = UpdateConfig {
                        hidden_channels: *hidden_channels,
                        context_channels: *context_channels,
                        embedding_channels: *embedding_channels,
                        cost_channels: cfg.cost_channels(),
                        encoder_channels: *encoder_channels,
                    };
                    ReferenceGru::seeded(update_config, seed.unwrap_or(0))
                        .map_err(|e| anyhow::anyhow!("building operator: {e:?}"))?
                }
            };
            let encoder = HandcraftedEncoder::new(
                doc.encoder.seed,
                gru.config().hidden_channels,
                gru.config().context_channels,
            );
            (Box::new(gru), encoder)
        }
        OperatorDocument::Oracle { scene, embedding_channels } => {
            let oracle =
                build_oracle(Path::new(scene), *embedding_channels, &cam, original, padded)?;
            let encoder = HandcraftedEncoder::new(doc.encoder.seed, 8, 6);
            (Box::new(oracle), encoder)
        }
    };

    let result = pipeline::estimate(
        &padded1,
        &padded2,
        &cam,
        &encoder,
        &encoder,
        operator.as_ref(),
        &cfg,
    )
    .map_err(|e| anyhow::anyhow!("estimation failed: {e:?}"))?;

    let field = padding::crop_field(&result.field, original.0, original.1)?;
    let flow = padding::crop_flow(&result.flow, original.0, original.1)?;
    let valid = padding::crop_mask(&result.flow_valid, original.0, original.1)?;

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    formats::write_raster(&out.join("field.sfr1"), &field_to_log_raster(&field)?)?;
    formats::write_flow(&out.join("flow.flo"), &flow_to_2d(&flow))?;
    formats::write_pfm(&out.join("inverse_depth_change.pfm"), &flow_depth_change(&flow))?;
    formats::write_mask_raster(&out.join("flow_valid.sfr1"), &valid)?;
    fs::write(out.join("trace.txt"), trace_manifest(&result))
        .with_context(|| format!("writing {}", out.join("trace.txt").display()))?;
    doc.save(&out.join("run_config.json"))?;

    println!(
        "run: {} iterations over {} scales on {}x{} (padded {}x{}) in {:.2} s -> {}",
        result.trace.len(),
        cfg.scales.len(),
        original.0,
        original.1,
        padded.0,
        padded.1,
        started.elapsed().as_secs_f64(),
        out.display()
    );
    Ok(())
}

/// Scores an estimate directory against a generated scene directory.
pub fn eval(est_dir: &Path, gt_dir: &Path, out: Option<&Path>) -> Result<()> {
    let est_flow2d = formats::read_flow(&est_dir.join("flow.flo"))?;
    let est_depth_change = formats::read_pfm(&est_dir.join("inverse_depth_change.pfm"))?;
    let est = flow_from_parts(&est_flow2d, &est_depth_change).context("estimate")?;

    let gt_flow2d = formats::read_flow(&gt_dir.join("gt_flow.flo"))?;
    let gt_depth_change = formats::read_pfm(&gt_dir.join("gt_inverse_depth_change.pfm"))?;
    let gt = flow_from_parts(&gt_flow2d, &gt_depth_change).context("ground truth")?;
    let gt_valid = formats::read_mask_raster(&gt_dir.join("gt_flow_valid.sfr1"))?;
    let occlusion = formats::read_mask_raster(&gt_dir.join("gt_occlusion.sfr1"))?;
    let labels = formats::read_label_raster(&gt_dir.join("gt_labels.sfr1"))?;
    let inverse_depth1 = formats::read_pfm(&gt_dir.join("frame1_inverse_depth.pfm"))?;
    let scene_doc = SceneDocument::load(&gt_dir.join("scene_config.json"))?;
    let cam = scene_doc.camera.to_camera()?;

    ensure!(
        est.width() == gt.width() && est.height() == gt.height(),
        "estimate is {}x{} but ground truth is {}x{}",
        est.width(),
        est.height(),
        gt.width(),
        gt.height()
    );
    let valid = Grid::from_fn(gt.width(), gt.height(), |x, y| {
        gt_valid.at(x, y) && !occlusion.at(x, y)
    });
    let object_mask = Grid::from_fn(gt.width(), gt.height(), |x, y| labels.at(x, y) > 0);

    let report = loss::metrics(&est, &gt, &valid, &inverse_depth1, &cam, Some(&object_mask))
        .map_err(|e| anyhow::anyhow!("computing metrics: {e:?}"))?;
    let text = report.to_text();
    print!("{text}");
    let report_path: PathBuf =
        out.map(Path::to_path_buf).unwrap_or_else(|| est_dir.join("report.txt"));
    fs::write(&report_path, &text)
        .with_context(|| format!("writing {}", report_path.display()))?;
    Ok(())
}
