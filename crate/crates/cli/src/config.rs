//! JSON configuration documents for the `run` and `synth` subcommands.
//!
//! Documents are strict: unknown fields are rejected before any computation
//! starts, and the resolved document is written next to the outputs so a run
//! can be reproduced from its artifacts alone.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use se3flow_core::camera::PinholeCamera;
use se3flow_core::correlation::CorrelationMode;
use se3flow_core::linalg::Vec3;
use se3flow_core::pipeline::{PipelineConfig, ScaleInit};
use se3flow_core::se3::{self, SE3Transform, Twist};
use se3flow_core::synth::{ObjectShape, SceneObject, SceneSpec, TextureSpec};
use serde::{Deserialize, Serialize};

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).context("serializing config")?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraDocument {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraDocument {
    pub fn to_camera(self) -> Result<PinholeCamera> {
        PinholeCamera::new(self.fx, self.fy, self.cx, self.cy)
            .map_err(|e| anyhow::anyhow!("camera: {e:?}"))
    }
}

/// Correlation evaluation choice by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationChoice {
    Materialized,
    OnDemand,
}

impl From<CorrelationChoice> for CorrelationMode {
    fn from(c: CorrelationChoice) -> CorrelationMode {
        match c {
            CorrelationChoice::Materialized => CorrelationMode::Materialized,
            CorrelationChoice::OnDemand => CorrelationMode::OnDemand,
        }
    }
}

/// Scale-transition strategy by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleInitChoice {
    ReinitHiddenUpsampleEmbeddings,
    ReinitHiddenReinitEmbeddings,
    UpsampleHiddenReinitEmbeddings,
    UpsampleHiddenUpsampleEmbeddings,
}

impl ScaleInitChoice {
    /// All strategies, for ablation sweeps and flag validation.
    pub const ALL: [ScaleInitChoice; 4] = [
        ScaleInitChoice::ReinitHiddenUpsampleEmbeddings,
        ScaleInitChoice::ReinitHiddenReinitEmbeddings,
        ScaleInitChoice::UpsampleHiddenReinitEmbeddings,
        ScaleInitChoice::UpsampleHiddenUpsampleEmbeddings,
    ];

    pub fn parse(name: &str) -> Result<ScaleInitChoice> {
        for choice in Self::ALL {
            if choice.name() == name {
                return Ok(choice);
            }
        }
        bail!("unknown scale-init strategy {name:?}; expected one of reinit_hidden_upsample_embeddings, reinit_hidden_reinit_embeddings, upsample_hidden_reinit_embeddings, upsample_hidden_upsample_embeddings");
    }

    pub fn name(self) -> &'static str {
        match self {
            ScaleInitChoice::ReinitHiddenUpsampleEmbeddings => "reinit_hidden_upsample_embeddings",
            ScaleInitChoice::ReinitHiddenReinitEmbeddings => "reinit_hidden_reinit_embeddings",
            ScaleInitChoice::UpsampleHiddenReinitEmbeddings => "upsample_hidden_reinit_embeddings",
            ScaleInitChoice::UpsampleHiddenUpsampleEmbeddings => {
                "upsample_hidden_upsample_embeddings"
            }
        }
    }
}

impl From<ScaleInitChoice> for ScaleInit {
    fn from(c: ScaleInitChoice) -> ScaleInit {
        match c {
            ScaleInitChoice::ReinitHiddenUpsampleEmbeddings => {
                ScaleInit::ReinitHiddenUpsampleEmbeddings
            }
            ScaleInitChoice::ReinitHiddenReinitEmbeddings => ScaleInit::ReinitHiddenReinitEmbeddings,
            ScaleInitChoice::UpsampleHiddenReinitEmbeddings => {
                ScaleInit::UpsampleHiddenReinitEmbeddings
            }
            ScaleInitChoice::UpsampleHiddenUpsampleEmbeddings => {
                ScaleInit::UpsampleHiddenUpsampleEmbeddings
            }
        }
    }
}

/// Pipeline selection: a scale-count preset plus optional overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineDocument {
    /// Number of pyramid scales: 3 or 4.
    pub scales: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lookup_radius: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<CorrelationChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_init: Option<ScaleInitChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothing: Option<bool>,
}

impl Default for PipelineDocument {
    fn default() -> Self {
        PipelineDocument {
            scales: 3,
            damping: None,
            lookup_radius: None,
            correlation: None,
            scale_init: None,
            smoothing: None,
        }
    }
}

impl PipelineDocument {
    pub fn to_config(&self) -> Result<PipelineConfig> {
        let mut cfg = match self.scales {
            3 => PipelineConfig::three_scale(),
            4 => PipelineConfig::four_scale(),
            n => bail!("pipeline.scales must be 3 or 4, got {n}"),
        };
        if let Some(damping) = self.damping {
            cfg.damping = damping;
        }
        if let Some(radius) = self.lookup_radius {
            cfg.lookup_radius = radius;
        }
        if let Some(correlation) = self.correlation {
            cfg.correlation_mode = correlation.into();
        }
        if let Some(scale_init) = self.scale_init {
            cfg.scale_init = scale_init.into();
        }
        if let Some(smoothing) = self.smoothing {
            cfg.smoothing = smoothing;
        }
        cfg.validate().map_err(|e| anyhow::anyhow!("pipeline: {e:?}"))?;
        Ok(cfg)
    }
}

fn default_hidden() -> usize {
    32
}

fn default_context() -> usize {
    24
}

fn default_embedding() -> usize {
    16
}

fn default_encoder() -> usize {
    32
}

/// Update-operator choice. `cost_channels` is never configured here; it is
/// derived from the pipeline's lookup radius.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorDocument {
    /// Seeded recurrent unit, optionally loaded from a weights file.
    Reference {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<String>,
        #[serde(default = "default_hidden")]
        hidden_channels: usize,
        #[serde(default = "default_context")]
        context_channels: usize,
        #[serde(default = "default_embedding")]
        embedding_channels: usize,
        #[serde(default = "default_encoder")]
        encoder_channels: usize,
    },
    /// Ground-truth oracle built from a generated scene directory.
    Oracle {
        scene: String,
        #[serde(default = "default_embedding")]
        embedding_channels: usize,
    },
}

impl Default for OperatorDocument {
    fn default() -> Self {
        OperatorDocument::Reference {
            seed: Some(0),
            weights: None,
            hidden_channels: default_hidden(),
            context_channels: default_context(),
            embedding_channels: default_embedding(),
            encoder_channels: default_encoder(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderDocument {
    /// Seed of the feature and context projection banks; channel widths
    /// follow the operator configuration.
    pub seed: u64,
}

impl Default for EncoderDocument {
    fn default() -> Self {
        EncoderDocument { seed: 0 }
    }
}

/// Input rasters: color as 3-channel rasters, inverse depth as PFM.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputsDocument {
    pub color1: String,
    pub inverse_depth1: String,
    pub color2: String,
    pub inverse_depth2: String,
}

impl InputsDocument {
    /// Conventional file names inside a generated scene directory.
    pub fn for_scene_dir(dir: &Path) -> InputsDocument {
        let join = |name: &str| dir.join(name).to_string_lossy().into_owned();
        InputsDocument {
            color1: join("frame1_color.sfr1"),
            inverse_depth1: join("frame1_inverse_depth.pfm"),
            color2: join("frame2_color.sfr1"),
            inverse_depth2: join("frame2_inverse_depth.pfm"),
        }
    }
}

/// Complete configuration of one `run` invocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunDocument {
    pub camera: CameraDocument,
    #[serde(default)]
    pub pipeline: PipelineDocument,
    #[serde(default)]
    pub operator: OperatorDocument,
    #[serde(default)]
    pub encoder: EncoderDocument,
    pub inputs: InputsDocument,
}

impl RunDocument {
    pub fn load(path: &Path) -> Result<RunDocument> {
        load_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_json(path, self)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextureDocument {
    pub seed: u64,
    pub frequency: f64,
}

impl From<TextureDocument> for TextureSpec {
    fn from(t: TextureDocument) -> TextureSpec {
        TextureSpec { seed: t.seed, frequency: t.frequency }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeDocument {
    Rect { half_width: f64, half_height: f64 },
    Box { half_extents: [f64; 3] },
}

impl From<ShapeDocument> for ObjectShape {
    fn from(s: ShapeDocument) -> ObjectShape {
        match s {
            ShapeDocument::Rect { half_width, half_height } => {
                ObjectShape::Rect { half_width, half_height }
            }
            ShapeDocument::Box { half_extents: [x, y, z] } => {
                ObjectShape::Box { half_extents: Vec3::new(x, y, z) }
            }
        }
    }
}

fn zero3() -> [f64; 3] {
    [0.0; 3]
}

fn zero6() -> [f64; 6] {
    [0.0; 6]
}

/// Rigid placement: a translation plus an axis-angle rotation vector.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseDocument {
    pub translation: [f64; 3],
    #[serde(default = "zero3")]
    pub rotation: [f64; 3],
}

impl PoseDocument {
    pub fn to_transform(self) -> Result<SE3Transform> {
        let [rx, ry, rz] = self.rotation;
        let pure_rotation = se3::exp(&Twist::new(Vec3::ZERO, Vec3::new(rx, ry, rz)))
            .map_err(|e| anyhow::anyhow!("pose rotation: {e:?}"))?;
        let [tx, ty, tz] = self.translation;
        SE3Transform::from_parts(pure_rotation.rotation, Vec3::new(tx, ty, tz))
            .map_err(|e| anyhow::anyhow!("pose: {e:?}"))
    }
}

fn twist_transform(coords: [f64; 6], what: &str) -> Result<SE3Transform> {
    let [vx, vy, vz, wx, wy, wz] = coords;
    se3::exp(&Twist::new(Vec3::new(vx, vy, vz), Vec3::new(wx, wy, wz)))
        .map_err(|e| anyhow::anyhow!("{what}: {e:?}"))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundDocument {
    pub depth: f64,
    /// Plane tilt about the x and y axes, radians.
    #[serde(default)]
    pub tilt: [f64; 2],
    /// Camera-frame motion as twist coordinates `(vx, vy, vz, wx, wy, wz)`.
    #[serde(default = "zero6")]
    pub motion: [f64; 6],
    pub texture: TextureDocument,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectDocument {
    pub shape: ShapeDocument,
    pub pose: PoseDocument,
    /// Camera-frame motion as twist coordinates.
    #[serde(default = "zero6")]
    pub motion: [f64; 6],
    pub texture: TextureDocument,
}

/// Complete description of a synthetic scene for the `synth` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDocument {
    pub width: usize,
    pub height: usize,
    pub camera: CameraDocument,
    pub seed: u64,
    pub background: BackgroundDocument,
    #[serde(default)]
    pub objects: Vec<ObjectDocument>,
}

impl SceneDocument {
    pub fn load(path: &Path) -> Result<SceneDocument> {
        load_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_json(path, self)
    }

    pub fn to_spec(&self) -> Result<SceneSpec> {
        let mut objects = Vec::with_capacity(self.objects.len());
        for (i, object) in self.objects.iter().enumerate() {
            objects.push(SceneObject {
                shape: object.shape.into(),
                pose: object.pose.to_transform().with_context(|| format!("objects[{i}]"))?,
                motion: twist_transform(object.motion, "motion")
                    .with_context(|| format!("objects[{i}]"))?,
                texture: object.texture.into(),
            });
        }
        Ok(SceneSpec {
            camera: self.camera.to_camera()?,
            width: self.width,
            height: self.height,
            background_depth: self.background.depth,
            background_tilt: (self.background.tilt[0], self.background.tilt[1]),
            background_motion: twist_transform(self.background.motion, "background motion")?,
            background_texture: self.background.texture.into(),
            objects,
            seed: self.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn run_json() -> &'static str {
        r#"{
            "camera": {"fx": 120.0, "fy": 120.0, "cx": 47.5, "cy": 31.5},
            "pipeline": {"scales": 3, "smoothing": false},
            "operator": {"kind": "reference", "seed": 11},
            "encoder": {"seed": 3},
            "inputs": {
                "color1": "a.sfr1", "inverse_depth1": "a.pfm",
                "color2": "b.sfr1", "inverse_depth2": "b.pfm"
            }
        }"#
    }

    #[test]
    fn run_documents_parse_and_apply_defaults() {
        let doc: RunDocument = serde_json::from_str(run_json()).unwrap();
        let cfg = doc.pipeline.to_config().unwrap();
        assert_eq!(cfg.scales.len(), 3);
        assert!(!cfg.smoothing);
        match doc.operator {
            OperatorDocument::Reference { seed, hidden_channels, context_channels, .. } => {
                assert_eq!(seed, Some(11));
                assert_eq!(hidden_channels, 32);
                assert_eq!(context_channels, 24);
            }
            _ => panic!("expected the reference operator"),
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let with_extra = run_json().replace("\"seed\": 3", "\"seed\": 3, \"extra\": 1");
        assert!(serde_json::from_str::<RunDocument>(&with_extra).is_err());
    }

    #[test]
    fn out_of_range_scale_counts_are_rejected() {
        let doc = PipelineDocument { scales: 5, ..PipelineDocument::default() };
        assert!(doc.to_config().is_err());
        let doc = PipelineDocument { scales: 4, ..PipelineDocument::default() };
        assert_eq!(doc.to_config().unwrap().scales.len(), 4);
    }

    #[test]
    fn pipeline_overrides_reach_the_config() {
        let doc = PipelineDocument {
            scales: 3,
            damping: Some(0.5),
            lookup_radius: Some(2),
            correlation: Some(CorrelationChoice::OnDemand),
            scale_init: Some(ScaleInitChoice::UpsampleHiddenUpsampleEmbeddings),
            smoothing: None,
        };
        let cfg = doc.to_config().unwrap();
        assert_eq!(cfg.damping, 0.5);
        assert_eq!(cfg.lookup_radius, 2);
        assert_eq!(cfg.correlation_mode, CorrelationMode::OnDemand);
        assert_eq!(cfg.scale_init, ScaleInit::UpsampleHiddenUpsampleEmbeddings);
        assert!(cfg.smoothing);
    }

    #[test]
    fn scale_init_names_round_trip() {
        for choice in ScaleInitChoice::ALL {
            assert_eq!(ScaleInitChoice::parse(choice.name()).unwrap(), choice);
        }
        assert!(ScaleInitChoice::parse("mystery").is_err());
    }

    #[test]
    fn scene_documents_build_generator_specs() {
        let json = r#"{
            "width": 48, "height": 32,
            "camera": {"fx": 60.0, "fy": 60.0, "cx": 23.5, "cy": 15.5},
            "seed": 5,
            "background": {
                "depth": 2.5, "tilt": [0.05, 0.0],
                "texture": {"seed": 1, "frequency": 6.0}
            },
            "objects": [{
                "shape": {"kind": "box", "half_extents": [0.3, 0.25, 0.2]},
                "pose": {"translation": [0.0, 0.1, 1.5], "rotation": [0.0, 0.3, 0.0]},
                "motion": [0.05, 0.0, 0.0, 0.0, 0.0, 0.02],
                "texture": {"seed": 2, "frequency": 9.0}
            }]
        }"#;
        let doc: SceneDocument = serde_json::from_str(json).unwrap();
        let spec = doc.to_spec().unwrap();
        assert_eq!((spec.width, spec.height), (48, 32));
        assert_eq!(spec.background_depth, 2.5);
        assert_eq!(spec.objects.len(), 1);
        assert_eq!(spec.objects[0].pose.translation, Vec3::new(0.0, 0.1, 1.5));
        let scene = se3flow_core::synth::generate(&spec).unwrap();
        assert_eq!(scene.frame1.color.width(), 48);
    }

    #[test]
    fn pose_rotation_uses_axis_angle() {
        let pose = PoseDocument {
            translation: [1.0, 2.0, 3.0],
            rotation: [0.0, 0.0, core::f64::consts::FRAC_PI_2],
        };
        let tf = pose.to_transform().unwrap();
        let rotated = tf.rotation.rotate(Vec3::new(1.0, 0.0, 0.0));
        assert!((rotated.x).abs() < 1e-12 && (rotated.y - 1.0).abs() < 1e-12);
        assert_eq!(tf.translation, Vec3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn documents_round_trip_through_files() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("run.json");
        let doc: RunDocument = serde_json::from_str(run_json()).unwrap();
        doc.save(&path).unwrap();
        let loaded = RunDocument::load(&path).unwrap();
        assert_eq!(serde_json::to_string(&loaded).unwrap(), serde_json::to_string(&doc).unwrap());
    }
}
