//! JSON persistence for the recurrent update operator's weights.
//!
//! The document stores the channel configuration, the originating seed when
//! one exists, and all ten convolution banks with full-precision values, so
//! a saved operator reloads bit-exactly.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use se3flow_core::nn::ConvLayer;
use se3flow_core::update::{ReferenceGru, UpdateConfig};
use serde::{Deserialize, Serialize};

/// Every layer name the operator defines; loads map strings back to these.
const LAYER_NAMES: [&str; 10] = [
    "enc1",
    "enc2",
    "gru_update",
    "gru_reset",
    "gru_candidate",
    "head_revision",
    "head_confidence",
    "head_embeddings",
    "head_edges",
    "head_mask",
];

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDocument {
    hidden_channels: usize,
    context_channels: usize,
    embedding_channels: usize,
    cost_channels: usize,
    encoder_channels: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDocument {
    name: String,
    in_channels: usize,
    out_channels: usize,
    kernel: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsDocument {
    seed: Option<u64>,
    config: ConfigDocument,
    layers: Vec<LayerDocument>,
}

/// Serializes an operator's configuration and layers to a JSON file.
pub fn save_weights(path: &Path, gru: &ReferenceGru) -> Result<()> {
    let config = gru.config();
    let doc = WeightsDocument {
        seed: gru.seed(),
        config: ConfigDocument {
            hidden_channels: config.hidden_channels,
            context_channels: config.context_channels,
            embedding_channels: config.embedding_channels,
            cost_channels: config.cost_channels,
            encoder_channels: config.encoder_channels,
        },
        layers: gru
            .layers()
            .iter()
            .map(|layer| LayerDocument {
                name: layer.name().to_string(),
                in_channels: layer.in_channels(),
                out_channels: layer.out_channels(),
                kernel: layer.kernel().to_vec(),
                bias: layer.bias().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&doc).context("serializing weights")?;
    fs::write(path, json).with_context(|| format!("writing {}", path.display()))
}

/// Loads an operator saved by [`save_weights`].
pub fn load_weights(path: &Path) -> Result<ReferenceGru> {
    let json = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc: WeightsDocument =
        serde_json::from_str(&json).with_context(|| format!("parsing {}", path.display()))?;
    let config = UpdateConfig {
        hidden_channels: doc.config.hidden_channels,
        context_channels: doc.config.context_channels,
        embedding_channels: doc.config.embedding_channels,
        cost_channels: doc.config.cost_channels,
        encoder_channels: doc.config.encoder_channels,
    };
    let mut layers = Vec::with_capacity(doc.layers.len());
    for layer in doc.layers {
        let Some(name) = LAYER_NAMES.iter().find(|n| **n == layer.name) else {
            bail!("{}: unknown layer {:?}", path.display(), layer.name);
        };
        layers.push(
            ConvLayer::from_parts(name, layer.in_channels, layer.out_channels, layer.kernel, layer.bias)
                .map_err(|e| anyhow::anyhow!("{}: layer {}: {e:?}", path.display(), name))?,
        );
    }
    ReferenceGru::from_layers(config, layers)
        .map_err(|e| anyhow::anyhow!("{}: {e:?}", path.display()))
}
