//! Model file format.
//!
//! A model file is a [`crate::container`] payload with magic `DRNNSEP1`.
//! The JSON header records the architecture, the feature recipe, and the
//! STFT configuration the model was trained against; the parameter blocks
//! follow in the order `W^1 [U^1] b^1 ... W^L [U^L] b^L W^out b^out`,
//! each row-major `(in, out)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, DrnnModel};
use crate::container::{self, FORMAT_MINOR};
use crate::error::{Error, Result};
use crate::signal::{FeatureSpec, StftConfig};

pub const MODEL_MAGIC: &[u8; 8] = b"DRNNSEP1";

/// A trained network bundled with everything needed to run it on audio.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparatorModel {
    pub model: DrnnModel,
    pub feature: FeatureSpec,
    pub stft: StftConfig,
    pub sample_rate: u32,
}

#[derive(Serialize, Deserialize)]
struct Header {
    #[serde(default)]
    format_minor: u32,
    arch: Architecture,
    feature: FeatureSpec,
    stft: StftConfig,
    sample_rate: u32,
}

pub fn save_model(bundle: &SeparatorModel, path: &Path) -> Result<()> {
    let header = Header {
        format_minor: FORMAT_MINOR,
        arch: bundle.model.arch().clone(),
        feature: bundle.feature,
        stft: bundle.stft,
        sample_rate: bundle.sample_rate,
    };
    let header_json = serde_json::to_string(&header)
        .map_err(|e| Error::Format(format!("cannot encode header: {e}")))?;
    let mut blocks: Vec<Vec<f64>> = Vec::new();
    bundle.model.visit(|block| blocks.push(block.to_vec()));
    let refs: Vec<&[f64]> = blocks.iter().map(|b| b.as_slice()).collect();
    container::write_container(path, MODEL_MAGIC, &header_json, &refs)
}

pub fn load_model(path: &Path) -> Result<SeparatorModel> {
    let (header_json, blocks) = container::read_container(path, MODEL_MAGIC)?;
    let header: Header = serde_json::from_str(&header_json)
        .map_err(|e| Error::Format(format!("cannot parse header: {e}")))?;
    header.arch.validate()?;
    header.stft.validate()?;

    let mut model = DrnnModel::zeros(header.arch)?;
    let mut expected = Vec::new();
    model.visit(|block| expected.push(block.len()));
    if blocks.len() != expected.len() {
        return Err(Error::Format(format!(
            "expected {} parameter blocks, found {}",
            expected.len(),
            blocks.len()
        )));
    }
    for (i, (block, want)) in blocks.iter().zip(&expected).enumerate() {
        if block.len() != *want {
            return Err(Error::Format(format!(
                "parameter block {i} has {} values, expected {want}",
                block.len()
            )));
        }
    }
    let mut iter = blocks.into_iter();
    model.visit_mut(|block| {
        block.copy_from_slice(&iter.next().expect("block count checked"));
    });
    Ok(SeparatorModel {
        model,
        feature: header.feature,
        stft: header.stft,
        sample_rate: header.sample_rate,
    })
}
