//! Model checkpoints: every named parameter matrix plus the shapes needed to
//! rebuild the encoder and classifier, serialized as a single JSON file.
//!
//! Floats are written as shortest-round-trip decimals (serde_json's default),
//! so a save/load cycle reproduces parameter values bit for bit.

use std::fs;
use std::path::Path;

use ecl_gsr_core::classifier::ClassifierParams;
use ecl_gsr_core::diff::ParamStore;
use ecl_gsr_core::ecl::{EclDims, EclParams};
use ecl_gsr_core::matrix::Matrix;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;

/// Shape metadata for rebuilding parameter handles on load.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct ModelShape {
    /// Raw feature dimension `D` (classifier input).
    pub feature_dim: usize,
    /// Structural embedding dimension `D_s`; the encoder consumes `D + D_s`.
    pub struct_dim: usize,
    pub encoder_hidden: usize,
    pub projection_dim: usize,
    pub classifier_width: usize,
    pub classes: usize,
}

impl ModelShape {
    pub fn ecl_dims(&self) -> EclDims {
        EclDims {
            input: self.feature_dim + self.struct_dim,
            hidden: self.encoder_hidden,
            proj: self.projection_dim,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct StoredMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    config: TrainConfig,
    shape: ModelShape,
    params: Vec<(String, StoredMatrix)>,
}

/// A trained model ready to evaluate: parameter values plus the config and
/// shapes they were trained with.
#[derive(Debug)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub shape: ModelShape,
    pub store: ParamStore,
}

impl Checkpoint {
    /// Handles for the encoder/projector parameters stored here.
    pub fn ecl_params(&self) -> EclParams {
        EclParams::attach("ecl", self.shape.ecl_dims())
    }

    /// Handles for the classifier parameters stored here.
    pub fn classifier_params(&self) -> ClassifierParams {
        ClassifierParams::attach(
            "clf",
            self.shape.feature_dim,
            self.shape.classifier_width,
            self.shape.classes,
        )
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        let mut params: Vec<(String, StoredMatrix)> = self
            .store
            .iter()
            .map(|(name, m)| {
                (
                    name.to_string(),
                    StoredMatrix {
                        rows: m.rows(),
                        cols: m.cols(),
                        data: m.data().to_vec(),
                    },
                )
            })
            .collect();
        params.sort_by(|a, b| a.0.cmp(&b.0));
        for (name, m) in &params {
            if !m.data.iter().all(|v| v.is_finite()) {
                anyhow::bail!("refusing to save non-finite parameter {name}");
            }
        }
        let file = CheckpointFile {
            config: self.config.clone(),
            shape: self.shape.clone(),
            params,
        };
        let json = serde_json::to_string(&file)?;
        fs::write(path, json).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> anyhow::Result<Checkpoint> {
        let text = fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        let file: CheckpointFile = serde_json::from_str(&text)
            .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        let mut store = ParamStore::new();
        for (name, m) in file.params {
            if m.data.len() != m.rows * m.cols {
                anyhow::bail!(
                    "{}: parameter {name} claims {}x{} but holds {} values",
                    path.display(),
                    m.rows,
                    m.cols,
                    m.data.len()
                );
            }
            store
                .insert(&name, Matrix::from_vec(m.rows, m.cols, m.data))
                .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        }
        let ckpt = Checkpoint {
            config: file.config,
            shape: file.shape,
            store,
        };
        ckpt.validate(path)?;
        Ok(ckpt)
    }

    fn validate(&self, path: &Path) -> anyhow::Result<()> {
        let expected = self
            .ecl_params()
            .param_names()
            .into_iter()
            .chain(self.classifier_params().param_names());
        for name in expected {
            if self.store.get(&name).is_none() {
                anyhow::bail!("{}: missing parameter {name}", path.display());
            }
        }
        Ok(())
    }
}
