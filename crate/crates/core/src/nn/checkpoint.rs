use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{MlpArchitecture, MlpModel, TrainConfig};
use crate::numkit::Matrix;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerRecord {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// On-disk model: pretty JSON with shortest round-trip float formatting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub format_version: u32,
    pub architecture: MlpArchitecture,
    layers: Vec<LayerRecord>,
    pub train_config: Option<TrainConfig>,
    pub seed: Option<u64>,
}

impl ModelCheckpoint {
    pub fn new(model: &MlpModel, train_config: Option<&TrainConfig>, seed: Option<u64>) -> Self {
        ModelCheckpoint {
            format_version: MODEL_FORMAT_VERSION,
            architecture: model.architecture.clone(),
            layers: model
                .weights
                .iter()
                .zip(&model.biases)
                .map(|(w, b)| LayerRecord {
                    rows: w.rows(),
                    cols: w.cols(),
                    weights: w.as_slice().to_vec(),
                    bias: b.clone(),
                })
                .collect(),
            train_config: train_config.cloned(),
            seed,
        }
    }

    pub fn to_model(&self) -> Result<MlpModel> {
        self.architecture.validate()?;
        let widths = &self.architecture.layer_widths;
        if self.layers.len() + 1 != widths.len() {
            return Err(Error::Dimension(format!(
                "{} layers stored for architecture {widths:?}",
                self.layers.len()
            )));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (l, rec) in self.layers.iter().enumerate() {
            if (rec.rows, rec.cols) != (widths[l + 1], widths[l]) || rec.bias.len() != rec.rows {
                return Err(Error::Dimension(format!("layer {l} shape mismatch")));
            }
            weights.push(Matrix::from_vec(rec.rows, rec.cols, rec.weights.clone())?);
            biases.push(rec.bias.clone());
        }
        Ok(MlpModel {
            architecture: self.architecture.clone(),
            weights,
            biases,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let c: ModelCheckpoint = serde_json::from_str(text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        if c.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format {
                path: path.to_path_buf(),
                msg: format!("unsupported model format_version {}", c.format_version),
            });
        }
        Ok(c)
    }
}

pub fn save_model(
    path: impl AsRef<Path>,
    model: &MlpModel,
    train_config: Option<&TrainConfig>,
    seed: Option<u64>,
) -> Result<()> {
    let path = path.as_ref();
    let text = ModelCheckpoint::new(model, train_config, seed).to_text();
    crate::pipeline::write_atomic(path, text.as_bytes())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelCheckpoint> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ModelCheckpoint::from_text(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{weight_init, Activation, Task};
    use crate::numkit::RngState;

    #[test]
    fn save_load_save_is_byte_identical() {
        let arch = MlpArchitecture::new(
            vec![3, 5, 2],
            Activation::Tanh,
            Task::Quantile(vec![0.05, 0.95]),
        )
        .unwrap();
        let mut m = weight_init(&arch, 12).unwrap();
        let mut rng = RngState::new(1);
        for b in m.biases.iter_mut().flatten() {
            *b = rng.normal(0.0, 1e-3) / 7.0;
        }
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.json");
        let p2 = dir.path().join("b.json");
        let cfg = TrainConfig::default();
        save_model(&p1, &m, Some(&cfg), Some(12)).unwrap();
        let loaded = load_model(&p1).unwrap();
        assert_eq!(loaded.to_model().unwrap(), m);
        save_model(&p2, &loaded.to_model().unwrap(), loaded.train_config.as_ref(), loaded.seed)
            .unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn rejects_unknown_version() {
        let arch = MlpArchitecture::new(vec![1, 2], Activation::Relu, Task::Classification)
            .unwrap();
        let m = weight_init(&arch, 0).unwrap();
        let text = ModelCheckpoint::new(&m, None, None)
            .to_text()
            .replace("\"format_version\": 1", "\"format_version\": 99");
        assert!(ModelCheckpoint::from_text(&text, Path::new("x")).is_err());
    }
}
