//! Versioned JSON model files and loss-history CSV.
//!
//! A model file holds the generator (and the autoencoder when kernel
//! learning was on) as per-layer records with row-major `out × in` weight
//! vectors, the base kernel bandwidth² and the training config that
//! produced it.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::generator::{GeneratorNet, TrainConfig, TrainOutcome};
use crate::kernel_learning::AutoencoderNet;
use crate::nn::{Dense, DenseRecord, Mlp};

pub const MODEL_FORMAT: &str = "myosub-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkRecord {
    pub layer_dims: Vec<usize>,
    pub layers: Vec<DenseRecord>,
}

impl NetworkRecord {
    fn from_mlp(mlp: &Mlp) -> Self {
        Self {
            layer_dims: mlp.dims(),
            layers: mlp.layers.iter().map(DenseRecord::from).collect(),
        }
    }

    fn into_mlp(self) -> Result<Mlp> {
        let layers = self
            .layers
            .into_iter()
            .map(Dense::try_from)
            .collect::<Result<Vec<_>>>()?;
        let mlp = Mlp::from_layers(layers)?;
        if mlp.dims() != self.layer_dims {
            return input(format!(
                "layer_dims {:?} disagree with stored layers {:?}",
                self.layer_dims,
                mlp.dims()
            ));
        }
        if !mlp.is_finite() {
            return input("stored parameters are not finite");
        }
        Ok(mlp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorRecord {
    pub rng_seed: u64,
    #[serde(flatten)]
    pub network: NetworkRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoencoderRecord {
    pub encoder: NetworkRecord,
    pub decoder: NetworkRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub generator: GeneratorRecord,
    pub autoencoder: Option<AutoencoderRecord>,
    pub bandwidth2: f64,
    pub train_config: TrainConfig,
}

/// A trained model as loaded from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub generator: GeneratorNet,
    pub autoencoder: Option<AutoencoderNet>,
    pub bandwidth2: f64,
    pub train_config: TrainConfig,
}

impl Model {
    pub fn from_outcome(outcome: &TrainOutcome, config: &TrainConfig) -> Self {
        Self {
            generator: outcome.generator.clone(),
            autoencoder: outcome.autoencoder.clone(),
            bandwidth2: outcome.bandwidth2,
            train_config: config.clone(),
        }
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            generator: GeneratorRecord {
                rng_seed: self.generator.rng_seed,
                network: NetworkRecord::from_mlp(&self.generator.mlp),
            },
            autoencoder: self.autoencoder.as_ref().map(|ae| AutoencoderRecord {
                encoder: NetworkRecord::from_mlp(&ae.encoder),
                decoder: NetworkRecord::from_mlp(&ae.decoder),
            }),
            bandwidth2: self.bandwidth2,
            train_config: self.train_config.clone(),
        }
    }

    pub fn from_file(file: ModelFile) -> Result<Self> {
        if file.format != MODEL_FORMAT {
            return input(format!("not a model file: format {:?}", file.format));
        }
        if file.version != MODEL_VERSION {
            return input(format!("unsupported model version {}", file.version));
        }
        if !(file.bandwidth2 > 0.0 && file.bandwidth2.is_finite()) {
            return input("stored bandwidth² must be positive");
        }
        let generator = GeneratorNet::from_mlp(file.generator.network.into_mlp()?, file.generator.rng_seed)?;
        let autoencoder = file
            .autoencoder
            .map(|r| AutoencoderNet::from_parts(r.encoder.into_mlp()?, r.decoder.into_mlp()?))
            .transpose()?;
        if let Some(ae) = &autoencoder {
            if ae.input_dim() != generator.output_dim() {
                return input("autoencoder width does not match the generator");
            }
        }
        Ok(Self {
            generator,
            autoencoder,
            bandwidth2: file.bandwidth2,
            train_config: file.train_config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, &self.to_file())?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: ModelFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        Self::from_file(file)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct LossRow {
    epoch: usize,
    mean_loss: f64,
}

/// Writes `(epoch, mean_loss)` rows, epochs counted from 1.
pub fn write_loss_history(path: &Path, history: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if history.is_empty() {
        w.write_record(["epoch", "mean_loss"])?;
    }
    for (i, &mean_loss) in history.iter().enumerate() {
        w.serialize(LossRow {
            epoch: i + 1,
            mean_loss,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_loss_history(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize::<LossRow>() {
        let row = row?;
        if row.epoch != out.len() + 1 {
            return input(format!("loss history epochs out of order at {}", row.epoch));
        }
        out.push(row.mean_loss);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel_learning::encoder_layer_dims;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(with_ae: bool) -> Model {
        let autoencoder = with_ae.then(|| AutoencoderNet::new(10, &mut ChaCha8Rng::seed_from_u64(2)).unwrap());
        Model {
            generator: GeneratorNet::new(10, 7).unwrap(),
            autoencoder,
            bandwidth2: 0.123_456_789_012_345_6,
            train_config: TrainConfig {
                epochs: 3,
                kernel_learning: with_ae,
                ..TrainConfig::default()
            },
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        for with_ae in [false, true] {
            let m = model(with_ae);
            let path = dir.path().join("m.json");
            m.save(&path).unwrap();
            assert_eq!(Model::load(&path).unwrap(), m);
        }
    }

    #[test]
    fn file_layout() {
        let v = serde_json::to_value(model(true).to_file()).unwrap();
        assert_eq!(v["format"], MODEL_FORMAT);
        assert_eq!(v["version"], 1);
        assert_eq!(v["generator"]["layer_dims"], serde_json::json!([1, 2, 3, 5, 10, 10]));
        assert_eq!(
            v["autoencoder"]["encoder"]["layer_dims"],
            serde_json::json!(encoder_layer_dims(10))
        );
        assert_eq!(v["generator"]["layers"][4]["weights"].as_array().unwrap().len(), 100);
        assert_eq!(v["train_config"]["epochs"], 3);
    }

    #[test]
    fn rejects_bad_files() {
        let mut f = model(false).to_file();
        f.version = 2;
        assert!(Model::from_file(f).is_err());
        let mut f = model(false).to_file();
        f.generator.network.layer_dims[0] = 4;
        assert!(Model::from_file(f).is_err());
        let mut f = model(false).to_file();
        f.generator.network.layers[0].weights.pop();
        assert!(Model::from_file(f).is_err());
        let mut v = serde_json::to_value(model(false).to_file()).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(serde_json::from_value::<ModelFile>(v).is_err());
    }

    #[test]
    fn loss_history_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        let h = vec![0.1, -1e-7, 0.000_123_456_789_012_34, 3.0];
        write_loss_history(&path, &h).unwrap();
        assert_eq!(read_loss_history(&path).unwrap(), h);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("epoch,mean_loss\n1,0.1\n"));
        write_loss_history(&path, &[]).unwrap();
        assert!(read_loss_history(&path).unwrap().is_empty());
    }
}
