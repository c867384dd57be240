//! Single-file checkpoint container.
//!
//! ```text
//! {"version":1,"spec":...,"tensors":[{"name":..,"shape":[..],"offset":..,"length":..}],"provenance":..}\n
//! <tensor blobs>
//! ```
//!
//! The first line is a compact JSON manifest. Each tensor entry gives the
//! byte offset and length of its blob, counted from the first byte after
//! the newline. Blobs are row-major little-endian `f64`, so a round trip is
//! bit-exact.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{DatasetSplit, Provenance};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::vnn::{Layer, LayerSpec, NetworkSpec, NetworkState, VariationalDense};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub spec: Option<NetworkSpec>,
    pub tensors: Vec<(String, Tensor)>,
    pub provenance: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    length: u64,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    spec: Option<NetworkSpec>,
    tensors: Vec<TensorEntry>,
    provenance: serde_json::Value,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn from_network(net: &NetworkState, provenance: serde_json::Value) -> Self {
        let mut tensors = Vec::new();
        for (i, layer) in net.layers.iter().enumerate() {
            if let Layer::Dense(d) = layer {
                tensors.push((format!("layer{i}.w_mean"), d.w_mean.clone()));
                tensors.push((format!("layer{i}.bias"), d.bias.clone()));
                tensors.push((format!("layer{i}.log_alpha"), d.log_alpha.clone()));
            }
        }
        Checkpoint {
            version: CHECKPOINT_VERSION,
            spec: Some(net.spec()),
            tensors,
            provenance,
        }
    }

    pub fn to_network(&self) -> Result<NetworkState> {
        let spec = self
            .spec
            .as_ref()
            .ok_or_else(|| Error::input("checkpoint holds no network spec"))?;
        spec.validate()?;
        let get = |name: String| {
            self.tensor(&name)
                .cloned()
                .ok_or_else(|| Error::input(format!("checkpoint is missing tensor {name}")))
        };
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (i, l) in spec.layers.iter().enumerate() {
            layers.push(match l {
                LayerSpec::Dense { .. } => Layer::Dense(VariationalDense::new(
                    get(format!("layer{i}.w_mean"))?,
                    get(format!("layer{i}.bias"))?,
                    get(format!("layer{i}.log_alpha"))?,
                    spec.noise,
                )?),
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::Elu => Layer::Elu,
                LayerSpec::SoftmaxHead => Layer::SoftmaxHead,
            });
        }
        NetworkState::from_layers(layers)
    }

    /// Stores features and labels (as reals) of a split.
    pub fn from_dataset(split: &DatasetSplit, extra: Vec<(String, Tensor)>) -> Self {
        let labels = Tensor::vector(split.labels.iter().map(|&y| y as f64).collect());
        let mut tensors = vec![("features".to_string(), split.features.clone()), ("labels".to_string(), labels)];
        tensors.extend(extra);
        Checkpoint {
            version: CHECKPOINT_VERSION,
            spec: None,
            tensors,
            provenance: serde_json::json!({
                "num_classes": split.num_classes,
                "dataset": split.provenance,
            }),
        }
    }

    pub fn to_dataset(&self) -> Result<DatasetSplit> {
        let features = self
            .tensor("features")
            .ok_or_else(|| Error::input("checkpoint holds no features"))?
            .clone();
        let labels = self
            .tensor("labels")
            .ok_or_else(|| Error::input("checkpoint holds no labels"))?
            .data()
            .iter()
            .map(|&v| v as usize)
            .collect();
        let num_classes = self.provenance["num_classes"]
            .as_u64()
            .ok_or_else(|| Error::input("checkpoint provenance lacks num_classes"))? as usize;
        let provenance: Provenance = serde_json::from_value(self.provenance["dataset"].clone()).unwrap_or_default();
        DatasetSplit::new(features, labels, num_classes, provenance)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut offset = 0u64;
        for (name, t) in &self.tensors {
            let length = 8 * t.len() as u64;
            entries.push(TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                offset,
                length,
            });
            offset += length;
        }
        let manifest = Manifest {
            version: self.version,
            spec: self.spec.clone(),
            tensors: entries,
            provenance: self.provenance.clone(),
        };
        let mut out = serde_json::to_vec(&manifest).expect("manifest serializes");
        out.push(b'\n');
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let fmt = |offset: Option<u64>, message: String| Error::Format {
            path: path.to_path_buf(),
            offset,
            message,
        };
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| fmt(None, "missing manifest line".into()))?;
        let head = &bytes[..nl];
        let raw: serde_json::Value =
            serde_json::from_slice(head).map_err(|e| fmt(Some(0), format!("corrupt manifest: {e}")))?;
        let version = raw
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| fmt(Some(0), "manifest has no version".into()))?;
        if version != CHECKPOINT_VERSION as u64 {
            return Err(Error::UnsupportedVersion {
                found: version.min(u32::MAX as u64) as u32,
                expected: CHECKPOINT_VERSION,
            });
        }
        let manifest: Manifest =
            serde_json::from_value(raw).map_err(|e| fmt(Some(0), format!("corrupt tensor directory: {e}")))?;
        let blobs = &bytes[nl + 1..];
        let base = (nl + 1) as u64;
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for e in manifest.tensors {
            let count: usize = e.shape.iter().product();
            if e.length != 8 * count as u64 {
                return Err(fmt(
                    Some(base + e.offset),
                    format!("tensor {:?}: length {} does not match shape {:?}", e.name, e.length, e.shape),
                ));
            }
            let end = e.offset.checked_add(e.length).filter(|&end| end <= blobs.len() as u64);
            let Some(end) = end else {
                return Err(fmt(
                    Some(base + blobs.len() as u64),
                    format!(
                        "tensor {:?} truncated: needs bytes {}..{} of the blob section, file has {}",
                        e.name,
                        e.offset,
                        e.offset.saturating_add(e.length),
                        blobs.len()
                    ),
                ));
            };
            let data = blobs[e.offset as usize..end as usize]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            tensors.push((e.name, Tensor::new(e.shape, data)?));
        }
        Ok(Checkpoint {
            version: manifest.version,
            spec: manifest.spec,
            tensors,
            provenance: manifest.provenance,
        })
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&ckpt.to_bytes()).map_err(|e| Error::io(path, e))?;
    f.sync_all().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::vnn::{init_network, Activation, NoiseModel};

    fn net() -> NetworkState {
        let spec = NetworkSpec::mlp(&[4, 3, 2], Activation::Elu, NoiseModel::GaussianMultiplicative, -4.0);
        init_network(&spec, &mut Rng::new(1)).unwrap()
    }

    #[test]
    fn network_round_trip_is_bit_exact() {
        let n = net();
        let ck = Checkpoint::from_network(&n, serde_json::json!({"seed": 1}));
        let back = Checkpoint::from_bytes(&ck.to_bytes(), Path::new("mem")).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_network().unwrap(), n);
    }

    #[test]
    fn unknown_version() {
        let mut ck = Checkpoint::from_network(&net(), serde_json::Value::Null);
        ck.version = 7;
        assert!(matches!(
            Checkpoint::from_bytes(&ck.to_bytes(), Path::new("mem")),
            Err(Error::UnsupportedVersion { found: 7, .. })
        ));
    }

    #[test]
    fn truncated_blob_names_tensor() {
        let bytes = Checkpoint::from_network(&net(), serde_json::Value::Null).to_bytes();
        let err = Checkpoint::from_bytes(&bytes[..bytes.len() - 3], Path::new("mem")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("layer2.log_alpha"), "{msg}");
    }

    #[test]
    fn corrupt_manifest() {
        assert!(matches!(
            Checkpoint::from_bytes(b"{not json\n", Path::new("mem")),
            Err(Error::Format { .. })
        ));
        assert!(Checkpoint::from_bytes(b"no newline", Path::new("mem")).is_err());
    }

    #[test]
    fn dataset_round_trip() {
        let ds = crate::data::synthetic_gaussian_dataset(3, 10, 2, 1.0, &mut Rng::new(0)).unwrap();
        let ck = Checkpoint::from_dataset(&ds, vec![]);
        let back = Checkpoint::from_bytes(&ck.to_bytes(), Path::new("mem")).unwrap();
        assert_eq!(back.to_dataset().unwrap(), ds);
    }
}
