//! Tensor container files.
//!
//! The on-disk format is safetensors: an 8-byte little-endian header length,
//! a JSON header naming each tensor with its dtype, shape and byte range, an
//! optional `__metadata__` string map, then the raw little-endian payload.
//! Tensors are written as `F64`; `F32` payloads are accepted on load so
//! externally converted weights can be used directly.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;

use crate::error::{Result, TensorError};
use crate::params::ParamStore;

/// A named tensor read back from a container.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Everything a container holds.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    pub tensors: BTreeMap<String, StoredTensor>,
    pub metadata: BTreeMap<String, String>,
}

impl Container {
    pub fn from_store(store: &ParamStore, metadata: BTreeMap<String, String>) -> Self {
        let tensors = store
            .iter()
            .map(|(name, t)| {
                (
                    name.to_string(),
                    StoredTensor {
                        shape: t.shape().to_vec(),
                        data: t.to_vec(),
                    },
                )
            })
            .collect();
        Container { tensors, metadata }
    }

    /// Builds a store (trainable or frozen) holding every tensor.
    pub fn to_store(&self, frozen: bool) -> Result<ParamStore> {
        let mut store = if frozen {
            ParamStore::frozen()
        } else {
            ParamStore::trainable()
        };
        for (name, t) in &self.tensors {
            store.insert(name.clone(), t.data.clone(), &t.shape)?;
        }
        Ok(store)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let payloads: Vec<(String, Vec<usize>, Vec<u8>)> = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let bytes = t.data.iter().flat_map(|v| v.to_le_bytes()).collect();
                (name.clone(), t.shape.clone(), bytes)
            })
            .collect();
        let views = payloads
            .iter()
            .map(|(name, shape, bytes)| {
                TensorView::new(Dtype::F64, shape.clone(), bytes)
                    .map(|v| (name.clone(), v))
                    .map_err(|e| TensorError::Container(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let metadata: HashMap<String, String> = self.metadata.clone().into_iter().collect();
        safetensors::serialize(views, Some(metadata)).map_err(|e| TensorError::Container(e.to_string()))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (_, header) =
            SafeTensors::read_metadata(bytes).map_err(|e| TensorError::Container(e.to_string()))?;
        let metadata = header
            .metadata()
            .clone()
            .unwrap_or_default()
            .into_iter()
            .collect();
        let st = SafeTensors::deserialize(bytes).map_err(|e| TensorError::Container(e.to_string()))?;
        let mut tensors = BTreeMap::new();
        for (name, view) in st.tensors() {
            let raw = view.data();
            let data: Vec<f64> = match view.dtype() {
                Dtype::F64 => raw
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                    .collect(),
                Dtype::F32 => raw
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().expect("4-byte chunk")) as f64)
                    .collect(),
                other => {
                    return Err(TensorError::Container(format!(
                        "tensor `{name}` has unsupported dtype {other:?}"
                    )))
                }
            };
            tensors.insert(
                name,
                StoredTensor {
                    shape: view.shape().to_vec(),
                    data,
                },
            );
        }
        Ok(Container { tensors, metadata })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        std::fs::write(path, bytes).map_err(|source| TensorError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| TensorError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_round_trip_is_lossless() {
        let mut store = ParamStore::trainable();
        store.insert("a.weight", vec![1.5, -2.25, 1e-300, f64::MAX], &[2, 2]).unwrap();
        store.insert("b", vec![0.1], &[1]).unwrap();
        let meta = BTreeMap::from([("arch".to_string(), "test".to_string())]);
        let c = Container::from_store(&store, meta);
        let back = Container::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert_eq!(back, c);
        let restored = back.to_store(false).unwrap();
        assert_eq!(restored.get("a.weight").unwrap().data(), store.get("a.weight").unwrap().data());
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(Container::from_bytes(b"not a container").is_err());
    }
}
