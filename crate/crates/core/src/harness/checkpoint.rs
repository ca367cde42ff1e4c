//! Checkpoint files: an 8-byte little-endian header length, a JSON header,
//! then every parameter as contiguous little-endian `f64`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::model::{Model, ModelSpec};
use super::{HarnessError, Result};
use crate::numeric::Tensor;
use crate::tasks::Task;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    /// Byte offset into the payload.
    pub offset: usize,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub task: Task,
    pub model: ModelSpec,
    pub train: Option<TrainConfig>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub task: Task,
    pub train: Option<TrainConfig>,
    pub model: Model,
}

fn bad(msg: impl Into<String>) -> HarnessError {
    HarnessError::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors = Vec::new();
        let mut payload = Vec::new();
        for (name, t) in self.model.params().iter() {
            let offset = payload.len();
            for v in t.data() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
            tensors.push(TensorEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                dtype: "f64".into(),
                offset,
                bytes: payload.len() - offset,
            });
        }
        let header = CheckpointHeader {
            format_version: FORMAT_VERSION,
            task: self.task,
            model: self.model.spec(),
            train: self.train.clone(),
            tensors,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(8 + json.len() + payload.len());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let len_bytes: [u8; 8] = bytes.get(..8).ok_or_else(|| bad("truncated length prefix"))?.try_into().unwrap();
        let hlen = usize::try_from(u64::from_le_bytes(len_bytes)).map_err(|_| bad("header length overflow"))?;
        let json = bytes.get(8..8 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader = serde_json::from_slice(json)?;
        if header.format_version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {}", header.format_version)));
        }
        let payload = &bytes[8 + hlen..];
        let mut model = header.model.build(0)?;
        if header.tensors.len() != model.params().len() {
            return Err(bad(format!(
                "expected {} tensors, found {}",
                model.params().len(),
                header.tensors.len()
            )));
        }
        let mut cursor = 0;
        for e in &header.tensors {
            if e.dtype != "f64" {
                return Err(bad(format!("{}: unsupported dtype {}", e.name, e.dtype)));
            }
            let numel: usize = e.shape.iter().product();
            if e.offset != cursor || e.bytes != numel * 8 {
                return Err(bad(format!("{}: offsets do not partition the payload", e.name)));
            }
            let raw = payload.get(e.offset..e.offset + e.bytes).ok_or_else(|| bad("truncated payload"))?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            let id = model.params().by_name(&e.name).ok_or_else(|| bad(format!("unknown tensor {}", e.name)))?;
            if model.params().get(id).shape() != e.shape.as_slice() {
                return Err(bad(format!("{}: shape {:?} does not match the model", e.name, e.shape)));
            }
            model.params_mut().set(id, Tensor::new(&e.shape, data)?);
            cursor += e.bytes;
        }
        if cursor != payload.len() {
            return Err(bad("trailing bytes after the last tensor"));
        }
        Ok(Checkpoint {
            task: header.task,
            train: header.train,
            model,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{Arch, Preset};

    #[test]
    fn round_trip_is_bit_exact() {
        for arch in [Arch::Pntm, Arch::Ntm] {
            let model = ModelSpec::new(arch, Preset::Desk, 6).build(17).unwrap();
            let ck = Checkpoint {
                task: Task::Parity,
                train: Some(TrainConfig::default()),
                model,
            };
            let bytes = ck.to_bytes().unwrap();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back.task, Task::Parity);
            for ((na, a), (nb, b)) in ck.model.params().iter().zip(back.model.params().iter()) {
                assert_eq!(na, nb);
                let same = a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits());
                assert!(same, "{na}");
            }
            assert_eq!(back.to_bytes().unwrap(), bytes);
            assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        }
    }
}
