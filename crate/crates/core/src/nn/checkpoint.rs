//! Binary checkpoint format (all integers little-endian):
//!
//! ```text
//! "PCNN"            4 bytes magic
//! version           u32 (= 1)
//! spec_hash         32 bytes, SHA-256 of the spec's canonical JSON
//! spec_len          u32, followed by that many bytes of canonical JSON
//! tensor_count      u32
//! per tensor:
//!   name_len u32, name (UTF-8)
//!   ndim u32, dims u32 x ndim
//!   data f32 x product(dims)
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use super::model::{Model, ModelSpec};
use crate::error::{Error, Result};
use crate::io::{ByteReader, ByteWriter};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PCNN";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn from_model(model: &mut Model<f32>) -> Self {
        Self {
            spec: model.spec().clone(),
            tensors: model.named_tensors(),
        }
    }

    pub fn to_model(&self) -> Result<Model<f32>> {
        let mut rng = <SeededRng as rand::SeedableRng>::seed_from_u64(0);
        let mut m = Model::new(&self.spec, &mut rng)?;
        m.load_named_tensors(&self.tensors)?;
        Ok(m)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        w.bytes(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.bytes(&self.spec.hash());
        w.string(&self.spec.canonical_json());
        w.u32(self.tensors.len() as u32);
        for (name, t) in &self.tensors {
            w.string(name);
            w.u32(t.ndim() as u32);
            for &d in t.shape() {
                w.u32(d as u32);
            }
            w.f32s(t.data());
        }
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut r = ByteReader::new(bytes, origin);
        r.magic(CHECKPOINT_MAGIC)?;
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(origin, format!("unsupported checkpoint version {version}")));
        }
        let hash = r.take(32)?.to_vec();
        let json = r.string()?;
        if Sha256::digest(json.as_bytes()).as_slice() != hash.as_slice() {
            return Err(Error::format(origin, "spec hash does not match stored spec"));
        }
        let spec: ModelSpec = serde_json::from_str(&json)
            .map_err(|e| Error::format(origin, format!("bad spec json: {e}")))?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len = shape.iter().product();
            let data = r.f32s(len)?;
            let t = Tensor::new(shape, data).map_err(|e| Error::format(origin, e.to_string()))?;
            tensors.push((name, t));
        }
        r.finish()?;
        Ok(Self { spec, tensors })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = crate::io::read_artifact(path)?;
        Self::from_bytes(&bytes, path)
    }

    /// SHA-256 of the serialized checkpoint, hex encoded.
    pub fn digest(&self) -> String {
        crate::hex(&Sha256::digest(self.to_bytes()))
    }
}
