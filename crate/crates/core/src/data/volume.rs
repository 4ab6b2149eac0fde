//! Patient volumes and the `DWIV` file format.
//!
//! ```text
//! "DWIV"                  4 bytes magic
//! version                 u32 (= 1)
//! S, C, H, W              u32 each
//! raster                  f32 x S*C*H*W, row-major [slice][channel][row][col]
//! slice labels            S bytes (0/1)
//! patient label           1 byte (0/1)
//! ```
//! All integers and floats are little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{ByteReader, ByteWriter};
use crate::tensor::Tensor;

pub const VOLUME_MAGIC: &[u8; 4] = b"DWIV";
pub const VOLUME_VERSION: u32 = 1;

/// Channel order of every slice.
pub const CHANNEL_NAMES: [&str; 6] = ["ADC", "b0", "b100", "b400", "b1000", "b1600"];
pub const CHANNELS: usize = CHANNEL_NAMES.len();

#[derive(Debug, Clone, PartialEq)]
pub struct PatientVolume {
    pub patient_id: String,
    /// `[S, C, H, W]`
    pub data: Tensor<f32>,
    pub slice_labels: Vec<u8>,
    pub patient_label: u8,
}

impl PatientVolume {
    pub fn new(
        patient_id: impl Into<String>,
        data: Tensor<f32>,
        slice_labels: Vec<u8>,
        patient_label: u8,
    ) -> Result<Self> {
        let shape = data.shape();
        if shape.len() != 4 {
            return Err(Error::shape(format!("volume must be [S, C, H, W], got {shape:?}")));
        }
        if slice_labels.len() != shape[0] {
            return Err(Error::shape(format!(
                "{} slice labels for {} slices",
                slice_labels.len(),
                shape[0]
            )));
        }
        if slice_labels.iter().chain([&patient_label]).any(|&l| l > 1) {
            return Err(Error::InvalidLabels("volume labels must be 0 or 1".into()));
        }
        Ok(Self {
            patient_id: patient_id.into(),
            data,
            slice_labels,
            patient_label,
        })
    }

    pub fn n_slices(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn height(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[3]
    }

    pub fn slice_len(&self) -> usize {
        self.channels() * self.height() * self.width()
    }

    pub fn slice(&self, s: usize) -> &[f32] {
        let n = self.slice_len();
        &self.data.data()[s * n..(s + 1) * n]
    }

    /// One slice as a `[C, H, W]` tensor.
    pub fn slice_tensor(&self, s: usize) -> Tensor<f32> {
        Tensor::new(
            vec![self.channels(), self.height(), self.width()],
            self.slice(s).to_vec(),
        )
        .expect("slice shape")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        w.bytes(VOLUME_MAGIC);
        w.u32(VOLUME_VERSION);
        for &d in self.data.shape() {
            w.u32(d as u32);
        }
        w.f32s(self.data.data());
        w.bytes(&self.slice_labels);
        w.u8(self.patient_label);
        w.into_inner()
    }

    pub fn from_bytes(patient_id: &str, bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut r = ByteReader::new(bytes, origin);
        r.magic(VOLUME_MAGIC)?;
        let version = r.u32()?;
        if version != VOLUME_VERSION {
            return Err(Error::format(origin, format!("unsupported volume version {version}")));
        }
        let dims = [r.u32()?, r.u32()?, r.u32()?, r.u32()?].map(|d| d as usize);
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::format(origin, format!("zero dimension in {dims:?}")));
        }
        let raster = r.f32s(dims.iter().product())?;
        let slice_labels = r.take(dims[0])?.to_vec();
        let patient_label = r.u8()?;
        r.finish()?;
        let data = Tensor::new(dims.to_vec(), raster).map_err(|e| Error::format(origin, e.to_string()))?;
        Self::new(patient_id, data, slice_labels, patient_label).map_err(|e| Error::format(origin, e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes())
    }

    pub fn read(patient_id: &str, path: &Path) -> Result<Self> {
        let bytes = crate::io::read_artifact(path)?;
        Self::from_bytes(patient_id, &bytes, path)
    }
}
