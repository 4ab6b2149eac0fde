//! Volume ingestion, preprocessing, splitting and synthetic data.

mod manifest;
mod preprocess;
mod slices;
mod split;
mod synth;
mod volume;

pub use manifest::{manifest_from_csv, manifest_to_csv, ManifestRow, MANIFEST_HEADER};
pub use preprocess::{
    center_crop, crop_offset, normalize, preprocess_volume, resize_bilinear, NormalizationStats,
    PreprocessConfig,
};
pub use slices::SliceSet;
pub use split::{split_sizes, stratified_split, SplitConfig, SplitManifest, SplitName};
pub use synth::{patient_id, synth_generate, synth_labels, synth_patient, SynthConfig};
pub use volume::{PatientVolume, CHANNELS, CHANNEL_NAMES, VOLUME_MAGIC, VOLUME_VERSION};
