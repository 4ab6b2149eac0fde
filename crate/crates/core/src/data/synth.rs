//! Synthetic 6-channel DWI phantoms.
//!
//! Each patient is an elliptical gland on a darker background, overlaid with
//! low-frequency sinusoidal texture and Gaussian pixel noise. Positive
//! patients get a 4x3 pixel lesion on 1-3 contiguous slices whose channel
//! signature mimics restricted diffusion: darker ADC, brighter high-b images.
//! `lesion_contrast` is the lesion amplitude in units of each channel's noise
//! standard deviation.
//!
//! Every patient draws from its own derived seed, so patients can be
//! generated independently and in any order.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::volume::{PatientVolume, CHANNELS};
use crate::error::{Error, Result};
use crate::rng::{rng_for, SeededRng, Stream};
use crate::tensor::Tensor;

/// Mean signal of each channel inside the gland's surroundings.
const BASE: [f64; CHANNELS] = [1.4, 1.0, 0.85, 0.6, 0.35, 0.22];
/// Gland-to-background intensity ratio.
const GLAND: [f64; CHANNELS] = [0.85, 1.2, 1.2, 1.2, 1.25, 1.25];
/// Lesion amplitude per channel, in noise standard deviations per unit contrast.
const LESION: [f64; CHANNELS] = [-1.0, 0.0, 0.0, 0.5, 1.0, 1.0];
const LESION_ROWS: usize = 4;
const LESION_COLS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub lesion_contrast: f64,
    pub seed: u64,
    /// Raw in-plane size, before resizing.
    pub size: usize,
    pub positive_fraction: f64,
    pub min_slices: usize,
    pub max_slices: usize,
    /// Pixel noise standard deviation relative to the channel's base signal.
    pub noise: f64,
    /// Amplitude of each texture component relative to the base signal.
    pub texture: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_patients: 120,
            lesion_contrast: 8.0,
            seed: 0,
            size: 140,
            positive_fraction: 0.41,
            min_slices: 10,
            max_slices: 16,
            noise: 0.04,
            texture: 0.03,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients < 2 {
            return Err(Error::invalid("synthetic cohort needs at least 2 patients"));
        }
        if !(self.lesion_contrast >= 0.0) || !self.lesion_contrast.is_finite() {
            return Err(Error::invalid("lesion contrast must be finite and non-negative"));
        }
        if self.size < 32 {
            return Err(Error::invalid("synthetic images must be at least 32 pixels"));
        }
        if self.min_slices < 3 || self.min_slices > self.max_slices {
            return Err(Error::invalid("need 3 <= min_slices <= max_slices"));
        }
        if !(self.positive_fraction > 0.0 && self.positive_fraction < 1.0) {
            return Err(Error::invalid("positive_fraction must lie in (0, 1)"));
        }
        if !(self.noise > 0.0) || !(self.texture >= 0.0) {
            return Err(Error::invalid("noise must be positive and texture non-negative"));
        }
        Ok(())
    }

    /// Per-channel noise standard deviation.
    pub fn noise_sigma(&self) -> [f64; CHANNELS] {
        BASE.map(|b| b * self.noise)
    }
}

pub fn patient_id(index: usize) -> String {
    format!("syn{index:04}")
}

/// Patient labels: `round(n * positive_fraction)` positives (at least one of
/// each class), placed by a seeded permutation.
pub fn synth_labels(cfg: &SynthConfig) -> Result<Vec<u8>> {
    cfg.validate()?;
    let n = cfg.n_patients;
    let n_pos = ((n as f64 * cfg.positive_fraction).round() as usize).clamp(1, n - 1);
    let mut labels: Vec<u8> = (0..n).map(|i| u8::from(i < n_pos)).collect();
    labels.shuffle(&mut rng_for(cfg.seed, Stream::Synth, u64::MAX));
    Ok(labels)
}

struct Wave {
    kx: f64,
    ky: f64,
    amp: f64,
}

fn smoothstep(e: f64) -> f64 {
    let t = e.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Generates one patient.
pub fn synth_patient(cfg: &SynthConfig, index: usize, label: u8) -> Result<PatientVolume> {
    cfg.validate()?;
    let mut rng: SeededRng = rng_for(cfg.seed, Stream::Synth, index as u64);
    let n = cfg.size;
    let mid = n as f64 / 2.0;
    let s_count = rng.gen_range(cfg.min_slices..=cfg.max_slices);
    let sigma = cfg.noise_sigma();
    let gain: [f64; CHANNELS] = std::array::from_fn(|_| 1.0 + 0.08 * (rng.gen::<f64>() - 0.5));
    let cy = mid + rng.gen_range(-3.0..3.0);
    let cx = mid + rng.gen_range(-3.0..3.0);
    let ry = rng.gen_range(16.0..22.0);
    let rx = rng.gen_range(20.0..26.0);
    let waves: Vec<Vec<Wave>> = (0..CHANNELS)
        .map(|c| {
            (0..3)
                .map(|_| {
                    let period = rng.gen_range(20.0..60.0);
                    let dir = rng.gen_range(0.0..PI);
                    let k = 2.0 * PI / period;
                    Wave {
                        kx: k * dir.cos(),
                        ky: k * dir.sin(),
                        amp: cfg.texture * BASE[c],
                    }
                })
                .collect()
        })
        .collect();

    // Lesion geometry is drawn for every patient so both classes consume the
    // same random stream.
    let len = rng.gen_range(1..=3usize);
    let start = rng.gen_range(0..=s_count - len);
    let ly = (cy + rng.gen_range(-8.0..8.0)).round() as usize - LESION_ROWS / 2;
    let lx = (cx + rng.gen_range(-10.0..10.0)).round() as usize - LESION_COLS / 2;
    let slice_labels: Vec<u8> = (0..s_count)
        .map(|s| u8::from(label == 1 && (start..start + len).contains(&s)))
        .collect();

    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut data = Vec::with_capacity(s_count * CHANNELS * n * n);
    for &lesion in &slice_labels {
        let scale = rng.gen_range(0.9..1.05);
        let phases: Vec<[f64; 3]> = (0..CHANNELS)
            .map(|_| std::array::from_fn(|_| rng.gen_range(0.0..2.0 * PI)))
            .collect();
        for c in 0..CHANNELS {
            let base = BASE[c] * gain[c];
            for y in 0..n {
                for x in 0..n {
                    let dy = (y as f64 - cy) / (ry * scale);
                    let dx = (x as f64 - cx) / (rx * scale);
                    let r = (dy * dy + dx * dx).sqrt();
                    // 1 inside the gland, 0 outside, over a ~2 px rim
                    let inside = 1.0 - smoothstep((r - 1.0) * ry * scale / 2.0 + 0.5);
                    let mut v = base * (1.0 + (GLAND[c] - 1.0) * inside);
                    for (w, ph) in waves[c].iter().zip(&phases[c]) {
                        v += w.amp * (w.kx * x as f64 + w.ky * y as f64 + ph).sin();
                    }
                    if lesion == 1
                        && (ly..ly + LESION_ROWS).contains(&y)
                        && (lx..lx + LESION_COLS).contains(&x)
                    {
                        v += LESION[c] * cfg.lesion_contrast * sigma[c];
                    }
                    v += sigma[c] * normal.sample(&mut rng);
                    data.push(v as f32);
                }
            }
        }
    }
    let t = Tensor::new(vec![s_count, CHANNELS, n, n], data)?;
    PatientVolume::new(patient_id(index), t, slice_labels, label)
}

/// Generates the whole cohort.
pub fn synth_generate(cfg: &SynthConfig) -> Result<Vec<PatientVolume>> {
    let labels = synth_labels(cfg)?;
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| synth_patient(cfg, i, l))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_patients: 6,
            size: 48,
            ..Default::default()
        }
    }

    #[test]
    fn shapes_and_labels() {
        let vols = synth_generate(&small()).unwrap();
        assert_eq!(vols.len(), 6);
        assert!(vols.iter().any(|v| v.patient_label == 1));
        assert!(vols.iter().any(|v| v.patient_label == 0));
        for v in &vols {
            assert!((10..=16).contains(&v.n_slices()));
            assert_eq!(v.channels(), 6);
            let pos: Vec<usize> = (0..v.n_slices()).filter(|&s| v.slice_labels[s] == 1).collect();
            if v.patient_label == 1 {
                assert!((1..=3).contains(&pos.len()));
                assert_eq!(pos.last().unwrap() - pos[0] + 1, pos.len());
            } else {
                assert!(pos.is_empty());
            }
            assert!(v.data.is_finite());
        }
    }

    #[test]
    fn seeded() {
        let a = synth_patient(&small(), 3, 1).unwrap();
        let b = synth_patient(&small(), 3, 1).unwrap();
        assert_eq!(a, b);
        let other = SynthConfig { seed: 5, ..small() };
        assert_ne!(synth_patient(&other, 3, 1).unwrap(), a);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(synth_generate(&SynthConfig { n_patients: 1, ..small() }).is_err());
        assert!(synth_generate(&SynthConfig { lesion_contrast: f64::NAN, ..small() }).is_err());
    }
}
