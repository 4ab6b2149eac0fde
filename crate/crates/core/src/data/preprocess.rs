//! Slice preprocessing: bilinear resize, center crop and per-channel z-score
//! normalization.

use serde::{Deserialize, Serialize};

use super::volume::PatientVolume;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn dims3(t: &Tensor<f32>) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [c, h, w] => Ok((c, h, w)),
        ref s => Err(Error::shape(format!("expected a [C, H, W] slice, got {s:?}"))),
    }
}

/// Bilinear resize of every channel with half-pixel-center alignment: output
/// pixel `y` samples source coordinate `(y + 0.5) * H / H' - 0.5`, clamped to
/// the image. Same-size resizing is the identity.
pub fn resize_bilinear(slice: &Tensor<f32>, to_h: usize, to_w: usize) -> Result<Tensor<f32>> {
    let (c, h, w) = dims3(slice)?;
    if to_h == 0 || to_w == 0 {
        return Err(Error::invalid("resize target must be positive"));
    }
    let axis = |out: usize, src: usize| -> Vec<(usize, usize, f32)> {
        let scale = src as f64 / out as f64;
        (0..out)
            .map(|o| {
                let x = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
                let x0 = x.floor() as usize;
                let x1 = (x0 + 1).min(src - 1);
                (x0, x1, (x - x0 as f64) as f32)
            })
            .collect()
    };
    let ys = axis(to_h, h);
    let xs = axis(to_w, w);
    let src = slice.data();
    let mut out = Vec::with_capacity(c * to_h * to_w);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Tensor::new(vec![c, to_h, to_w], out)
}

/// Offset of a centered window: `(src - target) / 2`, rounded down.
pub fn crop_offset(src: usize, target: usize) -> usize {
    (src - target) / 2
}

pub fn center_crop(slice: &Tensor<f32>, to_h: usize, to_w: usize) -> Result<Tensor<f32>> {
    let (c, h, w) = dims3(slice)?;
    if to_h > h || to_w > w || to_h == 0 || to_w == 0 {
        return Err(Error::invalid(format!(
            "cannot crop {h}x{w} to {to_h}x{to_w}"
        )));
    }
    let (oy, ox) = (crop_offset(h, to_h), crop_offset(w, to_w));
    let src = slice.data();
    let mut out = Vec::with_capacity(c * to_h * to_w);
    for ch in 0..c {
        for y in oy..oy + to_h {
            let row = (ch * h + y) * w;
            out.extend_from_slice(&src[row + ox..row + ox + to_w]);
        }
    }
    Tensor::new(vec![c, to_h, to_w], out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub resize: usize,
    pub crop: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { resize: 144, crop: 66 }
    }
}

/// Resizes and crops every slice of a volume.
pub fn preprocess_volume(vol: &PatientVolume, cfg: PreprocessConfig) -> Result<PatientVolume> {
    let mut data = Vec::with_capacity(vol.n_slices() * vol.channels() * cfg.crop * cfg.crop);
    for s in 0..vol.n_slices() {
        let resized = resize_bilinear(&vol.slice_tensor(s), cfg.resize, cfg.resize)?;
        let cropped = center_crop(&resized, cfg.crop, cfg.crop)?;
        data.extend_from_slice(cropped.data());
    }
    let t = Tensor::new(vec![vol.n_slices(), vol.channels(), cfg.crop, cfg.crop], data)?;
    PatientVolume::new(vol.patient_id.clone(), t, vol.slice_labels.clone(), vol.patient_label)
}

/// Per-channel mean and (population) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationStats {
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    /// Computes statistics over every pixel of every slice of the given
    /// reference volumes (two-pass, f64 accumulation).
    pub fn compute<'a>(volumes: impl IntoIterator<Item = &'a PatientVolume> + Clone) -> Result<Self> {
        let mut channels = None;
        let mut sum = Vec::new();
        let mut count = 0usize;
        for v in volumes.clone() {
            let c = v.channels();
            match channels {
                None => {
                    channels = Some(c);
                    sum = vec![0.0f64; c];
                }
                Some(prev) if prev != c => return Err(Error::shape("volumes differ in channel count")),
                _ => {}
            }
            let hw = v.height() * v.width();
            for s in 0..v.n_slices() {
                for (ch, plane) in v.slice(s).chunks(hw).enumerate() {
                    sum[ch] += plane.iter().map(|&x| x as f64).sum::<f64>();
                }
            }
            count += v.n_slices() * hw;
        }
        let c = channels.ok_or_else(|| Error::Empty("normalization reference set".into()))?;
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut sq = vec![0.0f64; c];
        for v in volumes {
            let hw = v.height() * v.width();
            for s in 0..v.n_slices() {
                for (ch, plane) in v.slice(s).chunks(hw).enumerate() {
                    sq[ch] += plane.iter().map(|&x| (x as f64 - mean[ch]).powi(2)).sum::<f64>();
                }
            }
        }
        let std = sq.iter().map(|s| (s / count as f64).sqrt()).collect();
        let stats = Self { mean, std };
        stats.validate()?;
        Ok(stats)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.std.len() {
            return Err(Error::invalid("normalization mean/std lengths differ"));
        }
        if let Some((c, s)) = self.std.iter().enumerate().find(|(_, s)| !(**s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid(format!("channel {c} has non-positive std {s}")));
        }
        Ok(())
    }

    /// `channel,mean,std` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("channel,mean,std\n");
        for (c, (m, d)) in self.mean.iter().zip(&self.std).enumerate() {
            s.push_str(&format!("{c},{m},{d}\n"));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = crate::io::data_lines(text);
        if lines.next() != Some("channel,mean,std") {
            return Err(Error::invalid("bad normalization header"));
        }
        let mut mean = Vec::new();
        let mut std = Vec::new();
        for l in lines {
            let f: Vec<&str> = l.split(',').collect();
            let parse = |s: &str| s.parse::<f64>().map_err(|_| Error::invalid(format!("bad value {s:?}")));
            if f.len() != 3 {
                return Err(Error::invalid(format!("bad normalization row {l:?}")));
            }
            mean.push(parse(f[1])?);
            std.push(parse(f[2])?);
        }
        let stats = Self { mean, std };
        stats.validate()?;
        Ok(stats)
    }
}

/// `x -> (x - mean_c) / std_c` for every pixel of channel `c`.
pub fn normalize(vol: &PatientVolume, stats: &NormalizationStats) -> Result<PatientVolume> {
    stats.validate()?;
    if stats.mean.len() != vol.channels() {
        return Err(Error::shape(format!(
            "{} normalization channels for a {}-channel volume",
            stats.mean.len(),
            vol.channels()
        )));
    }
    let hw = vol.height() * vol.width();
    let mut data = vol.data.clone();
    for (i, plane) in data.data_mut().chunks_mut(hw).enumerate() {
        let c = i % stats.mean.len();
        let (m, s) = (stats.mean[c], stats.std[c]);
        for x in plane {
            *x = ((*x as f64 - m) / s) as f32;
        }
    }
    PatientVolume::new(vol.patient_id.clone(), data, vol.slice_labels.clone(), vol.patient_label)
}
