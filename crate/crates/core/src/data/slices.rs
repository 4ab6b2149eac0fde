use super::volume::PatientVolume;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Flat collection of preprocessed slices, grouped by patient.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSet {
    /// `[C, H, W]` of every slice.
    pub dims: [usize; 3],
    images: Vec<f32>,
    pub labels: Vec<u8>,
    /// Index into `patients` for every slice.
    pub patient_of: Vec<usize>,
    /// Slice position within its patient's volume.
    pub slice_index: Vec<usize>,
    /// `(patient_id, patient_label)`.
    pub patients: Vec<(String, u8)>,
}

impl SliceSet {
    pub fn from_volumes<'a>(volumes: impl IntoIterator<Item = &'a PatientVolume>) -> Result<Self> {
        let mut set: Option<SliceSet> = None;
        for v in volumes {
            let dims = [v.channels(), v.height(), v.width()];
            let s = set.get_or_insert_with(|| SliceSet {
                dims,
                images: Vec::new(),
                labels: Vec::new(),
                patient_of: Vec::new(),
                slice_index: Vec::new(),
                patients: Vec::new(),
            });
            if s.dims != dims {
                return Err(Error::shape(format!(
                    "patient {} has slices {dims:?}, expected {:?}",
                    v.patient_id, s.dims
                )));
            }
            let p = s.patients.len();
            s.patients.push((v.patient_id.clone(), v.patient_label));
            s.images.extend_from_slice(v.data.data());
            s.labels.extend_from_slice(&v.slice_labels);
            s.patient_of.extend(std::iter::repeat(p).take(v.n_slices()));
            s.slice_index.extend(0..v.n_slices());
        }
        set.ok_or_else(|| Error::Empty("slice set".into()))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn slice_len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.slice_len();
        &self.images[i * n..(i + 1) * n]
    }

    /// Stacks the given slices into an `[N, C, H, W]` batch.
    pub fn batch(&self, indices: &[usize]) -> Tensor<f32> {
        let mut data = Vec::with_capacity(indices.len() * self.slice_len());
        for &i in indices {
            data.extend_from_slice(self.image(i));
        }
        let [c, h, w] = self.dims;
        Tensor::new(vec![indices.len(), c, h, w], data).expect("batch shape")
    }

    pub fn batch_labels(&self, indices: &[usize]) -> Vec<u8> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_and_batches() {
        let a = PatientVolume::new("a", Tensor::from_fn(&[2, 1, 1, 2], |i| i as f32), vec![0, 1], 1).unwrap();
        let b = PatientVolume::new("b", Tensor::from_fn(&[1, 1, 1, 2], |i| 10.0 + i as f32), vec![0], 0).unwrap();
        let s = SliceSet::from_volumes([&a, &b]).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.patient_of, vec![0, 0, 1]);
        assert_eq!(s.slice_index, vec![0, 1, 0]);
        let t = s.batch(&[2, 0]);
        assert_eq!(t.shape(), &[2, 1, 1, 2]);
        assert_eq!(t.data(), &[10.0, 11.0, 0.0, 1.0]);
        assert_eq!(s.batch_labels(&[1, 2]), vec![1, 0]);
        let odd = PatientVolume::new("c", Tensor::zeros(&[1, 2, 1, 1]), vec![0], 0).unwrap();
        assert!(SliceSet::from_volumes([&a, &odd]).is_err());
    }
}
