//! Image datasets: CIFAR-10 binary batches, a synthetic stand-in in the same
//! format, and training-time augmentation.

pub mod augment;
pub mod cifar;
pub mod synthetic;

use serde::{Deserialize, Serialize};

pub use augment::{augment, hflip, vflip, AugmentConfig};
pub use cifar::{decode_records, encode_records, load_cifar10, load_cifar_file, write_cifar_dir, write_cifar_file, RECORD_LEN};
pub use synthetic::{synthetic_dataset, SyntheticSpec};

use crate::error::{invalid, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Images `[N, 3, H, W]` scaled to `[0, 1]` with one label per image.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Tensor<f32>,
    pub labels: Vec<u8>,
    pub split: Split,
}

impl Dataset {
    pub fn new(images: Tensor<f32>, labels: Vec<u8>, split: Split) -> Result<Self> {
        if images.rank() != 4 || images.batch() != labels.len() {
            return Err(invalid(format!(
                "{} labels for images of shape {:?}",
                labels.len(),
                images.shape()
            )));
        }
        Ok(Self { images, labels, split })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `[C, H, W]` of a single image.
    pub fn image_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0)
    }

    pub fn labels_usize(&self) -> Vec<usize> {
        self.labels.iter().map(|&l| l as usize).collect()
    }

    pub fn gather(&self, indices: &[usize]) -> Result<Self> {
        Ok(Self {
            images: self.images.gather(indices)?,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            split: self.split,
        })
    }

    /// Images at `indices` converted to the network scalar, with their labels.
    pub fn batch<T: Scalar>(&self, indices: &[usize]) -> Result<(Tensor<T>, Vec<usize>)> {
        let images = self.images.gather(indices)?.cast();
        Ok((images, indices.iter().map(|&i| self.labels[i] as usize).collect()))
    }

    /// Keeps only `classes` (in that order) and relabels them `0..classes.len()`,
    /// taking at most `per_class` images of each in file order.
    pub fn class_subset(&self, classes: &[u8], per_class: Option<usize>) -> Result<Self> {
        let mut taken = vec![0usize; classes.len()];
        let mut indices = Vec::new();
        let mut labels = Vec::new();
        for (i, l) in self.labels.iter().enumerate() {
            if let Some(k) = classes.iter().position(|c| c == l) {
                if per_class.is_none_or(|m| taken[k] < m) {
                    taken[k] += 1;
                    indices.push(i);
                    labels.push(k as u8);
                }
            }
        }
        if indices.is_empty() {
            return Err(invalid(format!("no images of classes {classes:?}")));
        }
        Ok(Self {
            images: self.images.gather(&indices)?,
            labels,
            split: self.split,
        })
    }

    /// The first `n` images.
    pub fn head(&self, n: usize) -> Result<Self> {
        let n = n.min(self.len());
        self.gather(&(0..n).collect::<Vec<_>>())
    }

    /// Halves height and width by averaging 2x2 blocks.
    pub fn downscale2x(&self) -> Result<Self> {
        let [n, c, h, w] = self.images.nchw()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(invalid(format!("cannot halve {h}x{w} images")));
        }
        let (ho, wo) = (h / 2, w / 2);
        let src = self.images.data();
        let images = Tensor::from_fn(&[n, c, ho, wo], |i| {
            let plane = i / (ho * wo);
            let (y, x) = ((i % (ho * wo)) / wo, i % wo);
            let base = plane * h * w + 2 * y * w + 2 * x;
            (src[base] + src[base + 1] + src[base + w] + src[base + w + 1]) * 0.25
        });
        Ok(Self {
            images,
            labels: self.labels.clone(),
            split: self.split,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        let images = Tensor::from_fn(&[4, 3, 2, 2], |i| (i % 7) as f32 / 7.0);
        Dataset::new(images, vec![3, 1, 3, 5], Split::Train).unwrap()
    }

    #[test]
    fn subset_relabels_in_requested_order() {
        let s = toy().class_subset(&[3, 1], None).unwrap();
        assert_eq!(s.labels, vec![0, 1, 0]);
        let capped = toy().class_subset(&[3, 1], Some(1)).unwrap();
        assert_eq!(capped.labels, vec![0, 1]);
        assert!(toy().class_subset(&[9], None).is_err());
    }

    #[test]
    fn downscale_averages_blocks() {
        let d = toy().downscale2x().unwrap();
        assert_eq!(d.images.shape(), [4, 3, 1, 1]);
        let t = toy();
        let src = &t.images.data()[..4];
        let mean = src.iter().sum::<f32>() / 4.0;
        assert!((d.images.data()[0] - mean).abs() < 1e-7);
    }

    #[test]
    fn label_count_must_match() {
        assert!(Dataset::new(Tensor::zeros(&[2, 3, 2, 2]), vec![0], Split::Test).is_err());
    }
}
