use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Images normalized to `[0, 1]` with integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub images: Vec<f32>,
    pub image_shape: Vec<usize>,
    pub labels: Vec<u8>,
    pub num_classes: usize,
}

impl LabeledDataset {
    pub fn new(images: Vec<f32>, image_shape: Vec<usize>, labels: Vec<u8>, num_classes: usize) -> Result<Self> {
        let per: usize = image_shape.iter().product();
        if per == 0 || images.len() != per * labels.len() {
            return Err(Error::InvalidArgument(alloc::format!(
                "{} pixel values do not form {} images of shape {:?}",
                images.len(),
                labels.len(),
                image_shape
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(Error::ClassIndex {
                index: bad as usize,
                classes: num_classes,
            });
        }
        Ok(LabeledDataset {
            images,
            image_shape,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_len(&self) -> usize {
        self.image_shape.iter().product()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let w = self.image_len();
        &self.images[i * w..(i + 1) * w]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    /// Single sample as an unbatched tensor.
    pub fn tensor(&self, i: usize) -> Tensor<f32> {
        Tensor::from_parts(self.image_shape.clone(), self.image(i).to_vec())
    }

    /// Samples `indices` stacked into a batch tensor.
    pub fn batch(&self, indices: &[usize]) -> Tensor<f32> {
        let mut data = Vec::with_capacity(indices.len() * self.image_len());
        for &i in indices {
            data.extend_from_slice(self.image(i));
        }
        let mut shape = Vec::with_capacity(self.image_shape.len() + 1);
        shape.push(indices.len());
        shape.extend_from_slice(&self.image_shape);
        Tensor::from_parts(shape, data)
    }

    /// First `n` samples (or all, if fewer).
    pub fn head(&self, n: usize) -> LabeledDataset {
        let n = n.min(self.len());
        LabeledDataset {
            images: self.images[..n * self.image_len()].to_vec(),
            image_shape: self.image_shape.clone(),
            labels: self.labels[..n].to_vec(),
            num_classes: self.num_classes,
        }
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            images: self.batch(indices).into_data(),
            image_shape: self.image_shape.clone(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }
}
