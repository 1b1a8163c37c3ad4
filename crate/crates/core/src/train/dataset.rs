use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// In-memory labeled images, `(n, 3, h, w)` scaled to `[0, 1]`.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub images: Tensor<f32>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(images: Tensor<f32>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if images.n() != labels.len() {
            return Err(Error::Data(format!(
                "{} images but {} labels",
                images.n(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Data(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            images,
            labels,
            num_classes,
        })
    }

    /// Builds a dataset from packed 8-bit RGB images in `(c, h, w)` order.
    pub fn from_u8(
        items: &[Vec<u8>],
        labels: Vec<usize>,
        num_classes: usize,
        size: (usize, usize),
    ) -> Result<Self> {
        let per = 3 * size.0 * size.1;
        let mut data = Vec::with_capacity(items.len() * per);
        for (i, item) in items.iter().enumerate() {
            if item.len() != per {
                return Err(Error::Data(format!("image {i} has {} values, expected {per}", item.len())));
            }
            data.extend(item.iter().map(|&v| v as f32 / 255.0));
        }
        Self::new(
            Tensor::from_vec([items.len(), 3, size.0, size.1], data)?,
            labels,
            num_classes,
        )
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_size(&self) -> (usize, usize) {
        (self.images.h(), self.images.w())
    }

    /// Images and labels at the given indices, in that order.
    pub fn batch(&self, indices: &[usize]) -> (Tensor<f32>, Vec<usize>) {
        (
            self.images.gather(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    /// Stacks datasets that share class count and image size.
    pub fn concat(parts: &[&Dataset]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Data("nothing to concatenate".into()))?;
        let [_, c, h, w] = first.images.shape();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for p in parts {
            let [_, pc, ph, pw] = p.images.shape();
            if (pc, ph, pw) != (c, h, w) || p.num_classes != first.num_classes {
                return Err(Error::Data(format!(
                    "cannot stack {pc}x{ph}x{pw} images of {} classes onto {c}x{h}x{w} of {}",
                    p.num_classes, first.num_classes
                )));
            }
            data.extend_from_slice(p.images.data());
            labels.extend_from_slice(&p.labels);
        }
        Self::new(Tensor::from_vec([labels.len(), c, h, w], data)?, labels, first.num_classes)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_stacks_in_order() {
        let a = Dataset::new(Tensor::full([1, 3, 2, 2], 0.5), vec![1], 2).unwrap();
        let b = Dataset::new(Tensor::zeros([2, 3, 2, 2]), vec![0, 1], 2).unwrap();
        let ab = Dataset::concat(&[&a, &b]).unwrap();
        assert_eq!(ab.labels, vec![1, 0, 1]);
        assert_eq!(ab.images.item(0)[0], 0.5);
        let odd = Dataset::new(Tensor::zeros([1, 3, 3, 3]), vec![0], 2).unwrap();
        assert!(Dataset::concat(&[&a, &odd]).is_err());
    }

    #[test]
    fn labels_are_validated() {
        let x = Tensor::zeros([2, 3, 4, 4]);
        assert!(Dataset::new(x.clone(), vec![0, 2], 2).is_err());
        assert!(Dataset::new(x.clone(), vec![0], 2).is_err());
        let ds = Dataset::new(x, vec![1, 0], 2).unwrap();
        assert_eq!(ds.class_counts(), vec![1, 1]);
    }

    #[test]
    fn batches_follow_indices() {
        let raw = vec![vec![0u8; 12], vec![255u8; 12]];
        let ds = Dataset::from_u8(&raw, vec![0, 1], 2, (2, 2)).unwrap();
        let (x, y) = ds.batch(&[1, 0, 1]);
        assert_eq!(y, vec![1, 0, 1]);
        assert_eq!(x.item(0)[0], 1.0);
        assert_eq!(x.item(1)[0], 0.0);
    }
}
