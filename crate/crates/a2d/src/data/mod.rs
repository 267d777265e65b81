//! Datasets: IDX loading/writing, deterministic splits and seeded synthetic
//! corpora for fast tests and offline runs.

mod idx;
mod synthetic;

pub use idx::{load_idx, load_idx_images, write_idx};
pub use synthetic::{synthetic_blobs, synthetic_digits};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One labeled image: pixels in `[0,1]`, label in `[0, num_classes)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub pixels: Tensor,
    pub label: usize,
}

impl Example {
    pub fn new(pixels: Tensor, label: usize) -> Result<Self> {
        if pixels.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Data("pixel values must lie in [0,1]".into()));
        }
        Ok(Example { pixels, label })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<Example>,
    num_classes: usize,
    name: String,
}

impl Dataset {
    /// Validates uniform input dimension and label range. Empty datasets are
    /// allowed here; training rejects them separately.
    pub fn new(examples: Vec<Example>, num_classes: usize, name: impl Into<String>) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::Data("num_classes must be positive".into()));
        }
        if let Some(first) = examples.first() {
            let dim = first.pixels.len();
            for (i, ex) in examples.iter().enumerate() {
                if ex.pixels.len() != dim {
                    return Err(Error::Data(format!(
                        "example {i} has {} pixels, expected {dim}",
                        ex.pixels.len()
                    )));
                }
                if ex.label >= num_classes {
                    return Err(Error::Data(format!(
                        "example {i}: label {} out of range for {num_classes} classes",
                        ex.label
                    )));
                }
            }
        }
        Ok(Dataset { examples, num_classes, name: name.into() })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.examples.first().map(|e| e.pixels.len())
    }

    /// Deterministic disjoint split: shuffles indices with the seed, takes
    /// the first `train_n` for the first part and the next `test_n` for the
    /// second.
    pub fn split(&self, train_n: usize, test_n: usize, seed: u64) -> Result<(Dataset, Dataset)> {
        if train_n + test_n > self.examples.len() {
            return Err(Error::Data(format!(
                "split needs {} examples, dataset has {}",
                train_n + test_n,
                self.examples.len()
            )));
        }
        let mut order: Vec<usize> = (0..self.examples.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let pick = |range: std::ops::Range<usize>, tag: &str| {
            let examples = order[range].iter().map(|&i| self.examples[i].clone()).collect();
            Dataset::new(examples, self.num_classes, format!("{}-{tag}", self.name))
        };
        Ok((pick(0..train_n, "train")?, pick(train_n..train_n + test_n, "test")?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(v: f64, label: usize) -> Example {
        Example::new(Tensor::from_vec(vec![v; 4]).unwrap(), label).unwrap()
    }

    #[test]
    fn rejects_out_of_range_pixels_and_labels() {
        assert!(Example::new(Tensor::from_vec(vec![1.5]).unwrap(), 0).is_err());
        assert!(Example::new(Tensor::from_vec(vec![-0.1]).unwrap(), 0).is_err());
        let exs = vec![square(0.5, 3)];
        assert!(Dataset::new(exs, 2, "t").is_err());
    }

    #[test]
    fn rejects_ragged_dims() {
        let exs = vec![
            square(0.5, 0),
            Example::new(Tensor::from_vec(vec![0.1; 5]).unwrap(), 1).unwrap(),
        ];
        assert!(Dataset::new(exs, 2, "t").is_err());
    }

    #[test]
    fn split_is_disjoint_and_deterministic() {
        let exs: Vec<Example> = (0..10).map(|i| square(i as f64 / 10.0, i % 2)).collect();
        let data = Dataset::new(exs, 2, "t").unwrap();
        let (a1, b1) = data.split(8, 2, 4).unwrap();
        let (a2, b2) = data.split(8, 2, 4).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        assert_eq!(a1.len(), 8);
        assert_eq!(b1.len(), 2);
        for ex in b1.examples() {
            assert!(!a1.examples().contains(ex));
        }
        assert!(data.split(9, 2, 4).is_err());
    }
}
