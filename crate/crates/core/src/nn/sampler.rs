//! Inverse-class-frequency batch sampling for the imbalanced dataset.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Per-item sampling weight: 1 / count(class of item).
pub fn item_weights(labels: &[u8]) -> Vec<f64> {
    let n0 = labels.iter().filter(|&&l| l == 0).count() as f64;
    let n1 = labels.len() as f64 - n0;
    labels
        .iter()
        .map(|&l| if l == 0 { 1.0 / n0 } else { 1.0 / n1 })
        .collect()
}

/// Draw a batch of indices with replacement under inverse-class-frequency
/// weights. Since each class's weights sum to 1, this is equivalent to
/// picking a class uniformly, then an item uniformly within it.
pub fn weighted_batch(
    class0: &[usize],
    class1: &[usize],
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    if class0.is_empty() || class1.is_empty() {
        return Err(Error::Input(
            "weighted sampling needs both classes present".into(),
        ));
    }
    let mut batch = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let class = if rng.gen::<bool>() { class1 } else { class0 };
        batch.push(class[rng.gen_range(0..class.len())]);
    }
    Ok(batch)
}

/// Seeded convenience wrapper over [`weighted_batch`].
pub fn weighted_sample(labels: &[u8], batch_size: usize, seed: u64) -> Result<Vec<usize>> {
    let class0: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    let class1: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != 0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    weighted_batch(&class0, &class1, batch_size, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n0: usize, n1: usize) -> Vec<u8> {
        let mut l = vec![0u8; n0];
        l.extend(std::iter::repeat(1).take(n1));
        l
    }

    #[test]
    fn minority_fraction_balances_under_inverse_frequency() {
        let labels = labels(100, 900);
        let batch = weighted_sample(&labels, 100_000, 42).unwrap();
        let minority = batch.iter().filter(|&&i| labels[i] == 0).count() as f64 / 1e5;
        assert!((0.48..=0.52).contains(&minority), "minority fraction {minority}");
    }

    #[test]
    fn balanced_dataset_has_uniform_weights() {
        let w = item_weights(&labels(50, 50));
        assert!(w.iter().all(|&x| x == w[0]));
    }

    #[test]
    fn same_seed_same_stream() {
        let labels = labels(10, 90);
        let a = weighted_sample(&labels, 1_000, 7).unwrap();
        let b = weighted_sample(&labels, 1_000, 7).unwrap();
        assert_eq!(a, b);
        let c = weighted_sample(&labels, 1_000, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(weighted_sample(&labels(0, 10), 5, 1).is_err());
        assert!(weighted_sample(&labels(10, 0), 5, 1).is_err());
    }

    #[test]
    fn every_index_is_in_range_and_replacement_happens() {
        let labels = labels(2, 2);
        let batch = weighted_sample(&labels, 64, 3).unwrap();
        assert!(batch.iter().all(|&i| i < 4));
        assert_eq!(batch.len(), 64);
    }
}
