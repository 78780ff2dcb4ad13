use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Deterministic shuffled split into `(train, valid, test)`.
///
/// Train and validation sizes are `round(n * fraction)`; test takes the rest.
pub fn split_dataset<T: Clone>(
    samples: &[T],
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let (ft, fv, fe) = fractions;
    let sum = ft + fv + fe;
    if (sum - 1.0).abs() > 1e-9 || ft < 0.0 || fv < 0.0 || fe < 0.0 {
        return Err(Error::FractionSum(sum));
    }
    let n = samples.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64) * ft).round() as usize;
    let n_valid = (((n as f64) * fv).round() as usize).min(n - n_train.min(n));
    let n_train = n_train.min(n);
    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
    Ok((
        pick(&order[..n_train]),
        pick(&order[n_train..n_train + n_valid]),
        pick(&order[n_train + n_valid..]),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_samples_split_eight_one_one() {
        let data: Vec<u32> = (0..10).collect();
        let (a, b, c) = split_dataset(&data, (0.8, 0.1, 0.1), 3).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (8, 1, 1));
        let mut all: Vec<u32> = a.iter().chain(&b).chain(&c).copied().collect();
        all.sort();
        assert_eq!(all, data);
    }

    #[test]
    fn same_seed_same_partition() {
        let data: Vec<u32> = (0..50).collect();
        assert_eq!(
            split_dataset(&data, (0.8, 0.1, 0.1), 9).unwrap(),
            split_dataset(&data, (0.8, 0.1, 0.1), 9).unwrap()
        );
    }

    #[test]
    fn bad_fractions_rejected() {
        let data = [1, 2, 3];
        assert!(matches!(
            split_dataset(&data, (0.5, 0.2, 0.2), 0),
            Err(Error::FractionSum(_))
        ));
    }
}
