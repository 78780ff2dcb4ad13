use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchSource {
    Parallel,
    Pseudo,
}

/// Endless stream of homogeneous index batches. Each batch comes from the
/// parallel set with probability `ratio`, otherwise from the pseudo set.
/// Each set is walked in a fresh shuffled order whenever it runs out.
pub struct BatchMixer {
    ratio: f64,
    batch_size: usize,
    rng: ChaCha8Rng,
    parallel: Cursor,
    pseudo: Cursor,
}

struct Cursor {
    order: Vec<usize>,
    pos: usize,
}

impl Cursor {
    fn new(n: usize) -> Self {
        Cursor {
            order: (0..n).collect(),
            pos: n,
        }
    }

    fn take(&mut self, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        if self.pos >= self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
        }
        let end = (self.pos + k).min(self.order.len());
        let out = self.order[self.pos..end].to_vec();
        self.pos = end;
        out
    }
}

impl BatchMixer {
    pub fn new(n_parallel: usize, n_pseudo: usize, ratio: f64, batch_size: usize, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&ratio) {
            return Err(Error::Config(format!("mixing ratio {ratio} is outside [0, 1]")));
        }
        if n_pseudo == 0 && ratio < 1.0 {
            return Err(Error::EmptyInput("pseudo set for mixing ratio below 1"));
        }
        if n_parallel == 0 && ratio > 0.0 {
            return Err(Error::EmptyInput("parallel set for mixing ratio above 0"));
        }
        Ok(BatchMixer {
            ratio,
            batch_size: batch_size.max(1),
            rng: ChaCha8Rng::seed_from_u64(seed),
            parallel: Cursor::new(n_parallel),
            pseudo: Cursor::new(n_pseudo),
        })
    }
}

impl Iterator for BatchMixer {
    type Item = (BatchSource, Vec<usize>);

    fn next(&mut self) -> Option<Self::Item> {
        let parallel = self.rng.gen_bool(self.ratio);
        Some(if parallel {
            (BatchSource::Parallel, self.parallel.take(self.batch_size, &mut self.rng))
        } else {
            (BatchSource::Pseudo, self.pseudo.take(self.batch_size, &mut self.rng))
        })
    }
}

/// Shuffled batches covering `0..n` once.
pub fn epoch_batches(n: usize, batch_size: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extreme_ratios() {
        let m = BatchMixer::new(10, 10, 1.0, 4, 0).unwrap();
        assert!(m.take(50).all(|(s, _)| s == BatchSource::Parallel));
        let m = BatchMixer::new(10, 10, 0.0, 4, 0).unwrap();
        assert!(m.take(50).all(|(s, _)| s == BatchSource::Pseudo));
    }

    #[test]
    fn empty_pseudo_needs_ratio_one() {
        assert!(BatchMixer::new(10, 0, 0.5, 4, 0).is_err());
        assert!(BatchMixer::new(10, 0, 1.0, 4, 0).is_ok());
    }

    #[test]
    fn half_ratio_fraction() {
        let m = BatchMixer::new(100, 100, 0.5, 8, 42).unwrap();
        let par = m.take(10_000).filter(|(s, _)| *s == BatchSource::Parallel).count();
        let frac = par as f64 / 10_000.0;
        assert!((frac - 0.5).abs() <= 0.02, "{frac}");
    }

    #[test]
    fn seeded_and_covering() {
        let a: Vec<_> = BatchMixer::new(7, 5, 0.5, 3, 3).unwrap().take(20).collect();
        let b: Vec<_> = BatchMixer::new(7, 5, 0.5, 3, 3).unwrap().take(20).collect();
        assert_eq!(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut all: Vec<usize> = epoch_batches(10, 3, &mut rng).concat();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }
}
