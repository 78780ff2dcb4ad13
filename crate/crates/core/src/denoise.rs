//! Drop and insert noise on stage-two source sequences.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Removes each token with probability `p_drop`. If every token would be
/// removed, one uniformly chosen token survives. Empty input stays empty.
pub fn drop_noise<T: Clone, R: Rng + ?Sized>(seq: &[T], p_drop: f64, rng: &mut R) -> Vec<T> {
    if seq.is_empty() || p_drop <= 0.0 {
        return seq.to_vec();
    }
    let kept: Vec<T> = seq.iter().filter(|_| !rng.gen_bool(p_drop.min(1.0))).cloned().collect();
    if kept.is_empty() {
        vec![seq[rng.gen_range(0..seq.len())].clone()]
    } else {
        kept
    }
}

/// At each of the `len + 1` gaps, inserts with probability `p_insert` one
/// token drawn uniformly from a uniformly chosen donor.
pub fn insert_noise<T: Clone, R: Rng + ?Sized>(
    seq: &[T],
    p_insert: f64,
    donors: &[Vec<T>],
    rng: &mut R,
) -> Vec<T> {
    if p_insert <= 0.0 {
        return seq.to_vec();
    }
    let donors: Vec<&Vec<T>> = donors.iter().filter(|d| !d.is_empty()).collect();
    assert!(!donors.is_empty(), "insert noise needs a non-empty donor");
    let mut out = Vec::with_capacity(seq.len() + 2);
    for i in 0..=seq.len() {
        if rng.gen_bool(p_insert.min(1.0)) {
            let donor = donors.choose(rng).expect("non-empty");
            out.push(donor.choose(rng).expect("non-empty").clone());
        }
        if i < seq.len() {
            out.push(seq[i].clone());
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseTarget {
    #[default]
    Both,
    ParallelOnly,
    PseudoOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub p_drop: f64,
    pub p_insert: f64,
    pub seed: u64,
    pub apply_to: NoiseTarget,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            p_drop: 0.1,
            p_insert: 0.1,
            seed: 0,
            apply_to: NoiseTarget::Both,
        }
    }
}

impl NoiseConfig {
    pub fn off() -> Self {
        NoiseConfig {
            p_drop: 0.0,
            p_insert: 0.0,
            ..Default::default()
        }
    }

    pub fn is_off(&self) -> bool {
        self.p_drop == 0.0 && self.p_insert == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("noise.p_drop", self.p_drop), ("noise.p_insert", self.p_insert)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn applies_to(&self, pseudo: bool) -> bool {
        match self.apply_to {
            NoiseTarget::Both => true,
            NoiseTarget::ParallelOnly => !pseudo,
            NoiseTarget::PseudoOnly => pseudo,
        }
    }
}

/// Noise settings plus the donor pool insertions draw from.
#[derive(Clone, Debug)]
pub struct Denoiser<T> {
    pub config: NoiseConfig,
    donors: Vec<Vec<T>>,
}

impl<T: Clone> Denoiser<T> {
    pub fn new(config: NoiseConfig, donors: Vec<Vec<T>>) -> Result<Self> {
        config.validate()?;
        let donors: Vec<Vec<T>> = donors.into_iter().filter(|d| !d.is_empty()).collect();
        if config.p_insert > 0.0 && donors.is_empty() {
            return Err(Error::Config("noise.p_insert > 0 needs a non-empty donor pool".into()));
        }
        Ok(Denoiser { config, donors })
    }

    pub fn donors(&self) -> &[Vec<T>] {
        &self.donors
    }

    /// Drop then insert.
    pub fn noise<R: Rng + ?Sized>(&self, seq: &[T], rng: &mut R) -> Vec<T> {
        let dropped = drop_noise(seq, self.config.p_drop, rng);
        insert_noise(&dropped, self.config.p_insert, &self.donors, rng)
    }

    /// Noises the sources of a batch of `(source, target)` pairs. Targets are
    /// cloned untouched. `pseudo` says which data the batch came from.
    pub fn augment_batch<R: Rng + ?Sized>(&self, batch: &[(Vec<T>, Vec<T>)], pseudo: bool, rng: &mut R) -> Vec<(Vec<T>, Vec<T>)> {
        if self.config.is_off() || !self.config.applies_to(pseudo) {
            return batch.to_vec();
        }
        batch.iter().map(|(s, t)| (self.noise(s, rng), t.clone())).collect()
    }
}
