//! Drop and insert noise on a key-fact sequence, plus the empirical
//! expected lengths.

use pivotgen::denoise::{Denoiser, NoiseConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> pivotgen::Result<()> {
    let source: Vec<&str> = "ada lovelace 10 december 1815 london british mathematician".split(' ').collect();
    let donors = vec![
        vec!["paris", "french", "painter"],
        vec!["1.82", "oxford", "university"],
    ];
    let denoiser = Denoiser::new(NoiseConfig::default(), donors)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..5 {
        println!("{}", denoiser.noise(&source, &mut rng).join(" "));
    }

    let trials = 10_000;
    let total: usize = (0..trials).map(|_| denoiser.noise(&source, &mut rng).len()).sum();
    println!("mean length {:.3} over {trials} trials (input {})", total as f64 / trials as f64, source.len());
    Ok(())
}
