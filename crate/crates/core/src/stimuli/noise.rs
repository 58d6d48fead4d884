use rand::Rng as _;

use super::palette::PalettedImage;
use crate::error::{Error, Result};
use crate::rng;

pub const NOISE_PALETTE_ID: &str = "uniform-noise";

/// `n` images whose tokens are i.i.d. uniform over `[0, k)`.
pub fn generate_noise_set(n: usize, h: usize, w: usize, k: usize, seed: u64) -> Result<Vec<PalettedImage>> {
    if n == 0 || h == 0 || w == 0 || k == 0 {
        return Err(Error::InvalidArgument(format!(
            "noise set needs n, h, w, k >= 1 (got {n}, {h}, {w}, {k})"
        )));
    }
    if k > usize::from(u16::MAX) + 1 {
        return Err(Error::InvalidArgument(format!("k={k} does not fit u16 tokens")));
    }
    let mut rng = rng::seeded(seed);
    (0..n)
        .map(|_| {
            let tokens = (0..h * w).map(|_| rng.random_range(0..k) as u16).collect();
            PalettedImage::new(h, w, tokens, NOISE_PALETTE_ID)
        })
        .collect()
}
